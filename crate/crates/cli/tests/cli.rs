use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use tempfile::TempDir;

const CODE_13_26: [&[usize]; 13] = [
    &[1, 9, 13, 21, 22, 23],
    &[4, 8, 12, 16, 18, 23],
    &[3, 11, 15, 20, 25, 26],
    &[7, 8, 10, 14, 21, 24],
    &[6, 15, 19, 20, 25, 26],
    &[5, 7, 12, 13, 17, 23],
    &[5, 9, 13, 14, 16, 18],
    &[3, 6, 11, 19, 24, 25, 26],
    &[2, 4, 7, 16, 22, 24],
    &[2, 9, 10, 12, 14, 18],
    &[3, 6, 11, 15, 19, 20],
    &[1, 2, 8, 17, 21],
    &[1, 4, 5, 10, 17, 22],
];

fn ldpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ldpc")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn alist_13_26() -> String {
    let mut cols: Vec<Vec<usize>> = vec![Vec::new(); 26];
    for (c, row) in CODE_13_26.iter().enumerate() {
        for &b in row.iter() {
            cols[b - 1].push(c + 1);
        }
    }
    let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
    let row_degrees: Vec<usize> = CODE_13_26.iter().map(|r| r.len()).collect();
    let mut s = format!("26 13\n3 7\n{}\n{}\n", join(&[3; 26]), join(&row_degrees));
    for c in &cols {
        s += &format!("{}\n", join(c));
    }
    for r in CODE_13_26 {
        s += &format!("{}\n", join(r));
    }
    s
}

fn dense_13_26() -> String {
    CODE_13_26
        .iter()
        .map(|r| (1..=26).map(|b| if r.contains(&b) { "1" } else { "0" }).collect::<Vec<_>>().join(" ") + "\n")
        .collect()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let ws = Workspace { dir: TempDir::new().unwrap() };
        fs::write(ws.path("code.alist"), alist_13_26()).unwrap();
        fs::write(ws.path("code.txt"), dense_13_26()).unwrap();
        ws
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    fn preprocess(&self, matrix: &str, out: &str) -> Output {
        let o = ldpc(&["preprocess", &self.arg(matrix), "-o", &self.arg(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        o
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn info_reports_size_rank_and_degrees() {
    let ws = Workspace::new();
    for m in ["code.alist", "code.txt"] {
        let o = ldpc(&["info", &ws.arg(m)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let out = stdout(&o);
        assert!(out.contains("bits: 26"), "{out}");
        assert!(out.contains("checks: 13"));
        assert!(out.contains("rank: 13"));
        assert!(out.contains("bit degrees: 3:26"));
        assert!(out.contains("components: 1"));
    }
}

#[test]
fn preprocess_finds_two_stopping_sets() {
    let ws = Workspace::new();
    let o = ws.preprocess("code.alist", "code.sch");
    let out = stdout(&o);
    assert!(out.contains("stopping sets: 2"), "{out}");
    assert!(out.contains("information bits: 13"));
    assert!(out.contains("xor budget: 130"));
    assert!(fs::metadata(ws.path("code.sch")).unwrap().len() > 0);
}

#[test]
fn schedules_are_deterministic() {
    let ws = Workspace::new();
    ws.preprocess("code.alist", "a.sch");
    ws.preprocess("code.txt", "b.sch");
    assert_eq!(fs::read(ws.path("a.sch")).unwrap(), fs::read(ws.path("b.sch")).unwrap());
}

#[test]
fn zero_word_encodes_to_zero() {
    let ws = Workspace::new();
    ws.preprocess("code.alist", "code.sch");
    fs::write(ws.path("zero.hex"), "0000\n").unwrap();
    let o = ldpc(&["encode", &ws.arg("code.sch"), "--in", &ws.arg("zero.hex"), "--stats"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o), "0000000\n");
    assert!(stderr(&o).contains("xor_count"));
}

#[test]
fn random_words_verify_and_a_flipped_bit_fails() {
    let ws = Workspace::new();
    ws.preprocess("code.alist", "code.sch");
    let o = ldpc(&["encode", &ws.arg("code.sch"), "--random", "50", "--seed", "7", "-o", &ws.arg("cw.hex")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(ws.path("cw.hex")).unwrap();
    assert_eq!(text.lines().count(), 50);
    let o = ldpc(&["verify", &ws.arg("code.alist"), &ws.arg("cw.hex")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("ok: 50 codewords"));

    // Flip the first bit of the third codeword.
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let first = u8::from_str_radix(&lines[2][..1], 16).unwrap() ^ 0x8;
    lines[2].replace_range(..1, &format!("{first:x}"));
    fs::write(ws.path("bad.hex"), lines.join("\n")).unwrap();
    let o = ldpc(&["verify", &ws.arg("code.txt"), &ws.arg("bad.hex")]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("lines 3"), "{}", stderr(&o));
}

#[test]
fn same_seed_same_words() {
    let ws = Workspace::new();
    ws.preprocess("code.alist", "code.sch");
    let run = || stdout(&ldpc(&["encode", &ws.arg("code.sch"), "--random", "5", "--seed", "3"]));
    assert_eq!(run(), run());
}

#[test]
fn malformed_inputs_exit_with_code_two() {
    let ws = Workspace::new();
    let truncated: String = alist_13_26().lines().take(20).map(|l| format!("{l}\n")).collect();
    fs::write(ws.path("short.alist"), truncated).unwrap();
    let o = ldpc(&["info", &ws.arg("short.alist")]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 21"), "{}", stderr(&o));

    ws.preprocess("code.alist", "code.sch");
    fs::write(ws.path("bad.hex"), "00zz\n").unwrap();
    assert_eq!(code(&ldpc(&["encode", &ws.arg("code.sch"), "--in", &ws.arg("bad.hex")])), 2);

    fs::write(ws.path("junk.sch"), b"not a schedule").unwrap();
    assert_eq!(code(&ldpc(&["encode", &ws.arg("junk.sch"), "--random", "1"])), 2);

    assert_eq!(code(&ldpc(&["info", &ws.arg("missing.alist")])), 2);
    assert_eq!(code(&ldpc(&["frobnicate"])), 2);
}

#[test]
fn schedule_for_another_matrix_is_refused() {
    let ws = Workspace::new();
    ws.preprocess("code.alist", "code.sch");
    let other: String = dense_13_26().replacen("1 ", "0 ", 1);
    fs::write(ws.path("other.txt"), other).unwrap();
    let o = ldpc(&["encode", &ws.arg("code.sch"), "--random", "1", "--matrix", &ws.arg("other.txt")]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("different matrix"));
    let o = ldpc(&["encode", &ws.arg("code.sch"), "--random", "1", "--matrix", &ws.arg("code.txt")]);
    assert_eq!(code(&o), 0);
}

#[test]
fn high_degree_matrices_go_through_the_split_path() {
    let ws = Workspace::new();
    // Bit 1 sits in all five checks.
    let rows = ["1 1 1 0 0 0 0", "1 0 1 1 0 0 0", "1 0 0 1 1 0 0", "1 0 0 0 1 1 0", "1 0 0 0 0 1 1"];
    fs::write(ws.path("star.txt"), rows.join("\n")).unwrap();
    let o = ws.preprocess("star.txt", "star.sch");
    assert!(stdout(&o).contains("split: 2 clones"), "{}", stdout(&o));
    let o = ldpc(&["encode", &ws.arg("star.sch"), "--random", "20", "-o", &ws.arg("cw.hex")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(code(&ldpc(&["verify", &ws.arg("star.txt"), &ws.arg("cw.hex")])), 0);
}

#[test]
fn bench_reports_against_the_budget() {
    let ws = Workspace::new();
    for mode in ["flip", "recompute"] {
        let o = ldpc(&["bench", &ws.arg("code.alist"), "--words", "200", "--mode", mode]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let out = stdout(&o);
        assert!(out.contains("mean xor_count"));
        assert!(out.contains("xor budget: 130"));
        assert!(!stderr(&o).contains("exceeded"));
    }
}
