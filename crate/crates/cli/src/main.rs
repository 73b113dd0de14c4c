use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use ldpc_core::decompose::{plan, DecompositionPlan, Piece};
use ldpc_core::encoder::{compile, Mode, Schedule, Scratch};
use ldpc_core::gf2::{rank, BitWord};
use ldpc_core::io::{codeword_to_hex, load_schedule, parse_codewords, read_matrix, save_schedule};
use ldpc_core::tanner::{connected_components, SubgraphMask, TannerGraph};
use ldpc_core::{oracle, Error};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[derive(Parser)]
#[command(name = "ldpc", version, about = "Linear-time LDPC encoding from a sparse parity-check matrix")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Flip,
    Recompute,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Flip => Mode::Flip,
            ModeArg::Recompute => Mode::Recompute,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Size, rank, degree histograms and component count of a matrix.
    Info {
        /// Parity-check matrix, alist or dense 0/1 rows.
        matrix: PathBuf,
    },
    /// Decompose and compile a matrix into a schedule file.
    Preprocess {
        /// Parity-check matrix, alist or dense 0/1 rows.
        matrix: PathBuf,
        /// Schedule file to write.
        #[arg(short, long)]
        output: PathBuf,
        /// How corrected bits propagate: precomputed flip lists or recomputation.
        #[arg(long, value_enum, default_value = "flip")]
        mode: ModeArg,
    },
    /// Encode information words (hex, one per line) with a schedule.
    Encode {
        /// Schedule file written by `preprocess`.
        schedule: PathBuf,
        /// File of information words; standard input when neither this nor
        /// --random is given.
        #[arg(long = "in", conflicts_with = "random")]
        input: Option<PathBuf>,
        /// Encode this many random information words instead.
        #[arg(long)]
        random: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also report each word's XOR count on standard error.
        #[arg(long)]
        stats: bool,
        /// Write codewords here instead of standard output.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Refuse the schedule unless it was compiled for this matrix.
        #[arg(long)]
        matrix: Option<PathBuf>,
    },
    /// Check every codeword in a file against the matrix.
    Verify {
        /// Parity-check matrix, alist or dense 0/1 rows.
        matrix: PathBuf,
        /// Hex codewords, one per line.
        codewords: PathBuf,
    },
    /// Encoding throughput and mean XOR count against the bound.
    Bench {
        /// Parity-check matrix, alist or dense 0/1 rows.
        matrix: PathBuf,
        /// Random words to encode.
        #[arg(long, default_value_t = 1000)]
        words: usize,
        #[arg(long, value_enum, default_value = "flip")]
        mode: ModeArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    /// Some codeword violates a check.
    Verification(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Lib(Error::Io(e))
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Verification(_) => 1,
            Failure::Lib(Error::Structural(_)) => 3,
            Failure::Lib(_) => 2,
        }
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Info { matrix } => info(&matrix),
        Command::Preprocess { matrix, output, mode } => preprocess(&matrix, &output, mode.into()),
        Command::Encode { schedule, input, random, seed, stats, output, matrix } => {
            let words = WordSource { input, random, seed };
            encode(&schedule, matrix.as_deref(), &words, stats, output.as_deref())
        }
        Command::Verify { matrix, codewords } => verify(&matrix, &codewords),
        Command::Bench { matrix, words, mode, seed } => bench(&matrix, words, mode.into(), seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Verification(msg) => eprintln!("verification failed: {msg}"),
                Failure::Lib(e) => eprintln!("error: {e}"),
            }
            ExitCode::from(f.exit_code())
        }
    }
}

fn histogram(h: &BTreeMap<usize, usize>) -> String {
    h.iter().map(|(d, n)| format!("{d}:{n}")).collect::<Vec<_>>().join(" ")
}

/// Dense elimination up to this many matrix entries; the decomposition
/// (which yields the rank as its parity count) beyond.
const DENSE_RANK_LIMIT: usize = 1 << 26;

fn matrix_rank(g: &TannerGraph) -> Result<usize, Error> {
    if g.n_bits().saturating_mul(g.n_checks()) <= DENSE_RANK_LIMIT {
        return Ok(rank(&g.to_dense()));
    }
    let (_, p) = plan(g)?;
    let aux = p.split.as_ref().map_or(0, |m| m.aux_checks.len());
    Ok(p.parity_bits.len() - aux)
}

fn info(path: &Path) -> CliResult {
    let g = read_matrix(path)?;
    let r = matrix_rank(&g)?;
    println!("bits: {}", g.n_bits());
    println!("checks: {}", g.n_checks());
    println!("edges: {}", g.n_edges());
    println!("rank: {r}");
    println!("rate: {:.4}", (g.n_bits() - r) as f64 / g.n_bits() as f64);
    println!("bit degrees: {}", histogram(&g.bit_degree_histogram()));
    println!("check degrees: {}", histogram(&g.check_degree_histogram()));
    println!("components: {}", connected_components(&g, &SubgraphMask::full(&g)).len());
    Ok(())
}

fn summary(p: &DecompositionPlan, s: &Schedule) -> String {
    let mut trees = 0;
    let mut folds: BTreeMap<usize, usize> = BTreeMap::new();
    let mut keys = 0;
    let mut reevaluated = 0;
    let mut attached = 0;
    for piece in &p.pieces {
        attached += piece.attached().len();
        match piece {
            Piece::Tree(_) => trees += 1,
            Piece::StoppingSet(ss) => {
                *folds.entry(ss.fold()).or_default() += 1;
                keys += ss.key_checks.len();
                reevaluated += ss.reevaluated_bits.len();
            }
        }
    }
    let sets: Vec<String> = folds.iter().map(|(k, n)| format!("{k}-fold sets {n}")).collect();
    let mut out = String::new();
    let mut line = |l: String| {
        out.push_str(&l);
        out.push('\n');
    };
    let kinds = std::iter::once(format!("pseudo-trees {trees}")).chain(sets).collect::<Vec<_>>().join(", ");
    line(format!("pieces: {} ({kinds})", p.pieces.len()));
    line(format!("stopping sets: {}", folds.values().sum::<usize>()));
    line(format!("key checks: {keys}"));
    line(format!("reevaluated bits: {reevaluated}"));
    line(format!("synthesized checks: {} (attached {attached})", p.synthesized.len()));
    line(format!("deleted checks: {}", p.deleted_checks.len()));
    match &p.split {
        Some(m) => line(format!("split: {} clones, {} auxiliary checks", p.n_bits - m.original_n_bits, m.aux_checks.len())),
        None => line("split: none".into()),
    }
    line(format!("information bits: {}", s.n_info()));
    line(format!("steps: {}", s.steps.len()));
    line(format!("static xor count: {}", s.static_xor_count()));
    line(format!("xor budget: {}", s.xor_budget));
    out
}

fn preprocess(path: &Path, output: &Path, mode: Mode) -> CliResult {
    let g = read_matrix(path)?;
    let (work, p) = plan(&g)?;
    let s = compile(&p, &work, mode)?;
    save_schedule(&s, File::create(output)?)?;
    print!("{}", summary(&p, &s));
    Ok(())
}

fn open_output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

struct WordSource {
    input: Option<PathBuf>,
    random: Option<usize>,
    seed: u64,
}

fn random_words(n: usize, k: usize, seed: u64) -> Vec<BitWord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| BitWord::from_bools(&(0..k).map(|_| rng.gen()).collect::<Vec<_>>())).collect()
}

fn encode(path: &Path, matrix: Option<&Path>, source: &WordSource, stats: bool, output: Option<&Path>) -> CliResult {
    let h = matrix.map(read_matrix).transpose()?;
    let s = load_schedule(File::open(path)?, h.as_ref())?;
    let k = s.n_info();
    let words: Vec<BitWord> = match (&source.input, source.random) {
        (_, Some(n)) => random_words(n, k, source.seed),
        (Some(p), None) => parse_codewords(&std::fs::read_to_string(p)?, k)?,
        (None, None) => parse_codewords(&io::read_to_string(io::stdin())?, k)?,
    };
    let mut out = open_output(output)?;
    let mut scratch = Scratch::default();
    let mut total = 0u64;
    for (i, w) in words.iter().enumerate() {
        let r = s.encode_with(w, &mut scratch)?;
        writeln!(out, "{}", codeword_to_hex(&r.codeword))?;
        if stats {
            eprintln!("word {i}: xor_count {} (budget {})", r.xor_count, s.xor_budget);
        }
        total += r.xor_count;
    }
    out.flush()?;
    if stats && !words.is_empty() {
        eprintln!("mean xor_count {:.1} over {} words", total as f64 / words.len() as f64, words.len());
    }
    Ok(())
}

fn verify(matrix: &Path, codewords: &Path) -> CliResult {
    let g = read_matrix(matrix)?;
    let words = parse_codewords(&std::fs::read_to_string(codewords)?, g.n_bits())?;
    let bad: Vec<usize> = words.iter().enumerate().filter(|(_, w)| !oracle::verify(g.rows(), w)).map(|(i, _)| i + 1).collect();
    if !bad.is_empty() {
        let shown: Vec<String> = bad.iter().take(10).map(usize::to_string).collect();
        let more = if bad.len() > 10 { ", ..." } else { "" };
        return Err(Failure::Verification(format!(
            "{} of {} codewords violate a check (lines {}{more})",
            bad.len(),
            words.len(),
            shown.join(", ")
        )));
    }
    println!("ok: {} codewords", words.len());
    Ok(())
}

fn bench(matrix: &Path, n_words: usize, mode: Mode, seed: u64) -> CliResult {
    let g = read_matrix(matrix)?;
    let t = Instant::now();
    let (work, p) = plan(&g)?;
    let s = compile(&p, &work, mode)?;
    let pre = t.elapsed();
    let words = random_words(n_words, s.n_info(), seed);
    let t = Instant::now();
    let xors: Vec<u64> = words
        .par_iter()
        .map_init(Scratch::default, |scratch, w| s.encode_with(w, scratch).map(|r| r.xor_count))
        .collect::<Result<_, _>>()?;
    let secs = t.elapsed().as_secs_f64();
    let mean = xors.iter().sum::<u64>() as f64 / n_words.max(1) as f64;
    let max = xors.iter().copied().max().unwrap_or(0);
    println!("preprocess: {:.3} s", pre.as_secs_f64());
    println!("words: {n_words} in {secs:.3} s on {} threads", rayon::current_num_threads());
    println!("throughput: {:.0} words/s, {:.2} Mbit/s", n_words as f64 / secs, (n_words * g.n_bits()) as f64 / secs / 1e6);
    println!("mean xor_count: {mean:.1} (max {max})");
    println!("xor budget: {} (mean/budget {:.3})", s.xor_budget, mean / s.xor_budget.max(1) as f64);
    if max > s.xor_budget {
        eprintln!("warning: some words exceeded the xor budget");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(Failure::Verification(String::new()).exit_code(), 1);
        assert_eq!(Failure::Lib(Error::Usage(String::new())).exit_code(), 2);
        assert_eq!(Failure::Lib(Error::Format { line: Some(1), msg: String::new() }).exit_code(), 2);
        assert_eq!(Failure::Lib(Error::Structural(String::new())).exit_code(), 3);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
