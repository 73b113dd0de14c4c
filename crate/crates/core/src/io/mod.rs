//! Text formats for matrices and codewords, and the binary schedule file.

mod alist;
mod schedule;

pub use alist::{parse_alist, AlistDocument};
pub use schedule::{load_schedule, save_schedule, schedule_from_bytes, schedule_to_bytes, FORMAT_VERSION, MAGIC};

use crate::error::{Error, Result};
use crate::gf2::BitWord;
use crate::tanner::TannerGraph;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixFormat {
    Alist,
    /// One row per line, entries 0 or 1, optionally space-separated.
    Dense,
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn dense_cells(line: &str) -> Option<Vec<bool>> {
    let cells: Vec<&str> =
        if line.contains(char::is_whitespace) { line.split_whitespace().collect() } else { line.split("").filter(|s| !s.is_empty()).collect() };
    cells
        .into_iter()
        .map(|c| match c {
            "0" => Some(false),
            "1" => Some(true),
            _ => None,
        })
        .collect()
}

/// Dense when every line is a row of 0/1 cells of one common width; alist
/// otherwise. An alist header such as `1 1` is a valid dense row, but the
/// degree lines that follow it never share its width.
pub fn sniff(text: &str) -> MatrixFormat {
    let mut width = None;
    for (_, line) in content_lines(text) {
        match dense_cells(line) {
            Some(cells) if width.is_none_or(|w| w == cells.len()) => width = Some(cells.len()),
            _ => return MatrixFormat::Alist,
        }
    }
    MatrixFormat::Dense
}

pub fn parse_dense(text: &str) -> Result<TannerGraph> {
    let mut rows = Vec::new();
    let mut width = None;
    for (no, line) in content_lines(text) {
        let cells = dense_cells(line).ok_or_else(|| Error::format(no, "expected a row of 0/1 entries"))?;
        if *width.get_or_insert(cells.len()) != cells.len() {
            return Err(Error::format(no, format!("row has {} entries, expected {}", cells.len(), width.unwrap_or(0))));
        }
        let row: Vec<usize> = cells.iter().enumerate().filter(|(_, &v)| v).map(|(i, _)| i).collect();
        if row.is_empty() {
            return Err(Error::format(no, "all-zero row"));
        }
        rows.push(row);
    }
    let n = width.ok_or_else(|| Error::corrupt("no rows"))?;
    TannerGraph::from_rows(n, rows).map_err(|e| Error::corrupt(e.to_string()))
}

pub fn write_dense(g: &TannerGraph) -> String {
    let mut out = String::with_capacity(g.n_checks() * (2 * g.n_bits() + 1));
    for c in 0..g.n_checks() {
        let mut row = vec!["0"; g.n_bits()];
        for &b in g.check(c) {
            row[b] = "1";
        }
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

/// Parses either format, sniffing which one it is.
pub fn parse_matrix(text: &str) -> Result<TannerGraph> {
    match sniff(text) {
        MatrixFormat::Alist => parse_alist(text),
        MatrixFormat::Dense => parse_dense(text),
    }
}

pub fn read_matrix(path: impl AsRef<std::path::Path>) -> Result<TannerGraph> {
    parse_matrix(&std::fs::read_to_string(path)?)
}

/// Hex digits of a codeword, bit 0 being the most significant bit of the
/// first digit. The last digit is padded with zero bits.
pub fn codeword_to_hex(x: &BitWord) -> String {
    let mut bytes = vec![0u8; x.len().div_ceil(8)];
    for i in x.iter_ones() {
        bytes[i / 8] |= 0x80 >> (i % 8);
    }
    let mut s = hex::encode(bytes);
    s.truncate(x.len().div_ceil(4));
    s
}

/// Inverse of [`codeword_to_hex`]. Padding bits must be zero.
pub fn codeword_from_hex(s: &str, n_bits: usize) -> Result<BitWord> {
    let s = s.trim();
    let digits = n_bits.div_ceil(4);
    if s.len() != digits {
        return Err(Error::corrupt(format!("{} hex digits for {n_bits} bits, expected {digits}", s.len())));
    }
    let padded = if s.len() % 2 == 1 { format!("{s}0") } else { s.to_string() };
    let bytes = hex::decode(padded).map_err(|e| Error::corrupt(e.to_string()))?;
    let mut x = BitWord::zeros(n_bits);
    for (i, byte) in bytes.iter().enumerate() {
        for j in 0..8 {
            if byte & (0x80 >> j) != 0 {
                let b = 8 * i + j;
                if b >= n_bits {
                    return Err(Error::corrupt("padding bits after the last codeword bit are set"));
                }
                x.set(b, true);
            }
        }
    }
    Ok(x)
}

/// One codeword per non-empty line.
pub fn parse_codewords(text: &str, n_bits: usize) -> Result<Vec<BitWord>> {
    content_lines(text)
        .map(|(no, line)| {
            codeword_from_hex(line, n_bits).map_err(|e| match e {
                Error::Format { msg, .. } => Error::format(no, msg),
                other => other,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::code_13_26;
    use proptest::prelude::*;

    #[test]
    fn sniffing() {
        assert_eq!(sniff("1 0 1\n0 1 1\n"), MatrixFormat::Dense);
        assert_eq!(sniff("101\n011\n"), MatrixFormat::Dense);
        assert_eq!(sniff("3 2\n2 2\n1 2 1\n2 2\n1\n1 2\n2\n1 2\n2 3\n"), MatrixFormat::Alist);
        assert_eq!(sniff("1 1\n1 1\n1\n1\n1\n1\n"), MatrixFormat::Alist);
    }

    #[test]
    fn dense_round_trip() {
        let g = code_13_26();
        let text = write_dense(&g);
        assert_eq!(parse_matrix(&text).unwrap(), g);
        assert_eq!(parse_dense("110\n011\n").unwrap().check(1), &[1, 2]);
    }

    #[test]
    fn dense_errors_carry_line_numbers() {
        match parse_dense("1 0 1\n\n1 1\n") {
            Err(Error::Format { line: Some(3), .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_dense("1 0 2\n"), Err(Error::Format { line: Some(1), .. })));
        assert!(matches!(parse_dense("0 0 0\n"), Err(Error::Format { line: Some(1), .. })));
    }

    #[test]
    fn hex_layout() {
        let x = BitWord::from_indices(6, [0, 5]).unwrap();
        assert_eq!(codeword_to_hex(&x), "84");
        let y = BitWord::from_indices(5, [0, 4]).unwrap();
        assert_eq!(codeword_to_hex(&y), "88");
        assert_eq!(codeword_from_hex("84", 6).unwrap(), x);
        assert!(codeword_from_hex("85", 6).is_err());
        assert!(codeword_from_hex("8", 6).is_err());
        assert!(codeword_from_hex("zz", 6).is_err());
        assert_eq!(codeword_to_hex(&BitWord::zeros(26)), "0000000");
    }

    #[test]
    fn codeword_errors_name_the_line() {
        assert!(matches!(parse_codewords("00\n\n0g\n", 8), Err(Error::Format { line: Some(3), .. })));
    }

    proptest! {
        #[test]
        fn hex_round_trip(bits in prop::collection::vec(any::<bool>(), 0..200)) {
            let x = BitWord::from_bools(&bits);
            prop_assert_eq!(codeword_from_hex(&codeword_to_hex(&x), bits.len()).unwrap(), x);
        }
    }
}
