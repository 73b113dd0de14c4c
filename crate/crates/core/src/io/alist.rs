use std::fmt::{self, Write as _};

use crate::error::{Error, Result};
use crate::tanner::TannerGraph;

/// An alist file as written: degrees and 1-indexed adjacency, both ways.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlistDocument {
    pub n_bits: usize,
    pub n_checks: usize,
    pub max_bit_degree: usize,
    pub max_check_degree: usize,
    pub bit_degrees: Vec<usize>,
    pub check_degrees: Vec<usize>,
    /// 1-indexed checks of each bit.
    pub bit_adjacency: Vec<Vec<usize>>,
    /// 1-indexed bits of each check.
    pub check_adjacency: Vec<Vec<usize>>,
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines { inner: text.lines().enumerate(), last: 0 }
    }

    /// The next line's numbers. Blank lines are skipped unless `blank_ok`,
    /// which is how an unpadded list of a degree-0 node looks.
    fn numbers_or_blank(&mut self, what: &str, blank_ok: bool) -> Result<(usize, Vec<usize>)> {
        let (no, line) = loop {
            match self.inner.next() {
                None => return Err(Error::format(self.last + 1, format!("file ends before the {what}"))),
                Some((i, l)) if blank_ok || !l.trim().is_empty() => break (i + 1, l.trim()),
                Some(_) => {}
            }
        };
        self.last = no;
        let nums = line
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|_| Error::format(no, format!("`{t}` in the {what} is not a count"))))
            .collect::<Result<Vec<_>>>()?;
        Ok((no, nums))
    }

    fn numbers(&mut self, what: &str) -> Result<(usize, Vec<usize>)> {
        self.numbers_or_blank(what, false)
    }

    fn exactly(&mut self, k: usize, what: &str) -> Result<(usize, Vec<usize>)> {
        let (no, nums) = self.numbers(what)?;
        if nums.len() != k {
            return Err(Error::format(no, format!("the {what} has {} entries, expected {k}", nums.len())));
        }
        Ok((no, nums))
    }
}

impl AlistDocument {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = Lines::new(text);
        let (_, head) = lines.exactly(2, "size line")?;
        let (n_bits, n_checks) = (head[0], head[1]);
        let (_, maxes) = lines.exactly(2, "maximum degree line")?;
        let (bit_no, bit_degrees) = lines.exactly(n_bits, "bit degree line")?;
        let (check_no, check_degrees) = lines.exactly(n_checks, "check degree line")?;
        for (no, degrees, max, what) in
            [(bit_no, &bit_degrees, maxes[0], "bit"), (check_no, &check_degrees, maxes[1], "check")]
        {
            if degrees.iter().any(|&d| d > max) || (!degrees.is_empty() && degrees.iter().max() != Some(&max)) {
                return Err(Error::format(no, format!("{what} degrees do not peak at the stated maximum {max}")));
            }
        }
        let mut read_lists = |degrees: &[usize], range: usize, what: &str| -> Result<Vec<(usize, Vec<usize>)>> {
            degrees
                .iter()
                .enumerate()
                .map(|(i, &d)| {
                    let (no, nums) = lines.numbers_or_blank(&format!("adjacency line of {what} {}", i + 1), d == 0)?;
                    // Some writers pad short lists with zeros up to the maximum degree.
                    let list: Vec<usize> = nums.iter().copied().filter(|&x| x != 0).collect();
                    if list.len() != d {
                        return Err(Error::format(no, format!("{what} {} lists {} entries but has degree {d}", i + 1, list.len())));
                    }
                    if let Some(&x) = list.iter().find(|&&x| x > range) {
                        return Err(Error::format(no, format!("index {x} out of range 1..={range}")));
                    }
                    let mut sorted = list.clone();
                    sorted.sort_unstable();
                    if sorted.windows(2).any(|w| w[0] == w[1]) {
                        return Err(Error::format(no, format!("{what} {} repeats an index", i + 1)));
                    }
                    Ok((no, list))
                })
                .collect()
        };
        let bit_lists = read_lists(&bit_degrees, n_checks, "bit")?;
        let check_lists = read_lists(&check_degrees, n_bits, "check")?;
        // Both directions must describe the same edges.
        let mut from_checks: Vec<Vec<usize>> = vec![Vec::new(); n_bits];
        for (c, (_, list)) in check_lists.iter().enumerate() {
            for &b in list {
                from_checks[b - 1].push(c + 1);
            }
        }
        for (b, (no, list)) in bit_lists.iter().enumerate() {
            let mut mine = list.clone();
            mine.sort_unstable();
            if mine != from_checks[b] {
                return Err(Error::format(*no, format!("bit {} disagrees with the check lists", b + 1)));
            }
        }
        Ok(AlistDocument {
            n_bits,
            n_checks,
            max_bit_degree: maxes[0],
            max_check_degree: maxes[1],
            bit_degrees,
            check_degrees,
            bit_adjacency: bit_lists.into_iter().map(|(_, l)| l).collect(),
            check_adjacency: check_lists.into_iter().map(|(_, l)| l).collect(),
        })
    }

    pub fn from_graph(g: &TannerGraph) -> Self {
        let one_based = |v: &[usize]| v.iter().map(|x| x + 1).collect::<Vec<_>>();
        AlistDocument {
            n_bits: g.n_bits(),
            n_checks: g.n_checks(),
            max_bit_degree: g.max_bit_degree(),
            max_check_degree: g.max_check_degree(),
            bit_degrees: (0..g.n_bits()).map(|b| g.bit(b).len()).collect(),
            check_degrees: (0..g.n_checks()).map(|c| g.check(c).len()).collect(),
            bit_adjacency: (0..g.n_bits()).map(|b| one_based(g.bit(b))).collect(),
            check_adjacency: (0..g.n_checks()).map(|c| one_based(g.check(c))).collect(),
        }
    }

    pub fn to_graph(&self) -> Result<TannerGraph> {
        let rows = self.check_adjacency.iter().map(|r| r.iter().map(|x| x - 1).collect()).collect();
        TannerGraph::from_rows(self.n_bits, rows).map_err(|e| Error::corrupt(e.to_string()))
    }
}

impl fmt::Display for AlistDocument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[usize]| {
            let mut s = String::new();
            for (i, x) in v.iter().enumerate() {
                if i > 0 {
                    s.push(' ');
                }
                let _ = write!(s, "{x}");
            }
            s
        };
        writeln!(f, "{} {}", self.n_bits, self.n_checks)?;
        writeln!(f, "{} {}", self.max_bit_degree, self.max_check_degree)?;
        writeln!(f, "{}", join(&self.bit_degrees))?;
        writeln!(f, "{}", join(&self.check_degrees))?;
        for l in self.bit_adjacency.iter().chain(&self.check_adjacency) {
            writeln!(f, "{}", join(l))?;
        }
        Ok(())
    }
}

pub fn parse_alist(text: &str) -> Result<TannerGraph> {
    AlistDocument::parse(text)?.to_graph()
}
