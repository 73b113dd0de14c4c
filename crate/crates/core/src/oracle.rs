//! Reference encoder and checks by plain Gaussian elimination and
//! enumeration. Slow on purpose: nothing here goes through the graph
//! decomposition, so it can vouch for it.

use crate::error::{Error, Result};
use crate::gf2::BitWord;

/// Reduced row echelon form of H with its pivot (parity) and free
/// (information) columns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SystematicForm {
    pub n_bits: usize,
    /// One reduced row per pivot, each with a single pivot column set.
    pub rows: Vec<BitWord>,
    pub pivots: Vec<usize>,
    pub free: Vec<usize>,
}

impl SystematicForm {
    pub fn new<R: AsRef<[usize]>>(n_bits: usize, h: &[R]) -> Result<Self> {
        let mut rows = h
            .iter()
            .map(|r| BitWord::from_indices(n_bits, r.as_ref().iter().copied()))
            .collect::<Result<Vec<_>>>()?;
        let mut pivots = Vec::new();
        let mut next = 0;
        for col in 0..n_bits {
            let Some(p) = (next..rows.len()).find(|&r| rows[r].get(col)) else { continue };
            rows.swap(next, p);
            let pivot_row = rows[next].clone();
            for (r, row) in rows.iter_mut().enumerate() {
                if r != next && row.get(col) {
                    row.xor_assign(&pivot_row)?;
                }
            }
            pivots.push(col);
            next += 1;
        }
        rows.truncate(next);
        let mut is_pivot = vec![false; n_bits];
        for &p in &pivots {
            is_pivot[p] = true;
        }
        let free = (0..n_bits).filter(|&c| !is_pivot[c]).collect();
        Ok(SystematicForm { n_bits, rows, pivots, free })
    }

    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    /// Codeword with `info` on the free columns, in ascending column order.
    pub fn encode(&self, info: &BitWord) -> Result<BitWord> {
        if info.len() != self.free.len() {
            return Err(Error::Usage(format!("information word has {} bits, expected {}", info.len(), self.free.len())));
        }
        let mut x = BitWord::zeros(self.n_bits);
        for (i, &c) in self.free.iter().enumerate() {
            x.set(c, info.get(i));
        }
        // Each reduced row reads only free columns besides its own pivot.
        let parities: Vec<bool> = self.rows.iter().map(|r| r.dot(&x)).collect();
        for (&p, v) in self.pivots.iter().zip(parities) {
            x.set(p, v);
        }
        Ok(x)
    }
}

pub fn systematic_encode(sf: &SystematicForm, info: &BitWord) -> Result<BitWord> {
    sf.encode(info)
}

/// True iff every row of `h` has even parity on `x`.
pub fn verify<R: AsRef<[usize]>>(h: &[R], x: &BitWord) -> bool {
    h.iter().all(|r| r.as_ref().iter().all(|&b| b < x.len()) && r.as_ref().iter().filter(|&&b| x.get(b)).count() % 2 == 0)
}

pub const DEFAULT_CENSUS_LIMIT: usize = 20;

/// Every word in the nullspace of `h`, found by walking all 2^n words in
/// Gray-code order with an incrementally updated syndrome.
pub fn nullspace<R: AsRef<[usize]>>(n_bits: usize, h: &[R], limit: usize) -> Result<Vec<BitWord>> {
    if n_bits > limit {
        return Err(Error::Usage(format!("{n_bits} bits exceeds the enumeration limit of {limit}")));
    }
    let mut columns = vec![BitWord::zeros(h.len()); n_bits];
    for (c, r) in h.iter().enumerate() {
        for &b in r.as_ref() {
            if b >= n_bits {
                return Err(Error::Usage(format!("row {c} names bit {b} of {n_bits}")));
            }
            columns[b].flip(c);
        }
    }
    let mut syndrome = BitWord::zeros(h.len());
    let mut x = BitWord::zeros(n_bits);
    let mut out = vec![x.clone()];
    for i in 1u64..(1u64 << n_bits) {
        let b = i.trailing_zeros() as usize;
        x.flip(b);
        syndrome.xor_assign(&columns[b])?;
        if syndrome.is_zero() {
            out.push(x.clone());
        }
    }
    Ok(out)
}

/// Number of codewords of `h`, by exhaustive enumeration.
pub fn codeword_census<R: AsRef<[usize]>>(n_bits: usize, h: &[R], limit: usize) -> Result<usize> {
    Ok(nullspace(n_bits, h, limit)?.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::CODE_13_26;
    use proptest::prelude::*;

    fn code_13_26() -> Vec<Vec<usize>> {
        CODE_13_26.iter().map(|r| r.iter().map(|x| x - 1).collect()).collect()
    }

    #[test]
    fn zero_maps_to_zero() {
        let sf = SystematicForm::new(26, &code_13_26()).unwrap();
        assert_eq!(sf.rank(), 13);
        assert!(sf.encode(&BitWord::zeros(13)).unwrap().is_zero());
    }

    #[test]
    fn identity_code_has_only_zero() {
        let h: Vec<Vec<usize>> = (0..5).map(|i| vec![i]).collect();
        let sf = SystematicForm::new(5, &h).unwrap();
        assert!(sf.free.is_empty());
        assert_eq!(codeword_census(5, &h, DEFAULT_CENSUS_LIMIT).unwrap(), 1);
    }

    #[test]
    fn worked_codeword_verifies_and_one_flip_breaks_it() {
        let ones = [1, 2, 3, 4, 6, 10, 11, 13, 14, 16, 18, 19, 22, 23, 25, 26];
        let x = BitWord::from_indices(26, ones.iter().map(|b| b - 1)).unwrap();
        assert!(verify(&code_13_26(), &x));
        let mut y = x.clone();
        y.flip(0);
        assert!(!verify(&code_13_26(), &y));
        assert!(verify(&code_13_26(), &BitWord::zeros(26)));
    }

    #[test]
    fn census_of_small_codes() {
        assert_eq!(codeword_census(2, &[vec![0, 1]], DEFAULT_CENSUS_LIMIT).unwrap(), 2);
        let dep = [vec![0, 1], vec![1, 2], vec![0, 2]];
        assert_eq!(codeword_census(4, &dep, DEFAULT_CENSUS_LIMIT).unwrap(), 1 << (4 - 2));
        assert!(matches!(codeword_census(21, &dep, DEFAULT_CENSUS_LIMIT), Err(Error::Usage(_))));
    }

    fn code() -> impl Strategy<Value = (usize, Vec<Vec<usize>>)> {
        (1usize..13, 1usize..8).prop_flat_map(|(n, m)| {
            (Just(n), prop::collection::vec(prop::collection::btree_set(0..n, 1..=n), m))
                .prop_map(|(n, rows)| (n, rows.into_iter().map(|r| r.into_iter().collect()).collect()))
        })
    }

    proptest! {
        #[test]
        fn census_matches_rank((n, h) in code()) {
            let sf = SystematicForm::new(n, &h).unwrap();
            prop_assert_eq!(codeword_census(n, &h, DEFAULT_CENSUS_LIMIT).unwrap(), 1 << (n - sf.rank()));
        }

        #[test]
        fn systematic_words_are_codewords((n, h) in code(), seed in any::<u64>()) {
            let sf = SystematicForm::new(n, &h).unwrap();
            let info = BitWord::from_bools(&(0..sf.free.len()).map(|i| seed >> i & 1 == 1).collect::<Vec<_>>());
            let x = sf.encode(&info).unwrap();
            prop_assert!(verify(&h, &x));
            for (i, &c) in sf.free.iter().enumerate() {
                prop_assert_eq!(x.get(c), info.get(i));
            }
        }
    }
}
