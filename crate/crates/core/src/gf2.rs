//! Bit-packed GF(2) vectors and a dense matrix for rank computations.
//!
//! The dense matrix is only meant for small inputs (tests, `info` on modest
//! codes, the reference encoder). The fast encoder never touches it.

use std::fmt;

use crate::error::{Error, Result};

const WORD: usize = 64;

fn words_for(len: usize) -> usize {
    len.div_ceil(WORD)
}

/// A fixed-length vector over GF(2), packed into 64-bit words.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitWord {
    len: usize,
    words: Vec<u64>,
}

impl BitWord {
    pub fn zeros(len: usize) -> Self {
        BitWord { len, words: vec![0; words_for(len)] }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut w = BitWord::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                w.set(i, true);
            }
        }
        w
    }

    /// Builds a word of length `len` with ones at `ones`. Repeated indices cancel.
    pub fn from_indices(len: usize, ones: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut w = BitWord::zeros(len);
        for i in ones {
            if i >= len {
                return Err(Error::Usage(format!("bit index {i} out of range for length {len}")));
            }
            w.flip(i);
        }
        Ok(w)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        (self.words[i / WORD] >> (i % WORD)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: bool) {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        let mask = 1u64 << (i % WORD);
        if v {
            self.words[i / WORD] |= mask;
        } else {
            self.words[i / WORD] &= !mask;
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        self.words[i / WORD] ^= 1u64 << (i % WORD);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn first_one(&self) -> Option<usize> {
        self.words
            .iter()
            .enumerate()
            .find(|(_, &w)| w != 0)
            .map(|(k, w)| k * WORD + w.trailing_zeros() as usize)
    }

    /// Parity of the bitwise AND, i.e. the GF(2) inner product.
    pub fn dot(&self, other: &BitWord) -> bool {
        debug_assert_eq!(self.len, other.len);
        self.words
            .iter()
            .zip(&other.words)
            .fold(0u32, |acc, (a, b)| acc ^ (a & b).count_ones())
            & 1
            == 1
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(k, &w)| {
            let mut rest = w;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let t = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(k * WORD + t)
            })
        })
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.len).map(|i| self.get(i)).collect()
    }

    pub fn xor_assign(&mut self, other: &BitWord) -> Result<()> {
        xor_into(self, other)
    }
}

impl fmt::Debug for BitWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitWord({self})")
    }
}

impl fmt::Display for BitWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// `dst ^= src`, word by word.
pub fn xor_into(dst: &mut BitWord, src: &BitWord) -> Result<()> {
    if dst.len != src.len {
        return Err(Error::Usage(format!(
            "xor of words with lengths {} and {}",
            dst.len, src.len
        )));
    }
    for (d, s) in dst.words.iter_mut().zip(&src.words) {
        *d ^= s;
    }
    Ok(())
}

/// Row-major dense binary matrix.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct DenseGf2Matrix {
    n_cols: usize,
    rows: Vec<BitWord>,
}

impl DenseGf2Matrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        DenseGf2Matrix { n_cols, rows: vec![BitWord::zeros(n_cols); n_rows] }
    }

    /// Builds a matrix from per-row lists of column indices.
    pub fn from_row_indices<R: AsRef<[usize]>>(n_cols: usize, rows: &[R]) -> Result<Self> {
        let rows = rows
            .iter()
            .map(|r| BitWord::from_indices(n_cols, r.as_ref().iter().copied()))
            .collect::<Result<Vec<_>>>()?;
        Ok(DenseGf2Matrix { n_cols, rows })
    }

    pub fn from_rows(n_cols: usize, rows: Vec<BitWord>) -> Result<Self> {
        if let Some(r) = rows.iter().find(|r| r.len() != n_cols) {
            return Err(Error::Usage(format!("row of length {} in a {n_cols}-column matrix", r.len())));
        }
        Ok(DenseGf2Matrix { n_cols, rows })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, r: usize) -> &BitWord {
        &self.rows[r]
    }

    pub fn rows(&self) -> &[BitWord] {
        &self.rows
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.rows[r].get(c)
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.rows[r].set(c, v)
    }

    pub fn transpose(&self) -> DenseGf2Matrix {
        let mut t = DenseGf2Matrix::zeros(self.n_cols, self.rows.len());
        for (r, row) in self.rows.iter().enumerate() {
            for c in row.iter_ones() {
                t.rows[c].set(r, true);
            }
        }
        t
    }

    /// `H * x` over GF(2).
    pub fn mul_vec(&self, x: &BitWord) -> Result<BitWord> {
        if x.len() != self.n_cols {
            return Err(Error::Usage(format!(
                "vector of length {} against {} columns",
                x.len(),
                self.n_cols
            )));
        }
        Ok(BitWord::from_bools(&self.rows.iter().map(|r| r.dot(x)).collect::<Vec<_>>()))
    }
}

pub fn rank(m: &DenseGf2Matrix) -> usize {
    independent_row_set(m).len()
}

/// Indices of a maximal set of linearly independent rows, chosen greedily in
/// ascending row order.
pub fn independent_row_set(m: &DenseGf2Matrix) -> Vec<usize> {
    // basis[p] holds a reduced vector whose lowest set bit is p.
    let mut basis: Vec<Option<BitWord>> = vec![None; m.n_cols];
    let mut kept = Vec::new();
    for (r, row) in m.rows.iter().enumerate() {
        let mut v = row.clone();
        while let Some(p) = v.first_one() {
            match &basis[p] {
                Some(b) => {
                    for (d, s) in v.words.iter_mut().zip(&b.words) {
                        *d ^= s;
                    }
                }
                None => {
                    basis[p] = Some(v);
                    kept.push(r);
                    break;
                }
            }
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bit_access_across_word_boundary() {
        let mut w = BitWord::zeros(130);
        w.set(0, true);
        w.set(63, true);
        w.set(64, true);
        w.set(129, true);
        assert_eq!(w.iter_ones().collect::<Vec<_>>(), vec![0, 63, 64, 129]);
        assert_eq!(w.count_ones(), 4);
        w.flip(63);
        assert!(!w.get(63));
        assert_eq!(w.first_one(), Some(0));
    }

    #[test]
    fn xor_length_mismatch_is_an_error() {
        let mut a = BitWord::zeros(5);
        assert!(matches!(xor_into(&mut a, &BitWord::zeros(6)), Err(Error::Usage(_))));
    }

    #[test]
    fn repeated_indices_cancel() {
        let w = BitWord::from_indices(4, [1, 2, 1]).unwrap();
        assert_eq!(w.to_string(), "0010");
    }

    #[test]
    fn rank_of_known_matrices() {
        let id = DenseGf2Matrix::from_row_indices(3, &[vec![0], vec![1], vec![2]]).unwrap();
        assert_eq!(rank(&id), 3);
        // Third row is the sum of the first two.
        let dep = DenseGf2Matrix::from_row_indices(4, &[vec![0, 1], vec![1, 2], vec![0, 2]]).unwrap();
        assert_eq!(rank(&dep), 2);
        assert_eq!(independent_row_set(&dep), vec![0, 1]);
        assert_eq!(rank(&DenseGf2Matrix::zeros(3, 5)), 0);
    }

    fn matrix() -> impl Strategy<Value = DenseGf2Matrix> {
        (1usize..12, 1usize..90).prop_flat_map(|(r, c)| {
            prop::collection::vec(prop::collection::vec(any::<bool>(), c), r).prop_map(move |rows| {
                DenseGf2Matrix::from_rows(c, rows.iter().map(|b| BitWord::from_bools(b)).collect())
                    .unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn xor_is_an_involution((a, b) in (0usize..200).prop_flat_map(|n| (
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(any::<bool>(), n),
        ))) {
            let x = BitWord::from_bools(&a);
            let y = BitWord::from_bools(&b);
            let mut z = x.clone();
            xor_into(&mut z, &y).unwrap();
            xor_into(&mut z, &y).unwrap();
            prop_assert_eq!(z, x);
        }

        #[test]
        fn rank_equals_rank_of_transpose(m in matrix()) {
            prop_assert_eq!(rank(&m), rank(&m.transpose()));
            prop_assert!(rank(&m) <= m.n_rows().min(m.n_cols()));
        }

        #[test]
        fn row_operations_preserve_rank(m in matrix(), i in 0usize..12, j in 0usize..12) {
            let (i, j) = (i % m.n_rows(), j % m.n_rows());
            prop_assume!(i != j);
            let mut rows = m.rows().to_vec();
            let src = rows[j].clone();
            xor_into(&mut rows[i], &src).unwrap();
            let m2 = DenseGf2Matrix::from_rows(m.n_cols(), rows).unwrap();
            prop_assert_eq!(rank(&m), rank(&m2));
        }

        #[test]
        fn independent_rows_are_independent_and_maximal(m in matrix()) {
            let kept = independent_row_set(&m);
            let sub = DenseGf2Matrix::from_rows(m.n_cols(), kept.iter().map(|&r| m.row(r).clone()).collect()).unwrap();
            prop_assert_eq!(rank(&sub), kept.len());
            prop_assert_eq!(kept.len(), rank(&m));
        }
    }
}
