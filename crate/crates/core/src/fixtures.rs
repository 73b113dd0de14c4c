//! Small hand-checked graphs shared by unit tests. Bits and checks are
//! 0-indexed; comments give the 1-indexed names (x1.., C1..).

use crate::tanner::TannerGraph;

fn zero_based(rows: &[&[usize]]) -> Vec<Vec<usize>> {
    rows.iter().map(|r| r.iter().map(|x| x - 1).collect()).collect()
}

/// Three checks hanging off x4; parities x4, x7, x10 in the usual labelling.
pub fn three_check_tree() -> TannerGraph {
    TannerGraph::from_rows(10, zero_based(&[&[1, 2, 3, 4], &[4, 5, 6, 7], &[4, 8, 9, 10]])).unwrap()
}

/// Seven checks on 16 bits forming a seven-tier pseudo-tree.
pub fn seven_tier_rows() -> Vec<Vec<usize>> {
    zero_based(&[
        &[1, 10, 5, 7],
        &[2, 5, 6, 12, 9],
        &[3, 5, 7, 11, 14, 8],
        &[4, 6, 8, 10, 9, 13],
        &[6, 10, 15, 11, 13],
        &[9, 11, 12, 16, 13],
        &[11, 14, 15, 16],
    ])
}

pub fn seven_tier_tree() -> TannerGraph {
    TannerGraph::from_rows(16, seven_tier_rows()).unwrap()
}

/// The seven-tier tree closed into a stopping set by C8 and C9.
pub fn nine_check_set() -> TannerGraph {
    let mut rows = seven_tier_rows();
    rows.push(vec![0, 1, 2, 3]);
    rows.push(vec![0, 1, 7, 15]);
    TannerGraph::from_rows(16, rows).unwrap()
}

/// A (13, 26) code of column weight 3 that splits into two stopping sets.
pub fn code_13_26() -> TannerGraph {
    TannerGraph::from_rows(26, zero_based(&CODE_13_26)).unwrap()
}

pub const CODE_13_26: [&[usize]; 13] = [
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
