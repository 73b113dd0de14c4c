//! Linear-time encoding of LDPC codes from a sparse parity-check matrix.
//!
//! Preprocessing splits high-degree bits, decomposes the Tanner graph into
//! pseudo-trees and small encoding stopping sets, and compiles the result
//! into a flat [`encoder::Schedule`] of XOR steps. Encoding then replays the
//! schedule with no matrix algebra at all.

pub mod codes;
pub mod decompose;
pub mod encoder;
pub mod error;
#[cfg(test)]
mod fixtures;
pub mod gf2;
pub mod io;
pub mod oracle;
pub mod structures;
pub mod tanner;

pub use error::{Error, Result};
