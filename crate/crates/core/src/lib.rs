//! Equivariant filtering for range-only SLAM.
// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ekf;
pub mod eqf;
pub mod eval;
pub mod error;
pub mod filter;
pub mod harness;
pub mod io;
pub mod report;
pub mod lie;
pub mod sim;
pub mod symmetry;

pub use error::{Error, Result};
