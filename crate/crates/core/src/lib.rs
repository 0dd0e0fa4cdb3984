//! Extremes and argmin laws of Gaussian processes through the optimal
//! measure of a covariance kernel.

// `!(x > 0.0)` style tests are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod closedform;
pub mod error;
pub mod estimators;
pub mod gauss_sim;
pub mod grid;
pub mod kernels;
pub mod linalg;
pub mod measure;
pub mod optimizer;

pub use error::{Error, Result};
