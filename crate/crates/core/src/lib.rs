//! Stable survival prediction from high-dimensional, collinear features.
//!
//! The pipeline filters redundant features, regularizes the correlation
//! matrix with a cross-validated shrinkage penalty, extracts a small number
//! of orthogonal latent factors by maximum likelihood, and uses Thomson
//! factor scores as predictors in a Cox model. Prediction error is assessed
//! with IPCW Brier scores.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod brent;
pub mod corr;
pub mod data;
pub mod error;
pub mod factor;
pub mod linalg;
pub mod output;
#[cfg(feature = "parallel")]
pub mod parallel;
pub mod penalty;
pub mod pipeline;
pub mod rotation;
pub mod scores;
pub mod seed;
pub mod sim;
pub mod survival;

pub use error::{Error, Result};

/// `(0..count).map(f)`, in parallel when the `parallel` feature is on.
/// Output order always follows the index.
#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<T: Send>(count: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    parallel::install(|| (0..count).into_par_iter().map(&f).collect())
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<T>(count: usize, f: impl Fn(usize) -> T) -> Vec<T> {
    (0..count).map(f).collect()
}
