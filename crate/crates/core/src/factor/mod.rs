//! Maximum-likelihood factor analysis of a regularized correlation matrix.
//!
//! The model is `Σ(Θ) = ΛΛᵀ + Ψ` with diagonal `Ψ`. Estimates minimize the
//! discrepancy
//!
//! ```text
//! F[Σ; S] = ln|Σ| + tr(S Σ⁻¹) - ln|S| - p
//! ```
//!
//! Dimension selection (Guttman bound, AIC/BIC, sequential LRT) and the
//! usual factor-analytic diagnostics live in the submodules.

mod chi2;
mod diagnostics;
mod fit;
mod select;

pub use chi2::chi2_quantile;
pub use diagnostics::{
    determinacy, diagnose, kmo, smc_lower_bounds, threshold_loadings, variance_explained, DimensionDiagnostics,
    ThresholdedLoadings, VarianceExplained,
};
pub use fit::{fit_ml_factor, FitOptions, QuasiNewton};
pub use select::{
    free_parameters, lrt_degrees_of_freedom, select_aic, select_bic, select_lrt, Criterion, FitCache, LrtDf,
    SelectionTally,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::corr::ShrunkenCorrelation;
use crate::error::Result;
use crate::linalg::{spd_inverse, spd_log_det};

/// A fitted (optionally rotated) orthogonal factor model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorModel {
    /// `p × m` loadings.
    pub loadings: DMatrix<f64>,
    /// Diagonal of `Ψ`.
    pub uniquenesses: DVector<f64>,
    pub m: usize,
    pub discrepancy: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Features whose uniqueness sits on the lower bound.
    pub heywood: Vec<bool>,
    pub feature_names: Vec<String>,
    pub rotated: bool,
}

impl FactorModel {
    pub fn p(&self) -> usize {
        self.loadings.nrows()
    }

    /// `ΛΛᵀ + Ψ`.
    pub fn implied_correlation(&self) -> DMatrix<f64> {
        let mut s = &self.loadings * self.loadings.transpose();
        for j in 0..self.p() {
            s[(j, j)] += self.uniquenesses[j];
        }
        s
    }

    /// Row sums of squared loadings.
    pub fn communalities(&self) -> DVector<f64> {
        DVector::from_iterator(self.p(), self.loadings.row_iter().map(|r| r.norm_squared()))
    }

    /// `ΛᵀΨ⁻¹Λ`.
    pub fn scaled_gram(&self) -> DMatrix<f64> {
        let mut scaled = self.loadings.clone();
        for (j, mut row) in scaled.row_iter_mut().enumerate() {
            row /= self.uniquenesses[j];
        }
        self.loadings.transpose() * scaled
    }
}

/// `F[Σ; S]` evaluated directly with determinants and an inverse.
pub fn discrepancy(sigma: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<f64> {
    let inv = spd_inverse(sigma)?;
    Ok(spd_log_det(sigma)? + (s * inv).trace() - spd_log_det(s)? - s.nrows() as f64)
}

/// Largest `m` with `(p - m)² ≥ p + m`, i.e. non-negative degrees of freedom.
pub fn ledermann_max(p: usize) -> usize {
    let p = p as f64;
    let mut m = ((2.0 * p + 1.0 - (8.0 * p + 1.0).sqrt()) / 2.0).floor().max(0.0) as usize;
    // guard the floating-point floor at exact squares
    let ok = |m: usize| {
        let d = p - m as f64;
        d * d >= p + m as f64
    };
    while m > 0 && !ok(m) {
        m -= 1;
    }
    while ok(m + 1) && ((m + 1) as f64) < p {
        m += 1;
    }
    m
}

/// Count of eigenvalues of the regularized matrix exceeding one, computed
/// from the eigen gaps `(1 - θ)(d_j - 1)` of the unregularized matrix.
pub fn guttman_bound(s: &ShrunkenCorrelation) -> (usize, Vec<f64>) {
    let gaps: Vec<f64> = s.eigenvalues.iter().map(|&d| (1.0 - s.theta) * (d - 1.0)).collect();
    let m = gaps.iter().filter(|&&g| g > 0.0).count();
    (m, gaps)
}
