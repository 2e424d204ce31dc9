//! Sample correlation, redundancy filtering and ridge-type shrinkage of a
//! correlation matrix toward the identity.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::StandardizedMatrix;
use crate::error::{Error, Result};
use crate::linalg::SymEigen;

/// A symmetric, unit-diagonal matrix with labelled rows/columns.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    pub values: DMatrix<f64>,
    pub feature_names: Vec<String>,
}

impl CorrelationMatrix {
    pub fn new(values: DMatrix<f64>, feature_names: Vec<String>) -> Result<Self> {
        if !values.is_square() {
            return Err(Error::InvalidParameter("correlation matrix must be square".into()));
        }
        if values.nrows() != feature_names.len() {
            return Err(Error::DimensionMismatch {
                expected: values.nrows(),
                actual: feature_names.len(),
            });
        }
        Ok(Self { values, feature_names })
    }

    /// Unnamed matrix; labels are `f1..fp`.
    pub fn unnamed(values: DMatrix<f64>) -> Self {
        let names = (1..=values.nrows()).map(|j| format!("f{j}")).collect();
        Self {
            values,
            feature_names: names,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn submatrix(&self, idx: &[usize]) -> Self {
        Self {
            values: self.values.select_rows(idx).select_columns(idx),
            feature_names: idx.iter().map(|&j| self.feature_names[j].clone()).collect(),
        }
    }
}

/// `R = ZᵀZ / (n - 1)` for standardized `Z`.
pub fn sample_correlation(z: &StandardizedMatrix) -> Result<CorrelationMatrix> {
    let n = z.nrows();
    if n < 2 {
        return Err(Error::InsufficientData { required: 2, actual: n });
    }
    Ok(CorrelationMatrix {
        values: cross_product(&z.data, n),
        feature_names: z.names().to_vec(),
    })
}

/// Symmetrized `XᵀX / (n - 1)` with an exact unit diagonal when `X` is
/// standardized on itself.
pub(crate) fn cross_product(x: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let mut r = x.tr_mul(x) / (n - 1) as f64;
    let p = r.nrows();
    for j in 0..p {
        for i in 0..j {
            let v = 0.5 * (r[(i, j)] + r[(j, i)]);
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    r
}

/// Which maximal-count feature to drop when several tie.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieRule {
    /// Lowest index among the tied features.
    #[default]
    First,
    /// Highest index among the tied features.
    Last,
    /// Largest sum of above-threshold absolute correlations; lowest index
    /// breaks any remaining tie.
    SumOfCorrelations,
}

#[derive(Debug, Clone)]
pub struct FilterResult {
    /// Indices into the input matrix, ascending.
    pub retained: Vec<usize>,
    /// Indices into the input matrix, in removal order.
    pub removed: Vec<usize>,
    pub filtered: CorrelationMatrix,
    pub threshold: f64,
}

/// Iteratively drop the feature with the most absolute correlations at or
/// above `tau` until no off-diagonal entry reaches `tau`.
///
/// The count includes the diagonal, so the loop stops once every count is
/// below 2.
pub fn redundancy_filter(r: &CorrelationMatrix, tau: f64, ties: TieRule) -> Result<FilterResult> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "redundancy threshold must lie in (0, 1], got {tau}"
        )));
    }
    let mut active: Vec<usize> = (0..r.dim()).collect();
    let mut removed = Vec::new();
    loop {
        let counts: Vec<usize> = active
            .iter()
            .map(|&i| active.iter().filter(|&&j| r.values[(i, j)].abs() >= tau).count())
            .collect();
        let Some(&max) = counts.iter().max() else {
            break;
        };
        if max < 2 {
            break;
        }
        let tied: Vec<usize> = (0..active.len()).filter(|&k| counts[k] == max).collect();
        let pick = match ties {
            TieRule::First => tied[0],
            TieRule::Last => tied[tied.len() - 1],
            TieRule::SumOfCorrelations => {
                let strength = |k: usize| -> f64 {
                    let i = active[k];
                    active
                        .iter()
                        .filter(|&&j| j != i && r.values[(i, j)].abs() >= tau)
                        .map(|&j| r.values[(i, j)].abs())
                        .sum()
                };
                let mut best = tied[0];
                for &k in &tied[1..] {
                    if strength(k) > strength(best) {
                        best = k;
                    }
                }
                best
            }
        };
        removed.push(active.remove(pick));
    }
    Ok(FilterResult {
        filtered: r.submatrix(&active),
        retained: active,
        removed,
        threshold: tau,
    })
}

/// `(1 - θ) R + θ I` stored through the eigendecomposition of `R`.
#[derive(Debug, Clone)]
pub struct ShrunkenCorrelation {
    pub base: CorrelationMatrix,
    pub theta: f64,
    /// Eigenvalues of `base`, descending.
    pub eigenvalues: DVector<f64>,
    /// Eigenvectors of `base`; also the eigenvectors of the shrunken matrix.
    pub eigenvectors: DMatrix<f64>,
}

impl ShrunkenCorrelation {
    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.base.feature_names
    }

    /// The regularized matrix itself.
    pub fn matrix(&self) -> DMatrix<f64> {
        let p = self.dim();
        let mut m = &self.base.values * (1.0 - self.theta);
        for j in 0..p {
            m[(j, j)] = 1.0;
        }
        m
    }

    /// `(1 - θ) d_j + θ`, descending.
    pub fn shrunken_eigenvalues(&self) -> DVector<f64> {
        self.eigenvalues.map(|d| (1.0 - self.theta) * d + self.theta)
    }

    /// Inverse of the regularized matrix via its spectrum.
    pub fn inverse(&self) -> DMatrix<f64> {
        let s = self.shrunken_eigenvalues();
        let mut scaled = self.eigenvectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col /= s[j];
        }
        let inv = &scaled * self.eigenvectors.transpose();
        (&inv + inv.transpose()) * 0.5
    }

    pub fn log_det(&self) -> f64 {
        self.shrunken_eigenvalues().iter().map(|v| v.ln()).sum()
    }

    /// Same base and eigendecomposition under another penalty.
    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        check_theta(theta)?;
        Ok(Self { theta, ..self.clone() })
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "penalty must lie in (0, 1], got {theta}"
        )))
    }
}

/// Shrink `r` toward the identity with penalty `theta ∈ (0, 1]`.
pub fn shrink(r: &CorrelationMatrix, theta: f64) -> Result<ShrunkenCorrelation> {
    check_theta(theta)?;
    Ok(shrink_unchecked(r, theta))
}

/// Like [`shrink`] but also accepts `theta = 0`, which leaves `R` unchanged
/// and is used for diagnostics on the raw matrix.
pub fn shrink_unchecked(r: &CorrelationMatrix, theta: f64) -> ShrunkenCorrelation {
    let eig = SymEigen::new(&r.values);
    ShrunkenCorrelation {
        base: r.clone(),
        theta,
        eigenvalues: eig.values,
        eigenvectors: eig.vectors,
    }
}

/// Largest over smallest shrunken eigenvalue.
pub fn condition_number(s: &ShrunkenCorrelation) -> f64 {
    let ev = s.shrunken_eigenvalues();
    ev.max() / ev.min()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{standardize, RawDataset};

    pub(crate) fn example_s1() -> CorrelationMatrix {
        #[rustfmt::skip]
        let v = DMatrix::from_row_slice(4, 4, &[
            1.0, 0.95, 0.95, 0.30,
            0.95, 1.0, 0.30, 0.30,
            0.95, 0.30, 1.0, 0.95,
            0.30, 0.30, 0.95, 1.0,
        ]);
        CorrelationMatrix::new(v, ["A", "B", "C", "D"].map(String::from).to_vec()).unwrap()
    }

    #[test]
    fn filter_follows_worked_example() {
        let f = redundancy_filter(&example_s1(), 0.95, TieRule::First).unwrap();
        assert_eq!(f.filtered.feature_names, ["B", "D"]);
        assert_eq!(f.removed, [0, 2]);
        assert_eq!(f.filtered.values[(0, 1)], 0.30);

        let f = redundancy_filter(&example_s1(), 0.95, TieRule::Last).unwrap();
        assert_eq!(f.filtered.feature_names, ["A", "D"]);
        assert_eq!(f.removed, [2, 1]);
    }

    #[test]
    fn filter_without_redundancy_keeps_everything() {
        let f = redundancy_filter(&example_s1(), 0.99, TieRule::First).unwrap();
        assert_eq!(f.retained, [0, 1, 2, 3]);
        assert!(f.removed.is_empty());
        let one = CorrelationMatrix::unnamed(DMatrix::identity(1, 1));
        assert_eq!(redundancy_filter(&one, 0.9, TieRule::First).unwrap().retained, [0]);
        assert!(redundancy_filter(&one, 0.0, TieRule::First).is_err());
    }

    #[test]
    fn sum_rule_prefers_stronger_feature() {
        #[rustfmt::skip]
        let v = DMatrix::from_row_slice(3, 3, &[
            1.0, 0.96, 0.10,
            0.96, 1.0, 0.10,
            0.10, 0.10, 1.0,
        ]);
        let r = CorrelationMatrix::unnamed(v);
        // symmetric pair: sums tie, lowest index wins
        let f = redundancy_filter(&r, 0.95, TieRule::SumOfCorrelations).unwrap();
        assert_eq!(f.removed, [0]);
    }

    #[test]
    fn collinear_columns_give_unit_correlation() {
        let x = DMatrix::from_row_slice(4, 3, &[1.0, 1.0, -1.0, 2.0, 2.0, -2.0, 4.0, 4.0, -4.0, 0.5, 0.5, -0.5]);
        let (z, _) = standardize(&RawDataset::from_matrix(x).unwrap()).unwrap();
        let r = sample_correlation(&z).unwrap();
        assert!((r.values[(0, 1)] - 1.0).abs() < 1e-12);
        assert!((r.values[(0, 2)] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn shrink_limits_and_linearity() {
        let r = CorrelationMatrix::unnamed(DMatrix::from_row_slice(2, 2, &[1.0, 0.8, 0.8, 1.0]));
        let s = shrink(&r, 1.0).unwrap();
        assert_eq!(s.matrix(), DMatrix::identity(2, 2));
        let s = shrink(&r, 0.5).unwrap();
        assert!((s.matrix()[(0, 1)] - 0.4).abs() < 1e-15);
        assert!(shrink(&r, 0.0).is_err());
        assert!(shrink(&r, 1.1).is_err());
    }

    #[test]
    fn condition_number_closed_form() {
        let r = CorrelationMatrix::unnamed(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]));
        assert!((condition_number(&shrink_unchecked(&r, 0.0)) - 3.0).abs() < 1e-12);
        assert!((condition_number(&shrink(&r, 1.0).unwrap()) - 1.0).abs() < 1e-12);
    }
}
