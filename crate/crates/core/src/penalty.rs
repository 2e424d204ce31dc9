//! K-fold cross-validated choice of the shrinkage penalty.
//!
//! The score of a penalty `θ` is
//!
//! ```text
//! φ(θ) = (1/K) Σ_k n_k { ln|R(θ)_¬k| + tr[R_k R(θ)_¬k⁻¹] }
//! ```
//!
//! where `R_k` is the sample correlation of fold `k` and `R(θ)_¬k` the
//! shrunken correlation of the remaining rows. Each fold is decomposed once,
//! `R_¬k = V D Vᵀ`; then `ln|R(θ)_¬k| = Σ ln((1-θ)d_j + θ)` and the trace is
//! `Σ (VᵀR_kV)_jj / ((1-θ)d_j + θ)`, so evaluating `φ` is `O(Kp)`.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::brent;
use crate::data::StandardizedMatrix;
use crate::error::{Error, Result};
use crate::linalg::SymEigen;

pub const THETA_MIN: f64 = 1e-6;
pub const THETA_MAX: f64 = 1.0;
pub const BRENT_TOL: f64 = 1e-8;
pub const BRENT_MAX_ITER: usize = 200;
/// Log-spaced scan points used to bracket the global minimum before Brent.
const SCAN_POINTS: usize = 61;
pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PenaltySearchResult {
    pub theta_opt: f64,
    pub cv_score: f64,
    pub folds: usize,
    /// Fold id of every row.
    pub fold_assignment: Vec<usize>,
    /// Every `(θ, φ(θ))` evaluated during the search.
    pub trace: Vec<(f64, f64)>,
}

/// Shuffle rows with a seeded RNG and deal them round-robin into `k` folds.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let mut folds = vec![0; n];
    for (pos, &row) in perm.iter().enumerate() {
        folds[row] = pos % k;
    }
    folds
}

/// Correlation of the rows `rows` of `x`, re-standardized on those rows.
/// A column that is constant on the subset gets zero correlations.
pub(crate) fn subset_correlation(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    let sub = x.select_rows(rows);
    let n = sub.nrows();
    let mut centered = sub;
    for mut col in centered.column_iter_mut() {
        let mean = col.sum() / n as f64;
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / (n - 1) as f64).sqrt();
        if sd > 0.0 {
            col /= sd;
        } else {
            col.fill(0.0);
        }
    }
    let mut r = crate::corr::cross_product(&centered, n);
    for j in 0..r.nrows() {
        r[(j, j)] = 1.0;
    }
    r
}

struct FoldTerm {
    size: f64,
    /// Eigenvalues of `R_¬k`, clamped at zero.
    d: Vec<f64>,
    /// `diag(Vᵀ R_k V)`.
    proj: Vec<f64>,
}

/// The cross-validation score as a function of the penalty.
pub struct CvObjective {
    terms: Vec<FoldTerm>,
    pub fold_assignment: Vec<usize>,
}

impl CvObjective {
    pub fn new(z: &StandardizedMatrix, k: usize, seed: u64) -> Result<Self> {
        let n = z.nrows();
        if k < 2 || k > n {
            return Err(Error::InvalidParameter(format!(
                "fold count must lie in [2, {n}], got {k}"
            )));
        }
        let folds = fold_assignment(n, k, seed);
        Self::with_folds(&z.data, folds, k)
    }

    pub fn with_folds(x: &DMatrix<f64>, folds: Vec<usize>, k: usize) -> Result<Self> {
        let mut terms = Vec::with_capacity(k);
        for fold in 0..k {
            let inside: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] == fold).collect();
            let outside: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] != fold).collect();
            if inside.len() < 2 {
                return Err(Error::FoldTooSmall {
                    fold,
                    size: inside.len(),
                });
            }
            if outside.len() < 2 {
                return Err(Error::FoldTooSmall {
                    fold,
                    size: outside.len(),
                });
            }
            let r_in = subset_correlation(x, &inside);
            let r_out = subset_correlation(x, &outside);
            let eig = SymEigen::new(&r_out);
            let proj = eig.vectors.column_iter().map(|v| v.dot(&(&r_in * v))).collect();
            terms.push(FoldTerm {
                size: inside.len() as f64,
                d: eig.values.iter().map(|&d| d.max(0.0)).collect(),
                proj,
            });
        }
        Ok(Self {
            terms,
            fold_assignment: folds,
        })
    }

    pub fn folds(&self) -> usize {
        self.terms.len()
    }

    pub fn eval(&self, theta: f64) -> f64 {
        let total: f64 = self
            .terms
            .iter()
            .map(|t| {
                let s: f64 =
                    t.d.iter()
                        .zip(&t.proj)
                        .map(|(&d, &q)| {
                            let e = (1.0 - theta) * d + theta;
                            e.ln() + q / e
                        })
                        .sum();
                t.size * s
            })
            .sum();
        total / self.terms.len() as f64
    }
}

/// Choose `θ ∈ [THETA_MIN, 1]` minimizing the K-fold score.
///
/// A log-spaced scan brackets the best region, then Brent refines inside
/// the bracket. The returned optimum is the best point seen overall.
pub fn cv_select_penalty(z: &StandardizedMatrix, k: usize, seed: u64) -> Result<PenaltySearchResult> {
    let objective = CvObjective::new(z, k, seed)?;
    select_with(&objective)
}

pub fn select_with(objective: &CvObjective) -> Result<PenaltySearchResult> {
    let mut trace = Vec::new();
    let mut eval = |theta: f64| -> Result<f64> {
        let v = objective.eval(theta);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("theta = {theta}")));
        }
        trace.push((theta, v));
        Ok(v)
    };

    let (lmin, lmax) = (THETA_MIN.ln(), THETA_MAX.ln());
    let grid: Vec<f64> = (0..SCAN_POINTS)
        .map(|i| (lmin + (lmax - lmin) * i as f64 / (SCAN_POINTS - 1) as f64).exp())
        .collect();
    let mut best = 0;
    let mut values = Vec::with_capacity(grid.len());
    for (i, &t) in grid.iter().enumerate() {
        values.push(eval(t)?);
        if values[i] < values[best] {
            best = i;
        }
    }
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];

    let mut failure = None;
    brent::minimize(
        |t| match eval(t) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::INFINITY
            }
        },
        lo,
        hi,
        BRENT_TOL,
        BRENT_MAX_ITER,
    );
    if let Some(e) = failure {
        return Err(e);
    }

    let &(theta_opt, cv_score) = trace
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)))
        .expect("trace is non-empty");
    Ok(PenaltySearchResult {
        theta_opt,
        cv_score,
        folds: objective.folds(),
        fold_assignment: objective.fold_assignment.clone(),
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{standardize, RawDataset};
    use crate::linalg::{spd_inverse, spd_log_det};
    use rand::RngExt;
    use rand_distr::StandardNormal;

    fn gaussian(n: usize, p: usize, seed: u64) -> StandardizedMatrix {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        standardize(&RawDataset::from_matrix(x).unwrap()).unwrap().0
    }

    /// Determinant/inverse evaluation of the score, independent of the
    /// eigen parameterization.
    fn naive_score(z: &StandardizedMatrix, folds: &[usize], k: usize, theta: f64) -> f64 {
        let mut total = 0.0;
        for fold in 0..k {
            let inside: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] == fold).collect();
            let outside: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] != fold).collect();
            let r_in = subset_correlation(&z.data, &inside);
            let r_out = subset_correlation(&z.data, &outside);
            let p = r_out.nrows();
            let shrunk = &r_out * (1.0 - theta) + DMatrix::identity(p, p) * theta;
            let inv = spd_inverse(&shrunk).unwrap();
            total += inside.len() as f64 * (spd_log_det(&shrunk).unwrap() + (&r_in * inv).trace());
        }
        total / k as f64
    }

    #[test]
    fn eigen_route_matches_naive_route() {
        let z = gaussian(40, 6, 3);
        let obj = CvObjective::new(&z, 5, 11).unwrap();
        for &t in &[1e-4, 0.01, 0.2, 0.7, 1.0] {
            let a = obj.eval(t);
            let b = naive_score(&z, &obj.fold_assignment, 5, t);
            assert!((a - b).abs() < 1e-8 * b.abs().max(1.0), "{t}: {a} vs {b}");
        }
    }

    #[test]
    fn folds_are_balanced_and_deterministic() {
        let f = fold_assignment(23, 5, 42);
        let mut counts = [0; 5];
        for &k in &f {
            counts[k] += 1;
        }
        assert!(counts.iter().all(|&c| c == 4 || c == 5));
        assert_eq!(f, fold_assignment(23, 5, 42));
    }

    #[test]
    fn rejects_tiny_folds() {
        let z = gaussian(6, 2, 1);
        assert!(matches!(cv_select_penalty(&z, 5, 0), Err(Error::FoldTooSmall { .. })));
        assert!(cv_select_penalty(&z, 1, 0).is_err());
    }

    #[test]
    fn well_conditioned_data_need_little_shrinkage() {
        // AR(1)-style correlation, far from the identity target
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let mut x = DMatrix::from_fn(500, 5, |_, _| rng.sample::<f64, _>(StandardNormal));
        for j in 1..5 {
            let prev = x.column(j - 1).into_owned();
            x.column_mut(j).axpy(0.8, &prev, 0.6);
        }
        let z = standardize(&RawDataset::from_matrix(x).unwrap()).unwrap().0;
        let res = cv_select_penalty(&z, 5, 1).unwrap();
        assert!(res.theta_opt < 0.05, "theta = {}", res.theta_opt);
        let obj = CvObjective::with_folds(&z.data, res.fold_assignment.clone(), 5).unwrap();
        let grid_min = (1..=1000)
            .map(|i| obj.eval(i as f64 / 1000.0))
            .fold(f64::INFINITY, f64::min);
        assert!(res.cv_score <= grid_min + 1e-6);
        for &(_, v) in &res.trace {
            assert!(res.cv_score <= v);
        }
    }

    #[test]
    fn wide_data_stay_finite() {
        let z = gaussian(20, 100, 9);
        let res = cv_select_penalty(&z, 5, 2).unwrap();
        assert!(res.cv_score.is_finite());
        assert!(res.theta_opt > 0.3, "theta = {}", res.theta_opt);
        let again = cv_select_penalty(&z, 5, 2).unwrap();
        assert_eq!(res.fold_assignment, again.fold_assignment);
        assert_eq!(res.theta_opt.to_bits(), again.theta_opt.to_bits());
    }
}
