use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{guttman_bound, ledermann_max, FactorModel};
use crate::corr::ShrunkenCorrelation;
use crate::error::{Error, Result};

/// Kaiser–Meyer–Olkin sampling adequacy of the regularized matrix.
pub fn kmo(s: &ShrunkenCorrelation) -> Result<f64> {
    let r = s.matrix();
    let inv = s.inverse();
    let p = r.nrows();
    let (mut marginal, mut partial) = (0.0, 0.0);
    for i in 0..p {
        for j in 0..p {
            if i != j {
                marginal += r[(i, j)] * r[(i, j)];
                partial += inv[(i, j)] * inv[(i, j)] / (inv[(i, i)] * inv[(j, j)]);
            }
        }
    }
    let denom = marginal + partial;
    if !(denom > 1e-300) {
        return Err(Error::DegenerateKmo);
    }
    Ok(marginal / denom)
}

/// Squared multiple correlations `1 - 1/[R⁻¹]_jj`, lower bounds for the
/// communalities.
pub fn smc_lower_bounds(s: &ShrunkenCorrelation) -> Vec<f64> {
    let inv = s.inverse();
    (0..s.dim()).map(|j| (1.0 - 1.0 / inv[(j, j)]).max(0.0)).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarianceExplained {
    pub per_factor: Vec<f64>,
    pub cumulative: f64,
}

/// Share of total variance carried by each factor, `(ΛᵀΛ)_kk / p`.
pub fn variance_explained(loadings: &DMatrix<f64>) -> VarianceExplained {
    let p = loadings.nrows() as f64;
    let per_factor: Vec<f64> = loadings.column_iter().map(|c| c.norm_squared() / p).collect();
    let cumulative = per_factor.iter().sum();
    VarianceExplained { per_factor, cumulative }
}

/// Squared multiple correlation of each factor with the features,
/// `(Λᵀ R⁻¹ Λ)_kk`.
pub fn determinacy(model: &FactorModel, s: &ShrunkenCorrelation) -> Vec<f64> {
    let g = model.loadings.transpose() * s.inverse() * &model.loadings;
    g.diagonal().iter().copied().collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdedLoadings {
    pub loadings: DMatrix<f64>,
    pub omega: f64,
    /// Entries with `|λ| > ω` per factor.
    pub significant: Vec<usize>,
    /// Factors with fewer than three significant loadings.
    pub weak: Vec<bool>,
}

pub fn threshold_loadings(loadings: &DMatrix<f64>, omega: f64) -> Result<ThresholdedLoadings> {
    if !(omega >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "omega must be non-negative, got {omega}"
        )));
    }
    let thresholded = loadings.map(|v| if v.abs() > omega { v } else { 0.0 });
    let significant: Vec<usize> = thresholded
        .column_iter()
        .map(|c| c.iter().filter(|v| **v != 0.0).count())
        .collect();
    let weak = significant.iter().map(|&k| k < 3).collect();
    Ok(ThresholdedLoadings {
        loadings: thresholded,
        omega,
        significant,
        weak,
    })
}

/// Everything reported alongside a dimension choice.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DimensionDiagnostics {
    pub guttman_m: usize,
    pub eigen_gaps: Vec<f64>,
    /// `None` when the matrix is the identity.
    pub kmo: Option<f64>,
    pub smc_lower: Vec<f64>,
    pub communalities: Vec<f64>,
    pub variance: VarianceExplained,
    pub determinacy: Vec<f64>,
    pub ledermann_max: usize,
}

pub fn diagnose(s: &ShrunkenCorrelation, model: &FactorModel) -> DimensionDiagnostics {
    let (guttman_m, eigen_gaps) = guttman_bound(s);
    let communalities: DVector<f64> = model.communalities();
    DimensionDiagnostics {
        guttman_m,
        eigen_gaps,
        kmo: kmo(s).ok(),
        smc_lower: smc_lower_bounds(s),
        communalities: communalities.iter().copied().collect(),
        variance: variance_explained(&model.loadings),
        determinacy: determinacy(model, s),
        ledermann_max: ledermann_max(s.dim()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corr::sample_correlation;
    use crate::corr::{shrink_unchecked, CorrelationMatrix};
    use crate::data::{standardize, RawDataset};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn one_factor(lambda: f64, p: usize) -> (DMatrix<f64>, ShrunkenCorrelation) {
        let l = DMatrix::from_element(p, 1, lambda);
        let r = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { lambda * lambda });
        (l, shrink_unchecked(&CorrelationMatrix::unnamed(r), 0.0))
    }

    fn model(loadings: DMatrix<f64>) -> FactorModel {
        let p = loadings.nrows();
        let psi = DVector::from_fn(p, |j, _| 1.0 - loadings.row(j).norm_squared());
        FactorModel {
            m: loadings.ncols(),
            loadings,
            uniquenesses: psi,
            discrepancy: 0.0,
            iterations: 0,
            converged: true,
            heywood: vec![false; p],
            feature_names: Vec::new(),
            rotated: false,
        }
    }

    #[test]
    fn kmo_degenerate_on_identity() {
        let s = shrink_unchecked(&CorrelationMatrix::unnamed(DMatrix::identity(4, 4)), 0.0);
        assert!(matches!(kmo(&s), Err(Error::DegenerateKmo)));
    }

    #[test]
    fn kmo_high_for_strong_single_factor() {
        let (_, s) = one_factor(0.9, 10);
        assert!(kmo(&s).unwrap() > 0.9);
    }

    #[test]
    fn kmo_matches_elementwise_oracle() {
        let r = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.3, 0.5, 1.0, 0.4, 0.3, 0.4, 1.0]);
        let s = shrink_unchecked(&CorrelationMatrix::unnamed(r.clone()), 0.0);
        // partial correlation of (i, j) given k, from the textbook formula
        let partial = |i: usize, j: usize, k: usize| {
            (r[(i, j)] - r[(i, k)] * r[(j, k)]) / ((1.0 - r[(i, k)].powi(2)) * (1.0 - r[(j, k)].powi(2))).sqrt()
        };
        let (a, b, c) = (partial(0, 1, 2), partial(0, 2, 1), partial(1, 2, 0));
        let num = 0.5f64.powi(2) + 0.3f64.powi(2) + 0.4f64.powi(2);
        let want = num / (num + a * a + b * b + c * c);
        assert!((kmo(&s).unwrap() - want).abs() < 1e-10);
    }

    #[test]
    fn smc_examples() {
        let id = shrink_unchecked(&CorrelationMatrix::unnamed(DMatrix::identity(3, 3)), 0.0);
        assert!(smc_lower_bounds(&id).iter().all(|&v| v.abs() < 1e-15));
        let r = DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 1.0]);
        let s = shrink_unchecked(&CorrelationMatrix::unnamed(r), 0.0);
        for v in smc_lower_bounds(&s) {
            assert!((v - 0.36).abs() < 1e-12);
        }
    }

    #[test]
    fn smc_matches_regression_r2() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let n = 60;
        let x = DMatrix::<f64>::from_fn(n, 4, |_, _| StandardNormal.sample(&mut rng));
        let mix = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 0.5, 0.0, 0.2, 0.0, 1.0, 0.3, 0.0, 0.0, 0.0, 1.0, 0.4, 0.0, 0.0, 0.0, 1.0,
            ],
        );
        let raw = RawDataset::from_matrix(x * mix).unwrap();
        let (z, _) = standardize(&raw).unwrap();
        let s = shrink_unchecked(&sample_correlation(&z).unwrap(), 0.0);
        let smc = smc_lower_bounds(&s);
        for (j, &bound) in smc.iter().enumerate() {
            // least squares of column j on the others, with intercept
            let others: Vec<usize> = (0..4).filter(|&k| k != j).collect();
            let design = DMatrix::from_fn(n, 4, |i, k| if k == 0 { 1.0 } else { raw.features[(i, others[k - 1])] });
            let y = raw.features.column(j).into_owned();
            let beta = (design.transpose() * &design)
                .cholesky()
                .unwrap()
                .solve(&(design.transpose() * &y));
            let resid = &y - &design * beta;
            let mean = y.mean();
            let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
            let r2 = 1.0 - resid.norm_squared() / tss;
            assert!((bound - r2).abs() < 1e-10, "{j}: {bound} vs {r2}");
        }
    }

    #[test]
    fn variance_examples() {
        let v = variance_explained(&DMatrix::from_element(4, 1, 0.5));
        assert!((v.per_factor[0] - 0.25).abs() < 1e-15);
        let l = DMatrix::from_row_slice(3, 2, &[0.7, 0.2, 0.1, 0.8, 0.4, 0.4]);
        let v = variance_explained(&l);
        let mean_comm = model(l).communalities().mean();
        assert!((v.cumulative - mean_comm).abs() < 1e-15);
        assert!(v.cumulative <= 1.0);
    }

    #[test]
    fn determinacy_examples() {
        let (l, s) = one_factor(0.9, 10);
        let m = model(l.clone());
        let d = determinacy(&m, &s);
        assert!(d[0] > 0.97 && d[0] <= 1.0 + 1e-12);
        let inv = s.matrix().try_inverse().unwrap();
        let oracle: f64 = (0..10)
            .map(|i| (0..10).map(|j| l[(i, 0)] * inv[(i, j)] * l[(j, 0)]).sum::<f64>())
            .sum();
        assert!((d[0] - oracle).abs() < 1e-10);
        let (l, s) = one_factor(1e-4, 10);
        assert!(determinacy(&model(l), &s)[0] < 1e-6);
    }

    #[test]
    fn thresholding_examples() {
        let l = DMatrix::from_row_slice(2, 2, &[0.6, 0.29, 0.5, 0.1]);
        let t = threshold_loadings(&l, 0.3).unwrap();
        assert_eq!(t.loadings, DMatrix::from_row_slice(2, 2, &[0.6, 0.0, 0.5, 0.0]));
        assert_eq!(t.significant, vec![2, 0]);
        assert!(t.weak[1]);
        assert_eq!(threshold_loadings(&l, 0.0).unwrap().loadings, l);

        let pattern = DMatrix::from_row_slice(
            6,
            3,
            &[
                0.72, 0.31, -0.05, 0.65, 0.30, 0.12, 0.58, -0.29, 0.41, -0.44, 0.10, 0.33, 0.36, 0.02, -0.31, 0.15,
                0.45, 0.30,
            ],
        );
        let t = threshold_loadings(&pattern, 0.3).unwrap();
        assert_eq!(t.significant, vec![5, 2, 3]);
        assert_eq!(t.weak, vec![false, true, false]);
    }
}
