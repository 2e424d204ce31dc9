//! Concentrated-likelihood ML fit.
//!
//! For fixed `Ψ`, the optimal loadings come from the eigendecomposition of
//! `Ψ^{-1/2} S Ψ^{-1/2} = V diag(θ) Vᵀ`:
//! `Λ = Ψ^{1/2} V_m diag(max(θ_k - 1, 0))^{1/2}`, which makes `ΛᵀΨ⁻¹Λ`
//! diagonal with non-increasing entries. The remaining discrepancy is
//! `Σ (θ_j - ln θ_j - 1)` over the eigenvalues not absorbed by a factor, and
//! is minimized over `x = ln ψ` with a bound-constrained quasi-Newton method.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ledermann_max, FactorModel};
use crate::corr::ShrunkenCorrelation;
use crate::error::{Error, Result};
use crate::linalg::SymEigen;

/// Inverse-Hessian update used by the outer optimizer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuasiNewton {
    #[default]
    Bfgs,
    Dfp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub psi_floor: f64,
    pub psi_ceiling: f64,
    pub max_iter: usize,
    /// Stop when the discrepancy changes by less than this.
    pub f_tol: f64,
    /// Stop when the projected gradient ∞-norm drops below this.
    pub grad_tol: f64,
    pub update: QuasiNewton,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            psi_floor: 0.005,
            psi_ceiling: 1.0,
            max_iter: 500,
            f_tol: 1e-9,
            grad_tol: 1e-6,
            update: QuasiNewton::Bfgs,
        }
    }
}

pub(crate) struct Concentrated {
    pub f: f64,
    /// Gradient with respect to `ln ψ`.
    pub grad: DVector<f64>,
    pub loadings: DMatrix<f64>,
}

/// Discrepancy, gradient and optimal loadings at uniquenesses `psi`.
pub(crate) fn concentrated(s: &DMatrix<f64>, psi: &DVector<f64>, m: usize) -> Concentrated {
    let p = s.nrows();
    let sc = psi.map(|v| 1.0 / v.sqrt());
    let scaled = DMatrix::from_fn(p, p, |i, j| s[(i, j)] * sc[i] * sc[j]);
    let eig = SymEigen::new(&scaled);
    let mut f = 0.0;
    for (k, &theta) in eig.values.iter().enumerate() {
        if k >= m || theta < 1.0 {
            let theta = theta.max(f64::MIN_POSITIVE);
            f += theta - theta.ln() - 1.0;
        }
    }
    let mut loadings = DMatrix::zeros(p, m);
    for k in 0..m {
        let w = (eig.values[k] - 1.0).max(0.0).sqrt();
        for j in 0..p {
            loadings[(j, k)] = eig.vectors[(j, k)] * w * psi[j].sqrt();
        }
    }
    let grad = DVector::from_fn(p, |j, _| {
        let c = loadings.row(j).norm_squared();
        (c + psi[j] - s[(j, j)]) / psi[j]
    });
    Concentrated { f, grad, loadings }
}

/// Fit an `m`-factor model to the regularized correlation matrix.
///
/// Non-convergence is not an error: the best iterate is returned with
/// `converged = false`.
pub fn fit_ml_factor(s: &ShrunkenCorrelation, m: usize, opts: &FitOptions) -> Result<FactorModel> {
    let p = s.dim();
    let max_m = ledermann_max(p);
    if m < 1 || m > max_m {
        return Err(Error::InvalidParameter(format!(
            "number of factors must lie in [1, {max_m}] for {p} features, got {m}"
        )));
    }
    let sigma = s.matrix();
    let inv = s.inverse();
    let start = DVector::from_fn(p, |j, _| (1.0 - m as f64 / (2.0 * p as f64)) / inv[(j, j)]);
    fit_from(&sigma, m, start, opts, s.feature_names().to_vec())
}

pub(crate) fn fit_from(
    s: &DMatrix<f64>,
    m: usize,
    start: DVector<f64>,
    opts: &FitOptions,
    feature_names: Vec<String>,
) -> Result<FactorModel> {
    let p = s.nrows();
    let (lb, ub) = (opts.psi_floor.ln(), opts.psi_ceiling.ln());
    let project = |x: &mut DVector<f64>| x.apply(|v| *v = v.clamp(lb, ub));
    let mut x = start.map(f64::ln);
    project(&mut x);
    let eval = |x: &DVector<f64>| concentrated(s, &x.map(f64::exp), m);

    let mut cur = eval(&x);
    if !cur.f.is_finite() {
        return Err(Error::NonFinite("initial factor discrepancy".into()));
    }
    let mut h = DMatrix::<f64>::identity(p, p);
    let mut fresh = true;
    let mut converged = false;
    let mut iterations = 0;
    let eps = 1e-10;

    while iterations < opts.max_iter {
        // variables held at a bound with the gradient pushing outward
        let free: Vec<bool> = (0..p)
            .map(|j| !((x[j] <= lb + eps && cur.grad[j] > 0.0) || (x[j] >= ub - eps && cur.grad[j] < 0.0)))
            .collect();
        let pg = (0..p)
            .filter(|&j| free[j])
            .map(|j| cur.grad[j].abs())
            .fold(0.0, f64::max);
        if pg < opts.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;

        let masked = DVector::from_fn(p, |j, _| if free[j] { cur.grad[j] } else { 0.0 });
        let mut d = -(&h * &masked);
        for j in 0..p {
            if !free[j] {
                d[j] = 0.0;
            }
        }
        if d.dot(&masked) >= 0.0 {
            h.fill_with_identity();
            fresh = true;
            d = -masked.clone();
        }
        // keep the first trial step within one unit of ln ψ
        let mut alpha = (1.0 / d.amax()).min(1.0);
        let mut next = None;
        for _ in 0..50 {
            let mut trial = &x + &d * alpha;
            project(&mut trial);
            let step = &trial - &x;
            let candidate = eval(&trial);
            if candidate.f.is_finite() && candidate.f <= cur.f + 1e-4 * cur.grad.dot(&step) {
                next = Some((trial, candidate));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, new)) = next else {
            // no descent along a reset direction means we are at the optimum
            if fresh {
                converged = pg < opts.grad_tol * 100.0;
                break;
            }
            h.fill_with_identity();
            fresh = true;
            continue;
        };

        let s_vec = &x_new - &x;
        let y_vec = &new.grad - &cur.grad;
        let sy = s_vec.dot(&y_vec);
        if sy > 1e-12 {
            if fresh {
                // Shanno–Phua scaling of the initial inverse Hessian
                h *= sy / y_vec.norm_squared();
            }
            update_inverse_hessian(&mut h, &s_vec, &y_vec, sy, opts.update);
            fresh = false;
        }
        let df = cur.f - new.f;
        x = x_new;
        cur = new;
        if df.abs() < opts.f_tol {
            converged = true;
            break;
        }
    }

    let psi = x.map(f64::exp);
    let heywood = psi.iter().map(|&v| v <= opts.psi_floor * (1.0 + 1e-8)).collect();
    Ok(FactorModel {
        loadings: cur.loadings,
        uniquenesses: psi,
        m,
        discrepancy: cur.f.max(0.0),
        iterations,
        converged,
        heywood,
        feature_names,
        rotated: false,
    })
}

fn update_inverse_hessian(h: &mut DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>, sy: f64, kind: QuasiNewton) {
    let hy = &*h * y;
    let yhy = y.dot(&hy);
    match kind {
        QuasiNewton::Bfgs => {
            // H ← H + (sᵀy + yᵀHy)/(sᵀy)² ssᵀ − (Hy sᵀ + s yᵀH)/sᵀy
            let c = (sy + yhy) / (sy * sy);
            h.ger(c, s, s, 1.0);
            h.ger(-1.0 / sy, &hy, s, 1.0);
            h.ger(-1.0 / sy, s, &hy, 1.0);
        }
        QuasiNewton::Dfp => {
            // H ← H + ssᵀ/sᵀy − Hy yᵀH / yᵀHy
            h.ger(1.0 / sy, s, s, 1.0);
            h.ger(-1.0 / yhy, &hy, &hy, 1.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corr::{shrink_unchecked, CorrelationMatrix};
    use crate::factor::discrepancy;

    fn exact(loadings: &DMatrix<f64>) -> DMatrix<f64> {
        let mut s = loadings * loadings.transpose();
        for j in 0..s.nrows() {
            s[(j, j)] = 1.0;
        }
        s
    }

    #[test]
    fn concentrated_value_equals_direct_discrepancy() {
        let l = DMatrix::from_row_slice(5, 2, &[0.7, 0.1, 0.6, 0.3, 0.5, -0.4, 0.2, 0.6, 0.4, 0.4]);
        let mut s = exact(&l);
        s[(0, 3)] += 0.05;
        s[(3, 0)] += 0.05;
        let psi = DVector::from_vec(vec![0.45, 0.5, 0.6, 0.55, 0.7]);
        let c = concentrated(&s, &psi, 2);
        let mut sigma = &c.loadings * c.loadings.transpose();
        for j in 0..5 {
            sigma[(j, j)] += psi[j];
        }
        let direct = discrepancy(&sigma, &s).unwrap();
        assert!((c.f - direct).abs() < 1e-10, "{} vs {}", c.f, direct);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let l = DMatrix::from_row_slice(6, 2, &[0.7, 0.1, 0.6, 0.3, 0.5, -0.4, 0.2, 0.6, 0.4, 0.4, 0.3, 0.2]);
        let mut s = exact(&l);
        s[(1, 4)] -= 0.07;
        s[(4, 1)] -= 0.07;
        let x = DVector::from_vec(vec![-0.6, -0.9, -0.5, -0.7, -0.4, -0.2]);
        let f = |x: &DVector<f64>| concentrated(&s, &x.map(f64::exp), 2).f;
        let g = concentrated(&s, &x.map(f64::exp), 2).grad;
        for j in 0..6 {
            let h = 1e-6;
            let mut xp = x.clone();
            xp[j] += h;
            let mut xm = x.clone();
            xm[j] -= h;
            let fd = (f(&xp) - f(&xm)) / (2.0 * h);
            assert!((fd - g[j]).abs() < 1e-6, "{j}: {fd} vs {}", g[j]);
        }
    }

    #[test]
    fn recovers_one_factor_model() {
        let l = DMatrix::from_column_slice(3, 1, &[0.8, 0.7, 0.6]);
        let r = CorrelationMatrix::unnamed(exact(&l));
        let s = shrink_unchecked(&r, 0.0);
        for update in [QuasiNewton::Bfgs, QuasiNewton::Dfp] {
            let fit = fit_ml_factor(
                &s,
                1,
                &FitOptions {
                    update,
                    ..Default::default()
                },
            )
            .unwrap();
            assert!(fit.converged);
            assert!(fit.discrepancy < 1e-8, "F = {}", fit.discrepancy);
            let sign = fit.loadings[(0, 0)].signum();
            for j in 0..3 {
                assert!((sign * fit.loadings[(j, 0)] - l[(j, 0)]).abs() < 1e-4);
                assert!((fit.uniquenesses[j] - (1.0 - l[(j, 0)].powi(2))).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn canonical_constraint_holds() {
        let l = DMatrix::from_row_slice(
            8,
            2,
            &[
                0.8, 0.1, 0.7, 0.2, 0.75, 0.0, 0.6, 0.1, 0.1, 0.7, 0.2, 0.65, 0.0, 0.8, 0.15, 0.6,
            ],
        );
        let s = shrink_unchecked(&CorrelationMatrix::unnamed(exact(&l)), 0.0);
        let fit = fit_ml_factor(&s, 2, &FitOptions::default()).unwrap();
        let g = fit.scaled_gram();
        assert!(g[(0, 1)].abs() < 1e-6);
        assert!(g[(0, 0)] >= g[(1, 1)]);
        let implied = fit.implied_correlation();
        for j in 0..8 {
            assert!((implied[(j, j)] - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn rejects_out_of_range_m() {
        let s = shrink_unchecked(&CorrelationMatrix::unnamed(DMatrix::identity(5, 5)), 0.0);
        assert!(fit_ml_factor(&s, 0, &FitOptions::default()).is_err());
        assert!(fit_ml_factor(&s, 3, &FitOptions::default()).is_err());
    }

    #[test]
    fn heywood_case_hits_floor() {
        // feature 1 is (almost) fully explained by the factor
        let l = DMatrix::from_column_slice(4, 1, &[0.999, 0.6, 0.5, 0.55]);
        let s = shrink_unchecked(&CorrelationMatrix::unnamed(exact(&l)), 0.0);
        let fit = fit_ml_factor(&s, 1, &FitOptions::default()).unwrap();
        assert!(fit.heywood[0]);
        assert!(fit.uniquenesses.iter().all(|&v| v >= 0.005 * (1.0 - 1e-12)));
    }
}
