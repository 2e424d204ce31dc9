use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::SurvivalData;
use crate::error::{Error, Result};

/// Handling of tied event times in the partial likelihood.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ties {
    Breslow,
    #[default]
    Efron,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoxOptions {
    pub ties: Ties,
    pub max_iter: usize,
    /// Fit fails when any coefficient exceeds this in absolute value.
    pub max_abs_beta: f64,
    /// Convergence threshold on the score ∞-norm.
    pub gradient_tol: f64,
}

impl Default for CoxOptions {
    fn default() -> Self {
        Self {
            ties: Ties::Efron,
            max_iter: 100,
            max_abs_beta: 25.0,
            gradient_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoxModel {
    /// One coefficient per input column; dropped constant columns get 0.
    pub beta: Vec<f64>,
    pub dropped: Vec<usize>,
    pub ties: Ties,
    /// Distinct event times and the Breslow cumulative baseline hazard there.
    pub baseline_times: Vec<f64>,
    pub baseline_cumhaz: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub score_norm: f64,
}

impl CoxModel {
    pub fn cumulative_baseline_hazard(&self, t: f64) -> f64 {
        let k = self.baseline_times.partition_point(|&s| s <= t);
        if k == 0 {
            0.0
        } else {
            self.baseline_cumhaz[k - 1]
        }
    }

    pub fn linear_predictor(&self, x_row: &[f64]) -> f64 {
        x_row.iter().zip(&self.beta).map(|(x, b)| x * b).sum()
    }

    /// `S₀(t)^exp(xβ)` with `S₀ = exp(-H₀)`.
    pub fn predict_survival(&self, x_row: &[f64], t: f64) -> f64 {
        if t < 0.0 {
            return 1.0;
        }
        (-self.cumulative_baseline_hazard(t) * self.linear_predictor(x_row).exp()).exp()
    }

    /// Predicted survival for every row of `x` at every time of `grid`
    /// (`rows × grid`).
    pub fn predict_matrix(&self, x: &DMatrix<f64>, grid: &[f64]) -> DMatrix<f64> {
        let risk: Vec<f64> = x
            .row_iter()
            .map(|r| r.iter().zip(&self.beta).map(|(a, b)| a * b).sum::<f64>().exp())
            .collect();
        let h: Vec<f64> = grid.iter().map(|&t| self.cumulative_baseline_hazard(t)).collect();
        DMatrix::from_fn(x.nrows(), grid.len(), |i, k| (-h[k] * risk[i]).exp())
    }
}

struct Evaluation {
    loglik: f64,
    gradient: DVector<f64>,
    /// Negative Hessian.
    information: DMatrix<f64>,
}

/// Subjects sorted by time, grouped by distinct time (descending).
struct TimeGroups {
    order: Vec<usize>,
    /// `(start, end)` ranges into `order`, latest time first.
    groups: Vec<(usize, usize)>,
}

impl TimeGroups {
    fn new(data: &SurvivalData) -> Self {
        let t = data.times();
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.sort_by(|&a, &b| t[b].total_cmp(&t[a]));
        let mut groups = Vec::new();
        let mut start = 0;
        while start < order.len() {
            let mut end = start;
            while end < order.len() && t[order[end]] == t[order[start]] {
                end += 1;
            }
            groups.push((start, end));
            start = end;
        }
        Self { order, groups }
    }
}

fn evaluate(x: &DMatrix<f64>, data: &SurvivalData, groups: &TimeGroups, beta: &DVector<f64>, ties: Ties) -> Evaluation {
    let p = x.ncols();
    let eta = x * beta;
    let mut loglik = 0.0;
    let mut gradient = DVector::zeros(p);
    let mut information = DMatrix::zeros(p, p);
    let mut s0 = 0.0;
    let mut s1 = DVector::zeros(p);
    let mut s2 = DMatrix::zeros(p, p);

    for &(start, end) in &groups.groups {
        let mut d0 = 0.0;
        let mut d1 = DVector::zeros(p);
        let mut d2 = DMatrix::zeros(p, p);
        let mut deaths = 0usize;
        for &i in &groups.order[start..end] {
            let w = eta[i].exp();
            let xi = x.row(i).transpose();
            s0 += w;
            s1.axpy(w, &xi, 1.0);
            s2.ger(w, &xi, &xi, 1.0);
            if data.status()[i] {
                deaths += 1;
                loglik += eta[i];
                gradient += &xi;
                d0 += w;
                d1.axpy(w, &xi, 1.0);
                d2.ger(w, &xi, &xi, 1.0);
            }
        }
        if deaths == 0 {
            continue;
        }
        let d = deaths as f64;
        for l in 0..deaths {
            let frac = match ties {
                Ties::Breslow => 0.0,
                Ties::Efron => l as f64 / d,
            };
            let den = s0 - frac * d0;
            let a = (&s1 - &d1 * frac) / den;
            let b = (&s2 - &d2 * frac) / den;
            loglik -= den.ln();
            gradient -= &a;
            information += b - &a * a.transpose();
        }
    }
    Evaluation {
        loglik,
        gradient,
        information,
    }
}

/// Newton–Raphson fit of the Cox partial likelihood with step halving.
pub fn fit_cox(x: &DMatrix<f64>, data: &SurvivalData, opts: &CoxOptions) -> Result<CoxModel> {
    if x.nrows() != data.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            actual: x.nrows(),
        });
    }
    if data.events() == 0 {
        return Err(Error::NoEvents);
    }
    let (kept, dropped): (Vec<usize>, Vec<usize>) = (0..x.ncols()).partition(|&j| {
        let c = x.column(j);
        c.max() > c.min()
    });
    if !dropped.is_empty() {
        log::warn!("dropping constant predictor columns {dropped:?}");
    }
    let xk = x.select_columns(&kept);
    let groups = TimeGroups::new(data);
    let p = kept.len();

    let mut beta = DVector::zeros(p);
    let mut current = evaluate(&xk, data, &groups, &beta, opts.ties);
    let mut iterations = 0;
    let mut converged = p == 0;
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let step = current
            .information
            .clone()
            .cholesky()
            .ok_or(Error::SingularInformation)?
            .solve(&current.gradient);
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = &beta + &step * scale;
            let eval = evaluate(&xk, data, &groups, &trial, opts.ties);
            if eval.loglik.is_finite() && eval.loglik >= current.loglik - 1e-12 * current.loglik.abs() {
                beta = trial;
                current = eval;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        let max_beta = beta.amax();
        if max_beta > opts.max_abs_beta {
            return Err(Error::CoxDivergence(max_beta));
        }
        // under separation the gradient vanishes while Newton steps stay O(1)
        let small_step = step.amax() < 1e-6;
        if !accepted || (current.gradient.amax() < opts.gradient_tol && small_step) {
            converged = current.gradient.amax() < opts.gradient_tol.max(1e-6);
            break;
        }
    }
    if p > 0 && current.information.clone().cholesky().is_none() {
        return Err(Error::SingularInformation);
    }

    // Breslow baseline hazard over distinct event times, ascending
    let eta = &xk * &beta;
    let mut s0 = 0.0;
    let mut increments = Vec::new();
    for &(start, end) in &groups.groups {
        let mut deaths = 0;
        for &i in &groups.order[start..end] {
            s0 += eta[i].exp();
            deaths += usize::from(data.status()[i]);
        }
        if deaths > 0 {
            increments.push((data.times()[groups.order[start]], deaths as f64 / s0));
        }
    }
    increments.reverse();
    let mut cum = 0.0;
    let (baseline_times, baseline_cumhaz) = increments
        .into_iter()
        .map(|(t, h)| {
            cum += h;
            (t, cum)
        })
        .unzip();

    let mut full_beta = vec![0.0; x.ncols()];
    for (k, &j) in kept.iter().enumerate() {
        full_beta[j] = beta[k];
    }
    Ok(CoxModel {
        beta: full_beta,
        dropped,
        ties: opts.ties,
        baseline_times,
        baseline_cumhaz,
        log_likelihood: current.loglik,
        iterations,
        converged,
        score_norm: if p == 0 { 0.0 } else { current.gradient.amax() },
    })
}

/// Exact partial log-likelihood for a single covariate, written directly
/// from risk-set sums. Test oracle only.
#[cfg(test)]
pub(crate) fn partial_loglik_1d(x: &[f64], data: &SurvivalData, beta: f64, ties: Ties) -> f64 {
    let t = data.times();
    let mut distinct: Vec<f64> = (0..x.len()).filter(|&i| data.status()[i]).map(|i| t[i]).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut ll = 0.0;
    for &s in &distinct {
        let events: Vec<usize> = (0..x.len()).filter(|&i| t[i] == s && data.status()[i]).collect();
        let risk: f64 = (0..x.len()).filter(|&i| t[i] >= s).map(|i| (beta * x[i]).exp()).sum();
        let tied: f64 = events.iter().map(|&i| (beta * x[i]).exp()).sum();
        let d = events.len() as f64;
        for (l, &i) in events.iter().enumerate() {
            ll += beta * x[i];
            let frac = if ties == Ties::Efron { l as f64 / d } else { 0.0 };
            ll -= (risk - frac * tied).ln();
        }
    }
    ll
}
