use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use super::{chi2_quantile, fit_ml_factor, guttman_bound, ledermann_max, FactorModel, FitOptions};
use crate::corr::ShrunkenCorrelation;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Criterion {
    #[serde(rename = "GB")]
    Guttman,
    #[serde(rename = "AIC")]
    Aic,
    #[serde(rename = "BIC")]
    Bic,
    #[serde(rename = "LRT")]
    Lrt,
}

impl Criterion {
    pub const ALL: [Criterion; 4] = [Criterion::Guttman, Criterion::Aic, Criterion::Bic, Criterion::Lrt];

    pub fn label(self) -> &'static str {
        match self {
            Criterion::Guttman => "GB",
            Criterion::Aic => "AIC",
            Criterion::Bic => "BIC",
            Criterion::Lrt => "LRT",
        }
    }
}

/// Outcome of one dimension-selection rule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionTally {
    pub criterion: Criterion,
    pub chosen_m: usize,
    /// Criterion values (AIC/BIC), test statistics (LRT) or eigen gaps (GB)
    /// indexed by `m`.
    pub values: Vec<(usize, f64)>,
    /// False when the LRT rejected every tested dimension.
    pub accepted: bool,
}

impl SelectionTally {
    pub fn guttman(s: &ShrunkenCorrelation) -> Self {
        let (m, gaps) = guttman_bound(s);
        SelectionTally {
            criterion: Criterion::Guttman,
            chosen_m: m,
            values: gaps.into_iter().enumerate().map(|(j, g)| (j + 1, g)).collect(),
            accepted: true,
        }
    }
}

/// One ML fit per dimension, shared between criteria.
pub struct FitCache<'a> {
    s: &'a ShrunkenCorrelation,
    opts: FitOptions,
    fits: BTreeMap<usize, FactorModel>,
    log_det: f64,
}

impl<'a> FitCache<'a> {
    pub fn new(s: &'a ShrunkenCorrelation, opts: FitOptions) -> Self {
        Self {
            s,
            opts,
            fits: BTreeMap::new(),
            log_det: s.log_det(),
        }
    }

    pub fn get(&mut self, m: usize) -> Result<&FactorModel> {
        if !self.fits.contains_key(&m) {
            let fit = fit_ml_factor(self.s, m, &self.opts)?;
            self.fits.insert(m, fit);
        }
        Ok(&self.fits[&m])
    }

    pub fn dim(&self) -> usize {
        self.s.dim()
    }

    /// `ln|Σ̂| + tr(Σ̂⁻¹R)` recovered from the discrepancy.
    fn fit_term(&mut self, m: usize) -> Result<(f64, bool)> {
        let p = self.dim() as f64;
        let log_det = self.log_det;
        let fit = self.get(m)?;
        Ok((fit.discrepancy + log_det + p, fit.converged))
    }
}

/// Free parameters of an `m`-factor model on `p` features.
pub fn free_parameters(p: usize, m: usize) -> usize {
    p * (m + 1) - m * m.saturating_sub(1) / 2
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrtDf {
    #[default]
    Standard,
    /// Degrees of freedom corrected for a rank-deficient sample correlation
    /// matrix of rank `min(n - 1, p)`.
    RankAdjusted,
}

/// Degrees of freedom of the `m`-factor goodness-of-fit test; non-positive
/// values mean the test is undefined.
pub fn lrt_degrees_of_freedom(p: usize, m: usize, n: usize, kind: LrtDf) -> f64 {
    let (pf, mf) = (p as f64, m as f64);
    match kind {
        LrtDf::Standard => ((pf - mf).powi(2) - (pf + mf)) / 2.0,
        LrtDf::RankAdjusted => {
            let r = p.min(n.saturating_sub(1)) as f64;
            r * (r + 1.0) / 2.0 - (pf * mf + pf - mf * (mf - 1.0) / 2.0)
        }
    }
}

fn check_range(p: usize, range: &RangeInclusive<usize>) -> Result<()> {
    let max = ledermann_max(p);
    if range.is_empty() || *range.start() < 1 || *range.end() > max {
        return Err(Error::InvalidParameter(format!(
            "dimension range {}..={} must lie in [1, {max}]",
            range.start(),
            range.end()
        )));
    }
    Ok(())
}

fn select_ic(
    cache: &mut FitCache,
    n: usize,
    range: RangeInclusive<usize>,
    criterion: Criterion,
) -> Result<SelectionTally> {
    let p = cache.dim();
    check_range(p, &range)?;
    let weight = match criterion {
        Criterion::Aic => 2.0,
        Criterion::Bic => (n as f64).ln(),
        _ => unreachable!("not an information criterion"),
    };
    let nf = n as f64;
    let mut values = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    let mut fallback: Option<(usize, f64)> = None;
    for m in range {
        let (term, converged) = cache.fit_term(m)?;
        let ic = nf * (p as f64 * (2.0 * PI).ln() + term) + weight * free_parameters(p, m) as f64;
        values.push((m, ic));
        // strict comparison keeps the smaller m on ties
        if fallback.is_none_or(|(_, v)| ic < v) {
            fallback = Some((m, ic));
        }
        if !converged {
            log::warn!("{}: {m}-factor fit did not converge, skipped", criterion.label());
            continue;
        }
        if best.is_none_or(|(_, v)| ic < v) {
            best = Some((m, ic));
        }
    }
    let (chosen_m, _) = best.or(fallback).expect("range is non-empty");
    Ok(SelectionTally {
        criterion,
        chosen_m,
        values,
        accepted: true,
    })
}

pub fn select_aic(cache: &mut FitCache, n: usize, range: RangeInclusive<usize>) -> Result<SelectionTally> {
    select_ic(cache, n, range, Criterion::Aic)
}

pub fn select_bic(cache: &mut FitCache, n: usize, range: RangeInclusive<usize>) -> Result<SelectionTally> {
    select_ic(cache, n, range, Criterion::Bic)
}

/// Sequential likelihood-ratio tests for `m = 1, 2, …`: the first `m` whose
/// statistic `(n - 1)F` falls below the upper `alpha` critical value is
/// chosen. If every test up to `m_max` rejects, `m_max` is returned with
/// `accepted = false`.
pub fn select_lrt(
    cache: &mut FitCache,
    n: usize,
    alpha: f64,
    m_max: Option<usize>,
    kind: LrtDf,
) -> Result<SelectionTally> {
    let p = cache.dim();
    let max = m_max.unwrap_or(usize::MAX).min(ledermann_max(p));
    if max < 1 {
        return Err(Error::InvalidParameter(format!(
            "no factor model can be tested with {p} features"
        )));
    }
    let mut values = Vec::new();
    let mut last = 1;
    for m in 1..=max {
        let df = lrt_degrees_of_freedom(p, m, n, kind);
        if df <= 0.0 {
            break;
        }
        let t = (n as f64 - 1.0) * cache.get(m)?.discrepancy;
        values.push((m, t));
        last = m;
        if t < chi2_quantile(df, alpha)? {
            return Ok(SelectionTally {
                criterion: Criterion::Lrt,
                chosen_m: m,
                values,
                accepted: true,
            });
        }
    }
    Ok(SelectionTally {
        criterion: Criterion::Lrt,
        chosen_m: last,
        values,
        accepted: false,
    })
}
