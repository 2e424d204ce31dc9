//! Repeated K-fold cross-validated Brier curves.
//!
//! Every learner sees the same folds. Censoring weights come from the
//! reverse Kaplan-Meier curve of the full data set. Per repeat the fold
//! curves are averaged with equal fold weight, then repeats are averaged in
//! index order, so the result does not depend on thread scheduling.

use log::info;
use nalgebra::DMatrix;

use super::{fit_pipeline, require_survival, PipelineSpec};
use crate::data::RawDataset;
use crate::error::{Error, Result};
use crate::penalty::fold_assignment;
use crate::seed::derive_seed;
use crate::survival::{brier_curve, km, reverse_km, BrierCurve, BrierVariant, SurvivalData};

pub const DEFAULT_REPEATS: usize = 500;
/// Attempts at drawing folds whose training parts all contain events.
pub const MAX_REFOLD: usize = 20;

#[derive(Debug, Clone)]
pub enum Learner {
    /// The full factor pipeline, refitted on every training split.
    FactorCox(PipelineSpec),
    /// Marginal Kaplan-Meier curve; ignores the features.
    KaplanMeier,
}

impl Learner {
    pub fn label(&self) -> &'static str {
        match self {
            Learner::FactorCox(_) => "factor-cox",
            Learner::KaplanMeier => "kaplan-meier",
        }
    }

    fn fit_predict(&self, train: &RawDataset, test: &RawDataset, grid: &[f64], seed: u64) -> Result<DMatrix<f64>> {
        match self {
            Learner::FactorCox(spec) => fit_pipeline(train, spec, seed)?.trained.predict(test, grid),
            Learner::KaplanMeier => {
                let curve = km(require_survival(train)?);
                let row: Vec<f64> = grid.iter().map(|&t| curve.at(t)).collect();
                Ok(DMatrix::from_fn(test.nrows(), grid.len(), |_, k| row[k]))
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CvOptions {
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            folds: 5,
            repeats: DEFAULT_REPEATS,
            seed: 0,
        }
    }
}

/// Folds for repeat `b`, redrawn while some training part has no events.
fn draw_folds(surv: &SurvivalData, k: usize, seed: u64, b: usize) -> Result<Vec<usize>> {
    let n = surv.len();
    for attempt in 0..MAX_REFOLD {
        let folds = fold_assignment(n, k, derive_seed(seed, &format!("cv-folds-{attempt}"), b as u64));
        let mut events_outside = vec![surv.events(); k];
        for (i, &f) in folds.iter().enumerate() {
            if surv.status()[i] {
                events_outside[f] -= 1;
            }
        }
        if events_outside.iter().all(|&e| e > 0) {
            return Ok(folds);
        }
        info!("repeat {b}: training split without events, refolding");
    }
    Err(Error::Refold(MAX_REFOLD))
}

/// One curve per learner, in the order given.
pub fn brier_cv(raw: &RawDataset, learners: &[Learner], grid: &[f64], opts: &CvOptions) -> Result<Vec<BrierCurve>> {
    let surv = require_survival(raw)?;
    let n = raw.nrows();
    if opts.folds < 2 || opts.folds > n {
        return Err(Error::InvalidParameter(format!(
            "cross-validation needs 2 <= K <= n, got K = {} with n = {n}",
            opts.folds
        )));
    }
    if opts.repeats == 0 {
        return Err(Error::InvalidParameter("at least one repeat is required".into()));
    }
    if surv.events() == 0 {
        return Err(Error::NoEvents);
    }
    let censoring = reverse_km(surv);
    let k = opts.folds;

    let per_repeat = crate::map_indexed(opts.repeats, |b| -> Result<Vec<Vec<f64>>> {
        let folds = draw_folds(surv, k, opts.seed, b)?;
        let mut sums = vec![vec![0.0; grid.len()]; learners.len()];
        for f in 0..k {
            let test_rows: Vec<usize> = (0..n).filter(|&i| folds[i] == f).collect();
            let train_rows: Vec<usize> = (0..n).filter(|&i| folds[i] != f).collect();
            let (train, test) = (raw.select_rows(&train_rows), raw.select_rows(&test_rows));
            let test_surv = require_survival(&test)?;
            let fit_seed = derive_seed(opts.seed, "cv-fit", (b * k + f) as u64);
            for (l, learner) in learners.iter().enumerate() {
                let pred = learner
                    .fit_predict(&train, &test, grid, fit_seed)
                    .map_err(|e| Error::Config(format!("{} in repeat {b}, fold {f}: {e}", learner.label())))?;
                let curve = brier_curve(&pred, test_surv, grid, &censoring)?;
                for (s, v) in sums[l].iter_mut().zip(&curve.scores) {
                    *s += v;
                }
            }
        }
        for s in sums.iter_mut().flatten() {
            *s /= k as f64;
        }
        Ok(sums)
    });

    let mut totals = vec![vec![0.0; grid.len()]; learners.len()];
    for repeat in per_repeat {
        for (t, s) in totals.iter_mut().zip(repeat?) {
            for (a, b) in t.iter_mut().zip(s) {
                *a += b;
            }
        }
    }
    Ok(learners
        .iter()
        .zip(totals)
        .map(|(learner, t)| BrierCurve {
            times: grid.to_vec(),
            scores: t.into_iter().map(|v| v / opts.repeats as f64).collect(),
            tau: grid.last().copied().unwrap_or(0.0),
            variant: BrierVariant::CvAveraged,
            label: learner.label().to_string(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::tests::synthetic;
    use crate::survival::{default_tau, evaluation_grid};

    #[test]
    fn leave_one_out_runs_and_is_deterministic() {
        let raw = synthetic(30, 6, 21);
        let surv = raw.survival.clone().unwrap();
        let grid = evaluation_grid(&surv, default_tau(&surv));
        let learners = [Learner::FactorCox(PipelineSpec::default()), Learner::KaplanMeier];
        let opts = CvOptions {
            folds: 30,
            repeats: 1,
            seed: 4,
        };
        let a = brier_cv(&raw, &learners, &grid, &opts).unwrap();
        let b = brier_cv(&raw, &learners, &grid, &opts).unwrap();
        assert_eq!(a.len(), 2);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.scores, y.scores);
            assert!(x.scores.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
        assert_eq!(a[1].label, "kaplan-meier");
    }

    #[test]
    fn repeats_average_in_order() {
        let raw = synthetic(60, 6, 22);
        let surv = raw.survival.clone().unwrap();
        let grid = evaluation_grid(&surv, default_tau(&surv));
        let one = |seed| {
            brier_cv(
                &raw,
                &[Learner::KaplanMeier],
                &grid,
                &CvOptions {
                    folds: 5,
                    repeats: 3,
                    seed,
                },
            )
            .unwrap()
        };
        assert_eq!(one(1)[0].scores, one(1)[0].scores);
        assert_ne!(one(1)[0].scores, one(2)[0].scores);
    }

    #[test]
    fn all_events_in_one_row_cannot_be_folded() {
        let raw = synthetic(10, 4, 23);
        let mut status = vec![false; 10];
        status[0] = true;
        let times = raw.survival.as_ref().unwrap().times().to_vec();
        let raw = RawDataset {
            survival: Some(SurvivalData::new(times, status).unwrap()),
            ..raw
        };
        let grid = [0.0, 0.1];
        let err = brier_cv(
            &raw,
            &[Learner::KaplanMeier],
            &grid,
            &CvOptions {
                folds: 2,
                repeats: 1,
                seed: 0,
            },
        );
        assert!(matches!(err, Err(Error::Refold(MAX_REFOLD))));
    }

    #[test]
    fn bad_fold_count() {
        let raw = synthetic(10, 4, 24);
        let err = brier_cv(
            &raw,
            &[Learner::KaplanMeier],
            &[0.0],
            &CvOptions {
                folds: 1,
                repeats: 1,
                seed: 0,
            },
        );
        assert!(err.is_err());
    }
}
