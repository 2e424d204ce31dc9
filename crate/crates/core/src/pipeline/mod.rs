//! The end-to-end prediction rule: redundancy filter, shrinkage, ML factor
//! analysis, varimax, Thomson scores and a Cox model on the scores.
//!
//! [`fit_pipeline`] is pure (no I/O) and is what cross-validation refits on
//! every training split. [`run_pipeline`] and [`validate_external`] add
//! artifact writing on top.

mod cv;
mod run;

pub use cv::{brier_cv, CvOptions, Learner, DEFAULT_REPEATS, MAX_REFOLD};
pub use run::{
    apparent_brier, load_survival_csv, run_pipeline, validate, validate_external, BrierMode, BrierSummary,
    FactorSummary, ModelScore, PipelineConfig, RunReport, TauChoice, ValidateConfig, ValidationOutcome,
    ValidationReport,
};

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::corr::{redundancy_filter, sample_correlation, shrink, FilterResult, ShrunkenCorrelation, TieRule};
use crate::data::{apply_stats, standardize, ColumnStats, RawDataset, StandardizedMatrix};
use crate::error::{Error, Result};
use crate::factor::{fit_ml_factor, guttman_bound, ledermann_max, FactorModel, FitOptions};
use crate::penalty::{cv_select_penalty, PenaltySearchResult, DEFAULT_FOLDS};
use crate::rotation::{varimax, RotationResult, DEFAULT_MAX_SWEEPS, DEFAULT_TOL};
use crate::scores::{thomson_scores, FactorScores, ScoreSource};
use crate::seed::derive_seed;
use crate::survival::{fit_cox, km, CoxModel, CoxOptions, StepSurvivalCurve, SurvivalData};

/// Modelling choices of the prediction rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSpec {
    /// Redundancy threshold on absolute correlations.
    pub tau_r: f64,
    pub tie_rule: TieRule,
    /// Folds of the shrinkage-penalty cross-validation.
    pub penalty_folds: usize,
    /// Number of factors; `None` uses the Guttman bound.
    pub m: Option<usize>,
    pub rotate: bool,
    pub fit: FitOptions,
    pub cox: CoxOptions,
}

impl Default for PipelineSpec {
    fn default() -> Self {
        Self {
            tau_r: 0.95,
            tie_rule: TieRule::First,
            penalty_folds: DEFAULT_FOLDS,
            m: None,
            rotate: true,
            fit: FitOptions::default(),
            cox: CoxOptions::default(),
        }
    }
}

/// Everything needed to score and predict for new subjects.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedPipeline {
    pub spec: PipelineSpec,
    pub input_features: Vec<String>,
    /// Filtered-out features in removal order.
    pub removed: Vec<String>,
    /// Training means and sds of the retained features.
    pub stats: ColumnStats,
    pub theta: f64,
    pub guttman_m: usize,
    pub model: FactorModel,
    pub cox: CoxModel,
    /// Kaplan-Meier curve of the training outcomes (the null model).
    pub reference: StepSurvivalCurve,
}

impl TrainedPipeline {
    pub fn m(&self) -> usize {
        self.model.m
    }

    /// Select the retained features by name and standardize with the
    /// training statistics.
    pub fn standardize(&self, raw: &RawDataset) -> Result<StandardizedMatrix> {
        apply_stats(&raw.select_named(&self.stats.names)?, &self.stats)
    }

    pub fn scores(&self, raw: &RawDataset) -> Result<FactorScores> {
        thomson_scores(&self.model, &self.standardize(raw)?.data, ScoreSource::Validation)
    }

    /// Predicted survival (`rows × grid`).
    pub fn predict(&self, raw: &RawDataset, grid: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.cox.predict_matrix(&self.scores(raw)?.values, grid))
    }

    /// Same factor solution, Cox model refitted on the scores of `raw`.
    pub fn recalibrated(&self, raw: &RawDataset) -> Result<Self> {
        let surv = require_survival(raw)?;
        let scores = self.scores(raw)?;
        let cox = fit_cox(&scores.values, surv, &self.spec.cox)?;
        Ok(Self { cox, ..self.clone() })
    }
}

/// A trained pipeline plus the intermediate results of the training run.
#[derive(Debug, Clone)]
pub struct PipelineFit {
    pub trained: TrainedPipeline,
    pub filter: FilterResult,
    /// Standardized training data restricted to the retained features.
    pub standardized: StandardizedMatrix,
    pub penalty: PenaltySearchResult,
    pub shrunk: ShrunkenCorrelation,
    pub rotation: Option<RotationResult>,
    pub scores: FactorScores,
}

pub(crate) fn require_survival(raw: &RawDataset) -> Result<&SurvivalData> {
    raw.survival
        .as_ref()
        .ok_or_else(|| Error::Config("dataset has no survival outcome".into()))
}

/// `m` from the spec, or the Guttman bound clamped to `[1, ledermann_max]`.
pub fn resolve_dimension(spec: &PipelineSpec, guttman_m: usize, p: usize) -> usize {
    match spec.m {
        Some(m) => m,
        None => {
            let cap = ledermann_max(p).max(1);
            if guttman_m == 0 {
                warn!("Guttman bound is 0; using one factor");
            } else if guttman_m > cap {
                warn!("Guttman bound {guttman_m} exceeds the Ledermann bound {cap}; capping");
            }
            guttman_m.clamp(1, cap)
        }
    }
}

/// Train the full rule on `raw`, which must carry a survival outcome.
///
/// Errors are tagged with the failing stage.
pub fn fit_pipeline(raw: &RawDataset, spec: &PipelineSpec, seed: u64) -> Result<PipelineFit> {
    let surv = require_survival(raw).map_err(|e| e.at("ingest"))?;
    let (z, _) = standardize(raw).map_err(|e| e.at("ingest"))?;

    let r = sample_correlation(&z).map_err(|e| e.at("filter"))?;
    let filter = redundancy_filter(&r, spec.tau_r, spec.tie_rule).map_err(|e| e.at("filter"))?;
    let z = z.select_columns(&filter.retained);

    let penalty =
        cv_select_penalty(&z, spec.penalty_folds, derive_seed(seed, "penalty", 0)).map_err(|e| e.at("shrink"))?;
    let shrunk = shrink(&filter.filtered, penalty.theta_opt).map_err(|e| e.at("shrink"))?;

    let (guttman_m, _) = guttman_bound(&shrunk);
    let m = resolve_dimension(spec, guttman_m, shrunk.dim());
    let mut model = fit_ml_factor(&shrunk, m, &spec.fit).map_err(|e| e.at("fa"))?;
    if !model.converged {
        warn!("factor fit with m = {m} did not converge");
    }

    let rotation = if spec.rotate {
        let rot = varimax(&model.loadings, DEFAULT_TOL, DEFAULT_MAX_SWEEPS).map_err(|e| e.at("rotate"))?;
        model.loadings = rot.rotated.clone();
        model.rotated = true;
        Some(rot)
    } else {
        None
    };

    let scores = thomson_scores(&model, &z.data, ScoreSource::Training).map_err(|e| e.at("scores"))?;
    let cox = fit_cox(&scores.values, surv, &spec.cox).map_err(|e| e.at("survfit"))?;

    let trained = TrainedPipeline {
        spec: spec.clone(),
        input_features: raw.feature_names.clone(),
        removed: filter.removed.iter().map(|&j| raw.feature_names[j].clone()).collect(),
        stats: z.stats.clone(),
        theta: penalty.theta_opt,
        guttman_m,
        model,
        cox,
        reference: km(surv),
    };
    Ok(PipelineFit {
        trained,
        filter,
        standardized: z,
        penalty,
        shrunk,
        rotation,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survival::SurvivalData;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use rand_distr::{Exp, StandardNormal};

    /// Two-block factor data whose first factor drives the hazard.
    pub(crate) fn synthetic(n: usize, p: usize, seed: u64) -> RawDataset {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut x = DMatrix::zeros(n, p);
        let mut times = Vec::with_capacity(n);
        let mut status = Vec::with_capacity(n);
        for i in 0..n {
            let f: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
            for j in 0..p {
                let e: f64 = rng.sample(StandardNormal);
                x[(i, j)] = 0.8 * f[j % 2] + 0.6 * e;
            }
            let t: f64 = rng.sample(Exp::new((0.8 * f[0]).exp()).unwrap());
            let c: f64 = rng.sample(Exp::new(0.5).unwrap());
            times.push(t.min(c).max(1e-6));
            status.push(t <= c);
        }
        let names = (1..=p).map(|j| format!("x{j}")).collect();
        RawDataset::new(x, names, Some(SurvivalData::new(times, status).unwrap())).unwrap()
    }

    #[test]
    fn recovers_two_factors_and_predicts() {
        let raw = synthetic(200, 12, 3);
        let fit = fit_pipeline(&raw, &PipelineSpec::default(), 11).unwrap();
        assert_eq!(fit.trained.guttman_m, 2);
        assert_eq!(fit.trained.m(), 2);
        assert!(fit.trained.model.converged);
        assert!(fit.trained.cox.converged);
        // scoring the training rows through the stored statistics reproduces
        // the training scores
        let again = fit.trained.scores(&raw).unwrap();
        assert_eq!(again.values, fit.scores.values);
        let grid = [0.0, 0.5, 1.0];
        let pred = fit.trained.predict(&raw, &grid).unwrap();
        assert!(pred.column(0).iter().all(|&v| v == 1.0));
        assert!(pred.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn same_seed_same_model() {
        let raw = synthetic(80, 10, 4);
        let a = fit_pipeline(&raw, &PipelineSpec::default(), 5).unwrap();
        let b = fit_pipeline(&raw, &PipelineSpec::default(), 5).unwrap();
        assert_eq!(a.trained.theta, b.trained.theta);
        assert_eq!(a.trained.cox.beta, b.trained.cox.beta);
    }

    #[test]
    fn missing_outcome_is_an_ingest_error() {
        let raw = RawDataset::from_matrix(DMatrix::from_fn(10, 3, |i, j| ((i * 7 + j * 3) % 5) as f64)).unwrap();
        let err = fit_pipeline(&raw, &PipelineSpec::default(), 0).unwrap_err();
        assert_eq!(err.stage(), Some("ingest"));
    }

    #[test]
    fn redundant_copy_is_filtered() {
        let mut raw = synthetic(100, 6, 8);
        let dup = raw.features.column(0) * 2.0;
        raw.features = raw.features.clone().insert_column(6, 0.0);
        raw.features.set_column(6, &dup);
        raw.feature_names.push("copy".into());
        let fit = fit_pipeline(&raw, &PipelineSpec::default(), 1).unwrap();
        assert_eq!(fit.trained.removed, vec!["x1".to_string()]);
        assert!(fit.trained.stats.names.contains(&"copy".to_string()));
    }

    #[test]
    fn fixed_dimension_is_respected() {
        let raw = synthetic(120, 10, 9);
        let spec = PipelineSpec {
            m: Some(1),
            rotate: false,
            ..PipelineSpec::default()
        };
        let fit = fit_pipeline(&raw, &spec, 2).unwrap();
        assert_eq!(fit.trained.m(), 1);
        assert!(fit.rotation.is_none());
    }

    #[test]
    fn dimension_resolution() {
        let spec = PipelineSpec::default();
        assert_eq!(resolve_dimension(&spec, 0, 10), 1);
        assert_eq!(resolve_dimension(&spec, 3, 10), 3);
        assert_eq!(resolve_dimension(&spec, 9, 10), ledermann_max(10));
        let fixed = PipelineSpec { m: Some(4), ..spec };
        assert_eq!(resolve_dimension(&fixed, 2, 10), 4);
    }
}
