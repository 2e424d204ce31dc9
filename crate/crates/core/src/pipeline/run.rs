use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use log::info;
use serde::{Deserialize, Serialize};

use super::cv::{brier_cv, CvOptions, Learner, DEFAULT_REPEATS};
use super::{fit_pipeline, require_survival, PipelineFit, PipelineSpec, TrainedPipeline};
use crate::corr::condition_number;
use crate::data::{load_csv, RawDataset};
use crate::error::{Error, Result};
use crate::factor::{diagnose, threshold_loadings, DimensionDiagnostics};
use crate::output::{curves_csv, curves_long_csv, filter_csv, matrix_csv, table_csv, OutputDir};
use crate::survival::{
    brier_curve, default_tau, evaluation_grid, integrate_brier, r_squared, reverse_km, BrierCurve, BrierVariant,
    CoxModel, SurvivalData,
};

/// Integration horizon: the median observed time, or a fixed value.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub enum TauChoice {
    #[default]
    Median,
    Value(f64),
}

impl TauChoice {
    pub fn resolve(self, data: &SurvivalData) -> f64 {
        match self {
            TauChoice::Median => default_tau(data),
            TauChoice::Value(v) => v,
        }
    }
}

impl FromStr for TauChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("median") {
            return Ok(TauChoice::Median);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(TauChoice::Value(v)),
            _ => Err(Error::Config(format!(
                "tau must be MEDIAN or a positive number, got {s:?}"
            ))),
        }
    }
}

impl fmt::Display for TauChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TauChoice::Median => f.write_str("MEDIAN"),
            TauChoice::Value(v) => write!(f, "{v}"),
        }
    }
}

impl Serialize for TauChoice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TauChoice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BrierMode {
    /// Apparent error only.
    Apparent,
    /// Apparent plus repeated K-fold cross-validated error.
    #[default]
    Cv,
}

impl FromStr for BrierMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "apparent" => Ok(BrierMode::Apparent),
            "cv" => Ok(BrierMode::Cv),
            _ => Err(Error::Config(format!(
                "brier mode must be 'apparent' or 'cv', got {s:?}"
            ))),
        }
    }
}

/// Inputs and settings of a pipeline run. The output location and the
/// overwrite flag are not part of the echoed configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub time_column: String,
    pub status_column: String,
    #[serde(skip)]
    pub output: PathBuf,
    #[serde(skip)]
    pub force: bool,
    pub spec: PipelineSpec,
    /// Loading threshold for the weak-factor check.
    pub omega: f64,
    pub tau: TauChoice,
    pub brier: BrierMode,
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: PathBuf::new(),
            time_column: "time".into(),
            status_column: "status".into(),
            output: PathBuf::from("out"),
            force: false,
            spec: PipelineSpec::default(),
            omega: 0.3,
            tau: TauChoice::Median,
            brier: BrierMode::Cv,
            folds: 5,
            repeats: DEFAULT_REPEATS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelScore {
    pub model: String,
    pub b_integrated: f64,
    /// Against the Kaplan-Meier reference.
    pub r2: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BrierSummary {
    pub variant: BrierVariant,
    pub tau: f64,
    pub models: Vec<ModelScore>,
}

impl BrierSummary {
    /// Integrates every curve; the curve labelled `kaplan-meier` is the
    /// reference for R².
    pub fn from_curves(variant: BrierVariant, curves: &[BrierCurve], tau: f64) -> Result<Self> {
        let integrated = curves
            .iter()
            .map(|c| integrate_brier(c, tau))
            .collect::<Result<Vec<_>>>()?;
        let reference = curves.iter().position(|c| c.label == Learner::KaplanMeier.label());
        let models = curves
            .iter()
            .zip(&integrated)
            .map(|(c, s)| {
                let r2 = match reference {
                    Some(r) if c.label != curves[r].label => r_squared(s, &integrated[r]).ok(),
                    _ => None,
                };
                ModelScore {
                    model: c.label.clone(),
                    b_integrated: s.value,
                    r2,
                }
            })
            .collect();
        Ok(Self { variant, tau, models })
    }

    pub fn score(&self, model: &str) -> Option<&ModelScore> {
        self.models.iter().find(|m| m.model == model)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorSummary {
    pub discrepancy: f64,
    pub iterations: usize,
    pub converged: bool,
    pub heywood: usize,
    pub weak_factors: Vec<usize>,
    pub significant_loadings: Vec<usize>,
}

/// Everything a pipeline run produced, apart from the matrices themselves.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub config: PipelineConfig,
    pub n: usize,
    pub events: usize,
    pub p_input: usize,
    pub p_retained: usize,
    pub removed: Vec<String>,
    pub theta: f64,
    pub cv_score: f64,
    pub condition_number: f64,
    pub guttman_m: usize,
    pub m: usize,
    pub advisory: Option<String>,
    pub factor: FactorSummary,
    pub diagnostics: DimensionDiagnostics,
    pub cox_beta: Vec<f64>,
    pub cox_converged: bool,
    pub brier: Vec<BrierSummary>,
    pub artifacts: Vec<String>,
}

const ARTIFACTS: [&str; 10] = [
    "filter.csv",
    "penalty_trace.csv",
    "correlation_shrunk.csv",
    "loadings.csv",
    "scores.csv",
    "model.json",
    "brier_curves.csv",
    "prediction_error_long.csv",
    "brier.json",
    "report.json",
];

pub fn load_survival_csv(input: &std::path::Path, time: &str, status: &str) -> Result<RawDataset> {
    load_csv(input, Some((time, status)))
}

/// Apparent curves of the fitted rule and of the training Kaplan-Meier
/// curve, with censoring weights from the training data.
pub fn apparent_brier(fit: &PipelineFit, raw: &RawDataset, tau: f64) -> Result<Vec<BrierCurve>> {
    let surv = require_survival(raw)?;
    let grid = evaluation_grid(surv, tau);
    let g = reverse_km(surv);
    let pred = fit.trained.cox.predict_matrix(&fit.scores.values, &grid);
    let mut model = brier_curve(&pred, surv, &grid, &g)?;
    let km_row: Vec<f64> = grid.iter().map(|&t| fit.trained.reference.at(t)).collect();
    let km_pred = nalgebra::DMatrix::from_fn(surv.len(), grid.len(), |_, k| km_row[k]);
    let mut reference = brier_curve(&km_pred, surv, &grid, &g)?;
    model.label = "factor-cox".into();
    reference.label = Learner::KaplanMeier.label().into();
    model.tau = tau;
    reference.tau = tau;
    Ok(vec![model, reference])
}

fn advisory(fit: &PipelineFit, weak: &[usize]) -> Option<String> {
    if fit.trained.spec.m.is_some() {
        return None;
    }
    let gb = fit.trained.guttman_m;
    let mut text = format!(
        "m = {} taken from the Guttman bound ({gb}), which is an upper bound on the number of factors",
        fit.trained.m()
    );
    if !weak.is_empty() {
        let list: Vec<String> = weak.iter().map(|k| (k + 1).to_string()).collect();
        text.push_str(&format!(
            "; factors {} have fewer than three salient loadings, consider a smaller m",
            list.join(", ")
        ));
    }
    Some(text)
}

fn factor_names(m: usize) -> Vec<String> {
    (1..=m).map(|k| format!("F{k}")).collect()
}

/// Train the pipeline, evaluate it, and write all artifacts to
/// `config.output`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunReport> {
    let mut out = OutputDir::new(&config.output, config.force);
    out.check(&ARTIFACTS).map_err(|e| e.at("output"))?;

    let raw =
        load_survival_csv(&config.input, &config.time_column, &config.status_column).map_err(|e| e.at("ingest"))?;
    let surv = require_survival(&raw).map_err(|e| e.at("ingest"))?.clone();
    info!(
        "loaded {} rows, {} features, {} events",
        raw.nrows(),
        raw.ncols(),
        surv.events()
    );

    let fit = fit_pipeline(&raw, &config.spec, config.seed)?;
    let trained = &fit.trained;
    let m = trained.m();
    info!(
        "retained {} of {} features, theta = {:.6}, GB = {}, m = {m}",
        trained.stats.len(),
        raw.ncols(),
        trained.theta,
        trained.guttman_m
    );

    let diagnostics = diagnose(&fit.shrunk, &trained.model);
    let thresholded = threshold_loadings(&trained.model.loadings, config.omega).map_err(|e| e.at("fa"))?;
    let weak: Vec<usize> = (0..m).filter(|&k| thresholded.weak[k]).collect();

    let tau = config.tau.resolve(&surv);
    let apparent = apparent_brier(&fit, &raw, tau).map_err(|e| e.at("brier"))?;
    let mut summaries =
        vec![BrierSummary::from_curves(BrierVariant::Apparent, &apparent, tau).map_err(|e| e.at("brier"))?];
    let mut curves = apparent;
    if config.brier == BrierMode::Cv {
        // the dimension is fixed to the one chosen on the full data
        let spec = PipelineSpec {
            m: Some(m),
            ..config.spec.clone()
        };
        let grid = evaluation_grid(&surv, tau);
        let cv = brier_cv(
            &raw,
            &[Learner::FactorCox(spec), Learner::KaplanMeier],
            &grid,
            &CvOptions {
                folds: config.folds,
                repeats: config.repeats,
                seed: config.seed,
            },
        )
        .map_err(|e| e.at("brier"))?;
        summaries.push(BrierSummary::from_curves(BrierVariant::CvAveraged, &cv, tau).map_err(|e| e.at("brier"))?);
        curves.extend(cv);
    }

    let write = |out: &mut OutputDir, name: &str, bytes: Result<Vec<u8>>| -> Result<()> {
        out.write(name, &bytes?).map_err(|e| e.at("output"))
    };
    write(&mut out, "filter.csv", filter_csv(&raw.feature_names, &fit.filter))?;
    write(
        &mut out,
        "penalty_trace.csv",
        table_csv(
            &["theta", "cv_score"],
            fit.penalty
                .trace
                .iter()
                .map(|(t, v)| vec![t.to_string(), v.to_string()])
                .collect(),
        ),
    )?;
    let retained = &trained.stats.names;
    write(
        &mut out,
        "correlation_shrunk.csv",
        matrix_csv(&fit.shrunk.matrix(), Some(retained), retained),
    )?;
    let mut loading_cols = factor_names(m);
    loading_cols.extend(["uniqueness".to_string(), "communality".to_string()]);
    let communalities = trained.model.communalities();
    let mut table = trained.model.loadings.clone().insert_columns(m, 2, 0.0);
    for j in 0..table.nrows() {
        table[(j, m)] = trained.model.uniquenesses[j];
        table[(j, m + 1)] = communalities[j];
    }
    write(
        &mut out,
        "loadings.csv",
        matrix_csv(&table, Some(retained), &loading_cols),
    )?;
    write(
        &mut out,
        "scores.csv",
        matrix_csv(&fit.scores.values, None, &factor_names(m)),
    )?;
    out.write_json("model.json", trained).map_err(|e| e.at("output"))?;
    // wide file holds the headline variant: cross-validated when available
    let headline = summaries.last().expect("apparent summary").variant;
    let wide: Vec<BrierCurve> = curves.iter().filter(|c| c.variant == headline).cloned().collect();
    write(&mut out, "brier_curves.csv", curves_csv(&wide))?;
    write(&mut out, "prediction_error_long.csv", curves_long_csv(&curves))?;
    out.write_json("brier.json", &summaries).map_err(|e| e.at("output"))?;

    let mut artifacts: Vec<String> = out.written().to_vec();
    artifacts.push("report.json".into());
    let report = RunReport {
        tool: "fmradio".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        n: raw.nrows(),
        events: surv.events(),
        p_input: raw.ncols(),
        p_retained: trained.stats.len(),
        removed: trained.removed.clone(),
        theta: trained.theta,
        cv_score: fit.penalty.cv_score,
        condition_number: condition_number(&fit.shrunk),
        guttman_m: trained.guttman_m,
        m,
        advisory: advisory(&fit, &weak),
        factor: FactorSummary {
            discrepancy: trained.model.discrepancy,
            iterations: trained.model.iterations,
            converged: trained.model.converged,
            heywood: trained.model.heywood.iter().filter(|&&h| h).count(),
            weak_factors: weak.iter().map(|k| k + 1).collect(),
            significant_loadings: thresholded.significant.clone(),
        },
        diagnostics,
        cox_beta: trained.cox.beta.clone(),
        cox_converged: trained.cox.converged,
        brier: summaries,
        artifacts,
    };
    out.write_json("report.json", &report).map_err(|e| e.at("output"))?;
    Ok(report)
}

/// Result of applying a trained rule to external data.
#[derive(Debug, Clone)]
pub struct ValidationOutcome {
    pub curves: Vec<BrierCurve>,
    pub summary: BrierSummary,
    /// Present when the Cox model was refitted on the validation scores.
    pub recalibrated: Option<CoxModel>,
}

/// Score `raw` with the training standardization and factor solution and
/// compute validated Brier curves, with censoring weights from `raw`.
pub fn validate(
    trained: &TrainedPipeline,
    raw: &RawDataset,
    tau: TauChoice,
    recalibrate: bool,
) -> Result<ValidationOutcome> {
    let surv = require_survival(raw).map_err(|e| e.at("ingest"))?;
    let (rule, recalibrated) = if recalibrate {
        let r = trained.recalibrated(raw).map_err(|e| e.at("survfit"))?;
        let cox = r.cox.clone();
        (r, Some(cox))
    } else {
        (trained.clone(), None)
    };
    let tau = tau.resolve(surv);
    let grid = evaluation_grid(surv, tau);
    let g = reverse_km(surv);
    let pred = rule.predict(raw, &grid).map_err(|e| e.at("scores"))?;
    let km_row: Vec<f64> = grid.iter().map(|&t| trained.reference.at(t)).collect();
    let km_pred = nalgebra::DMatrix::from_fn(raw.nrows(), grid.len(), |_, k| km_row[k]);
    let mut curves = Vec::with_capacity(2);
    for (p, label) in [(pred, "factor-cox"), (km_pred, "kaplan-meier")] {
        let mut c = brier_curve(&p, surv, &grid, &g).map_err(|e| e.at("brier"))?;
        c.variant = BrierVariant::Validated;
        c.label = label.into();
        c.tau = tau;
        curves.push(c);
    }
    let summary = BrierSummary::from_curves(BrierVariant::Validated, &curves, tau).map_err(|e| e.at("brier"))?;
    Ok(ValidationOutcome {
        curves,
        summary,
        recalibrated,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    /// `model.json` written by a pipeline run.
    pub model: PathBuf,
    pub input: PathBuf,
    pub time_column: String,
    pub status_column: String,
    #[serde(skip)]
    pub output: PathBuf,
    #[serde(skip)]
    pub force: bool,
    pub tau: TauChoice,
    pub recalibrate: bool,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            model: PathBuf::from("out/model.json"),
            input: PathBuf::new(),
            time_column: "time".into(),
            status_column: "status".into(),
            output: PathBuf::from("validation"),
            force: false,
            tau: TauChoice::Median,
            recalibrate: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub tool: String,
    pub version: String,
    pub config: ValidateConfig,
    pub n: usize,
    pub events: usize,
    pub model_fingerprint: String,
    pub brier: BrierSummary,
    pub cox_beta: Vec<f64>,
    pub artifacts: Vec<String>,
}

const VALIDATION_ARTIFACTS: [&str; 4] = ["validation_scores.csv", "brier_curves.csv", "brier.json", "report.json"];

/// Read a trained model and an external data set, validate, and write
/// the artifacts to `config.output`.
pub fn validate_external(config: &ValidateConfig) -> Result<ValidationReport> {
    let mut out = OutputDir::new(&config.output, config.force);
    out.check(&VALIDATION_ARTIFACTS).map_err(|e| e.at("output"))?;
    let text = std::fs::read_to_string(&config.model)
        .map_err(|source| Error::Io {
            path: config.model.clone(),
            source,
        })
        .map_err(|e| e.at("ingest"))?;
    let trained: TrainedPipeline = serde_json::from_str(&text).map_err(|e| Error::from(e).at("ingest"))?;
    let raw =
        load_survival_csv(&config.input, &config.time_column, &config.status_column).map_err(|e| e.at("ingest"))?;
    let outcome = validate(&trained, &raw, config.tau, config.recalibrate)?;
    let scores = trained.scores(&raw).map_err(|e| e.at("scores"))?;

    let write = |out: &mut OutputDir, name: &str, bytes: Result<Vec<u8>>| -> Result<()> {
        out.write(name, &bytes?).map_err(|e| e.at("output"))
    };
    write(
        &mut out,
        "validation_scores.csv",
        matrix_csv(&scores.values, None, &factor_names(trained.m())),
    )?;
    write(&mut out, "brier_curves.csv", curves_csv(&outcome.curves))?;
    out.write_json("brier.json", &outcome.summary)
        .map_err(|e| e.at("output"))?;
    let mut artifacts = out.written().to_vec();
    artifacts.push("report.json".into());
    let surv = require_survival(&raw)?;
    let report = ValidationReport {
        tool: "fmradio".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        n: raw.nrows(),
        events: surv.events(),
        model_fingerprint: scores.fingerprint,
        brier: outcome.summary,
        cox_beta: outcome.recalibrated.unwrap_or(trained.cox).beta,
        artifacts,
    };
    out.write_json("report.json", &report).map_err(|e| e.at("output"))?;
    Ok(report)
}
