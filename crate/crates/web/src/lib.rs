//! Browser demo: simulate a factor-structured survival data set, then look
//! at the penalty search, the rotated loadings and the prediction error
//! curves. Everything runs single-threaded inside the page.
//!
//! [`Demo`] is plain Rust so it can be tested natively; [`WebDemo`] wraps it
//! for JavaScript and returns JSON strings.

use fmradio::corr::{condition_number, sample_correlation, shrink};
use fmradio::data::{standardize, RawDataset};
use fmradio::factor::{guttman_bound, threshold_loadings};
use fmradio::penalty::cv_select_penalty;
use fmradio::pipeline::{apparent_brier, brier_cv, fit_pipeline, BrierSummary, CvOptions, Learner, PipelineSpec};
use fmradio::seed::derive_seed;
use fmradio::sim::{build_loading_matrix_with, simulate_dataset, Balance, LoadingScheme};
use fmradio::survival::{default_tau, evaluation_grid, BrierVariant, SurvivalData};
use fmradio::{Error, Result};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::Exp;
use serde::Serialize;
use wasm_bindgen::prelude::*;

const SALIENCE: f64 = 0.3;
const CENSORING_RATE: f64 = 0.5;

pub struct Demo {
    raw: RawDataset,
    /// Generating factor of each feature.
    assignment: Vec<usize>,
    seed: u64,
}

#[derive(Debug, Serialize)]
pub struct ShrinkView {
    pub theta: f64,
    pub cv_score: f64,
    /// `(theta, score)` pairs in evaluation order.
    pub trace: Vec<(f64, f64)>,
    /// Eigenvalues of the sample correlation, descending.
    pub eigenvalues: Vec<f64>,
    pub shrunken: Vec<f64>,
    pub guttman_m: usize,
    pub condition_number: f64,
    pub condition_number_raw: f64,
}

#[derive(Debug, Serialize)]
pub struct FactorView {
    pub m: usize,
    pub guttman_m: usize,
    pub features: Vec<String>,
    /// Row-major `p × m` rotated loadings.
    pub loadings: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    pub weak: Vec<bool>,
    pub discrepancy: f64,
}

#[derive(Debug, Serialize)]
pub struct Curve {
    pub variant: BrierVariant,
    pub label: String,
    pub times: Vec<f64>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct ErrorView {
    pub m: usize,
    pub tau: f64,
    pub curves: Vec<Curve>,
    pub summaries: Vec<BrierSummary>,
}

impl Demo {
    /// `n` rows from a `p`-feature model with `m_true` factors; the log
    /// hazard is `effect` times the standardized mean of the first factor's
    /// indicators, with independent exponential censoring.
    pub fn simulate(p: usize, m_true: usize, communality: f64, n: usize, effect: f64, seed: u64) -> Result<Self> {
        let gen = build_loading_matrix_with(p, m_true, communality, Balance::Balanced, LoadingScheme::PrimaryLoading)?;
        let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, "web-data", 0));
        let x = simulate_dataset(&gen, n, &mut rng);

        let block: Vec<usize> = (0..p).filter(|&j| gen.assignment[j] == 0).collect();
        let signal: Vec<f64> = (0..n)
            .map(|i| block.iter().map(|&j| x[(i, j)]).sum::<f64>() / block.len() as f64)
            .collect();
        let mean = signal.iter().sum::<f64>() / n as f64;
        let sd = (signal.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
        let censor = Exp::new(CENSORING_RATE).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let mut times = Vec::with_capacity(n);
        let mut status = Vec::with_capacity(n);
        for s in signal {
            let hazard = (effect * (s - mean) / sd).exp();
            let t: f64 = rng.sample(Exp::new(hazard).map_err(|e| Error::InvalidParameter(e.to_string()))?);
            let c: f64 = rng.sample(censor);
            times.push(t.min(c));
            status.push(t <= c);
        }
        let names = (1..=p).map(|j| format!("x{j}")).collect();
        let raw = RawDataset::new(x, names, Some(SurvivalData::new(times, status)?))?;
        Ok(Self {
            raw,
            assignment: gen.assignment,
            seed,
        })
    }

    pub fn raw(&self) -> &RawDataset {
        &self.raw
    }

    pub fn shrinkage(&self) -> Result<ShrinkView> {
        let (z, _) = standardize(&self.raw)?;
        let r = sample_correlation(&z)?;
        let penalty = cv_select_penalty(&z, 5, derive_seed(self.seed, "penalty", 0))?;
        let s = shrink(&r, penalty.theta_opt)?;
        let raw_eig = fmradio::corr::shrink_unchecked(&r, 0.0);
        Ok(ShrinkView {
            theta: penalty.theta_opt,
            cv_score: penalty.cv_score,
            trace: penalty.trace,
            eigenvalues: s.eigenvalues.iter().copied().collect(),
            shrunken: s.shrunken_eigenvalues().iter().copied().collect(),
            guttman_m: guttman_bound(&s).0,
            condition_number: condition_number(&s),
            condition_number_raw: condition_number(&raw_eig),
        })
    }

    fn spec(m: Option<usize>) -> PipelineSpec {
        PipelineSpec {
            m,
            ..PipelineSpec::default()
        }
    }

    /// `m = None` uses the Guttman bound.
    pub fn factors(&self, m: Option<usize>) -> Result<FactorView> {
        let fit = fit_pipeline(&self.raw, &Self::spec(m), self.seed)?;
        let model = &fit.trained.model;
        let weak = threshold_loadings(&model.loadings, SALIENCE)?.weak;
        let assignment = fit.filter.retained.iter().map(|&j| self.assignment[j]).collect();
        Ok(FactorView {
            m: model.m,
            guttman_m: fit.trained.guttman_m,
            features: model.feature_names.clone(),
            loadings: model.loadings.row_iter().map(|r| r.iter().copied().collect()).collect(),
            assignment,
            weak,
            discrepancy: model.discrepancy,
        })
    }

    /// Apparent and cross-validated error of the factor-score Cox model
    /// next to Kaplan-Meier, up to the median observed time.
    pub fn prediction_error(&self, m: Option<usize>, repeats: usize) -> Result<ErrorView> {
        let spec = Self::spec(m);
        let fit = fit_pipeline(&self.raw, &spec, self.seed)?;
        let surv = self.raw.survival.as_ref().expect("simulated data carry outcomes");
        let tau = default_tau(surv);
        let apparent = apparent_brier(&fit, &self.raw, tau)?;
        let fixed = PipelineSpec {
            m: Some(fit.trained.m()),
            ..spec
        };
        let opts = CvOptions {
            folds: 5,
            repeats,
            seed: self.seed,
        };
        let cv = brier_cv(
            &self.raw,
            &[Learner::FactorCox(fixed), Learner::KaplanMeier],
            &evaluation_grid(surv, tau),
            &opts,
        )?;
        let summaries = vec![
            BrierSummary::from_curves(BrierVariant::Apparent, &apparent, tau)?,
            BrierSummary::from_curves(BrierVariant::CvAveraged, &cv, tau)?,
        ];
        let curves = apparent
            .into_iter()
            .chain(cv)
            .map(|c| Curve {
                variant: c.variant,
                label: c.label,
                times: c.times,
                scores: c.scores,
            })
            .collect();
        Ok(ErrorView {
            m: fit.trained.m(),
            tau,
            curves,
            summaries,
        })
    }
}

fn js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsValue> {
    let value = r.map_err(|e| JsValue::from_str(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsValue::from_str(&e.to_string()))
}

fn dimension(m: usize) -> Option<usize> {
    (m > 0).then_some(m)
}

#[wasm_bindgen]
pub struct WebDemo(Demo);

#[wasm_bindgen]
impl WebDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(
        p: usize,
        m_true: usize,
        communality: f64,
        n: usize,
        effect: f64,
        seed: u32,
    ) -> std::result::Result<WebDemo, JsValue> {
        Demo::simulate(p, m_true, communality, n, effect, seed as u64)
            .map(WebDemo)
            .map_err(|e| JsValue::from_str(&e.to_string()))
    }

    pub fn events(&self) -> usize {
        self.0.raw.survival.as_ref().map_or(0, |s| s.events())
    }

    pub fn shrinkage(&self) -> std::result::Result<String, JsValue> {
        js(self.0.shrinkage())
    }

    /// `m = 0` selects the dimension automatically.
    pub fn factors(&self, m: usize) -> std::result::Result<String, JsValue> {
        js(self.0.factors(dimension(m)))
    }

    pub fn prediction_error(&self, m: usize, repeats: usize) -> std::result::Result<String, JsValue> {
        js(self.0.prediction_error(dimension(m), repeats))
    }
}
