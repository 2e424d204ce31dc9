//! Statistical tendencies that only hold on average, checked over batches
//! of simulated data sets.

use fmradio::data::RawDataset;
use fmradio::factor::Criterion;
use fmradio::pipeline::{
    apparent_brier, brier_cv, fit_pipeline, validate, BrierSummary, CvOptions, Learner, PipelineSpec, TauChoice,
};
use fmradio::sim::{run_scenario, Balance, SimulationScenario};
use fmradio::survival::{default_tau, evaluation_grid, BrierVariant, SurvivalData};
use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Exp, StandardNormal};

/// Two-factor features; the hazard depends on the first factor with log
/// hazard ratio `effect`. Every feature is shifted by `shift`.
fn dataset(n: usize, p: usize, effect: f64, shift: f64, seed: u64) -> RawDataset {
    let mut r = ChaCha20Rng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(n, p);
    let mut times = Vec::with_capacity(n);
    let mut status = Vec::with_capacity(n);
    for i in 0..n {
        let f: [f64; 2] = [r.sample(StandardNormal), r.sample(StandardNormal)];
        for j in 0..p {
            let e: f64 = r.sample(StandardNormal);
            x[(i, j)] = shift + 0.8 * f[j % 2] + 0.6 * e;
        }
        let t: f64 = r.sample(Exp::new((effect * f[0]).exp()).unwrap());
        let c: f64 = r.sample(Exp::new(0.5).unwrap());
        times.push(t.min(c));
        status.push(t <= c);
    }
    let names = (1..=p).map(|j| format!("x{j}")).collect();
    RawDataset::new(x, names, Some(SurvivalData::new(times, status).unwrap())).unwrap()
}

fn factor_cox(s: &BrierSummary) -> f64 {
    s.score("factor-cox").unwrap().b_integrated
}

#[test]
fn cross_validated_error_exceeds_apparent_error_on_average() {
    let spec = PipelineSpec {
        m: Some(2),
        ..PipelineSpec::default()
    };
    let mut optimism = Vec::new();
    for k in 0..20 {
        let raw = dataset(80, 10, 0.8, 0.0, 1000 + k);
        let surv = raw.survival.as_ref().unwrap();
        let tau = default_tau(surv);
        let fit = fit_pipeline(&raw, &spec, k).unwrap();
        let apparent =
            BrierSummary::from_curves(BrierVariant::Apparent, &apparent_brier(&fit, &raw, tau).unwrap(), tau).unwrap();
        let opts = CvOptions {
            folds: 5,
            repeats: 10,
            seed: k,
        };
        let cv = brier_cv(
            &raw,
            &[Learner::FactorCox(spec.clone()), Learner::KaplanMeier],
            &evaluation_grid(surv, tau),
            &opts,
        )
        .unwrap();
        let cv = BrierSummary::from_curves(BrierVariant::CvAveraged, &cv, tau).unwrap();
        optimism.push(factor_cox(&cv) - factor_cox(&apparent));
    }
    let mean = optimism.iter().sum::<f64>() / optimism.len() as f64;
    let positive = optimism.iter().filter(|&&d| d > 0.0).count();
    assert!(mean > 0.0, "mean optimism {mean}");
    assert!(
        positive >= 15,
        "{positive}/20 data sets with positive optimism: {optimism:?}"
    );
}

#[test]
fn recalibration_helps_on_shifted_data() {
    let spec = PipelineSpec {
        m: Some(2),
        ..PipelineSpec::default()
    };
    let mut gains = Vec::new();
    for k in 0..20 {
        let train = dataset(100, 10, 0.8, 0.0, 2000 + k);
        let shifted = dataset(100, 10, 0.3, 0.7, 3000 + k);
        let trained = fit_pipeline(&train, &spec, k).unwrap().trained;
        let plain = validate(&trained, &shifted, TauChoice::Median, false).unwrap();
        let recal = validate(&trained, &shifted, TauChoice::Median, true).unwrap();
        gains.push(factor_cox(&plain.summary) - factor_cox(&recal.summary));
    }
    let better = gains.iter().filter(|&&g| g >= 0.0).count();
    assert!(better >= 15, "{better}/20 replicates improved: {gains:?}");
}

#[test]
fn guttman_bound_errs_upward_at_moderate_communality() {
    let (mut above, mut below) = (0, 0);
    for n in [50, 250] {
        let scenario = SimulationScenario {
            replicates: 20,
            seed: 5,
            ..SimulationScenario::new(100, 5, 0.7, Balance::Balanced, n)
        };
        let res = run_scenario(&scenario).unwrap();
        above += res.count_where(Criterion::Guttman, |m| m > 5);
        below += res.count_where(Criterion::Guttman, |m| m < 5);
    }
    assert!(above > below, "above {above}, below {below}");
}
