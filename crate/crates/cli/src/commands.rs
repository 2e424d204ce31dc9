use std::fs;
use std::path::Path;

use fmradio::corr::{
    condition_number, redundancy_filter, sample_correlation, shrink as shrink_matrix, FilterResult, ShrunkenCorrelation,
};
use fmradio::data::{apply_stats, load_csv, standardize, ColumnStats, RawDataset, StandardizedMatrix};
use fmradio::factor::{
    diagnose, fit_ml_factor, guttman_bound, select_aic, select_bic, select_lrt, threshold_loadings, FactorModel,
    FitCache, FitOptions, LrtDf, SelectionTally,
};
use fmradio::output::{curves_csv, curves_long_csv, filter_csv, matrix_csv, table_csv, OutputDir};
use fmradio::penalty::{cv_select_penalty, PenaltySearchResult};
use fmradio::pipeline::{
    apparent_brier, brier_cv, fit_pipeline, load_survival_csv, resolve_dimension, run_pipeline, validate_external,
    BrierSummary, CvOptions, Learner, PipelineConfig, PipelineSpec, RunReport, ValidateConfig,
};
use fmradio::rotation::{varimax, DEFAULT_MAX_SWEEPS, DEFAULT_TOL};
use fmradio::scores::{thomson_scores, ScoreSource};
use fmradio::seed::derive_seed;
use fmradio::sim::{emit_table, histogram_csv, run_scenario, SimulationScenario};
use fmradio::survival::{default_tau, evaluation_grid, fit_cox, BrierVariant, CoxOptions};
use fmradio::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::args::*;

fn load_features(a: &InputArgs) -> Result<RawDataset> {
    let survival = match (&a.time, &a.status) {
        (Some(t), Some(s)) => Some((t.as_str(), s.as_str())),
        (None, None) => None,
        _ => return Err(Error::Config("--time and --status must be given together".into()).at("ingest")),
    };
    load_csv(&a.input, survival).map_err(|e| e.at("ingest"))
}

fn names(prefix: &str, m: usize) -> Vec<String> {
    (1..=m).map(|k| format!("{prefix}{k}")).collect()
}

fn write(out: &mut OutputDir, name: &str, bytes: Result<Vec<u8>>) -> Result<()> {
    out.write(name, &bytes?).map_err(|e| e.at("output"))
}

fn write_json<T: Serialize>(out: &mut OutputDir, name: &str, value: &T) -> Result<()> {
    out.write_json(name, value).map_err(|e| e.at("output"))
}

fn output(a: &OutputArgs, artifacts: &[&str]) -> Result<OutputDir> {
    let out = OutputDir::new(&a.out, a.force);
    out.check(artifacts).map_err(|e| e.at("output"))?;
    Ok(out)
}

struct Filtered {
    raw: RawDataset,
    z: StandardizedMatrix,
    filter: FilterResult,
}

fn run_filter(input: &InputArgs, opts: &FilterOpts) -> Result<Filtered> {
    let raw = load_features(input)?;
    let (z, _) = standardize(&raw).map_err(|e| e.at("ingest"))?;
    let r = sample_correlation(&z).map_err(|e| e.at("filter"))?;
    let filter = redundancy_filter(&r, opts.tau_r, opts.tie_rule).map_err(|e| e.at("filter"))?;
    let z = z.select_columns(&filter.retained);
    Ok(Filtered { raw, z, filter })
}

pub fn filter(a: FilterArgs) -> Result<()> {
    let mut out = output(&a.output, &["filter.csv", "correlation_filtered.csv"])?;
    let f = run_filter(&a.input, &a.filter)?;
    write(&mut out, "filter.csv", filter_csv(&f.raw.feature_names, &f.filter))?;
    let kept = f.z.names().to_vec();
    write(
        &mut out,
        "correlation_filtered.csv",
        matrix_csv(&f.filter.filtered.values, Some(&kept), &kept),
    )?;
    println!(
        "retained {} of {} features at tau_r = {}",
        kept.len(),
        f.raw.ncols(),
        a.filter.tau_r
    );
    for &j in &f.filter.removed {
        println!("  removed {}", f.raw.feature_names[j]);
    }
    Ok(())
}

struct Shrunk {
    filtered: Filtered,
    penalty: PenaltySearchResult,
    shrunk: ShrunkenCorrelation,
}

fn run_shrink(input: &InputArgs, filter: &FilterOpts, opts: &ShrinkOpts) -> Result<Shrunk> {
    let filtered = run_filter(input, filter)?;
    // same sub-seed as the pipeline, so both report the same penalty
    let penalty = cv_select_penalty(&filtered.z, opts.penalty_folds, derive_seed(opts.seed, "penalty", 0))
        .map_err(|e| e.at("shrink"))?;
    let shrunk = shrink_matrix(&filtered.filter.filtered, penalty.theta_opt).map_err(|e| e.at("shrink"))?;
    Ok(Shrunk {
        filtered,
        penalty,
        shrunk,
    })
}

#[derive(Serialize)]
struct ShrinkSummary<'a> {
    theta: f64,
    cv_score: f64,
    folds: usize,
    condition_number: f64,
    guttman_m: usize,
    eigen_gaps: Vec<f64>,
    features: &'a [String],
}

pub fn shrink(a: ShrinkArgs) -> Result<()> {
    let mut out = output(
        &a.output,
        &["penalty_trace.csv", "correlation_shrunk.csv", "shrink.json"],
    )?;
    let s = run_shrink(&a.input, &a.filter, &a.shrink)?;
    let kept = s.filtered.z.names().to_vec();
    let trace = s
        .penalty
        .trace
        .iter()
        .map(|(t, v)| vec![t.to_string(), v.to_string()])
        .collect();
    write(&mut out, "penalty_trace.csv", table_csv(&["theta", "cv_score"], trace))?;
    write(
        &mut out,
        "correlation_shrunk.csv",
        matrix_csv(&s.shrunk.matrix(), Some(&kept), &kept),
    )?;
    let (guttman_m, eigen_gaps) = guttman_bound(&s.shrunk);
    let summary = ShrinkSummary {
        theta: s.penalty.theta_opt,
        cv_score: s.penalty.cv_score,
        folds: s.penalty.folds,
        condition_number: condition_number(&s.shrunk),
        guttman_m,
        eigen_gaps,
        features: &kept,
    };
    write_json(&mut out, "shrink.json", &summary)?;
    println!(
        "theta = {:.8}, condition number = {:.2}, Guttman bound = {guttman_m}",
        summary.theta, summary.condition_number
    );
    Ok(())
}

/// A factor solution with the standardization it applies to. Also reads
/// the `model.json` written by `pipeline`, which carries the same fields.
#[derive(Serialize, Deserialize)]
struct FactorArtifact {
    stats: ColumnStats,
    removed: Vec<String>,
    theta: f64,
    model: FactorModel,
}

pub fn fa(a: FaArgs) -> Result<()> {
    let mut out = output(&a.output, &["loadings.csv", "factor_model.json", "fa.json"])?;
    let s = run_shrink(&a.input, &a.filter, &a.shrink)?;
    let p = s.shrunk.dim();
    let (guttman_m, _) = guttman_bound(&s.shrunk);
    let spec = PipelineSpec {
        m: a.m.0,
        ..PipelineSpec::default()
    };
    let m = resolve_dimension(&spec, guttman_m, p);
    let n = s.filtered.raw.nrows();

    let mut selection: Vec<SelectionTally> = vec![SelectionTally::guttman(&s.shrunk)];
    if a.compare {
        let top = a.m_max.unwrap_or(m + 5).min(fmradio::factor::ledermann_max(p)).max(1);
        let mut cache = FitCache::new(&s.shrunk, FitOptions::default());
        selection.push(select_aic(&mut cache, n, 1..=top).map_err(|e| e.at("fa"))?);
        selection.push(select_bic(&mut cache, n, 1..=top).map_err(|e| e.at("fa"))?);
        selection.push(select_lrt(&mut cache, n, 0.05, Some(top), LrtDf::Standard).map_err(|e| e.at("fa"))?);
    }

    let mut model = fit_ml_factor(&s.shrunk, m, &FitOptions::default()).map_err(|e| e.at("fa"))?;
    if !a.no_rotate {
        let rot = varimax(&model.loadings, DEFAULT_TOL, DEFAULT_MAX_SWEEPS).map_err(|e| e.at("rotate"))?;
        model.loadings = rot.rotated;
        model.rotated = true;
    }
    let diagnostics = diagnose(&s.shrunk, &model);
    let thresholded = threshold_loadings(&model.loadings, a.omega).map_err(|e| e.at("fa"))?;

    let kept = s.filtered.z.names().to_vec();
    write(
        &mut out,
        "loadings.csv",
        matrix_csv(&model.loadings, Some(&kept), &names("F", m)),
    )?;
    let removed = s
        .filtered
        .filter
        .removed
        .iter()
        .map(|&j| s.filtered.raw.feature_names[j].clone())
        .collect();
    let artifact = FactorArtifact {
        stats: s.filtered.z.stats.clone(),
        removed,
        theta: s.penalty.theta_opt,
        model,
    };
    write_json(&mut out, "factor_model.json", &artifact)?;
    write_json(
        &mut out,
        "fa.json",
        &serde_json::json!({
            "m": m,
            "theta": s.penalty.theta_opt,
            "discrepancy": artifact.model.discrepancy,
            "converged": artifact.model.converged,
            "selection": selection,
            "diagnostics": diagnostics,
            "thresholded": thresholded,
        }),
    )?;

    println!(
        "Guttman bound {guttman_m}, fitted m = {m}, F = {:.6}",
        artifact.model.discrepancy
    );
    for t in &selection {
        println!("  {:<4} selects m = {}", t.criterion.label(), t.chosen_m);
    }
    let weak: Vec<String> = (0..m)
        .filter(|&k| thresholded.weak[k])
        .map(|k| format!("F{}", k + 1))
        .collect();
    if !weak.is_empty() {
        println!("  weak factors (< 3 loadings above {}): {}", a.omega, weak.join(", "));
    }
    Ok(())
}

pub fn scores(a: ScoresArgs) -> Result<()> {
    let mut out = output(&a.output, &["scores.csv"])?;
    let text = fs::read_to_string(&a.model)
        .map_err(|source| Error::Io {
            path: a.model.clone(),
            source,
        })
        .map_err(|e| e.at("ingest"))?;
    let artifact: FactorArtifact = serde_json::from_str(&text).map_err(|e| Error::from(e).at("ingest"))?;
    let raw = load_features(&a.input)?;
    let z = apply_stats(&raw.select_named(&artifact.stats.names)?, &artifact.stats).map_err(|e| e.at("scores"))?;
    let scores = thomson_scores(&artifact.model, &z.data, ScoreSource::Validation).map_err(|e| e.at("scores"))?;
    write(
        &mut out,
        "scores.csv",
        matrix_csv(&scores.values, None, &names("F", artifact.model.m)),
    )?;
    println!(
        "{} rows scored on {} factors (model {})",
        raw.nrows(),
        artifact.model.m,
        &scores.fingerprint[..12]
    );
    Ok(())
}

pub fn survfit(a: SurvfitArgs) -> Result<()> {
    let mut out = output(&a.output, &["cox.json"])?;
    let x = load_csv(&a.scores, None).map_err(|e| e.at("ingest"))?;
    let y = load_csv(&a.outcome, Some((&a.time, &a.status))).map_err(|e| e.at("ingest"))?;
    let surv = y.survival.as_ref().expect("survival columns requested");
    if surv.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            actual: surv.len(),
        }
        .at("ingest"));
    }
    let opts = CoxOptions {
        ties: a.ties,
        ..CoxOptions::default()
    };
    let cox = fit_cox(&x.features, surv, &opts).map_err(|e| e.at("survfit"))?;
    write_json(&mut out, "cox.json", &cox)?;
    for (name, b) in x.feature_names.iter().zip(&cox.beta) {
        println!("{name:>12}  {b:+.6}");
    }
    println!(
        "log partial likelihood {:.6}, {} iterations",
        cox.log_likelihood, cox.iterations
    );
    Ok(())
}

fn spec_from(o: &ModelOpts) -> PipelineSpec {
    PipelineSpec {
        tau_r: o.filter.tau_r,
        tie_rule: o.filter.tie_rule,
        penalty_folds: o.shrink.penalty_folds,
        m: o.m.0,
        rotate: !o.no_rotate,
        fit: FitOptions::default(),
        cox: CoxOptions {
            ties: o.ties,
            ..CoxOptions::default()
        },
    }
}

fn print_summary(s: &BrierSummary) {
    let variant = serde_json::to_value(s.variant)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default();
    for m in &s.models {
        let r2 = m.r2.map(|v| format!(", R2 = {v:.4}")).unwrap_or_default();
        println!("  {variant:<20} {:<13} B^I = {:.5}{r2}", m.model, m.b_integrated);
    }
}

pub fn brier(a: BrierArgs) -> Result<()> {
    if a.mode == BrierCommandMode::Validate {
        let model = a
            .model
            .clone()
            .ok_or_else(|| Error::Config("--mode validate needs --model".into()))?;
        let report = validate_external(&ValidateConfig {
            model,
            input: a.input.clone(),
            time_column: a.time.clone(),
            status_column: a.status.clone(),
            output: a.output.out.clone(),
            force: a.output.force,
            tau: a.tau,
            recalibrate: a.recalibrate,
        })?;
        print_summary(&report.brier);
        return Ok(());
    }
    let mut out = output(
        &a.output,
        &["brier_curves.csv", "prediction_error_long.csv", "brier.json"],
    )?;
    let raw = load_survival_csv(&a.input, &a.time, &a.status).map_err(|e| e.at("ingest"))?;
    let surv = raw.survival.clone().expect("survival columns requested");
    let seed = a.model_opts.shrink.seed;
    let spec = spec_from(&a.model_opts);
    let fit = fit_pipeline(&raw, &spec, seed)?;
    let tau = a.tau.resolve(&surv);
    let mut curves = apparent_brier(&fit, &raw, tau).map_err(|e| e.at("brier"))?;
    let mut summaries = vec![BrierSummary::from_curves(BrierVariant::Apparent, &curves, tau)?];
    if a.mode == BrierCommandMode::Cv {
        let fixed = PipelineSpec {
            m: Some(fit.trained.m()),
            ..spec
        };
        let cv = brier_cv(
            &raw,
            &[Learner::FactorCox(fixed), Learner::KaplanMeier],
            &evaluation_grid(&surv, tau),
            &CvOptions {
                folds: a.folds,
                repeats: a.repeats,
                seed,
            },
        )
        .map_err(|e| e.at("brier"))?;
        summaries.push(BrierSummary::from_curves(BrierVariant::CvAveraged, &cv, tau)?);
        curves.extend(cv);
    }
    let headline = summaries.last().expect("apparent summary").variant;
    let wide: Vec<_> = curves.iter().filter(|c| c.variant == headline).cloned().collect();
    write(&mut out, "brier_curves.csv", curves_csv(&wide))?;
    write(&mut out, "prediction_error_long.csv", curves_long_csv(&curves))?;
    write_json(&mut out, "brier.json", &summaries)?;
    println!("tau = {tau} (median observed time {})", default_tau(&surv));
    summaries.iter().for_each(print_summary);
    Ok(())
}

fn scenario_table(a: &SimulateArgs) -> Result<(toml::Table, Vec<usize>)> {
    let mut table = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            toml::from_str::<toml::Table>(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => toml::Table::new(),
    };
    let mut ns: Vec<usize> = match table.remove("n") {
        Some(toml::Value::Integer(n)) => vec![n as usize],
        Some(toml::Value::Array(list)) => list
            .iter()
            .map(|v| v.as_integer().map(|n| n as usize))
            .collect::<Option<_>>()
            .ok_or_else(|| Error::Config("n must be an integer or a list of integers".into()))?,
        Some(_) => return Err(Error::Config("n must be an integer or a list of integers".into())),
        None => Vec::new(),
    };
    if !a.n.is_empty() {
        ns = a.n.clone();
    }
    let int = |v: usize| toml::Value::Integer(v as i64);
    let mut set = |key: &str, value: Option<toml::Value>| {
        if let Some(v) = value {
            table.insert(key.into(), v);
        }
    };
    set("p", a.p.map(int));
    set("m_true", a.m_true.map(int));
    set("communality", a.communality.map(toml::Value::Float));
    set(
        "balance",
        a.balance.map(|b| toml::Value::String(format!("{b:?}").to_lowercase())),
    );
    set("replicates", a.replicates.map(int));
    set("seed", a.seed.map(|s| toml::Value::Integer(s as i64)));
    set("m_max", a.m_max.map(int));
    set(
        "scheme",
        a.scheme.map(|s| {
            toml::Value::String(
                serde_json::to_value(s)
                    .ok()
                    .and_then(|v| v.as_str().map(String::from))
                    .unwrap_or_default(),
            )
        }),
    );
    if ns.is_empty() {
        return Err(Error::Config("no sample size given (--n or `n = ...`)".into()));
    }
    Ok((table, ns))
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let mut out = output(&a.output, &["histograms.csv", "table.csv", "table.txt", "results.json"])?;
    let (base, ns) = scenario_table(&a)?;
    let mut results = Vec::with_capacity(ns.len());
    for n in ns {
        let mut t = base.clone();
        t.insert("n".into(), toml::Value::Integer(n as i64));
        let scenario: SimulationScenario = toml::Value::Table(t)
            .try_into()
            .map_err(|e| Error::Config(format!("scenario: {e}")))?;
        eprintln!("running {} ({} replicates)", scenario.id(), scenario.replicates);
        let result = run_scenario(&scenario).map_err(|e| e.at("simulate"))?;
        if !result.failures.is_empty() {
            eprintln!("  {} replicates failed", result.failures.len());
        }
        results.push(result);
    }
    let table = emit_table(&results)?;
    write(&mut out, "histograms.csv", Ok(histogram_csv(&results).into_bytes()))?;
    write(&mut out, "table.csv", Ok(table.to_csv().into_bytes()))?;
    write(&mut out, "table.txt", Ok(table.to_text().into_bytes()))?;
    write_json(&mut out, "results.json", &results)?;
    print!("{}", table.to_text());
    Ok(())
}

fn read_pipeline_config(path: &Path) -> Result<PipelineConfig> {
    let text = fs::read_to_string(path)
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
        .map_err(|e| e.at("ingest"))?;
    let mut value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::from(e).at("ingest"))?;
    // a report.json carries the configuration it ran with
    if let Some(config) = value.get_mut("config").filter(|_| value_is_report(&text)) {
        value = config.take();
    }
    serde_json::from_value(value).map_err(|e| Error::from(e).at("ingest"))
}

fn value_is_report(text: &str) -> bool {
    serde_json::from_str::<RunReport>(text).is_ok()
}

pub fn pipeline(a: PipelineArgs) -> Result<()> {
    let mut config = match &a.config {
        Some(path) => read_pipeline_config(path)?,
        None => PipelineConfig::default(),
    };
    macro_rules! set {
        ($field:expr, $value:expr) => {
            if let Some(v) = $value {
                $field = v;
            }
        };
    }
    set!(config.input, a.input);
    set!(config.time_column, a.time);
    set!(config.status_column, a.status);
    set!(config.spec.tau_r, a.tau_r);
    set!(config.spec.tie_rule, a.tie_rule);
    set!(config.spec.penalty_folds, a.penalty_folds);
    set!(config.spec.m, a.m.map(|d| d.0));
    set!(config.spec.cox.ties, a.ties);
    set!(config.omega, a.omega);
    set!(config.tau, a.tau);
    set!(config.brier, a.brier);
    set!(config.folds, a.folds);
    set!(config.repeats, a.repeats);
    set!(config.seed, a.seed);
    if a.no_rotate {
        config.spec.rotate = false;
    }
    if config.input.as_os_str().is_empty() {
        return Err(Error::Config("no input given (--input or a config file)".into()).at("ingest"));
    }
    config.output = a.output.out;
    config.force = a.output.force;

    let report = run_pipeline(&config)?;
    println!(
        "n = {}, events = {}, features {} -> {} after filtering",
        report.n, report.events, report.p_input, report.p_retained
    );
    println!(
        "theta = {:.8}, condition number = {:.2}, Guttman bound = {}, m = {}",
        report.theta, report.condition_number, report.guttman_m, report.m
    );
    if let Some(text) = &report.advisory {
        println!("advisory: {text}");
    }
    report.brier.iter().for_each(print_summary);
    println!("artifacts written to {}", config.output.display());
    Ok(())
}

pub fn validate(a: ValidateArgs) -> Result<()> {
    let report = validate_external(&ValidateConfig {
        model: a.model,
        input: a.input,
        time_column: a.time,
        status_column: a.status,
        output: a.output.out,
        force: a.output.force,
        tau: a.tau,
        recalibrate: a.recalibrate,
    })?;
    println!("n = {}, events = {}", report.n, report.events);
    print_summary(&report.brier);
    Ok(())
}
