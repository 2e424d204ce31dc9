use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fmradio::corr::TieRule;
use fmradio::pipeline::{BrierMode, TauChoice};
use fmradio::sim::{Balance, LoadingScheme};
use fmradio::survival::Ties;

#[derive(Parser)]
#[command(
    name = "fmradio",
    version,
    about = "Factor-score survival prediction and dimensionality-selection simulations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Subcommand)]
pub enum Command {
    /// Remove redundant features from a feature CSV.
    Filter(FilterArgs),
    /// Choose the shrinkage penalty by cross-validation.
    Shrink(ShrinkArgs),
    /// Fit the ML factor model and report dimension diagnostics.
    Fa(FaArgs),
    /// Thomson factor scores for a data set under a saved factor solution.
    Scores(ScoresArgs),
    /// Fit a Cox model on factor scores.
    Survfit(SurvfitArgs),
    /// Apparent, external-validation or cross-validated Brier curves.
    Brier(BrierArgs),
    /// Run cells of the dimensionality-selection simulation study.
    Simulate(SimulateArgs),
    /// Run the full pipeline and write every artifact.
    Pipeline(PipelineArgs),
    /// Apply a trained pipeline to external data.
    Validate(ValidateArgs),
}

#[derive(Args, Clone)]
pub struct InputArgs {
    /// CSV with a header row.
    #[arg(long)]
    pub input: PathBuf,
    /// Survival time column (excluded from the features).
    #[arg(long)]
    pub time: Option<String>,
    /// Event indicator column (excluded from the features).
    #[arg(long)]
    pub status: Option<String>,
}

#[derive(Args, Clone)]
pub struct OutputArgs {
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overwrite existing artifacts.
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Clone)]
pub struct FilterOpts {
    /// Redundancy threshold on absolute correlations.
    #[arg(long, default_value_t = 0.95)]
    pub tau_r: f64,
    #[arg(long, value_parser = parse_tie_rule, default_value = "first")]
    pub tie_rule: TieRule,
}

#[derive(Args)]
pub struct FilterArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub filter: FilterOpts,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Clone)]
pub struct ShrinkOpts {
    /// Folds of the penalty cross-validation.
    #[arg(long, default_value_t = 5)]
    pub penalty_folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct ShrinkArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub filter: FilterOpts,
    #[command(flatten)]
    pub shrink: ShrinkOpts,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args)]
pub struct FaArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub filter: FilterOpts,
    #[command(flatten)]
    pub shrink: ShrinkOpts,
    /// Number of factors, or `auto` for the Guttman bound.
    #[arg(long, default_value = "auto", value_parser = parse_dimension)]
    pub m: Dimension,
    /// Also tabulate AIC, BIC and the LRT over 1..=m_max.
    #[arg(long)]
    pub compare: bool,
    /// Upper end of the comparison range (default: chosen m + 5).
    #[arg(long)]
    pub m_max: Option<usize>,
    /// Salience threshold for loadings.
    #[arg(long, default_value_t = 0.3)]
    pub omega: f64,
    #[arg(long)]
    pub no_rotate: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args)]
pub struct ScoresArgs {
    /// `factor_model.json` from `fa` or `model.json` from `pipeline`.
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args)]
pub struct SurvfitArgs {
    /// Predictor CSV, e.g. `scores.csv`.
    #[arg(long)]
    pub scores: PathBuf,
    /// CSV holding the outcome columns, row-aligned with `--scores`.
    #[arg(long)]
    pub outcome: PathBuf,
    #[arg(long, default_value = "time")]
    pub time: String,
    #[arg(long, default_value = "status")]
    pub status: String,
    #[arg(long, value_parser = parse_ties, default_value = "efron")]
    pub ties: Ties,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Clone)]
pub struct ModelOpts {
    #[command(flatten)]
    pub filter: FilterOpts,
    #[command(flatten)]
    pub shrink: ShrinkOpts,
    /// Number of factors, or `auto` for the Guttman bound.
    #[arg(long, default_value = "auto", value_parser = parse_dimension)]
    pub m: Dimension,
    #[arg(long)]
    pub no_rotate: bool,
    #[arg(long, value_parser = parse_ties, default_value = "efron")]
    pub ties: Ties,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum BrierCommandMode {
    Apparent,
    Validate,
    Cv,
}

#[derive(Args)]
pub struct BrierArgs {
    #[arg(long, value_enum, default_value = "cv")]
    pub mode: BrierCommandMode,
    /// Training data (apparent, cv) or validation data (validate).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "time")]
    pub time: String,
    #[arg(long, default_value = "status")]
    pub status: String,
    /// Trained `model.json`; required for `--mode validate`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub recalibrate: bool,
    #[command(flatten)]
    pub model_opts: ModelOpts,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 500)]
    pub repeats: usize,
    /// `MEDIAN` or a time.
    #[arg(long, default_value = "MEDIAN", value_parser = parse_tau)]
    pub tau: TauChoice,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Flat `key = value` scenario file; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub m_true: Option<usize>,
    #[arg(long)]
    pub communality: Option<f64>,
    #[arg(long, value_parser = parse_balance)]
    pub balance: Option<Balance>,
    /// One or more sample sizes, e.g. `--n 50 --n 250`.
    #[arg(long)]
    pub n: Vec<usize>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub m_max: Option<usize>,
    #[arg(long, value_parser = parse_scheme)]
    pub scheme: Option<LoadingScheme>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args)]
pub struct PipelineArgs {
    /// JSON pipeline configuration, or a `report.json` whose echoed
    /// configuration is reused. Flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub time: Option<String>,
    #[arg(long)]
    pub status: Option<String>,
    #[arg(long)]
    pub tau_r: Option<f64>,
    #[arg(long, value_parser = parse_tie_rule)]
    pub tie_rule: Option<TieRule>,
    #[arg(long)]
    pub penalty_folds: Option<usize>,
    /// Number of factors, or `auto` for the Guttman bound.
    #[arg(long, value_parser = parse_dimension)]
    pub m: Option<Dimension>,
    #[arg(long)]
    pub no_rotate: bool,
    #[arg(long, value_parser = parse_ties)]
    pub ties: Option<Ties>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long, value_parser = parse_tau)]
    pub tau: Option<TauChoice>,
    #[arg(long, value_parser = parse_brier_mode)]
    pub brier: Option<BrierMode>,
    /// Folds of the Brier cross-validation.
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "time")]
    pub time: String,
    #[arg(long, default_value = "status")]
    pub status: String,
    #[arg(long, default_value = "MEDIAN", value_parser = parse_tau)]
    pub tau: TauChoice,
    /// Refit the Cox coefficients on the validation scores first.
    #[arg(long)]
    pub recalibrate: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn parse_tie_rule(s: &str) -> Result<TieRule, String> {
    match s {
        "first" => Ok(TieRule::First),
        "last" => Ok(TieRule::Last),
        "sum" => Ok(TieRule::SumOfCorrelations),
        _ => Err(format!("expected first, last or sum, got {s:?}")),
    }
}

fn parse_ties(s: &str) -> Result<Ties, String> {
    match s {
        "efron" => Ok(Ties::Efron),
        "breslow" => Ok(Ties::Breslow),
        _ => Err(format!("expected efron or breslow, got {s:?}")),
    }
}

/// A factor count, or `None` for automatic selection.
#[derive(Clone, Copy, Debug)]
pub struct Dimension(pub Option<usize>);

fn parse_dimension(s: &str) -> Result<Dimension, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Dimension(None));
    }
    match s.parse::<usize>() {
        Ok(m) if m > 0 => Ok(Dimension(Some(m))),
        _ => Err(format!("expected auto or a positive integer, got {s:?}")),
    }
}

fn parse_tau(s: &str) -> Result<TauChoice, String> {
    s.parse().map_err(|e: fmradio::Error| e.to_string())
}

fn parse_brier_mode(s: &str) -> Result<BrierMode, String> {
    s.parse().map_err(|e: fmradio::Error| e.to_string())
}

fn parse_balance(s: &str) -> Result<Balance, String> {
    s.parse().map_err(|e: fmradio::Error| e.to_string())
}

fn parse_scheme(s: &str) -> Result<LoadingScheme, String> {
    s.parse().map_err(|e: fmradio::Error| e.to_string())
}
