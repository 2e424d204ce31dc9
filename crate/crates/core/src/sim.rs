//! Monte Carlo study of latent dimension selection.
//!
//! Data are drawn from `N_p(0, Λ*Λ*ᵀ + Ψ*)` where every feature has a primary
//! loading of `.6` on one factor and a common secondary loading on all
//! others, chosen so that each row communality equals `c`. Each replicate is
//! standardized, shrunk with a cross-validated penalty, and handed to the
//! Guttman bound, AIC, BIC and the sequential LRT.

use std::collections::BTreeMap;
use std::io::Read;
use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corr::{sample_correlation, shrink};
use crate::data::{standardize, RawDataset};
use crate::error::{Error, Result};
use crate::factor::{
    ledermann_max, select_aic, select_bic, select_lrt, Criterion, FitCache, FitOptions, LrtDf, SelectionTally,
};
use crate::penalty::{cv_select_penalty, DEFAULT_FOLDS};

pub const PRIMARY_LOADING: f64 = 0.6;

/// How the primary loading and the secondary loadings are derived from `c`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoadingScheme {
    /// Primary loading `.6`; secondary `√((c - .36)/(m - 1))`.
    #[default]
    PrimaryLoading,
    /// Primary loading `√.6`, i.e. the primary factor explains `.6` of the
    /// variance; secondary `√((c - .6)/(m - 1))`.
    PrimaryVariance,
}

impl LoadingScheme {
    pub fn primary(self) -> f64 {
        match self {
            LoadingScheme::PrimaryLoading => PRIMARY_LOADING,
            LoadingScheme::PrimaryVariance => 0.6f64.sqrt(),
        }
    }
}

impl std::str::FromStr for LoadingScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "primary-loading" => Ok(LoadingScheme::PrimaryLoading),
            "primary-variance" => Ok(LoadingScheme::PrimaryVariance),
            _ => Err(Error::Config(format!(
                "loading scheme must be 'primary-loading' or 'primary-variance', got '{s}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Balance {
    Balanced,
    Unbalanced,
}

impl std::str::FromStr for Balance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "balanced" => Ok(Balance::Balanced),
            "unbalanced" => Ok(Balance::Unbalanced),
            _ => Err(Error::Config(format!(
                "balance must be 'balanced' or 'unbalanced', got '{s}'"
            ))),
        }
    }
}

/// One cell of the simulation grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationScenario {
    pub p: usize,
    pub m_true: usize,
    pub communality: f64,
    pub balance: Balance,
    pub n: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    /// Largest `m` tried by AIC/BIC and the LRT; defaults to `m_true + 5`.
    #[serde(default)]
    pub m_max: Option<usize>,
    #[serde(default = "default_alpha")]
    pub lrt_alpha: f64,
    #[serde(default)]
    pub lrt_df: LrtDf,
    #[serde(default = "default_folds")]
    pub cv_folds: usize,
    #[serde(default)]
    pub scheme: LoadingScheme,
}

fn default_replicates() -> usize {
    100
}

fn default_alpha() -> f64 {
    0.05
}

fn default_folds() -> usize {
    DEFAULT_FOLDS
}

impl SimulationScenario {
    pub fn new(p: usize, m_true: usize, communality: f64, balance: Balance, n: usize) -> Self {
        Self {
            p,
            m_true,
            communality,
            balance,
            n,
            replicates: default_replicates(),
            seed: 0,
            m_max: None,
            lrt_alpha: default_alpha(),
            lrt_df: LrtDf::Standard,
            cv_folds: default_folds(),
            scheme: LoadingScheme::PrimaryLoading,
        }
    }

    /// Stable identifier used to derive replicate seeds.
    pub fn id(&self) -> String {
        let balance = match self.balance {
            Balance::Balanced => "balanced",
            Balance::Unbalanced => "unbalanced",
        };
        let scheme = match self.scheme {
            LoadingScheme::PrimaryLoading => "",
            LoadingScheme::PrimaryVariance => "-pv",
        };
        format!(
            "p{}-m{}-c{}-{}-n{}{scheme}",
            self.p, self.m_true, self.communality, balance, self.n
        )
    }

    pub fn search_max(&self) -> usize {
        self.m_max.unwrap_or(self.m_true + 5).min(ledermann_max(self.p))
    }
}

/// Population loadings and uniquenesses of a scenario.
#[derive(Debug, Clone)]
pub struct GeneratorModel {
    pub loadings: DMatrix<f64>,
    pub uniquenesses: Vec<f64>,
    /// Factor index of each feature's primary loading.
    pub assignment: Vec<usize>,
    chol: Cholesky<f64, Dyn>,
}

impl GeneratorModel {
    pub fn covariance(&self) -> DMatrix<f64> {
        let mut s = &self.loadings * self.loadings.transpose();
        for (j, psi) in self.uniquenesses.iter().enumerate() {
            s[(j, j)] += psi;
        }
        s
    }
}

/// Indicator counts per factor.
pub fn allocation(p: usize, m: usize, balance: Balance) -> Result<Vec<usize>> {
    if m == 0 {
        return Err(Error::InvalidParameter("m must be positive".into()));
    }
    if p < m {
        return Err(Error::InvalidParameter(format!(
            "{m} factors need at least {m} features, got {p}"
        )));
    }
    let counts = match balance {
        Balance::Balanced => (0..m).map(|k| p / m + usize::from(k < p % m)).collect(),
        Balance::Unbalanced => {
            let base: Vec<usize> = match m {
                5 => vec![40, 20, 15, 15, 10],
                12 => [vec![20], vec![10; 5], vec![5; 6]].concat(),
                20 => [vec![10, 10], vec![5; 13], vec![3; 5]].concat(),
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "no unbalanced allocation defined for m = {m}"
                    )))
                }
            };
            let scale = p / 100;
            if !p.is_multiple_of(100) || scale == 0 {
                return Err(Error::InvalidParameter(format!(
                    "unbalanced allocations exist for multiples of 100 features, got {p}"
                )));
            }
            base.into_iter().map(|c| c * scale).collect()
        }
    };
    Ok(counts)
}

pub fn build_loading_matrix(p: usize, m: usize, communality: f64, balance: Balance) -> Result<GeneratorModel> {
    build_loading_matrix_with(p, m, communality, balance, LoadingScheme::PrimaryLoading)
}

pub fn build_loading_matrix_with(
    p: usize,
    m: usize,
    communality: f64,
    balance: Balance,
    scheme: LoadingScheme,
) -> Result<GeneratorModel> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!(
            "at least two factors are needed to spread secondary loadings, got {m}"
        )));
    }
    let primary = scheme.primary();
    let floor = primary * primary;
    if !(communality >= floor && communality < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "communality must lie in [{floor}, 1), got {communality}"
        )));
    }
    let counts = allocation(p, m, balance)?;
    if counts.iter().sum::<usize>() != p {
        return Err(Error::InvalidParameter(format!(
            "allocation {counts:?} does not sum to p = {p}"
        )));
    }
    let secondary = ((communality - floor) / (m - 1) as f64).sqrt();
    let assignment: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(k, &c)| std::iter::repeat_n(k, c))
        .collect();
    let loadings = DMatrix::from_fn(p, m, |j, k| if assignment[j] == k { primary } else { secondary });
    GeneratorModel::new(loadings, assignment)
}

impl GeneratorModel {
    /// Generator with `Ψ* = I - diag(Λ*Λ*ᵀ)`.
    pub fn new(loadings: DMatrix<f64>, assignment: Vec<usize>) -> Result<Self> {
        let uniquenesses: Vec<f64> = loadings.row_iter().map(|r| 1.0 - r.norm_squared()).collect();
        if uniquenesses.iter().any(|&u| !(u > 0.0)) {
            return Err(Error::InvalidParameter(
                "loadings imply non-positive uniquenesses".into(),
            ));
        }
        let mut gen = GeneratorModel {
            loadings,
            uniquenesses,
            assignment,
            chol: Cholesky::new(DMatrix::identity(1, 1)).expect("identity"),
        };
        gen.chol = Cholesky::new(gen.covariance()).ok_or(Error::NotPositiveDefinite)?;
        Ok(gen)
    }
}

/// `n` independent rows from `N(0, Σ*)`.
pub fn simulate_dataset<R: Rng + ?Sized>(gen: &GeneratorModel, n: usize, rng: &mut R) -> DMatrix<f64> {
    let p = gen.loadings.nrows();
    let e = DMatrix::from_fn(n, p, |_, _| Distribution::<f64>::sample(&StandardNormal, rng));
    e * gen.chol.l().transpose()
}

/// Seed of replicate `r`: the leading bytes of SHA-256 over the master seed,
/// scenario id and replicate index.
pub fn replicate_seed(master: u64, scenario_id: &str, r: usize) -> u64 {
    crate::seed::derive_seed(master, scenario_id, r as u64)
}

/// Dimension chosen by each criterion in one replicate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub theta: f64,
    pub chosen: BTreeMap<Criterion, usize>,
    pub lrt_accepted: bool,
}

pub fn run_replicate(s: &SimulationScenario, gen: &GeneratorModel, r: usize) -> Result<ReplicateOutcome> {
    let seed = replicate_seed(s.seed, &s.id(), r);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let x = simulate_dataset(gen, s.n, &mut rng);
    let (z, _) = standardize(&RawDataset::from_matrix(x)?)?;
    let r_mat = sample_correlation(&z)?;
    let penalty = cv_select_penalty(&z, s.cv_folds, rng.next_u64())?;
    let shrunk = shrink(&r_mat, penalty.theta_opt)?;
    let gb = SelectionTally::guttman(&shrunk);
    let mut cache = FitCache::new(&shrunk, FitOptions::default());
    let top = s.search_max();
    let aic = select_aic(&mut cache, s.n, 1..=top)?;
    let bic = select_bic(&mut cache, s.n, 1..=top)?;
    let lrt = select_lrt(&mut cache, s.n, s.lrt_alpha, Some(top), s.lrt_df)?;
    let chosen = [gb.clone(), aic, bic, lrt.clone()]
        .into_iter()
        .map(|t| (t.criterion, t.chosen_m))
        .collect();
    Ok(ReplicateOutcome {
        replicate: r,
        theta: penalty.theta_opt,
        chosen,
        lrt_accepted: lrt.accepted,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario: SimulationScenario,
    /// Criterion → chosen `m` → number of replicates.
    pub histograms: BTreeMap<Criterion, BTreeMap<usize, usize>>,
    /// Replicates whose LRT rejected every tested dimension.
    pub lrt_not_accepted: usize,
    pub failures: Vec<(usize, String)>,
    pub seconds_per_replicate: f64,
}

impl ScenarioResult {
    pub fn count(&self, c: Criterion, m: usize) -> usize {
        self.histograms.get(&c).and_then(|h| h.get(&m)).copied().unwrap_or(0)
    }

    pub fn count_where(&self, c: Criterion, pred: impl Fn(usize) -> bool) -> usize {
        self.histograms
            .get(&c)
            .map(|h| h.iter().filter(|(m, _)| pred(**m)).map(|(_, k)| k).sum())
            .unwrap_or(0)
    }
}

/// Run every replicate of a scenario. Replicates run in parallel when the
/// `parallel` feature is on; results are reduced in replicate order.
pub fn run_scenario(s: &SimulationScenario) -> Result<ScenarioResult> {
    let gen = build_loading_matrix_with(s.p, s.m_true, s.communality, s.balance, s.scheme)?;
    let start = Instant::now();
    let outcomes = crate::map_indexed(s.replicates, |r| run_replicate(s, &gen, r));
    let elapsed = start.elapsed().as_secs_f64();

    let mut histograms: BTreeMap<Criterion, BTreeMap<usize, usize>> =
        Criterion::ALL.iter().map(|&c| (c, BTreeMap::new())).collect();
    let mut failures = Vec::new();
    let mut lrt_not_accepted = 0;
    for (r, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(o) => {
                for (c, m) in o.chosen {
                    *histograms.entry(c).or_default().entry(m).or_default() += 1;
                }
                lrt_not_accepted += usize::from(!o.lrt_accepted);
            }
            Err(e) => {
                log::warn!("{} replicate {r} failed: {e}", s.id());
                failures.push((r, e.to_string()));
            }
        }
    }
    Ok(ScenarioResult {
        scenario: s.clone(),
        histograms,
        lrt_not_accepted,
        failures,
        seconds_per_replicate: elapsed / s.replicates.max(1) as f64,
    })
}

/// Column of a results table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bin {
    AtMost(usize),
    Exactly(usize),
    AtLeast(usize),
}

impl Bin {
    pub fn contains(self, m: usize) -> bool {
        match self {
            Bin::AtMost(b) => m <= b,
            Bin::Exactly(b) => m == b,
            Bin::AtLeast(b) => m >= b,
        }
    }

    pub fn label(self) -> String {
        match self {
            Bin::AtMost(b) => format!("<={b}"),
            Bin::Exactly(b) => b.to_string(),
            Bin::AtLeast(b) => format!(">={b}"),
        }
    }
}

/// Bins centred on the true dimension: a lower tail up to `m_true - 4`,
/// single columns `m_true - 3 ..= m_true + 4` and an upper tail from
/// `m_true + 5`.
pub fn table_bins(m_true: usize) -> Vec<Bin> {
    let mut bins = Vec::new();
    let first = m_true.saturating_sub(3).max(1);
    bins.push(Bin::AtMost(first - 1));
    bins.extend((first..=m_true + 4).map(Bin::Exactly));
    bins.push(Bin::AtLeast(m_true + 5));
    bins
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub criterion: Criterion,
    pub n: usize,
    pub counts: Vec<usize>,
    pub failures: usize,
}

/// Selection counts laid out as method × sample size against binned `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTable {
    pub bins: Vec<Bin>,
    pub rows: Vec<TableRow>,
}

impl SimulationTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,n");
        for b in &self.bins {
            out.push(',');
            out.push_str(&b.label());
        }
        out.push_str(",failures\n");
        for row in &self.rows {
            out.push_str(&format!("{},{}", row.criterion.label(), row.n));
            for c in &row.counts {
                out.push_str(&format!(",{c}"));
            }
            out.push_str(&format!(",{}\n", row.failures));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut header = vec!["method".to_string(), "n".to_string()];
        header.extend(self.bins.iter().map(|b| b.label()));
        header.push("fail".into());
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut cells = vec![r.criterion.label().to_string(), r.n.to_string()];
                cells.extend(r.counts.iter().map(|c| c.to_string()));
                cells.push(r.failures.to_string());
                cells
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|k| {
                body.iter()
                    .map(|r| r[k].len())
                    .chain([header[k].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| {
            let mut s: String = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ");
            s.push('\n');
            s
        };
        let mut out = line(&header);
        for r in &body {
            out.push_str(&line(r));
        }
        out
    }
}

/// Bin the histograms of results that share `m_true`.
pub fn emit_table(results: &[ScenarioResult]) -> Result<SimulationTable> {
    let Some(first) = results.first() else {
        return Err(Error::InvalidParameter("no scenario results to tabulate".into()));
    };
    let m_true = first.scenario.m_true;
    if results.iter().any(|r| r.scenario.m_true != m_true) {
        return Err(Error::InvalidParameter("results in one table must share m_true".into()));
    }
    let bins = table_bins(m_true);
    let mut rows = Vec::new();
    for c in Criterion::ALL {
        for r in results {
            let counts = bins.iter().map(|&b| r.count_where(c, |m| b.contains(m))).collect();
            rows.push(TableRow {
                criterion: c,
                n: r.scenario.n,
                counts,
                failures: r.failures.len(),
            });
        }
    }
    Ok(SimulationTable { bins, rows })
}

/// Long-format histogram CSV: `method,n,m,count`.
pub fn histogram_csv(results: &[ScenarioResult]) -> String {
    let mut out = String::from("method,n,m,count\n");
    for r in results {
        for (c, h) in &r.histograms {
            for (m, k) in h {
                out.push_str(&format!("{},{},{m},{k}\n", c.label(), r.scenario.n));
            }
        }
    }
    out
}

pub type HistogramKey = (Criterion, usize);

/// Inverse of [`histogram_csv`].
pub fn parse_histogram_csv<R: Read>(reader: R) -> Result<BTreeMap<HistogramKey, BTreeMap<usize, usize>>> {
    #[derive(Deserialize)]
    struct Line {
        method: String,
        n: usize,
        m: usize,
        count: usize,
    }
    let mut out: BTreeMap<HistogramKey, BTreeMap<usize, usize>> = BTreeMap::new();
    for rec in csv::Reader::from_reader(reader).deserialize::<Line>() {
        let line = rec.map_err(|e| Error::Csv(e.to_string()))?;
        let c = Criterion::ALL
            .into_iter()
            .find(|c| c.label() == line.method)
            .ok_or_else(|| Error::Csv(format!("unknown method '{}'", line.method)))?;
        out.entry((c, line.n)).or_default().insert(line.m, line.count);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn secondary_loading_and_communality() {
        let g = build_loading_matrix(100, 5, 0.7, Balance::Balanced).unwrap();
        assert!((g.loadings[(0, 1)] - 0.085f64.sqrt()).abs() < 1e-15);
        assert!((g.loadings[(0, 1)] - 0.29155).abs() < 1e-5);
        for row in g.loadings.row_iter() {
            assert!((row.norm_squared() - 0.7).abs() < 1e-12);
        }
        for &(p, m) in &[(100, 12), (200, 20), (100, 20)] {
            for c in [0.7, 0.8, 0.9] {
                let g = build_loading_matrix(p, m, c, Balance::Balanced).unwrap();
                assert!(g.loadings.row_iter().all(|r| (r.norm_squared() - c).abs() < 1e-12));
                assert!(g.uniquenesses.iter().all(|&u| u > 0.0));
            }
        }
    }

    #[test]
    fn allocations() {
        assert_eq!(
            allocation(100, 5, Balance::Unbalanced).unwrap(),
            vec![40, 20, 15, 15, 10]
        );
        assert_eq!(
            allocation(200, 5, Balance::Unbalanced).unwrap(),
            vec![80, 40, 30, 30, 20]
        );
        for m in [5, 12, 20] {
            for p in [100, 200] {
                for b in [Balance::Balanced, Balance::Unbalanced] {
                    assert_eq!(allocation(p, m, b).unwrap().iter().sum::<usize>(), p);
                }
            }
        }
        assert_eq!(allocation(100, 12, Balance::Balanced).unwrap()[..4], [9, 9, 9, 9]);
        assert_eq!(allocation(100, 12, Balance::Balanced).unwrap()[4], 8);
        assert!(build_loading_matrix(100, 1, 0.7, Balance::Balanced).is_err());
        assert!(build_loading_matrix(100, 5, 0.3, Balance::Balanced).is_err());
        assert!(allocation(3, 5, Balance::Balanced).is_err());
    }

    #[test]
    fn simulated_covariance_converges() {
        let g = build_loading_matrix(10, 2, 0.8, Balance::Balanced).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let n = 100_000;
        let x = simulate_dataset(&g, n, &mut rng);
        let cov = x.transpose() * &x / n as f64;
        assert!((cov - g.covariance()).amax() < 0.02);
        for c in x.column_iter() {
            assert!(c.mean().abs() < 4.0 / (n as f64).sqrt());
        }
        let mut a = ChaCha20Rng::seed_from_u64(1);
        let mut b = ChaCha20Rng::seed_from_u64(1);
        assert_eq!(simulate_dataset(&g, 5, &mut a), simulate_dataset(&g, 5, &mut b));
    }

    #[test]
    fn replicate_seeds_differ() {
        let a = replicate_seed(1, "x", 0);
        assert_eq!(a, replicate_seed(1, "x", 0));
        assert_ne!(a, replicate_seed(1, "x", 1));
        assert_ne!(a, replicate_seed(1, "y", 0));
        assert_ne!(a, replicate_seed(2, "x", 0));
    }

    fn fake_result(m_true: usize, n: usize, gb: &[(usize, usize)]) -> ScenarioResult {
        let mut histograms: BTreeMap<Criterion, BTreeMap<usize, usize>> = BTreeMap::new();
        for c in Criterion::ALL {
            histograms.insert(c, gb.iter().copied().collect());
        }
        ScenarioResult {
            scenario: SimulationScenario::new(100, m_true, 0.9, Balance::Balanced, n),
            histograms,
            lrt_not_accepted: 0,
            failures: Vec::new(),
            seconds_per_replicate: 0.0,
        }
    }

    #[test]
    fn binning() {
        assert_eq!(
            table_bins(5),
            [
                vec![Bin::AtMost(1)],
                (2..=9).map(Bin::Exactly).collect(),
                vec![Bin::AtLeast(10)]
            ]
            .concat()
        );
        let t = emit_table(&[fake_result(5, 50, &[(5, 100)])]).unwrap();
        let row = &t.rows[0];
        let col = t.bins.iter().position(|&b| b == Bin::Exactly(5)).unwrap();
        assert_eq!(row.counts[col], 100);
        assert_eq!(row.counts.iter().sum::<usize>(), 100);

        let t = emit_table(&[fake_result(12, 50, &[(10, 99), (30, 1)])]).unwrap();
        assert_eq!(*t.bins.last().unwrap(), Bin::AtLeast(17));
        assert_eq!(*t.rows[0].counts.last().unwrap(), 1);
        assert!(t.to_text().lines().count() == 1 + Criterion::ALL.len());
        assert!(t.to_csv().starts_with("method,n,<=8,9,"));
    }

    #[test]
    fn histogram_csv_round_trip() {
        let results = [fake_result(5, 50, &[(4, 3), (5, 97)]), fake_result(5, 250, &[(5, 100)])];
        let parsed = parse_histogram_csv(histogram_csv(&results).as_bytes()).unwrap();
        for r in &results {
            for (c, h) in &r.histograms {
                assert_eq!(&parsed[&(*c, r.scenario.n)], h);
            }
        }
    }

    #[test]
    fn small_scenario_runs() {
        let mut s = SimulationScenario::new(30, 3, 0.8, Balance::Balanced, 150);
        s.replicates = 4;
        s.seed = 7;
        let a = run_scenario(&s).unwrap();
        assert!(a.failures.is_empty());
        for c in Criterion::ALL {
            assert_eq!(a.histograms[&c].values().sum::<usize>(), 4);
        }
        let b = run_scenario(&s).unwrap();
        assert_eq!(a.histograms, b.histograms);
    }
}
