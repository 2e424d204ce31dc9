//! Loading rectangular feature data and standardizing it.
//!
//! Standardization uses the sample standard deviation (denominator `n - 1`),
//! so that `ZᵀZ / (n - 1)` is exactly the sample correlation matrix.
//! Validation data are standardized with the statistics of the training
//! data through [`apply_stats`].

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survival::SurvivalData;

/// A complete feature matrix with optional survival outcome.
#[derive(Debug, Clone)]
pub struct RawDataset {
    /// `n × p`, one row per subject.
    pub features: DMatrix<f64>,
    pub feature_names: Vec<String>,
    pub survival: Option<SurvivalData>,
}

impl RawDataset {
    pub fn new(features: DMatrix<f64>, feature_names: Vec<String>, survival: Option<SurvivalData>) -> Result<Self> {
        if features.ncols() != feature_names.len() {
            return Err(Error::DimensionMismatch {
                expected: features.ncols(),
                actual: feature_names.len(),
            });
        }
        if features.nrows() < 2 {
            return Err(Error::InsufficientData {
                required: 2,
                actual: features.nrows(),
            });
        }
        if features.ncols() == 0 {
            return Err(Error::InvalidParameter("dataset has no feature columns".into()));
        }
        if let Some(s) = &survival {
            if s.len() != features.nrows() {
                return Err(Error::DimensionMismatch {
                    expected: features.nrows(),
                    actual: s.len(),
                });
            }
        }
        check_unique(&feature_names)?;
        Ok(Self {
            features,
            feature_names,
            survival,
        })
    }

    /// Generic names `f1..fp`.
    pub fn from_matrix(features: DMatrix<f64>) -> Result<Self> {
        let names = (1..=features.ncols()).map(|j| format!("f{j}")).collect();
        Self::new(features, names, None)
    }

    pub fn nrows(&self) -> usize {
        self.features.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.features.ncols()
    }

    /// Keep the named columns, in the given order.
    pub fn select_named(&self, names: &[String]) -> Result<Self> {
        let idx = names
            .iter()
            .map(|name| {
                self.feature_names
                    .iter()
                    .position(|n| n == name)
                    .ok_or_else(|| Error::MissingColumn(name.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            features: self.features.select_columns(&idx),
            feature_names: names.to_vec(),
            survival: self.survival.clone(),
        })
    }

    /// Rows in the given order (used for cross-validation splits).
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(rows),
            feature_names: self.feature_names.clone(),
            survival: self.survival.as_ref().map(|s| s.subset(rows)),
        }
    }
}

fn check_unique(names: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for name in names {
        if !seen.insert(name.as_str()) {
            return Err(Error::DuplicateColumn(name.clone()));
        }
    }
    Ok(())
}

/// Per-column means and sample standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub names: Vec<String>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl ColumnStats {
    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            names: idx.iter().map(|&j| self.names[j].clone()).collect(),
            means: idx.iter().map(|&j| self.means[j]).collect(),
            sds: idx.iter().map(|&j| self.sds[j]).collect(),
        }
    }
}

/// Column-centered, unit-variance data together with the statistics used.
#[derive(Debug, Clone)]
pub struct StandardizedMatrix {
    pub data: DMatrix<f64>,
    pub stats: ColumnStats,
    /// True when `stats` were estimated from `data` itself.
    pub fitted_on_self: bool,
}

impl StandardizedMatrix {
    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn names(&self) -> &[String] {
        &self.stats.names
    }

    /// Restrict to a subset of columns, e.g. the features retained by the
    /// redundancy filter.
    pub fn select_columns(&self, idx: &[usize]) -> Self {
        Self {
            data: self.data.select_columns(idx),
            stats: self.stats.select(idx),
            fitted_on_self: self.fitted_on_self,
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            data: self.data.select_rows(rows),
            stats: self.stats.clone(),
            fitted_on_self: false,
        }
    }
}

/// Parse a CSV file with a header row. When `survival_columns` names a
/// `(time, status)` pair those columns are pulled out of the feature block.
pub fn load_csv(path: impl AsRef<Path>, survival_columns: Option<(&str, &str)>) -> Result<RawDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(file, survival_columns)
}

/// Same as [`load_csv`] for any reader.
pub fn parse_csv<R: Read>(reader: R, survival_columns: Option<(&str, &str)>) -> Result<RawDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    check_unique(&header)?;

    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_owned()))
    };
    let surv_idx = match survival_columns {
        Some((t, s)) => Some((find(t)?, find(s)?)),
        None => None,
    };
    let feature_idx: Vec<usize> = (0..header.len())
        .filter(|j| surv_idx.is_none_or(|(t, s)| *j != t && *j != s))
        .collect();

    let mut values = Vec::new();
    let mut times = Vec::new();
    let mut status = Vec::new();
    let mut nrows = 0;
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        // 1-based data row, header excluded
        let row = i + 1;
        let cell = |j: usize| -> Result<f64> {
            let raw = record.get(j).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::NonNumeric {
                    row,
                    column: header[j].clone(),
                    value: raw.to_owned(),
                })
        };
        if record.len() != header.len() {
            return Err(Error::Csv(format!(
                "row {row} has {} fields, header has {}",
                record.len(),
                header.len()
            )));
        }
        for &j in &feature_idx {
            values.push(cell(j)?);
        }
        if let Some((t, s)) = surv_idx {
            let time = cell(t)?;
            if time <= 0.0 {
                return Err(Error::NonPositiveTime { row, value: time });
            }
            let st = cell(s)?;
            if st != 0.0 && st != 1.0 {
                return Err(Error::InvalidStatus { row, value: st });
            }
            times.push(time);
            status.push(st == 1.0);
        }
        nrows += 1;
    }

    let p = feature_idx.len();
    let features = DMatrix::from_row_slice(nrows, p, &values);
    let names = feature_idx.iter().map(|&j| header[j].clone()).collect();
    let survival = match surv_idx {
        Some(_) => Some(SurvivalData::new(times, status)?),
        None => None,
    };
    RawDataset::new(features, names, survival)
}

/// Center and scale every column with its own mean and sample sd.
pub fn standardize(raw: &RawDataset) -> Result<(StandardizedMatrix, ColumnStats)> {
    let x = &raw.features;
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InsufficientData { required: 2, actual: n });
    }
    let mut means = Vec::with_capacity(x.ncols());
    let mut sds = Vec::with_capacity(x.ncols());
    for (j, col) in x.column_iter().enumerate() {
        let mean = col.iter().sum::<f64>() / n as f64;
        let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
        let sd = (ss / (n - 1) as f64).sqrt();
        if !(sd > 0.0) || sd <= 1e-12 * mean.abs().max(1.0) {
            return Err(Error::ZeroVariance(raw.feature_names[j].clone()));
        }
        means.push(mean);
        sds.push(sd);
    }
    let stats = ColumnStats {
        names: raw.feature_names.clone(),
        means,
        sds,
    };
    let data = scale(x, &stats);
    Ok((
        StandardizedMatrix {
            data,
            stats: stats.clone(),
            fitted_on_self: true,
        },
        stats,
    ))
}

/// Standardize with externally supplied (training) statistics.
pub fn apply_stats(raw: &RawDataset, stats: &ColumnStats) -> Result<StandardizedMatrix> {
    if raw.ncols() != stats.len() {
        return Err(Error::DimensionMismatch {
            expected: stats.len(),
            actual: raw.ncols(),
        });
    }
    Ok(StandardizedMatrix {
        data: scale(&raw.features, stats),
        stats: stats.clone(),
        fitted_on_self: false,
    })
}

fn scale(x: &DMatrix<f64>, stats: &ColumnStats) -> DMatrix<f64> {
    let mut out = x.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let (m, s) = (stats.means[j], stats.sds[j]);
        col.apply(|v| *v = (*v - m) / s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(cols: &[&[f64]]) -> RawDataset {
        let n = cols[0].len();
        let m = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
        RawDataset::from_matrix(m).unwrap()
    }

    #[test]
    fn parses_plain_csv() {
        let text = "a,b\n1,2\n3,4\n5,6\n";
        let ds = parse_csv(text.as_bytes(), None).unwrap();
        assert_eq!(ds.feature_names, ["a", "b"]);
        assert_eq!(ds.nrows(), 3);
        assert_eq!(ds.features[(2, 1)], 6.0);
        assert!(ds.survival.is_none());
    }

    #[test]
    fn reports_na_cell() {
        let text = "a,b\n1,2\n3,NA\n";
        match parse_csv(text.as_bytes(), None) {
            Err(Error::NonNumeric { row, column, value }) => {
                assert_eq!((row, column.as_str(), value.as_str()), (2, "b", "NA"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn extracts_survival_columns() {
        let text = "time,status,f1\n1.5,1,0.3\n2.0,0,0.1\n";
        let ds = parse_csv(text.as_bytes(), Some(("time", "status"))).unwrap();
        assert_eq!(ds.feature_names, ["f1"]);
        let s = ds.survival.unwrap();
        assert_eq!(s.times(), &[1.5, 2.0]);
        assert_eq!(s.status(), &[true, false]);
    }

    #[test]
    fn rejects_bad_csv_inputs() {
        assert!(matches!(
            parse_csv("a,a\n1,2\n3,4\n".as_bytes(), None),
            Err(Error::DuplicateColumn(_))
        ));
        assert!(matches!(
            parse_csv("time,status,f\n0,1,2\n1,1,3\n".as_bytes(), Some(("time", "status"))),
            Err(Error::NonPositiveTime { row: 1, .. })
        ));
        assert!(matches!(
            parse_csv("time,status,f\n1,2,2\n1,1,3\n".as_bytes(), Some(("time", "status"))),
            Err(Error::InvalidStatus { row: 1, .. })
        ));
        assert!(matches!(load_csv("/nonexistent/file.csv", None), Err(Error::Io { .. })));
    }

    #[test]
    fn standardizes_hand_example() {
        let (z, stats) = standardize(&raw(&[&[1.0, 2.0, 3.0]])).unwrap();
        assert_eq!(stats.means, [2.0]);
        assert!((stats.sds[0] - 1.0).abs() < 1e-15);
        let col: Vec<f64> = z.data.column(0).iter().copied().collect();
        assert_eq!(col, [-1.0, 0.0, 1.0]);
        assert!(z.fitted_on_self);
    }

    #[test]
    fn constant_column_is_rejected() {
        let err = standardize(&raw(&[&[1.0, 2.0, 4.0], &[5.0, 5.0, 5.0]])).unwrap_err();
        assert!(matches!(err, Error::ZeroVariance(ref c) if c == "f2"));
    }

    #[test]
    fn standardize_is_idempotent_and_consistent() {
        let ds = raw(&[&[0.3, 1.9, -2.0, 4.4, 0.0], &[10.0, 12.5, 9.0, 11.0, 30.0]]);
        let (z, stats) = standardize(&ds).unwrap();
        for col in z.data.column_iter() {
            let mean = col.sum() / 5.0;
            let sd = (col.map(|v| (v - mean).powi(2)).sum() / 4.0).sqrt();
            assert!(mean.abs() < 1e-10 && (sd - 1.0).abs() < 1e-10);
        }
        let again = standardize(&RawDataset::from_matrix(z.data.clone()).unwrap())
            .unwrap()
            .0;
        assert!((&again.data - &z.data).amax() < 1e-12);
        let applied = apply_stats(&ds, &stats).unwrap();
        assert!((&applied.data - &z.data).amax() < 1e-12);
        assert!(!applied.fitted_on_self);
    }

    #[test]
    fn apply_stats_identity_and_centering() {
        let ds = raw(&[&[1.0, 2.0], &[3.0, -4.0]]);
        let id = ColumnStats {
            names: ds.feature_names.clone(),
            means: vec![0.0, 0.0],
            sds: vec![1.0, 1.0],
        };
        assert_eq!(apply_stats(&ds, &id).unwrap().data, ds.features);

        let stats = ColumnStats {
            names: ds.feature_names.clone(),
            means: vec![1.0, 3.0],
            sds: vec![2.0, 5.0],
        };
        let z = apply_stats(&ds, &stats).unwrap();
        assert_eq!(z.data.row(0).iter().copied().collect::<Vec<_>>(), [0.0, 0.0]);

        let short = ColumnStats {
            names: vec!["x".into()],
            means: vec![0.0],
            sds: vec![1.0],
        };
        assert!(matches!(apply_stats(&ds, &short), Err(Error::DimensionMismatch { .. })));
    }
}
