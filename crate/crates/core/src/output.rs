//! Artifact writing with overwrite protection.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::corr::FilterResult;
use crate::error::{Error, Result};
use crate::survival::BrierCurve;

/// An output directory that refuses to overwrite existing files unless
/// `force` is set.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    force: bool,
    written: Vec<String>,
}

impl OutputDir {
    pub fn new(root: impl Into<PathBuf>, force: bool) -> Self {
        Self {
            root: root.into(),
            force,
            written: Vec::new(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// File names written so far, in order.
    pub fn written(&self) -> &[String] {
        &self.written
    }

    /// Fail early if any of `names` exists and `force` is off.
    pub fn check(&self, names: &[&str]) -> Result<()> {
        if self.force {
            return Ok(());
        }
        for name in names {
            let path = self.root.join(name);
            if path.exists() {
                return Err(Error::Config(format!(
                    "{} already exists; pass --force to overwrite",
                    path.display()
                )));
            }
        }
        Ok(())
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        self.check(&[name])?;
        fs::create_dir_all(&self.root).map_err(|source| Error::Io {
            path: self.root.clone(),
            source,
        })?;
        let path = self.root.join(name);
        fs::write(&path, bytes).map_err(|source| Error::Io { path, source })?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }
}

fn csv_bytes(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Csv(e.to_string());
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::Csv(e.to_string()))
}

/// Matrix with a header row of column names and, if given, a leading
/// column of row names.
pub fn matrix_csv(m: &DMatrix<f64>, row_names: Option<&[String]>, col_names: &[String]) -> Result<Vec<u8>> {
    let mut header = Vec::with_capacity(col_names.len() + 1);
    if row_names.is_some() {
        header.push("feature".to_string());
    }
    header.extend(col_names.iter().cloned());
    csv_bytes(
        &header,
        (0..m.nrows()).map(|i| {
            let mut row = Vec::with_capacity(header.len());
            if let Some(names) = row_names {
                row.push(names[i].clone());
            }
            row.extend(m.row(i).iter().map(|v| v.to_string()));
            row
        }),
    )
}

/// Wide format: `time` then one score column per curve. All curves must
/// share the same grid.
pub fn curves_csv(curves: &[BrierCurve]) -> Result<Vec<u8>> {
    let Some(first) = curves.first() else {
        return csv_bytes(&["time".to_string()], std::iter::empty());
    };
    if let Some(bad) = curves.iter().find(|c| c.times != first.times) {
        return Err(Error::InvalidParameter(format!(
            "curve {:?} uses a different grid",
            bad.label
        )));
    }
    let mut header = vec!["time".to_string()];
    header.extend(curves.iter().map(|c| c.label.clone()));
    csv_bytes(
        &header,
        first.times.iter().enumerate().map(|(k, t)| {
            let mut row = vec![t.to_string()];
            row.extend(curves.iter().map(|c| c.scores[k].to_string()));
            row
        }),
    )
}

/// Long format `variant, model, time, score`, ready for plotting.
pub fn curves_long_csv(curves: &[BrierCurve]) -> Result<Vec<u8>> {
    let header = ["variant", "model", "time", "score"].map(String::from);
    csv_bytes(
        &header,
        curves.iter().flat_map(|c| {
            let variant = serde_json::to_value(c.variant)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default();
            c.times
                .iter()
                .zip(&c.scores)
                .map(move |(t, s)| vec![variant.clone(), c.label.clone(), t.to_string(), s.to_string()])
        }),
    )
}

/// One row per input feature: whether it was retained and, if not, its
/// position in the removal order.
pub fn filter_csv(names: &[String], filter: &FilterResult) -> Result<Vec<u8>> {
    let mut order = vec![String::new(); names.len()];
    for (k, &j) in filter.removed.iter().enumerate() {
        order[j] = (k + 1).to_string();
    }
    let rows = names
        .iter()
        .enumerate()
        .map(|(j, n)| vec![n.clone(), filter.retained.contains(&j).to_string(), order[j].clone()])
        .collect();
    table_csv(&["feature", "retained", "removal_order"], rows)
}

/// Arbitrary rows of strings under a header.
pub fn table_csv(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    csv_bytes(&header, rows.into_iter())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survival::BrierVariant;

    fn curve(label: &str, times: Vec<f64>) -> BrierCurve {
        let scores = times.iter().map(|t| t / 10.0).collect();
        BrierCurve {
            times,
            scores,
            tau: 1.0,
            variant: BrierVariant::CvAveraged,
            label: label.into(),
        }
    }

    #[test]
    fn refuses_to_overwrite_without_force() {
        let dir = std::env::temp_dir().join(format!("fmradio-out-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        let mut out = OutputDir::new(&dir, false);
        out.write("a.txt", b"1").unwrap();
        assert!(out.write("a.txt", b"2").is_err());
        assert!(out.check(&["b.txt"]).is_ok());
        let mut forced = OutputDir::new(&dir, true);
        forced.write("a.txt", b"3").unwrap();
        assert_eq!(fs::read(dir.join("a.txt")).unwrap(), b"3");
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn csv_layouts() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let names = vec!["a".to_string(), "b".to_string()];
        let text = String::from_utf8(matrix_csv(&m, Some(&names), &names).unwrap()).unwrap();
        assert_eq!(text, "feature,a,b\na,1,0.5\nb,0.5,1\n");

        let c = [curve("x", vec![0.0, 1.0]), curve("y", vec![0.0, 1.0])];
        let wide = String::from_utf8(curves_csv(&c).unwrap()).unwrap();
        assert_eq!(wide, "time,x,y\n0,0,0\n1,0.1,0.1\n");
        let long = String::from_utf8(curves_long_csv(&c[..1]).unwrap()).unwrap();
        assert_eq!(
            long,
            "variant,model,time,score\ncv_averaged,x,0,0\ncv_averaged,x,1,0.1\n"
        );
        assert!(curves_csv(&[curve("x", vec![0.0]), curve("y", vec![1.0])]).is_err());
    }
}
