//! Thomson (regression) factor scores.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::factor::FactorModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreSource {
    Training,
    Validation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorScores {
    /// `n × m`.
    pub values: DMatrix<f64>,
    /// Hash of the loadings and uniquenesses that produced the scores.
    pub fingerprint: String,
    pub source: ScoreSource,
}

/// SHA-256 over the little-endian bytes of `Λ` (column-major) and `Ψ`.
pub fn model_fingerprint(model: &FactorModel) -> String {
    let mut h = Sha256::new();
    h.update((model.loadings.nrows() as u64).to_le_bytes());
    h.update((model.loadings.ncols() as u64).to_le_bytes());
    for v in model.loadings.iter().chain(model.uniquenesses.iter()) {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// `ξ̂ = (I + ΛᵀΨ⁻¹Λ)⁻¹ ΛᵀΨ⁻¹ z` for every row `z` of the standardized
/// matrix, i.e. `ΛᵀΣ⁻¹z` without forming the `p × p` inverse.
pub fn thomson_scores(model: &FactorModel, z: &DMatrix<f64>, source: ScoreSource) -> Result<FactorScores> {
    let p = model.p();
    if z.ncols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            actual: z.ncols(),
        });
    }
    let m = model.loadings.ncols();
    let mut scaled = model.loadings.clone();
    for (j, mut row) in scaled.row_iter_mut().enumerate() {
        row /= model.uniquenesses[j];
    }
    // p × m: Ψ⁻¹Λ
    let mut a = model.loadings.transpose() * &scaled;
    for k in 0..m {
        a[(k, k)] += 1.0;
    }
    let chol = a.cholesky().ok_or(Error::NotPositiveDefinite)?;
    // m × n right-hand side
    let rhs = scaled.transpose() * z.transpose();
    let values = chol.solve(&rhs).transpose();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("factor scores".into()));
    }
    Ok(FactorScores {
        values,
        fingerprint: model_fingerprint(model),
        source,
    })
}
