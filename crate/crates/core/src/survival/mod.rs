//! Survival outcomes, Cox regression and Brier-score prediction error.

mod brier;
mod cox;
mod km;

pub use brier::{
    brier_curve, default_tau, evaluation_grid, integrate_brier, r_squared, BrierCurve, BrierVariant, IntegratedScore,
};
pub use cox::{fit_cox, CoxModel, CoxOptions, Ties};
pub use km::{km, reverse_km, StepSurvivalCurve};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observed times `min(T, C)` and event indicators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalData {
    times: Vec<f64>,
    status: Vec<bool>,
}

impl SurvivalData {
    pub fn new(times: Vec<f64>, status: Vec<bool>) -> Result<Self> {
        if times.len() != status.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                actual: status.len(),
            });
        }
        if let Some((row, &value)) = times.iter().enumerate().find(|(_, t)| !(**t > 0.0) || !t.is_finite()) {
            return Err(Error::NonPositiveTime { row: row + 1, value });
        }
        Ok(Self { times, status })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn status(&self) -> &[bool] {
        &self.status
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn events(&self) -> usize {
        self.status.iter().filter(|&&s| s).count()
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            times: rows.iter().map(|&i| self.times[i]).collect(),
            status: rows.iter().map(|&i| self.status[i]).collect(),
        }
    }

    /// Censoring treated as the event.
    pub fn flipped(&self) -> Self {
        Self {
            times: self.times.clone(),
            status: self.status.iter().map(|s| !s).collect(),
        }
    }

    pub fn max_time(&self) -> f64 {
        self.times.iter().copied().fold(0.0, f64::max)
    }
}
