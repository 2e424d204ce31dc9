use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{StepSurvivalCurve, SurvivalData};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BrierVariant {
    Apparent,
    Validated,
    CvAveraged,
}

/// Pointwise prediction error over a time grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BrierCurve {
    pub times: Vec<f64>,
    pub scores: Vec<f64>,
    pub tau: f64,
    pub variant: BrierVariant,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratedScore {
    pub value: f64,
    pub r2: Option<f64>,
}

/// Median observed time.
pub fn default_tau(data: &SurvivalData) -> f64 {
    let mut t = data.times().to_vec();
    t.sort_by(f64::total_cmp);
    let n = t.len();
    if n % 2 == 1 {
        t[n / 2]
    } else {
        0.5 * (t[n / 2 - 1] + t[n / 2])
    }
}

/// `0` followed by the distinct observed times in `(0, tau]`.
pub fn evaluation_grid(data: &SurvivalData, tau: f64) -> Vec<f64> {
    let mut t: Vec<f64> = data.times().iter().copied().filter(|&s| s <= tau).collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    let mut grid = Vec::with_capacity(t.len() + 1);
    grid.push(0.0);
    grid.extend(t);
    grid
}

/// IPCW Brier score at each grid time. The returned curve is labelled as
/// apparent with `tau` at the last grid point; callers relabel it.
///
/// `predictions[(i, k)]` is the predicted probability that subject `i`
/// survives past `grid[k]`. Subjects still at risk are weighted by
/// `1/G(t⁻)`, subjects with an event before `t` by `1/G(T⁻)`, and subjects
/// censored before `t` get weight zero.
pub fn brier_curve(
    predictions: &DMatrix<f64>,
    data: &SurvivalData,
    grid: &[f64],
    censoring: &StepSurvivalCurve,
) -> Result<BrierCurve> {
    let n = data.len();
    if predictions.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: predictions.nrows(),
        });
    }
    if predictions.ncols() != grid.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            actual: predictions.ncols(),
        });
    }
    let g_event: Vec<f64> = data.times().iter().map(|&t| censoring.before(t)).collect();
    let mut scores = Vec::with_capacity(grid.len());
    for (k, &t) in grid.iter().enumerate() {
        let g_t = censoring.before(t);
        let mut sum = 0.0;
        for i in 0..n {
            let alive = data.times()[i] >= t;
            let (y, weight_den) = if alive {
                (1.0, g_t)
            } else if data.status()[i] {
                (0.0, g_event[i])
            } else {
                continue;
            };
            if weight_den <= 0.0 {
                return Err(Error::ZeroCensoringWeight(if alive { t } else { data.times()[i] }));
            }
            let r = y - predictions[(i, k)];
            sum += r * r / weight_den;
        }
        scores.push(sum / n as f64);
    }
    Ok(BrierCurve {
        times: grid.to_vec(),
        scores,
        tau: grid.last().copied().unwrap_or(0.0),
        variant: BrierVariant::Apparent,
        label: String::new(),
    })
}

/// Trapezoid rule over the grid restricted to `[0, tau]`, divided by `tau`.
pub fn integrate_brier(curve: &BrierCurve, tau: f64) -> Result<IntegratedScore> {
    if !(tau > 0.0) {
        return Err(Error::EmptyGrid(tau));
    }
    let inside = curve.times.partition_point(|&t| t <= tau);
    if inside == 0 {
        return Err(Error::EmptyGrid(tau));
    }
    let (t, b) = (&curve.times, &curve.scores);
    let mut area = 0.0;
    for k in 1..inside {
        area += 0.5 * (t[k] - t[k - 1]) * (b[k] + b[k - 1]);
    }
    let last = inside - 1;
    if t[last] < tau {
        let end = if inside < t.len() {
            let w = (tau - t[last]) / (t[inside] - t[last]);
            b[last] + w * (b[inside] - b[last])
        } else {
            b[last]
        };
        area += 0.5 * (tau - t[last]) * (b[last] + end);
    }
    Ok(IntegratedScore {
        value: area / tau,
        r2: None,
    })
}

/// Explained residual variation relative to a reference model.
pub fn r_squared(model: &IntegratedScore, reference: &IntegratedScore) -> Result<f64> {
    if !(reference.value > 0.0) {
        return Err(Error::InvalidParameter(
            "reference integrated Brier score must be positive".into(),
        ));
    }
    Ok(1.0 - model.value / reference.value)
}
