use serde::{Deserialize, Serialize};

use super::SurvivalData;

/// Right-continuous, non-increasing step function starting at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSurvivalCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepSurvivalCurve {
    /// Value at `t` (right limit).
    pub fn at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            1.0
        } else {
            self.values[k - 1]
        }
    }

    /// Left limit `S(t⁻)`.
    pub fn before(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s < t);
        if k == 0 {
            1.0
        } else {
            self.values[k - 1]
        }
    }
}

/// Product-limit estimator.
pub fn km(data: &SurvivalData) -> StepSurvivalCurve {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| data.times()[a].total_cmp(&data.times()[b]));
    let mut at_risk = data.len();
    let mut surv = 1.0;
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let t = data.times()[order[i]];
        let (mut deaths, mut leaving) = (0, 0);
        while i < order.len() && data.times()[order[i]] == t {
            deaths += usize::from(data.status()[order[i]]);
            leaving += 1;
            i += 1;
        }
        if deaths > 0 {
            surv *= 1.0 - deaths as f64 / at_risk as f64;
            times.push(t);
            values.push(surv);
        }
        at_risk -= leaving;
    }
    StepSurvivalCurve { times, values }
}

/// Kaplan–Meier estimate of the censoring survival function `G`.
pub fn reverse_km(data: &SurvivalData) -> StepSurvivalCurve {
    km(&data.flipped())
}
