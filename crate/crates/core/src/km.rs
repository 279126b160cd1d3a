//! Product-limit estimate of the censoring survival `G(t) = P(C >= t)`.
//!
//! Censoring events are the rows with `delta = 0`. The risk set at `s` is
//! `#{Y_i >= s}` and tied censoring times collapse into one factor, so a
//! death and a censoring at the same time are handled as "deaths first".

use crate::data::Dataset;

/// Left-continuous step function: `value(t)` multiplies the factors at jump
/// times strictly below `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSurvival {
    jump_times: Vec<f64>,
    post_jump_values: Vec<f64>,
}

impl StepSurvival {
    /// `G ≡ 1`.
    pub fn constant_one() -> Self {
        Self {
            jump_times: Vec::new(),
            post_jump_values: Vec::new(),
        }
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn post_jump_values(&self) -> &[f64] {
        &self.post_jump_values
    }

    pub fn eval(&self, t: f64) -> f64 {
        let k = self.jump_times.partition_point(|&s| s < t);
        if k == 0 {
            1.0
        } else {
            self.post_jump_values[k - 1]
        }
    }

    /// Largest `t*` with `value(t*) > 0`; `+inf` if the estimate never hits zero.
    ///
    /// Every uncensored `Y_i` must satisfy `Y_i <= t*` for its inverse weight to
    /// exist.
    pub fn support_end(&self) -> f64 {
        self.post_jump_values
            .iter()
            .position(|&v| v <= 0.0)
            .map_or(f64::INFINITY, |k| self.jump_times[k])
    }
}

pub fn fit_censoring_km(dataset: &Dataset) -> StepSurvival {
    let mut rows: Vec<(f64, bool)> = dataset
        .observations()
        .iter()
        .map(|o| (o.y, o.delta))
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));

    let n = rows.len();
    let mut jump_times = Vec::new();
    let mut post_jump_values = Vec::new();
    let mut value = 1.0;
    let mut i = 0;
    while i < n {
        let s = rows[i].0;
        let at_risk = n - i;
        let mut censored = 0usize;
        let mut j = i;
        while j < n && rows[j].0 == s {
            if !rows[j].1 {
                censored += 1;
            }
            j += 1;
        }
        if censored > 0 {
            value *= 1.0 - censored as f64 / at_risk as f64;
            jump_times.push(s);
            post_jump_values.push(value);
        }
        i = j;
    }
    StepSurvival {
        jump_times,
        post_jump_values,
    }
}
