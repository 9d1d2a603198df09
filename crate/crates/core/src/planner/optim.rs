use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::PlannerError;
use crate::rng::{self, PushRng};

/// Box constraint on a single action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ActionBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, PlannerError> {
        if lower.len() != upper.len() || lower.is_empty() || lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(PlannerError::Config("action box needs matching lower <= upper"));
        }
        Ok(Self { lower, upper })
    }

    pub fn symmetric(half_width: &[f64]) -> Self {
        Self { lower: half_width.iter().map(|h| -h).collect(), upper: half_width.to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn half_range(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (u - l)).collect()
    }

    /// Clamp a packed sequence of actions in place.
    pub fn clamp_sequence(&self, seq: &mut [f64]) {
        let a = self.dim();
        for (i, v) in seq.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i % a], self.upper[i % a]);
        }
    }

    pub fn contains_sequence(&self, seq: &[f64]) -> bool {
        let a = self.dim();
        seq.iter().enumerate().all(|(i, v)| *v >= self.lower[i % a] && *v <= self.upper[i % a])
    }

    /// Center of the box repeated over `horizon` steps.
    pub fn center_sequence(&self, horizon: usize) -> Vec<f64> {
        self.center().repeat(horizon)
    }
}

/// Scores packed candidate action sequences; larger is better.
pub trait Objective {
    /// `candidates` holds `count` sequences of equal length back to back.
    fn evaluate(&mut self, candidates: &[f64], count: usize, rng: &mut PushRng) -> Vec<f64>;
}

impl<F: FnMut(&[f64]) -> f64> Objective for F {
    fn evaluate(&mut self, candidates: &[f64], count: usize, _rng: &mut PushRng) -> Vec<f64> {
        let len = candidates.len() / count.max(1);
        candidates.chunks_exact(len.max(1)).take(count).map(self).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CemConfig {
    pub horizon: usize,
    pub population: usize,
    pub elites: usize,
    pub iterations: usize,
    /// Weight of the previous distribution when refitting.
    pub alpha: f64,
    /// Initial std per action dimension; half the action range when absent.
    pub init_std: Option<Vec<f64>>,
    /// Carry the previous elites into the next ranking (only when
    /// `elites < population`).
    pub keep_elites: bool,
}

impl Default for CemConfig {
    fn default() -> Self {
        Self { horizon: 20, population: 400, elites: 40, iterations: 5, alpha: 0.1, init_std: None, keep_elites: true }
    }
}

impl CemConfig {
    pub fn validate(&self) -> Result<(), PlannerError> {
        if self.horizon == 0 || self.population == 0 || self.elites == 0 || self.elites > self.population {
            return Err(PlannerError::Config("cem needs horizon >= 1 and 1 <= elites <= population"));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(PlannerError::Config("cem alpha must lie in [0, 1)"));
        }
        if let Some(s) = &self.init_std {
            if s.iter().any(|v| !(*v > 0.0)) {
                return Err(PlannerError::Config("cem init_std must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    /// Packed `horizon × action_dim` sequence.
    pub actions: Vec<f64>,
    /// Mean objective of the elite set after each iteration.
    pub elite_values: Vec<f64>,
    /// Best candidate objective seen.
    pub best_value: f64,
}

fn check_warm(warm: &[f64], bounds: &ActionBox, horizon: usize) -> Result<(), PlannerError> {
    if warm.len() != horizon * bounds.dim() {
        return Err(PlannerError::Dimension("warm start"));
    }
    Ok(())
}

/// Cross-entropy method over clamped diagonal-Gaussian action sequences.
pub fn cem_plan(
    objective: &mut impl Objective,
    bounds: &ActionBox,
    config: &CemConfig,
    warm_start: &[f64],
    rng: &mut PushRng,
) -> Result<Plan, PlannerError> {
    config.validate()?;
    check_warm(warm_start, bounds, config.horizon)?;
    let a = bounds.dim();
    let len = config.horizon * a;
    let mut mean = warm_start.to_vec();
    bounds.clamp_sequence(&mut mean);
    if config.iterations == 0 {
        return Ok(Plan { actions: warm_start.to_vec(), elite_values: Vec::new(), best_value: f64::NEG_INFINITY });
    }
    let init = config.init_std.clone().unwrap_or_else(|| bounds.half_range());
    if init.len() != a {
        return Err(PlannerError::Dimension("cem init_std"));
    }
    let mut var: Vec<f64> = (0..len).map(|i| init[i % a] * init[i % a]).collect();
    let carry = config.keep_elites && config.elites < config.population;

    let mut elites: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut plan = Plan { actions: Vec::new(), elite_values: Vec::new(), best_value: f64::NEG_INFINITY };
    let mut samples = vec![0.0; config.population * len];
    for _ in 0..config.iterations {
        for c in 0..config.population {
            for i in 0..len {
                samples[c * len + i] = mean[i] + libm::sqrt(var[i]) * rng::normal(rng);
            }
        }
        bounds.clamp_sequence(&mut samples);
        let values = objective.evaluate(&samples, config.population, rng);
        let mut scored: Vec<(f64, Vec<f64>)> = values
            .into_iter()
            .enumerate()
            .map(|(c, v)| (if v.is_nan() { f64::NEG_INFINITY } else { v }, samples[c * len..(c + 1) * len].to_vec()))
            .collect();
        if carry {
            scored.append(&mut elites);
        }
        scored.sort_by(|x, y| y.0.total_cmp(&x.0));
        scored.truncate(config.elites);
        elites = scored;

        let k = elites.len() as f64;
        let mut e_mean = vec![0.0; len];
        for (_, s) in &elites {
            for (m, v) in e_mean.iter_mut().zip(s) {
                *m += v / k;
            }
        }
        let mut e_var = vec![0.0; len];
        for (_, s) in &elites {
            for ((v, x), m) in e_var.iter_mut().zip(s).zip(&e_mean) {
                *v += (x - m) * (x - m) / k;
            }
        }
        for i in 0..len {
            mean[i] = config.alpha * mean[i] + (1.0 - config.alpha) * e_mean[i];
            var[i] = config.alpha * var[i] + (1.0 - config.alpha) * e_var[i];
        }
        plan.elite_values.push(elites.iter().map(|e| e.0).sum::<f64>() / k);
        plan.best_value = plan.best_value.max(elites[0].0);
    }
    bounds.clamp_sequence(&mut mean);
    plan.actions = mean;
    Ok(plan)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MppiConfig {
    pub horizon: usize,
    pub samples: usize,
    /// Temperature of the exponential weights.
    pub lambda: f64,
    /// Perturbation std as a fraction of the half action range.
    pub sigma: f64,
    pub iterations: usize,
}

impl Default for MppiConfig {
    fn default() -> Self {
        Self { horizon: 20, samples: 400, lambda: 0.1, sigma: 0.5, iterations: 1 }
    }
}

impl MppiConfig {
    pub fn validate(&self) -> Result<(), PlannerError> {
        if self.horizon == 0 || self.samples == 0 {
            return Err(PlannerError::Config("mppi needs horizon >= 1 and samples >= 1"));
        }
        if !(self.lambda > 0.0) || !(self.sigma > 0.0) {
            return Err(PlannerError::Config("mppi lambda and sigma must be positive"));
        }
        Ok(())
    }
}

/// Exponentially weighted average of the rows of `samples` (weights
/// `∝ exp(value / λ)`).
pub fn mppi_average(samples: &[f64], values: &[f64], lambda: f64) -> Vec<f64> {
    let n = values.len();
    let len = samples.len() / n;
    let best = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = if best.is_finite() { values.iter().map(|v| libm::exp((v - best) / lambda)).collect() } else { vec![1.0; n] };
    let total: f64 = w.iter().sum();
    let mut out = vec![0.0; len];
    for (c, wc) in w.iter().enumerate() {
        for (o, s) in out.iter_mut().zip(&samples[c * len..(c + 1) * len]) {
            *o += wc / total * s;
        }
    }
    out
}

/// Model-predictive path integral update around the warm start.
pub fn mppi_plan(
    objective: &mut impl Objective,
    bounds: &ActionBox,
    config: &MppiConfig,
    warm_start: &[f64],
    rng: &mut PushRng,
) -> Result<Plan, PlannerError> {
    config.validate()?;
    check_warm(warm_start, bounds, config.horizon)?;
    let a = bounds.dim();
    let len = config.horizon * a;
    let half = bounds.half_range();
    let mut mean = warm_start.to_vec();
    bounds.clamp_sequence(&mut mean);
    let mut plan = Plan { actions: Vec::new(), elite_values: Vec::new(), best_value: f64::NEG_INFINITY };
    let mut samples = vec![0.0; config.samples * len];
    for _ in 0..config.iterations {
        for c in 0..config.samples {
            for i in 0..len {
                samples[c * len + i] = mean[i] + config.sigma * half[i % a] * rng::normal(rng);
            }
        }
        bounds.clamp_sequence(&mut samples);
        let values: Vec<f64> =
            objective.evaluate(&samples, config.samples, rng).into_iter().map(|v| if v.is_nan() { f64::NEG_INFINITY } else { v }).collect();
        mean = mppi_average(&samples, &values, config.lambda);
        let best = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        plan.elite_values.push(best);
        plan.best_value = plan.best_value.max(best);
    }
    bounds.clamp_sequence(&mut mean);
    plan.actions = mean;
    Ok(plan)
}
