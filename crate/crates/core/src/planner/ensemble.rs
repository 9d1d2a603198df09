use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{PlannerError, TransitionBuffer};
use crate::geom::{wrap_angle, Vec2};
use crate::nn::{clamp_log_var, Activation, Adam, AdamConfig, Mlp, LOG_VAR_MAX, LOG_VAR_MIN};
use crate::rng::{self, PushRng, Rng};

/// How states are turned into network features and how predicted deltas are
/// applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StateEncoding {
    /// Raw state features; deltas of `angle_dims` are wrapped differences
    /// and the predicted angles are wrapped.
    Plain { state_dim: usize, angle_dims: Vec<usize> },
    /// Pushing model state `[x_po, y_po, θ_po, x_o, y_o, θ_o]`.
    ///
    /// The contact-world pose is not a feature: the contact dynamics are
    /// invariant to it. The contact displacement is predicted in the contact
    /// frame.
    ContactFrame,
}

impl StateEncoding {
    pub fn state_dim(&self) -> usize {
        match self {
            StateEncoding::Plain { state_dim, .. } => *state_dim,
            StateEncoding::ContactFrame => 6,
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            StateEncoding::Plain { state_dim, .. } => *state_dim,
            StateEncoding::ContactFrame => 4,
        }
    }

    pub fn delta_dim(&self) -> usize {
        self.state_dim()
    }

    pub fn features(&self, s: &[f64], out: &mut Vec<f64>) {
        match self {
            StateEncoding::Plain { .. } => out.extend_from_slice(s),
            StateEncoding::ContactFrame => {
                out.extend_from_slice(&[s[0], s[1], libm::sin(s[2]), libm::cos(s[2])]);
            }
        }
    }

    pub fn delta(&self, s: &[f64], next: &[f64], out: &mut Vec<f64>) {
        match self {
            StateEncoding::Plain { angle_dims, .. } => {
                for i in 0..s.len() {
                    let d = next[i] - s[i];
                    out.push(if angle_dims.contains(&i) { wrap_angle(d) } else { d });
                }
            }
            StateEncoding::ContactFrame => {
                let local = Vec2::new(next[3] - s[3], next[4] - s[4]).rotate(-s[5]);
                out.extend_from_slice(&[
                    next[0] - s[0],
                    next[1] - s[1],
                    wrap_angle(next[2] - s[2]),
                    local.x,
                    local.y,
                    wrap_angle(next[5] - s[5]),
                ]);
            }
        }
    }

    pub fn apply(&self, s: &[f64], delta: &[f64], out: &mut [f64]) {
        match self {
            StateEncoding::Plain { angle_dims, .. } => {
                for i in 0..s.len() {
                    let v = s[i] + delta[i];
                    out[i] = if angle_dims.contains(&i) { wrap_angle(v) } else { v };
                }
            }
            StateEncoding::ContactFrame => {
                let world = Vec2::new(delta[3], delta[4]).rotate(s[5]);
                out[0] = s[0] + delta[0];
                out[1] = s[1] + delta[1];
                out[2] = wrap_angle(s[2] + delta[2]);
                out[3] = s[3] + world.x;
                out[4] = s[4] + world.y;
                out[5] = wrap_angle(s[5] + delta[5]);
            }
        }
    }
}

/// Per-feature affine standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub const STD_FLOOR: f64 = 1e-8;

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    /// Fit to `rows` packed with width `dim`.
    pub fn fit(data: &[f64], dim: usize) -> Self {
        let n = (data.len() / dim).max(1) as f64;
        let mut mean = vec![0.0; dim];
        for row in data.chunks_exact(dim) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for row in data.chunks_exact(dim) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.iter().map(|v| libm::sqrt(v / n).max(STD_FLOOR)).collect();
        Self { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize_in_place(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v - m) / s;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub members: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { members: 5, hidden: vec![200; 4], activation: Activation::Relu }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub holdout_fraction: f64,
    /// Epochs without holdout improvement before stopping.
    pub patience: usize,
    /// Cap on the rows used per epoch (0 = all).
    pub max_epoch_rows: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self { epochs: 50, batch_size: 32, learning_rate: 1e-3, holdout_fraction: 0.1, patience: 5, max_epoch_rows: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MemberCurve {
    /// Mean training loss per epoch, normalized units.
    pub train_loss: Vec<f64>,
    /// Holdout NLL per epoch, per sample, original units.
    pub holdout_nll: Vec<f64>,
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub members: Vec<MemberCurve>,
    pub holdout_size: usize,
}

impl TrainReport {
    /// Holdout NLL of the kept weights, per member.
    pub fn final_holdout_nll(&self) -> Vec<f64> {
        self.members.iter().map(|m| m.holdout_nll.get(m.best_epoch).copied().unwrap_or(f64::NAN)).collect()
    }
}

/// Bootstrapped probabilistic ensemble predicting Gaussian state deltas.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    encoding: StateEncoding,
    action_dim: usize,
    members: Vec<Mlp>,
    input_norm: Normalizer,
    output_norm: Normalizer,
}

impl Ensemble {
    pub fn new(encoding: StateEncoding, action_dim: usize, config: &EnsembleConfig, rng: &mut PushRng) -> Result<Self, PlannerError> {
        if config.members == 0 || config.hidden.is_empty() {
            return Err(PlannerError::Config("ensemble needs members and hidden layers"));
        }
        let input = encoding.feature_dim() + action_dim;
        let output = encoding.delta_dim();
        let mut dims = vec![input];
        dims.extend_from_slice(&config.hidden);
        dims.push(2 * output);
        let members = (0..config.members).map(|_| Mlp::new(&dims, config.activation, rng)).collect::<Result<Vec<_>, _>>()?;
        Ok(Self { encoding, action_dim, members, input_norm: Normalizer::identity(input), output_norm: Normalizer::identity(output) })
    }

    pub fn from_parts(
        encoding: StateEncoding,
        action_dim: usize,
        members: Vec<Mlp>,
        input_norm: Normalizer,
        output_norm: Normalizer,
    ) -> Result<Self, PlannerError> {
        let input = encoding.feature_dim() + action_dim;
        let output = encoding.delta_dim();
        let dims_ok = !members.is_empty()
            && members.iter().all(|m| m.dims() == members[0].dims())
            && members[0].input_dim() == input
            && members[0].output_dim() == 2 * output
            && input_norm.dim() == input
            && output_norm.dim() == output
            && input_norm.std.iter().chain(&output_norm.std).all(|s| *s > 0.0);
        if !dims_ok {
            return Err(PlannerError::Dimension("ensemble parts"));
        }
        Ok(Self { encoding, action_dim, members, input_norm, output_norm })
    }

    pub fn encoding(&self) -> &StateEncoding {
        &self.encoding
    }

    pub fn state_dim(&self) -> usize {
        self.encoding.state_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_norm.dim()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[Mlp] {
        &self.members
    }

    pub fn members_mut(&mut self) -> &mut [Mlp] {
        &mut self.members
    }

    pub fn input_normalizer(&self) -> &Normalizer {
        &self.input_norm
    }

    pub fn output_normalizer(&self) -> &Normalizer {
        &self.output_norm
    }

    pub fn set_normalizers(&mut self, input: Normalizer, output: Normalizer) -> Result<(), PlannerError> {
        if input.dim() != self.input_norm.dim() || output.dim() != self.output_norm.dim() {
            return Err(PlannerError::Dimension("normalizer"));
        }
        self.input_norm = input;
        self.output_norm = output;
        Ok(())
    }

    /// Normalized network input for one `(state, action)` pair.
    pub fn encode_input(&self, state: &[f64], action: &[f64], out: &mut Vec<f64>) {
        let start = out.len();
        self.encoding.features(state, out);
        out.extend_from_slice(action);
        self.input_norm.normalize_in_place(&mut out[start..]);
    }

    /// Predicted delta distribution `(mean, variance)` in original units.
    pub fn delta_distribution(&self, state: &[f64], action: &[f64], member: usize) -> Result<(Vec<f64>, Vec<f64>), PlannerError> {
        let m = self.members.get(member).ok_or(PlannerError::MemberIndex(member, self.members.len()))?;
        self.check_dims(state, action)?;
        let mut x = Vec::new();
        self.encode_input(state, action, &mut x);
        let out = m.forward_slice(&x, 1);
        let d = self.encoding.delta_dim();
        let mut mean = Vec::with_capacity(d);
        let mut var = Vec::with_capacity(d);
        for i in 0..d {
            let s = self.output_norm.std[i];
            mean.push(out[i] * s + self.output_norm.mean[i]);
            var.push(libm::exp(clamp_log_var(out[d + i])) * s * s);
        }
        Ok((mean, var))
    }

    fn check_dims(&self, state: &[f64], action: &[f64]) -> Result<(), PlannerError> {
        if state.len() != self.state_dim() || action.len() != self.action_dim {
            return Err(PlannerError::Dimension("state/action"));
        }
        Ok(())
    }

    /// Sampled next state from one member.
    pub fn predict(&self, state: &[f64], action: &[f64], member: usize, rng: &mut PushRng) -> Result<Vec<f64>, PlannerError> {
        let (mean, var) = self.delta_distribution(state, action, member)?;
        let delta: Vec<f64> = mean.iter().zip(&var).map(|(m, v)| m + libm::sqrt(*v) * rng::normal(rng)).collect();
        let mut next = vec![0.0; state.len()];
        self.encoding.apply(state, &delta, &mut next);
        Ok(next)
    }

    /// Next state from one member's mean delta.
    pub fn predict_mean(&self, state: &[f64], action: &[f64], member: usize) -> Result<Vec<f64>, PlannerError> {
        let (mean, _) = self.delta_distribution(state, action, member)?;
        let mut next = vec![0.0; state.len()];
        self.encoding.apply(state, &mean, &mut next);
        Ok(next)
    }

    /// Advance many rows in place, each through its own member, sampling
    /// the delta when `sample` is set.
    pub fn step_batch(&self, states: &mut [f64], actions: &[f64], member_of_row: &[usize], sample: bool, rng: &mut PushRng) {
        let sd = self.state_dim();
        let ad = self.action_dim;
        let dd = self.encoding.delta_dim();
        let n = member_of_row.len();
        let mut next = vec![0.0; sd];
        let mut delta = vec![0.0; dd];
        for (mi, member) in self.members.iter().enumerate() {
            let rows: Vec<usize> = (0..n).filter(|&r| member_of_row[r] == mi).collect();
            if rows.is_empty() {
                continue;
            }
            let mut x = Vec::with_capacity(rows.len() * self.input_dim());
            for &r in &rows {
                self.encode_input(&states[r * sd..(r + 1) * sd], &actions[r * ad..(r + 1) * ad], &mut x);
            }
            let out = member.forward_slice(&x, rows.len());
            for (k, &r) in rows.iter().enumerate() {
                let o = &out[k * 2 * dd..(k + 1) * 2 * dd];
                for i in 0..dd {
                    let mut z = o[i];
                    if sample {
                        z += libm::exp(0.5 * clamp_log_var(o[dd + i])) * rng::normal(rng);
                    }
                    delta[i] = z * self.output_norm.std[i] + self.output_norm.mean[i];
                }
                let s = &states[r * sd..(r + 1) * sd];
                self.encoding.apply(s, &delta, &mut next);
                states[r * sd..(r + 1) * sd].copy_from_slice(&next);
            }
        }
    }
}

/// Encoded training set: normalized inputs and normalized delta targets.
struct Dataset {
    x: Vec<f64>,
    y: Vec<f64>,
    in_dim: usize,
    out_dim: usize,
}

impl Dataset {
    fn gather(&self, idx: &[usize], x: &mut Vec<f64>, y: &mut Vec<f64>) {
        x.clear();
        y.clear();
        for &i in idx {
            x.extend_from_slice(&self.x[i * self.in_dim..(i + 1) * self.in_dim]);
            y.extend_from_slice(&self.y[i * self.out_dim..(i + 1) * self.out_dim]);
        }
    }
}

/// Normalized-unit NLL `Σ_d (t − μ)² e^{−lv} + lv` summed over rows, and
/// optionally its gradient with respect to the raw network output.
fn nll_rows(out: &[f64], y: &[f64], d: usize, grad: Option<&mut Vec<f64>>, scale: f64) -> f64 {
    let mut loss = 0.0;
    let mut g = grad;
    if let Some(g) = g.as_deref_mut() {
        g.clear();
    }
    for (o, t) in out.chunks_exact(2 * d).zip(y.chunks_exact(d)) {
        for i in 0..d {
            let raw = o[d + i];
            let lv = clamp_log_var(raw);
            let inv = libm::exp(-lv);
            let e = t[i] - o[i];
            loss += e * e * inv + lv;
        }
        if let Some(g) = g.as_deref_mut() {
            for i in 0..d {
                let lv = clamp_log_var(o[d + i]);
                let e = t[i] - o[i];
                g.push(-2.0 * e * libm::exp(-lv) * scale);
            }
            for i in 0..d {
                let raw = o[d + i];
                let lv = clamp_log_var(raw);
                let e = t[i] - o[i];
                let inside = (LOG_VAR_MIN..=LOG_VAR_MAX).contains(&raw);
                g.push(if inside { (1.0 - e * e * libm::exp(-lv)) * scale } else { 0.0 });
            }
        }
    }
    loss
}

/// Fit every member on its own bootstrap resample of the buffer, with
/// holdout early stopping. Normalizers are refit from the whole buffer
/// first.
pub fn train_ensemble(
    ensemble: &mut Ensemble,
    buffer: &TransitionBuffer,
    settings: &TrainSettings,
    rng: &mut PushRng,
) -> Result<TrainReport, PlannerError> {
    if buffer.is_empty() {
        return Err(PlannerError::EmptyBuffer);
    }
    if buffer.state_dim() != ensemble.state_dim() || buffer.action_dim() != ensemble.action_dim() {
        return Err(PlannerError::Dimension("buffer vs ensemble"));
    }
    if settings.batch_size == 0 || !(0.0..1.0).contains(&settings.holdout_fraction) {
        return Err(PlannerError::Config("batch_size must be positive and holdout_fraction in [0, 1)"));
    }
    let n = buffer.len();
    let in_dim = ensemble.input_dim();
    let d = ensemble.encoding.delta_dim();

    let mut raw_x = Vec::with_capacity(n * in_dim);
    let mut raw_y = Vec::with_capacity(n * d);
    for i in 0..n {
        ensemble.encoding.features(buffer.state(i), &mut raw_x);
        raw_x.extend_from_slice(buffer.action(i));
        ensemble.encoding.delta(buffer.state(i), buffer.next_state(i), &mut raw_y);
    }
    let input_norm = Normalizer::fit(&raw_x, in_dim);
    let output_norm = Normalizer::fit(&raw_y, d);
    for row in raw_x.chunks_exact_mut(in_dim) {
        input_norm.normalize_in_place(row);
    }
    for row in raw_y.chunks_exact_mut(d) {
        output_norm.normalize_in_place(row);
    }
    let log_std_sum: f64 = output_norm.std.iter().map(|s| libm::log(*s)).sum();
    ensemble.input_norm = input_norm;
    ensemble.output_norm = output_norm;
    let data = Dataset { x: raw_x, y: raw_y, in_dim, out_dim: d };
    // Original-unit per-sample NLL from the normalized-unit sum.
    let to_original = |sum: f64, rows: usize| 0.5 * (sum / rows as f64 + 2.0 * log_std_sum + d as f64 * libm::log(2.0 * PI));

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let holdout_size = if n >= 2 { ((n as f64 * settings.holdout_fraction) as usize).min(n - 1) } else { 0 };
    let (holdout, train) = order.split_at(holdout_size);

    let mut report = TrainReport { members: Vec::new(), holdout_size };
    let mut xb = Vec::new();
    let mut yb = Vec::new();
    let mut grad_out = Vec::new();
    let (mut hx, mut hy) = (Vec::new(), Vec::new());
    data.gather(holdout, &mut hx, &mut hy);

    for member in ensemble.members.iter_mut() {
        let boot: Vec<usize> = (0..train.len()).map(|_| train[rng.random_range(0..train.len())]).collect();
        let mut adam = Adam::new(member.num_params(), AdamConfig { lr: settings.learning_rate, ..AdamConfig::default() });
        let mut grads = vec![0.0; member.num_params()];
        let mut curve = MemberCurve::default();
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut since_best = 0;
        let mut idx = boot.clone();
        for epoch in 0..settings.epochs {
            idx.shuffle(rng);
            let rows = if settings.max_epoch_rows > 0 { idx.len().min(settings.max_epoch_rows) } else { idx.len() };
            let mut epoch_loss = 0.0;
            for chunk in idx[..rows].chunks(settings.batch_size) {
                data.gather(chunk, &mut xb, &mut yb);
                let (out, trace) = member.forward_slice_traced(&xb, chunk.len());
                epoch_loss += nll_rows(&out, &yb, d, Some(&mut grad_out), 1.0 / chunk.len() as f64);
                grads.iter_mut().for_each(|g| *g = 0.0);
                member.backward_slice(&trace, &grad_out, &mut grads)?;
                adam.step(member.params_mut(), &grads)?;
            }
            curve.train_loss.push(epoch_loss / rows.max(1) as f64);
            if holdout_size > 0 {
                let out = member.forward_slice(&hx, holdout_size);
                let h = to_original(nll_rows(&out, &hy, d, None, 1.0), holdout_size);
                curve.holdout_nll.push(h);
                if best.as_ref().is_none_or(|(b, _)| h < *b) {
                    best = Some((h, member.params().to_vec()));
                    curve.best_epoch = epoch;
                    since_best = 0;
                } else {
                    since_best += 1;
                    if since_best >= settings.patience {
                        break;
                    }
                }
            } else {
                curve.best_epoch = epoch;
            }
        }
        if let Some((_, params)) = best {
            member.params_mut().copy_from_slice(&params);
        }
        report.members.push(curve);
    }
    Ok(report)
}

/// Per-sample original-unit NLL of each member on explicit transitions.
pub fn evaluate_nll(ensemble: &Ensemble, buffer: &TransitionBuffer) -> Vec<f64> {
    let d = ensemble.encoding.delta_dim();
    let log_std_sum: f64 = ensemble.output_norm.std.iter().map(|s| libm::log(*s)).sum();
    let n = buffer.len();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        ensemble.encode_input(buffer.state(i), buffer.action(i), &mut x);
        let start = y.len();
        ensemble.encoding.delta(buffer.state(i), buffer.next_state(i), &mut y);
        ensemble.output_norm.normalize_in_place(&mut y[start..]);
    }
    ensemble
        .members
        .iter()
        .map(|m| {
            let out = m.forward_slice(&x, n);
            0.5 * (nll_rows(&out, &y, d, None, 1.0) / n as f64 + 2.0 * log_std_sum + d as f64 * libm::log(2.0 * PI))
        })
        .collect()
}
