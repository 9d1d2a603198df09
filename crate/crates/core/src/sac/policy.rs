use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{LN_2, PI};

use super::SacError;
use crate::nn::{Activation, Mlp};
use crate::planner::ActionBox;
use crate::rng::{self, PushRng};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// `ln(1 − tanh²(u))`, stable for large `|u|`.
pub fn squash_log_det(u: f64) -> f64 {
    let x = -2.0 * u;
    let softplus = x.max(0.0) + libm::log1p(libm::exp(-libm::fabs(x)));
    2.0 * (LN_2 - u - softplus)
}

/// Squashed-Gaussian policy: `a = c + h·tanh(μ + σ·ε)` with `c`, `h` the
/// center and half range of the action box.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    net: Mlp,
    center: Vec<f64>,
    half: Vec<f64>,
    bounds: ActionBox,
}

/// Reparameterized draws for a batch. All fields are row-major per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySample {
    pub actions: Vec<f64>,
    pub log_prob: Vec<f64>,
    /// Pre-squash value `u`.
    pub pre_squash: Vec<f64>,
    pub mean: Vec<f64>,
    /// Clamped log standard deviation.
    pub log_std: Vec<f64>,
}

impl PolicyNet {
    pub fn new(obs_dim: usize, bounds: ActionBox, hidden: &[usize], rng: &mut PushRng) -> Result<Self, SacError> {
        let mut dims = vec![obs_dim];
        dims.extend_from_slice(hidden);
        dims.push(2 * bounds.dim());
        Self::from_parts(Mlp::new(&dims, Activation::Relu, rng)?, bounds)
    }

    pub fn from_parts(net: Mlp, bounds: ActionBox) -> Result<Self, SacError> {
        if net.output_dim() != 2 * bounds.dim() {
            return Err(SacError::Dimension("policy output must be twice the action dimension"));
        }
        if bounds.half_range().iter().any(|h| !(*h > 0.0)) {
            return Err(SacError::Config("policy action box must have positive width"));
        }
        Ok(Self { center: bounds.center(), half: bounds.half_range(), net, bounds })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn bounds(&self) -> &ActionBox {
        &self.bounds
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.half.len()
    }

    /// Map a pre-squash value of dimension `j` into the box.
    pub fn squash(&self, j: usize, u: f64) -> f64 {
        (self.center[j] + self.half[j] * libm::tanh(u)).clamp(self.bounds.lower[j], self.bounds.upper[j])
    }

    /// Split raw network rows into means and clamped log-stds.
    pub fn heads(&self, raw: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let a = self.action_dim();
        let mut mean = Vec::with_capacity(raw.len() / 2);
        let mut log_std = Vec::with_capacity(raw.len() / 2);
        for row in raw.chunks_exact(2 * a) {
            mean.extend_from_slice(&row[..a]);
            log_std.extend(row[a..].iter().map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)));
        }
        (mean, log_std)
    }

    /// Log density of the squashed sample given its Gaussian parameters and
    /// standard-normal noise.
    fn log_prob_from(&self, j: usize, u: f64, log_std: f64, eps: f64) -> f64 {
        -0.5 * eps * eps - log_std - 0.5 * libm::log(2.0 * PI) - libm::log(self.half[j]) - squash_log_det(u)
    }

    /// Squash `mean + std·noise` for `n` rows; `noise` is `n × action_dim`.
    pub fn sample_with_noise(&self, obs: &[f64], n: usize, noise: &[f64]) -> Result<PolicySample, SacError> {
        let a = self.action_dim();
        if obs.len() != n * self.obs_dim() || noise.len() != n * a {
            return Err(SacError::Dimension("policy batch"));
        }
        let raw = self.net.forward_slice(obs, n);
        Ok(self.sample_from_raw(&raw, noise))
    }

    pub(crate) fn sample_from_raw(&self, raw: &[f64], noise: &[f64]) -> PolicySample {
        let a = self.action_dim();
        let (mean, log_std) = self.heads(raw);
        let mut out = PolicySample {
            actions: Vec::with_capacity(mean.len()),
            log_prob: vec![0.0; mean.len() / a],
            pre_squash: Vec::with_capacity(mean.len()),
            mean: Vec::new(),
            log_std: Vec::new(),
        };
        for (i, ((m, ls), e)) in mean.iter().zip(&log_std).zip(noise).enumerate() {
            let j = i % a;
            let u = m + libm::exp(*ls) * e;
            out.pre_squash.push(u);
            out.actions.push(self.squash(j, u));
            out.log_prob[i / a] += self.log_prob_from(j, u, *ls, *e);
        }
        out.mean = mean;
        out.log_std = log_std;
        out
    }

    /// Single action: `tanh(mean)` mapped to the box when deterministic,
    /// otherwise a squashed Gaussian draw.
    pub fn act(&self, obs: &[f64], deterministic: bool, rng: &mut PushRng) -> Result<Vec<f64>, SacError> {
        let a = self.action_dim();
        let noise: Vec<f64> = if deterministic { vec![0.0; a] } else { (0..a).map(|_| rng::normal(rng)).collect() };
        // Zero noise gives u = mean.
        Ok(self.sample_with_noise(obs, 1, &noise)?.actions)
    }
}
