//! Dense networks with hand-written reverse-mode gradients.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub mod check;
mod mlp;
mod tensor;

pub use mlp::{param_count, Activation, Mlp, Trace};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("{what}: expected shape {expected:?}, got {actual:?}")]
    ShapeMismatch { what: &'static str, expected: Vec<usize>, actual: Vec<usize> },
    #[error("layer dims {0:?} need an input, at least one hidden layer and an output, all non-zero")]
    InvalidDims(Vec<usize>),
    #[error("backward called without a recorded trace")]
    NoTrace,
}

pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 4.0;

/// Diagonal Gaussian prediction, `[batch, dim]` each.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHead {
    pub mean: Tensor,
    pub log_var: Tensor,
}

impl GaussianHead {
    /// Split a `[batch, 2·dim]` network output into mean and clamped
    /// log-variance halves.
    pub fn from_output(out: &Tensor) -> Result<Self, NnError> {
        let n = out.rows();
        let c = out.cols();
        if out.shape().len() != 2 || !c.is_multiple_of(2) {
            return Err(NnError::ShapeMismatch {
                what: "gaussian head output",
                expected: vec![n, 2 * (c / 2)],
                actual: out.shape().to_vec(),
            });
        }
        let d = c / 2;
        let mut mean = Vec::with_capacity(n * d);
        let mut log_var = Vec::with_capacity(n * d);
        for r in 0..n {
            let row = out.row(r);
            mean.extend_from_slice(&row[..d]);
            log_var.extend(row[d..].iter().map(|&v| clamp_log_var(v)));
        }
        Ok(Self { mean: Tensor::new(vec![n, d], mean)?, log_var: Tensor::new(vec![n, d], log_var)? })
    }

    /// Chain a `(d mean, d log_var)` pair back to the raw `[batch, 2·dim]`
    /// output; the clamp passes no gradient outside its range.
    pub fn output_gradient(raw: &Tensor, grad_mean: &Tensor, grad_log_var: &Tensor) -> Tensor {
        let n = raw.rows();
        let d = raw.cols() / 2;
        let mut g = Vec::with_capacity(n * 2 * d);
        for r in 0..n {
            g.extend_from_slice(grad_mean.row(r));
            for (gv, &raw_v) in grad_log_var.row(r).iter().zip(&raw.row(r)[d..]) {
                g.push(if (LOG_VAR_MIN..=LOG_VAR_MAX).contains(&raw_v) { *gv } else { 0.0 });
            }
        }
        Tensor::new(vec![n, 2 * d], g).expect("sizes agree")
    }
}

pub fn clamp_log_var(v: f64) -> f64 {
    v.clamp(LOG_VAR_MIN, LOG_VAR_MAX)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NllOutput {
    pub loss: f64,
    pub grad_mean: Tensor,
    pub grad_log_var: Tensor,
}

/// Gaussian NLL without the `ln 2π` constant and the factor ½:
/// `mean_n Σ_d (t − μ)² e^{−lv} + lv`, with gradients per element.
pub fn gaussian_nll(head: &GaussianHead, target: &Tensor) -> Result<NllOutput, NnError> {
    if head.mean.shape() != target.shape() || head.log_var.shape() != target.shape() {
        return Err(NnError::ShapeMismatch { what: "nll target", expected: head.mean.shape().to_vec(), actual: target.shape().to_vec() });
    }
    let n = target.rows().max(1) as f64;
    let mut loss = 0.0;
    let mut gm = Vec::with_capacity(target.len());
    let mut gl = Vec::with_capacity(target.len());
    for ((&t, &mu), &lv) in target.data().iter().zip(head.mean.data()).zip(head.log_var.data()) {
        let inv = libm::exp(-lv);
        let e = t - mu;
        loss += e * e * inv + lv;
        gm.push(-2.0 * e * inv / n);
        gl.push((1.0 - e * e * inv) / n);
    }
    Ok(NllOutput {
        loss: loss / n,
        grad_mean: Tensor::new(target.shape().to_vec(), gm)?,
        grad_log_var: Tensor::new(target.shape().to_vec(), gl)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adaptive-moment optimizer state for one flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(n: usize, config: AdamConfig) -> Self {
        Self { config, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NnError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NnError::ShapeMismatch {
                what: "optimizer parameters",
                expected: vec![self.m.len()],
                actual: vec![params.len(), grads.len()],
            });
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - libm::pow(beta1, self.t as f64);
        let c2 = 1.0 - libm::pow(beta2, self.t as f64);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (libm::sqrt(vh) + eps);
        }
        Ok(())
    }
}
