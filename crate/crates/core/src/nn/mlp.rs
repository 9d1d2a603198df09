use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{NnError, Tensor};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => libm::tanh(z),
        }
    }

    /// Derivative given pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

/// Fully connected network: hidden layers use `activation`, the output layer
/// is affine.
///
/// All parameters live in one flat vector. Layer `l` stores its weights as an
/// `[in, out]` row-major block followed by `out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    dims: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

/// Activations recorded by a forward pass.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    dims: Vec<usize>,
    batch: usize,
    /// Input to each layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

pub fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// All-zero parameters.
    pub fn zeros(dims: &[usize], activation: Activation) -> Result<Self, NnError> {
        if dims.len() < 3 || dims.contains(&0) {
            return Err(NnError::InvalidDims(dims.to_vec()));
        }
        Ok(Self { dims: dims.to_vec(), activation, params: vec![0.0; param_count(dims)] })
    }

    /// Weights and biases uniform in `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], activation: Activation, rng: &mut R) -> Result<Self, NnError> {
        let mut m = Self::zeros(dims, activation)?;
        let mut off = 0;
        for w in dims.windows(2) {
            let bound = 1.0 / libm::sqrt(w[0] as f64);
            for p in &mut m.params[off..off + w[0] * w[1] + w[1]] {
                *p = rng.random_range(-bound..bound);
            }
            off += w[0] * w[1] + w[1];
        }
        Ok(m)
    }

    pub fn from_params(dims: &[usize], activation: Activation, params: Vec<f64>) -> Result<Self, NnError> {
        let mut m = Self::zeros(dims, activation)?;
        if params.len() != m.params.len() {
            return Err(NnError::ShapeMismatch { what: "parameters", expected: vec![m.params.len()], actual: vec![params.len()] });
        }
        m.params = params;
        Ok(m)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        self.dims[self.dims.len() - 1]
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn layers(&self) -> usize {
        self.dims.len() - 1
    }

    /// Offset of layer `l`'s weight block; its biases follow at
    /// `offset + in * out`.
    pub fn layer_offset(&self, l: usize) -> usize {
        param_count(&self.dims[..=l])
    }

    /// `self ← tau·other + (1 − tau)·self`.
    pub fn soft_update_from(&mut self, other: &Mlp, tau: f64) {
        debug_assert_eq!(self.dims, other.dims);
        for (p, q) in self.params.iter_mut().zip(&other.params) {
            *p = tau * q + (1.0 - tau) * *p;
        }
    }

    fn affine(&self, l: usize, x: &[f64], n: usize, out: &mut Vec<f64>) {
        let (din, dout) = (self.dims[l], self.dims[l + 1]);
        let off = self.layer_offset(l);
        let w = &self.params[off..off + din * dout];
        let b = &self.params[off + din * dout..off + din * dout + dout];
        out.clear();
        out.reserve(n * dout);
        for r in 0..n {
            out.extend_from_slice(b);
            let o = &mut out[r * dout..(r + 1) * dout];
            for (i, &xi) in x[r * din..(r + 1) * din].iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                for (oj, wij) in o.iter_mut().zip(&w[i * dout..(i + 1) * dout]) {
                    *oj += xi * wij;
                }
            }
        }
    }

    /// Untraced forward pass over `n` rows packed in `x`.
    pub fn forward_slice(&self, x: &[f64], n: usize) -> Vec<f64> {
        debug_assert_eq!(x.len(), n * self.input_dim());
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for l in 0..self.layers() {
            self.affine(l, &cur, n, &mut next);
            if l + 1 < self.layers() {
                for v in next.iter_mut() {
                    *v = self.activation.apply(*v);
                }
            }
            core::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    /// Traced forward pass over `n` rows packed in `x`.
    pub fn forward_slice_traced(&self, x: &[f64], n: usize) -> (Vec<f64>, Trace) {
        debug_assert_eq!(x.len(), n * self.input_dim());
        let mut trace = Trace { dims: self.dims.clone(), batch: n, inputs: Vec::new(), pre: Vec::new() };
        let mut cur = x.to_vec();
        for l in 0..self.layers() {
            let mut z = Vec::new();
            self.affine(l, &cur, n, &mut z);
            trace.inputs.push(cur);
            if l + 1 < self.layers() {
                let a = z.iter().map(|&v| self.activation.apply(v)).collect();
                trace.pre.push(z);
                cur = a;
            } else {
                cur = z;
            }
        }
        (cur, trace)
    }

    pub fn forward(&self, input: &Tensor) -> Result<(Tensor, Trace), NnError> {
        let n = input.expect_matrix("mlp input", self.input_dim())?;
        let (out, trace) = self.forward_slice_traced(input.data(), n);
        Ok((Tensor::new(vec![n, self.output_dim()], out)?, trace))
    }

    pub fn predict(&self, input: &Tensor) -> Result<Tensor, NnError> {
        let n = input.expect_matrix("mlp input", self.input_dim())?;
        Tensor::new(vec![n, self.output_dim()], self.forward_slice(input.data(), n))
    }

    /// Reverse pass over packed rows. Parameter gradients are accumulated
    /// into `grads`; the input gradient is returned.
    pub fn backward_slice(&self, trace: &Trace, grad_out: &[f64], grads: &mut [f64]) -> Result<Vec<f64>, NnError> {
        if trace.is_empty() {
            return Err(NnError::NoTrace);
        }
        if trace.dims != self.dims {
            return Err(NnError::ShapeMismatch { what: "trace dims", expected: self.dims.clone(), actual: trace.dims.clone() });
        }
        let n = trace.batch;
        if grad_out.len() != n * self.output_dim() {
            return Err(NnError::ShapeMismatch {
                what: "output gradient",
                expected: vec![n, self.output_dim()],
                actual: vec![grad_out.len()],
            });
        }
        if grads.len() != self.params.len() {
            return Err(NnError::ShapeMismatch { what: "gradient buffer", expected: vec![self.params.len()], actual: vec![grads.len()] });
        }
        let mut dz = grad_out.to_vec();
        for l in (0..self.layers()).rev() {
            let (din, dout) = (self.dims[l], self.dims[l + 1]);
            let off = self.layer_offset(l);
            let x = &trace.inputs[l];
            let w = &self.params[off..off + din * dout];
            {
                let (gw, gb) = grads[off..off + din * dout + dout].split_at_mut(din * dout);
                for r in 0..n {
                    let dzr = &dz[r * dout..(r + 1) * dout];
                    for (g, d) in gb.iter_mut().zip(dzr) {
                        *g += d;
                    }
                    for (i, &xi) in x[r * din..(r + 1) * din].iter().enumerate() {
                        if xi == 0.0 {
                            continue;
                        }
                        for (g, d) in gw[i * dout..(i + 1) * dout].iter_mut().zip(dzr) {
                            *g += xi * d;
                        }
                    }
                }
            }
            let mut dx = vec![0.0; n * din];
            for r in 0..n {
                let dzr = &dz[r * dout..(r + 1) * dout];
                for (i, dxi) in dx[r * din..(r + 1) * din].iter_mut().enumerate() {
                    *dxi = w[i * dout..(i + 1) * dout].iter().zip(dzr).map(|(a, b)| a * b).sum();
                }
            }
            if l > 0 {
                let z = &trace.pre[l - 1];
                for ((d, &zv), &a) in dx.iter_mut().zip(z).zip(x.iter()) {
                    *d *= self.activation.derivative(zv, a);
                }
            }
            dz = dx;
        }
        Ok(dz)
    }

    /// Tensor form of [`Mlp::backward_slice`]; returns `(param_grads, input_grad)`.
    pub fn backward(&self, trace: &Trace, grad_out: &Tensor) -> Result<(Vec<f64>, Tensor), NnError> {
        if trace.is_empty() {
            return Err(NnError::NoTrace);
        }
        grad_out.expect_matrix("output gradient", self.output_dim())?;
        let mut grads = vec![0.0; self.params.len()];
        let dx = self.backward_slice(trace, grad_out.data(), &mut grads)?;
        Ok((grads, Tensor::new(vec![trace.batch, self.input_dim()], dx)?))
    }
}
