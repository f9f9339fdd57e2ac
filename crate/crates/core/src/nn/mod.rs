//! Single-hidden-layer ReLU networks with hand-written backpropagation.
//!
//! `y = W2 relu(W1 x + b1) + b2`, applied row-wise to a batch. The ReLU
//! derivative at exactly zero is taken to be zero.

mod adam;
pub mod gradcheck;

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

pub use adam::{AdamConfig, AdamState};

use crate::error::check_dim;
use crate::rng::SnotRng;
use crate::{math, Error, Matrix, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MlpParams {
    /// `h x d_in`.
    pub w1: Matrix,
    pub b1: Vec<f64>,
    /// `d_out x h`.
    pub w2: Matrix,
    pub b2: Vec<f64>,
    #[cfg_attr(feature = "serde", serde(skip))]
    version: u64,
}

impl MlpParams {
    pub fn zeros(d_in: usize, hidden: usize, d_out: usize) -> Self {
        Self {
            w1: Matrix::zeros(hidden, d_in),
            b1: vec![0.0; hidden],
            w2: Matrix::zeros(d_out, hidden),
            b2: vec![0.0; d_out],
            version: 0,
        }
    }

    pub fn from_parts(w1: Matrix, b1: Vec<f64>, w2: Matrix, b2: Vec<f64>) -> Result<Self> {
        check_dim(w1.rows(), b1.len())?;
        check_dim(w1.rows(), w2.cols())?;
        check_dim(w2.rows(), b2.len())?;
        Ok(Self { w1, b1, w2, b2, version: 0 })
    }

    /// Every weight and bias uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn init(d_in: usize, hidden: usize, d_out: usize, rng: &mut SnotRng) -> Self {
        let mut p = Self::zeros(d_in, hidden, d_out);
        let a1 = 1.0 / math::sqrt(d_in.max(1) as f64);
        let a2 = 1.0 / math::sqrt(hidden.max(1) as f64);
        for x in p.w1.as_mut_slice().iter_mut().chain(p.b1.iter_mut()) {
            *x = rng.random_range(-a1..=a1);
        }
        for x in p.w2.as_mut_slice().iter_mut().chain(p.b2.iter_mut()) {
            *x = rng.random_range(-a2..=a2);
        }
        p
    }

    pub fn d_in(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.rows()
    }

    pub fn d_out(&self) -> usize {
        self.w2.rows()
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.d_in(), self.hidden(), self.d_out())
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.w1.shape() == other.w1.shape() && self.w2.shape() == other.w2.shape()
    }

    /// Parameter tensors in a fixed order: `w1, b1, w2, b2`.
    pub fn tensors(&self) -> [&[f64]; 4] {
        [self.w1.as_slice(), &self.b1, self.w2.as_slice(), &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        self.version = self.version.wrapping_add(1);
        [self.w1.as_mut_slice(), &mut self.b1, self.w2.as_mut_slice(), &mut self.b2]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &Self) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += a * s;
            }
        }
    }

    pub fn scale(&mut self, a: f64) {
        for t in self.tensors_mut() {
            for x in t {
                *x *= a;
            }
        }
    }

    /// Largest absolute entry across all tensors.
    pub fn max_abs(&self) -> f64 {
        self.tensors().iter().flat_map(|t| t.iter()).fold(0.0, |m, x| m.max(x.abs()))
    }

    pub(crate) fn version(&self) -> u64 {
        self.version
    }
}

/// Activations saved by [`forward`] for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    x: Matrix,
    /// Pre-activations `W1 x + b1`, `batch x h`.
    pre: Matrix,
    version: u64,
    shape: (usize, usize, usize),
}

impl ForwardCache {
    pub fn pre_activations(&self) -> &Matrix {
        &self.pre
    }
}

/// Gradients from [`backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: MlpParams,
    /// `d<grad_out, y>/dx`, `batch x d_in`.
    pub input: Matrix,
}

#[inline]
fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

fn hidden_pre(p: &MlpParams, x: &[f64], out: &mut [f64]) {
    for (k, o) in out.iter_mut().enumerate() {
        let w = p.w1.row(k);
        let mut s = p.b1[k];
        for (a, b) in w.iter().zip(x) {
            s += a * b;
        }
        *o = s;
    }
}

fn output_from_pre(p: &MlpParams, pre: &[f64], out: &mut [f64]) {
    for (o, y) in out.iter_mut().enumerate() {
        let w = p.w2.row(o);
        let mut s = p.b2[o];
        for (a, z) in w.iter().zip(pre) {
            s += a * relu(*z);
        }
        *y = s;
    }
}

/// Batch forward pass with a cache for [`backward`].
pub fn forward(p: &MlpParams, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
    check_dim(p.d_in(), x.cols())?;
    let b = x.rows();
    let mut pre = Matrix::zeros(b, p.hidden());
    let mut y = Matrix::zeros(b, p.d_out());
    for i in 0..b {
        hidden_pre(p, x.row(i), pre.row_mut(i));
        output_from_pre(p, pre.row(i), y.row_mut(i));
    }
    let cache = ForwardCache {
        x: x.clone(),
        pre,
        version: p.version(),
        shape: (p.d_in(), p.hidden(), p.d_out()),
    };
    Ok((y, cache))
}

/// Forward pass without keeping activations.
pub fn predict(p: &MlpParams, x: &Matrix) -> Result<Matrix> {
    check_dim(p.d_in(), x.cols())?;
    let mut pre = vec![0.0; p.hidden()];
    let mut y = Matrix::zeros(x.rows(), p.d_out());
    for i in 0..x.rows() {
        hidden_pre(p, x.row(i), &mut pre);
        output_from_pre(p, &pre, y.row_mut(i));
    }
    Ok(y)
}

/// Single-point forward pass.
pub fn predict_one(p: &MlpParams, x: &[f64]) -> Vec<f64> {
    let mut pre = vec![0.0; p.hidden()];
    let mut y = vec![0.0; p.d_out()];
    hidden_pre(p, x, &mut pre);
    output_from_pre(p, &pre, &mut y);
    y
}

/// Gradients of `sum_ij grad_out[i,j] * y[i,j]` with respect to parameters
/// and inputs.
pub fn backward(p: &MlpParams, cache: &ForwardCache, grad_out: &Matrix) -> Result<Gradients> {
    if cache.version != p.version() || cache.shape != (p.d_in(), p.hidden(), p.d_out()) {
        return Err(Error::Config("forward cache does not match parameters"));
    }
    check_dim(cache.x.rows(), grad_out.rows())?;
    check_dim(p.d_out(), grad_out.cols())?;
    let h = p.hidden();
    let mut g = p.zeros_like();
    let mut gx = Matrix::zeros(cache.x.rows(), p.d_in());
    let mut gz = vec![0.0; h];
    for i in 0..cache.x.rows() {
        let go = grad_out.row(i);
        let pre = cache.pre.row(i);
        let x = cache.x.row(i);
        for (o, &gv) in go.iter().enumerate() {
            g.b2[o] += gv;
            if gv == 0.0 {
                continue;
            }
            let row = g.w2.row_mut(o);
            for (dst, z) in row.iter_mut().zip(pre) {
                *dst += gv * relu(*z);
            }
        }
        for k in 0..h {
            gz[k] = if pre[k] > 0.0 {
                go.iter().enumerate().map(|(o, gv)| gv * p.w2[(o, k)]).sum()
            } else {
                0.0
            };
        }
        let gxi = gx.row_mut(i);
        for k in 0..h {
            let gk = gz[k];
            if gk == 0.0 {
                continue;
            }
            g.b1[k] += gk;
            let w = p.w1.row(k);
            for (l, dst) in gxi.iter_mut().enumerate() {
                *dst += gk * w[l];
            }
            let gw = g.w1.row_mut(k);
            for (dst, xl) in gw.iter_mut().zip(x) {
                *dst += gk * xl;
            }
        }
    }
    Ok(Gradients { params: g, input: gx })
}

/// Input Jacobian `W2 diag(relu'(W1 x + b1)) W1`, shape `d_out x d_in`.
pub fn jacobian_map(p: &MlpParams, x: &[f64]) -> Matrix {
    let mut pre = vec![0.0; p.hidden()];
    hidden_pre(p, x, &mut pre);
    let mut j = Matrix::zeros(p.d_out(), p.d_in());
    for (k, z) in pre.iter().enumerate() {
        if *z <= 0.0 {
            continue;
        }
        let w1 = p.w1.row(k);
        for o in 0..p.d_out() {
            let a = p.w2[(o, k)];
            if a == 0.0 {
                continue;
            }
            for (dst, w) in j.row_mut(o).iter_mut().zip(w1) {
                *dst += a * w;
            }
        }
    }
    j
}

/// Mean squared input-gradient norm of a scalar network over the batch,
/// `(1/B) sum_b |grad_x f(x_b)|^2`, with its parameter gradient scaled by
/// `scale` and accumulated into `acc`.
pub fn grad_norm_penalty(p: &MlpParams, x: &Matrix, scale: f64, acc: &mut MlpParams) -> Result<f64> {
    check_dim(1, p.d_out())?;
    check_dim(p.d_in(), x.cols())?;
    if !acc.same_shape(p) {
        return Err(Error::Config("gradient accumulator shape mismatch"));
    }
    let b = x.rows();
    if b == 0 {
        return Ok(0.0);
    }
    let h = p.hidden();
    let d = p.d_in();
    let mut pre = vec![0.0; h];
    let mut r = vec![0.0; d];
    let mut total = 0.0;
    let coef = 2.0 * scale / b as f64;
    for i in 0..b {
        hidden_pre(p, x.row(i), &mut pre);
        r.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..h {
            if pre[k] > 0.0 {
                let a = p.w2[(0, k)];
                for (dst, w) in r.iter_mut().zip(p.w1.row(k)) {
                    *dst += a * w;
                }
            }
        }
        total += r.iter().map(|v| v * v).sum::<f64>();
        if scale == 0.0 {
            continue;
        }
        for k in 0..h {
            if pre[k] <= 0.0 {
                continue;
            }
            let a = p.w2[(0, k)];
            let w1r: f64 = p.w1.row(k).iter().zip(&r).map(|(w, v)| w * v).sum();
            acc.w2[(0, k)] += coef * w1r;
            for (dst, v) in acc.w1.row_mut(k).iter_mut().zip(&r) {
                *dst += coef * a * v;
            }
        }
    }
    acc.version = acc.version.wrapping_add(1);
    Ok(total / b as f64)
}

#[cfg(test)]
mod tests;
