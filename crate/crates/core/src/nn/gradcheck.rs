//! Central finite-difference checks for network gradients.
//!
//! Each check takes the analytic routine as an argument so callers can run
//! the same harness against a deliberately broken implementation.

use alloc::vec::Vec;

use super::{forward, jacobian_map, predict, predict_one, ForwardCache, Gradients, MlpParams};
use crate::{Matrix, Result};

/// Default perturbation for central differences.
pub const FD_STEP: f64 = 1e-5;

/// `|a - b| / max(|a|, |b|, 1e-3)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradReport {
    pub max_rel_error: f64,
    pub checked: usize,
}

impl GradReport {
    fn merge(self, other: GradReport) -> GradReport {
        GradReport {
            max_rel_error: self.max_rel_error.max(other.max_rel_error),
            checked: self.checked + other.checked,
        }
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.checked > 0 && self.max_rel_error <= tol
    }
}

/// Compares `analytic` with central differences of `f` over every parameter.
pub fn check_param_grads<F>(p: &MlpParams, analytic: &MlpParams, step: f64, mut f: F) -> GradReport
where
    F: FnMut(&MlpParams) -> f64,
{
    let mut work = p.clone();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (t, grads) in analytic.tensors().iter().enumerate() {
        for i in 0..grads.len() {
            let orig = work.tensors()[t][i];
            work.tensors_mut()[t][i] = orig + step;
            let up = f(&work);
            work.tensors_mut()[t][i] = orig - step;
            let down = f(&work);
            work.tensors_mut()[t][i] = orig;
            worst = worst.max(rel_err(grads[i], (up - down) / (2.0 * step)));
            checked += 1;
        }
    }
    GradReport { max_rel_error: worst, checked }
}

/// Smallest `|W1 x + b1|` over the batch; small values mean a finite
/// difference may straddle a ReLU kink.
pub fn min_abs_preactivation(p: &MlpParams, x: &Matrix) -> f64 {
    match forward(p, x) {
        Ok((_, cache)) => cache.pre_activations().as_slice().iter().fold(f64::INFINITY, |m, z| m.min(z.abs())),
        Err(_) => 0.0,
    }
}

/// Checks a backward routine on `<grad_out, f(x)>` for parameters and inputs.
pub fn check_backward_with<B>(p: &MlpParams, x: &Matrix, grad_out: &Matrix, backward_fn: B) -> Result<GradReport>
where
    B: Fn(&MlpParams, &ForwardCache, &Matrix) -> Result<Gradients>,
{
    let (_, cache) = forward(p, x)?;
    let g = backward_fn(p, &cache, grad_out)?;
    let inner = |q: &MlpParams, xs: &Matrix| -> f64 {
        let y = predict(q, xs).expect("shape checked");
        y.as_slice().iter().zip(grad_out.as_slice()).map(|(a, b)| a * b).sum()
    };
    let params = check_param_grads(p, &g.params, FD_STEP, |q| inner(q, x));

    let mut xs = x.clone();
    let mut worst = 0.0f64;
    for k in 0..xs.as_slice().len() {
        let orig = xs.as_slice()[k];
        xs.as_mut_slice()[k] = orig + FD_STEP;
        let up = inner(p, &xs);
        xs.as_mut_slice()[k] = orig - FD_STEP;
        let down = inner(p, &xs);
        xs.as_mut_slice()[k] = orig;
        worst = worst.max(rel_err(g.input.as_slice()[k], (up - down) / (2.0 * FD_STEP)));
    }
    Ok(params.merge(GradReport { max_rel_error: worst, checked: xs.as_slice().len() }))
}

/// [`check_backward_with`] using the crate's own backward pass.
pub fn check_backward(p: &MlpParams, x: &Matrix, grad_out: &Matrix) -> Result<GradReport> {
    check_backward_with(p, x, grad_out, super::backward)
}

/// Largest absolute entry of `jacobian_fn(p, x)` minus a central-difference
/// Jacobian.
pub fn check_jacobian_with<J>(p: &MlpParams, x: &[f64], step: f64, jacobian_fn: J) -> f64
where
    J: Fn(&MlpParams, &[f64]) -> Matrix,
{
    let j = jacobian_fn(p, x);
    let mut xs: Vec<f64> = x.to_vec();
    let mut worst = 0.0f64;
    for l in 0..x.len() {
        xs[l] = x[l] + step;
        let up = predict_one(p, &xs);
        xs[l] = x[l] - step;
        let down = predict_one(p, &xs);
        xs[l] = x[l];
        for o in 0..p.d_out() {
            let fd = (up[o] - down[o]) / (2.0 * step);
            worst = worst.max((fd - j[(o, l)]).abs());
        }
    }
    worst
}

pub fn check_jacobian(p: &MlpParams, x: &[f64]) -> f64 {
    check_jacobian_with(p, x, FD_STEP, jacobian_map)
}
