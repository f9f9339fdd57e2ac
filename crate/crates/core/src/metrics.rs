//! Evaluation quantities for trained maps and rate experiments.

use alloc::vec;
use alloc::vec::Vec;

use crate::analytic::uniform_quantile_atoms;
use crate::discrete_ot::{plan_distance, solve_1d, solve_exact_with, wasserstein_with, CoupledPlan, Cost, Order, SolverOptions};
use crate::linalg::spectral_norm;
use crate::measures::{sample, DatasetKind, DatasetSpec, EmpiricalMeasure, Side};
use crate::nn::{jacobian_map, predict, MlpParams};
use crate::{math, Error, Matrix, Result};

/// Reference atoms for the normal marginal in [`normal_error`].
pub const NORMAL_REFERENCE_ATOMS: usize = 2048;

/// Power-iteration settings for Jacobian norms.
pub const POWER_ITERS: usize = 50;
pub const POWER_TOL: f64 = 1e-8;

/// `T` applied row-wise to `mu`, keeping the weights.
pub fn pushforward(t: &MlpParams, mu: &EmpiricalMeasure) -> Result<EmpiricalMeasure> {
    let y = predict(t, mu.points())?;
    EmpiricalMeasure::new(y, mu.weights().to_vec())
}

/// `|sum_i w_i T(x_i)[..d-m]|`, the mean of the first `d - m` output
/// coordinates (Euclidean norm when that block has several coordinates).
pub fn tangential_error(t: &MlpParams, source: &EmpiricalMeasure, normal_dim: usize) -> Result<f64> {
    let y = predict(t, source.points())?;
    tangential_error_points(&y, source.weights(), normal_dim)
}

pub fn tangential_error_points(y: &Matrix, weights: &[f64], normal_dim: usize) -> Result<f64> {
    if normal_dim >= y.cols() {
        return Err(Error::Config("normal block must leave a tangential block"));
    }
    let k = y.cols() - normal_dim;
    let mut mean = vec![0.0; k];
    for (row, w) in y.iter_rows().zip(weights) {
        for (m, v) in mean.iter_mut().zip(&row[..k]) {
            *m += w * v;
        }
    }
    Ok(math::norm(&mean))
}

/// Reference law of the normal block of `target`: midpoint quantiles when
/// that block is a single uniform coordinate, otherwise a fixed sample.
pub fn normal_reference(target: &DatasetSpec, atoms: usize) -> Result<EmpiricalMeasure> {
    let d = target.ambient_dim;
    let m = target.manifold_dim;
    if m == 1 && target.kind == DatasetKind::Perpendicular && target.side == Side::Target {
        return uniform_quantile_atoms(atoms, -1.0, 1.0);
    }
    sample(target, atoms, 0x6e6f726d)?.project(d - m..d)
}

/// Squared `W_2` between the pushforward of the last `m` coordinates and
/// the target's normal marginal (`m = target.manifold_dim`).
pub fn normal_error(t: &MlpParams, source: &EmpiricalMeasure, target: &DatasetSpec) -> Result<f64> {
    let y = predict(t, source.points())?;
    normal_error_points(&y, source.weights(), target, NORMAL_REFERENCE_ATOMS)
}

pub fn normal_error_points(y: &Matrix, weights: &[f64], target: &DatasetSpec, atoms: usize) -> Result<f64> {
    let d = y.cols();
    let m = target.manifold_dim;
    if m > d {
        return Err(Error::Dimension { expected: d, found: m });
    }
    let pushed = EmpiricalMeasure::new(y.clone(), weights.to_vec())?.project(d - m..d)?;
    let reference = normal_reference(target, atoms)?;
    let sq = Cost::new(crate::discrete_ot::CostKind::SqEuclideanHalf, 2.0)?;
    if m == 1 {
        Ok(solve_1d(&pushed, &reference, &sq)?.cost_value)
    } else {
        let opts = SolverOptions { max_entries: usize::MAX };
        Ok(solve_exact_with(&pushed, &reference, &sq, &opts)?.0.cost_value)
    }
}

/// `(d_cost, d_target)`: `|W_2^2(mu, nu) - sum w_i |T(x_i) - x_i|^2|` and
/// `W_2^2(T_# mu, nu)`.
pub fn d_cost_target(t: &MlpParams, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, opts: &SolverOptions) -> Result<(f64, f64)> {
    let y = predict(t, mu.points())?;
    d_cost_target_points(&y, mu, nu, opts)
}

pub fn d_cost_target_points(y: &Matrix, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, opts: &SolverOptions) -> Result<(f64, f64)> {
    let w2 = wasserstein_with(mu, nu, Order::Two, opts)?;
    let moved: f64 = y.iter_rows().zip(mu.points().iter_rows()).zip(mu.weights()).map(|((a, b), w)| w * math::sq_dist(a, b)).sum();
    let pushed = EmpiricalMeasure::new(y.clone(), mu.weights().to_vec())?;
    let w2_push = wasserstein_with(&pushed, nu, Order::Two, opts)?;
    Ok(((w2 * w2 - moved).abs(), w2_push * w2_push))
}

pub fn d_cost(t: &MlpParams, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    d_cost_target(t, mu, nu, &SolverOptions::default()).map(|r| r.0)
}

pub fn d_target(t: &MlpParams, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    d_cost_target(t, mu, nu, &SolverOptions::default()).map(|r| r.1)
}

/// Largest spectral norm of the input Jacobian over `probes`.
pub fn sup_jacobian_norm(t: &MlpParams, probes: &Matrix) -> Result<f64> {
    if probes.rows() == 0 {
        return Err(Error::Empty("probe set"));
    }
    crate::error::check_dim(t.d_in(), probes.cols())?;
    Ok(probes
        .iter_rows()
        .map(|x| spectral_norm(&jacobian_map(t, x), POWER_ITERS, POWER_TOL))
        .fold(0.0, f64::max))
}

/// Mean distance at one sample size.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RatePoint {
    pub n: u64,
    pub value: f64,
    pub replicates: usize,
    pub std_err: f64,
}

impl RatePoint {
    /// Mean and standard error of replicate values.
    pub fn from_replicates(n: u64, values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("replicates"));
        }
        let k = values.len();
        let std_err = if k > 1 { math::sqrt(math::sample_variance(values) / k as f64) } else { 0.0 };
        Ok(Self { n, value: math::mean(values), replicates: k, std_err })
    }
}

/// Least-squares line `ln value = intercept + slope ln N`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n_points: usize,
}

pub fn fit_rate(points: &[RatePoint]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::Config("rate fit needs at least three points"));
    }
    if points.iter().any(|p| !(p.value > 0.0) || p.n == 0) {
        return Err(Error::Domain("rate fit needs positive values and sizes"));
    }
    let mut ns: Vec<u64> = points.iter().map(|p| p.n).collect();
    ns.sort_unstable();
    ns.dedup();
    if ns.len() != points.len() {
        return Err(Error::Config("rate fit needs distinct sample sizes"));
    }
    let xs: Vec<f64> = points.iter().map(|p| math::ln(p.n as f64)).collect();
    let ys: Vec<f64> = points.iter().map(|p| math::ln(p.value)).collect();
    let mx = math::mean(&xs);
    let my = math::mean(&ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { ((sxy * sxy) / (sxx * syy)).clamp(0.0, 1.0) };
    Ok(RateFit { slope, intercept, r2, n_points: points.len() })
}

/// Potential families with closed-form c-transforms under `½|x-y|²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum PotentialFamily {
    /// `V(y) = theta . y`, `theta` in `R^d`.
    LinearPotential,
    /// `V(y) = theta |y|^2 / 2`, scalar `theta < 1`.
    QuadraticPotential,
}

/// Gradient and Hessian of the reduced semi-dual `J(theta)` by three routes.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianReport {
    /// Envelope-theorem formulas: integrals of `grad_theta V`, its Hessian and
    /// the `G^T grad_x T G` correction along the recovered map.
    pub grad_formula: Vec<f64>,
    pub hess_formula: Matrix,
    /// Central differences of the closed-form `J`.
    pub grad_fd: Vec<f64>,
    pub hess_fd: Matrix,
    /// Direct differentiation of the closed-form `J`.
    pub grad_closed: Vec<f64>,
    pub hess_closed: Matrix,
    pub max_discrepancy: f64,
}

/// Central-difference step for gradients in [`hessian_check`].
pub const HESSIAN_GRAD_STEP: f64 = 1e-5;
/// Central-difference step for Hessians in [`hessian_check`].
pub const HESSIAN_STEP: f64 = 1e-4;

fn family_dim(family: PotentialFamily, d: usize) -> usize {
    match family {
        PotentialFamily::LinearPotential => d,
        PotentialFamily::QuadraticPotential => 1,
    }
}

/// `J(theta) = sum mu_i V^c(x_i) + sum nu_j V(y_j)` in closed form.
pub fn reduced_semidual(family: PotentialFamily, theta: &[f64], mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    crate::error::check_dim(mu.dim(), nu.dim())?;
    crate::error::check_dim(family_dim(family, mu.dim()), theta.len())?;
    let wsum = |m: &EmpiricalMeasure, f: &dyn Fn(&[f64]) -> f64| -> f64 { m.points().iter_rows().zip(m.weights()).map(|(p, w)| w * f(p)).sum() };
    match family {
        PotentialFamily::LinearPotential => {
            let th2: f64 = theta.iter().map(|t| t * t).sum();
            let dot = |p: &[f64]| -> f64 { p.iter().zip(theta).map(|(a, b)| a * b).sum() };
            Ok(wsum(mu, &|x| -dot(x) - 0.5 * th2) + wsum(nu, &dot))
        }
        PotentialFamily::QuadraticPotential => {
            let t = theta[0];
            if !(t < 1.0) {
                return Err(Error::Domain("quadratic potential needs theta < 1"));
            }
            let sq = |p: &[f64]| -> f64 { p.iter().map(|v| v * v).sum() };
            Ok(wsum(mu, &|x| -0.5 * sq(x) * t / (1.0 - t)) + wsum(nu, &|y| 0.5 * t * sq(y)))
        }
    }
}

pub fn hessian_check(family: PotentialFamily, theta: &[f64], mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<HessianReport> {
    let d = mu.dim();
    let p = family_dim(family, d);
    let j = |th: &[f64]| reduced_semidual(family, th, mu, nu);
    let _ = j(theta)?;
    if family == PotentialFamily::QuadraticPotential && theta[0] + HESSIAN_STEP >= 1.0 {
        return Err(Error::Domain("quadratic potential needs theta < 1"));
    }
    let mean_x = mu.mean();
    let mean_y = nu.mean();
    let msq = |m: &EmpiricalMeasure| -> f64 { m.points().iter_rows().zip(m.weights()).map(|(r, w)| w * r.iter().map(|v| v * v).sum::<f64>()).sum() };

    // Formula route, written per family in terms of grad_theta V, its
    // Hessian (zero for both families), G = grad_y grad_theta V at T(x), and
    // grad_x T.
    let mut grad_formula = vec![0.0; p];
    let mut hess_formula = Matrix::zeros(p, p);
    match family {
        PotentialFamily::LinearPotential => {
            // grad_theta V(y) = y, T(x) = x + theta, G = I, grad_x T = I.
            for (k, g) in grad_formula.iter_mut().enumerate() {
                let tx: f64 = mu.points().iter_rows().zip(mu.weights()).map(|(x, w)| w * (x[k] + theta[k])).sum();
                *g = mean_y[k] - tx;
            }
            for w in mu.weights() {
                let g = Matrix::identity(d);
                let grad_t = Matrix::identity(d);
                let corr = g.transpose().matmul(&grad_t)?.matmul(&g)?;
                for (h, c) in hess_formula.as_mut_slice().iter_mut().zip(corr.as_slice()) {
                    *h -= w * c;
                }
            }
        }
        PotentialFamily::QuadraticPotential => {
            // grad_theta V(y) = |y|^2 / 2, T(x) = x / (1 - theta),
            // G = T(x) as a d x 1 column, grad_x T = I / (1 - theta).
            let t = theta[0];
            let s = 1.0 / (1.0 - t);
            let on_t: f64 = mu.points().iter_rows().zip(mu.weights()).map(|(x, w)| w * 0.5 * x.iter().map(|v| (v * s) * (v * s)).sum::<f64>()).sum();
            grad_formula[0] = 0.5 * msq(nu) - on_t;
            let mut h = 0.0;
            for (x, w) in mu.points().iter_rows().zip(mu.weights()) {
                let g: Vec<f64> = x.iter().map(|v| v * s).collect();
                let gtg: f64 = g.iter().map(|v| v * v).sum();
                h -= w * gtg * s;
            }
            hess_formula[(0, 0)] = h;
        }
    }

    let mut grad_fd = vec![0.0; p];
    let mut work = theta.to_vec();
    for k in 0..p {
        work[k] = theta[k] + HESSIAN_GRAD_STEP;
        let up = j(&work)?;
        work[k] = theta[k] - HESSIAN_GRAD_STEP;
        let down = j(&work)?;
        work[k] = theta[k];
        grad_fd[k] = (up - down) / (2.0 * HESSIAN_GRAD_STEP);
    }
    let h = HESSIAN_STEP;
    let mut hess_fd = Matrix::zeros(p, p);
    for a in 0..p {
        for b in 0..p {
            let mut eval = |da: f64, db: f64| -> Result<f64> {
                work.copy_from_slice(theta);
                work[a] += da;
                work[b] += db;
                j(&work)
            };
            let v = (eval(h, h)? - eval(h, -h)? - eval(-h, h)? + eval(-h, -h)?) / (4.0 * h * h);
            hess_fd[(a, b)] = v;
        }
    }

    let (grad_closed, hess_closed) = match family {
        PotentialFamily::LinearPotential => {
            let g = (0..d).map(|k| mean_y[k] - mean_x[k] - theta[k]).collect();
            let mut hm = Matrix::identity(d);
            hm.as_mut_slice().iter_mut().for_each(|v| *v = -*v);
            (g, hm)
        }
        PotentialFamily::QuadraticPotential => {
            let t = theta[0];
            let ex2 = msq(mu);
            let g = vec![0.5 * msq(nu) - 0.5 * ex2 / ((1.0 - t) * (1.0 - t))];
            let hm = Matrix::from_vec(1, 1, vec![-ex2 / ((1.0 - t) * (1.0 - t) * (1.0 - t))])?;
            (g, hm)
        }
    };

    let vec_gap = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let max_discrepancy = [
        vec_gap(&grad_formula, &grad_fd),
        vec_gap(&grad_formula, &grad_closed),
        vec_gap(&grad_fd, &grad_closed),
        hess_formula.max_abs_diff(&hess_fd),
        hess_formula.max_abs_diff(&hess_closed),
        hess_fd.max_abs_diff(&hess_closed),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    Ok(HessianReport { grad_formula, hess_formula, grad_fd, hess_fd, grad_closed, hess_closed, max_discrepancy })
}

/// Exponent `p / (6p + 16d)` in the plan-stability bound.
pub fn alpha(p: f64, d: usize) -> f64 {
    p / (6.0 * p + 16.0 * d as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanStability {
    /// `W_2` between the optimal plans `pi(mu1, nu)` and `pi(mu2, nu)`.
    pub w2_plans: f64,
    pub w1_sources: f64,
    pub w2_sources: f64,
    pub alpha_p: f64,
}

pub fn plan_stability_ratio(
    mu1: &EmpiricalMeasure,
    mu2: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    p: f64,
    opts: &SolverOptions,
) -> Result<PlanStability> {
    let cost = Cost::quadratic();
    let (p1, _) = solve_exact_with(mu1, nu, &cost, opts)?;
    let (p2, _) = solve_exact_with(mu2, nu, &cost, opts)?;
    let w2_plans = plan_distance(CoupledPlan { plan: &p1, mu: mu1, nu }, CoupledPlan { plan: &p2, mu: mu2, nu }, opts)?;
    Ok(PlanStability {
        w2_plans,
        w1_sources: wasserstein_with(mu1, mu2, Order::One, opts)?,
        w2_sources: wasserstein_with(mu1, mu2, Order::Two, opts)?,
        alpha_p: alpha(p, mu1.dim()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{gaussian_quantile_atoms, map_gauss_to_uniform};
    use crate::measures::DatasetKind;
    use crate::rng::stream_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn affine_net(a: &Matrix, b: &[f64]) -> MlpParams {
        // relu(x + 100) - 100 is the identity on |x| < 100.
        let d = a.cols();
        let shift = 100.0;
        let b2: Vec<f64> = (0..a.rows()).map(|o| b[o] - shift * a.row(o).iter().sum::<f64>()).collect();
        MlpParams::from_parts(Matrix::identity(d), vec![shift; d], a.clone(), b2).unwrap()
    }

    fn constant_net(d_in: usize, values: &[f64]) -> MlpParams {
        let mut p = MlpParams::zeros(d_in, 1, values.len());
        p.b2.copy_from_slice(values);
        p
    }

    #[test]
    fn tangential_examples() {
        let src = sample(&DatasetSpec::new(DatasetKind::Perpendicular, Side::Source, 2, 1), 50, 1).unwrap();
        let a = Matrix::from_rows(&[[0.0, 0.0], [1.0, 0.0]]).unwrap();
        assert_eq!(tangential_error(&affine_net(&a, &[0.0, 0.0]), &src, 1).unwrap(), 0.0);
        assert!((tangential_error(&constant_net(2, &[0.3, 5.0]), &src, 1).unwrap() - 0.3).abs() < 1e-12);
        let y = Matrix::from_rows(&[[0.4, 1.0], [-0.4, 2.0]]).unwrap();
        assert_eq!(tangential_error_points(&y, &[0.5, 0.5], 1).unwrap(), 0.0);
    }

    #[test]
    fn normal_examples() {
        let target = DatasetSpec::new(DatasetKind::Perpendicular, Side::Target, 2, 1);
        let src = sample(&DatasetSpec::new(DatasetKind::Perpendicular, Side::Source, 2, 1), 64, 2).unwrap();
        let e = normal_error(&constant_net(2, &[0.0, 0.5]), &src, &target).unwrap();
        assert!((e - (0.25 + 1.0 / 3.0)).abs() < 1e-5, "{e}");
        let e = normal_error(&constant_net(2, &[0.0, 0.0]), &src, &target).unwrap();
        assert!((e - 1.0 / 3.0).abs() < 1e-5);
        let q = uniform_quantile_atoms(2048, -1.0, 1.0).unwrap();
        let y = Matrix::from_vec(2048, 2, q.points().as_slice().iter().flat_map(|v| [0.0, *v]).collect()).unwrap();
        assert!(normal_error_points(&y, q.weights(), &target, 2048).unwrap() < 1e-5);
    }

    #[test]
    fn normal_error_reference_refinement() {
        let target = DatasetSpec::new(DatasetKind::Perpendicular, Side::Target, 2, 1);
        let mut rng = stream_rng(4, 0);
        let rows: Vec<[f64; 2]> = (0..500).map(|_| [0.0, rng.random_range(-1.0..1.0)]).collect();
        let y = Matrix::from_rows(&rows).unwrap();
        let w = vec![1.0 / 500.0; 500];
        let a = normal_error_points(&y, &w, &target, 2048).unwrap();
        let b = normal_error_points(&y, &w, &target, 4096).unwrap();
        assert!((a - b).abs() < 1e-4);
    }

    #[test]
    fn cost_and_target_examples() {
        let identity = affine_net(&Matrix::identity(1), &[0.0]);
        let d0 = EmpiricalMeasure::dirac(&[0.0]);
        let d1 = EmpiricalMeasure::dirac(&[1.0]);
        let (c, t) = d_cost_target(&identity, &d0, &d1, &SolverOptions::default()).unwrap();
        assert!((c - 1.0).abs() < 1e-12 && (t - 1.0).abs() < 1e-12);
        let mu = sample(&DatasetSpec::gaussian(2), 40, 3).unwrap();
        let identity2 = affine_net(&Matrix::identity(2), &[0.0, 0.0]);
        let (c, t) = d_cost_target(&identity2, &mu, &mu, &SolverOptions::default()).unwrap();
        assert!(c < 1e-12 && t < 1e-12);

        // The monotone map on matched quantiles.
        let eps = 0.5;
        let mu = gaussian_quantile_atoms(300, eps).unwrap();
        let nu = uniform_quantile_atoms(300, -1.0, 1.0).unwrap();
        let y = Matrix::from_vec(300, 1, mu.points().as_slice().iter().map(|x| map_gauss_to_uniform(*x, eps).unwrap()).collect()).unwrap();
        let (c, t) = d_cost_target_points(&y, &mu, &nu, &SolverOptions::default()).unwrap();
        assert!(c < 1e-6 && t < 1e-6, "{c} {t}");
    }

    #[test]
    fn jacobian_norm_examples() {
        for &eps in &[0.5, 0.1, 0.01] {
            let mut a = Matrix::identity(10);
            a.as_mut_slice().iter_mut().for_each(|v| *v /= eps);
            let net = affine_net(&a, &[0.0; 10]);
            let probes = sample(&DatasetSpec::gaussian(10), 5, 1).unwrap().into_parts().0;
            assert!((sup_jacobian_norm(&net, &probes).unwrap() - 1.0 / eps).abs() < 1e-6);
        }
        let zero = MlpParams::zeros(3, 4, 3);
        assert_eq!(sup_jacobian_norm(&zero, &Matrix::zeros(2, 3)).unwrap(), 0.0);
        assert!(sup_jacobian_norm(&zero, &Matrix::zeros(0, 3)).is_err());
        // Finite-difference slope of the 1D analytic map at the origin.
        let eps = 0.2;
        let h = 1e-6;
        let fd = (map_gauss_to_uniform(h, eps).unwrap() - map_gauss_to_uniform(-h, eps).unwrap()) / (2.0 * h);
        assert!((fd - 2.0 / (eps * (2.0 * core::f64::consts::PI).sqrt())).abs() < 1e-6);
    }

    #[test]
    fn jacobian_norm_of_random_linear_map() {
        let mut rng = stream_rng(8, 0);
        let a = Matrix::from_vec(3, 3, (0..9).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let net = affine_net(&a, &[0.1, 0.2, 0.3]);
        // Compare with power iteration run to convergence.
        let exact = spectral_norm(&a, 10_000, 0.0);
        let probes = Matrix::zeros(1, 3);
        assert!((sup_jacobian_norm(&net, &probes).unwrap() - exact).abs() < 1e-6);
    }

    fn line(points: &[(u64, f64)]) -> Vec<RatePoint> {
        points.iter().map(|&(n, v)| RatePoint { n, value: v, replicates: 1, std_err: 0.0 }).collect()
    }

    #[test]
    fn fit_exact_lines() {
        let pts = line(&[100, 200, 400, 800, 1600].map(|n| (n, 2.0 * (n as f64).powf(-1.0 / 3.0))));
        let fit = fit_rate(&pts).unwrap();
        assert!((fit.slope + 1.0 / 3.0).abs() < 1e-12);
        assert!((fit.intercept - 2f64.ln()).abs() < 1e-12);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
        let pts = line(&[10, 100, 1000].map(|n| (n, (n as f64).powf(-0.5))));
        assert!((fit_rate(&pts).unwrap().slope + 0.5).abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(fit_rate(&line(&[(1, 1.0), (2, 1.0)])).is_err());
        assert!(fit_rate(&line(&[(1, 1.0), (2, 0.0), (3, 1.0)])).is_err());
        assert!(fit_rate(&line(&[(1, 1.0), (1, 2.0), (3, 1.0)])).is_err());
    }

    #[test]
    fn fit_noisy_line() {
        let mut rng = stream_rng(12, 0);
        let pts: Vec<RatePoint> = [250u64, 500, 1000, 2000, 4000, 8000]
            .iter()
            .map(|&n| {
                let noise: f64 = rng.random_range(-0.01..0.01);
                RatePoint { n, value: 0.7 * (n as f64).powf(-0.4) * (1.0 + noise), replicates: 1, std_err: 0.0 }
            })
            .collect();
        assert!((fit_rate(&pts).unwrap().slope + 0.4).abs() < 0.02);
    }

    #[test]
    fn rate_point_statistics() {
        let p = RatePoint::from_replicates(10, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(p.value, 2.0);
        assert!((p.std_err - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(RatePoint::from_replicates(10, &[]).is_err());
    }

    #[test]
    fn hessian_linear_examples() {
        let mu = sample(&DatasetSpec::gaussian(3), 30, 5).unwrap();
        let r = hessian_check(PotentialFamily::LinearPotential, &[0.0; 3], &mu, &mu).unwrap();
        assert!(r.grad_closed.iter().all(|g| g.abs() < 1e-12));
        assert!(r.max_discrepancy < 1e-5);
        let mut neg_i = Matrix::identity(3);
        neg_i.as_mut_slice().iter_mut().for_each(|v| *v = -*v);
        assert!(r.hess_formula.max_abs_diff(&neg_i) < 1e-12);
    }

    #[test]
    fn hessian_random_families() {
        let mut rng = stream_rng(6, 0);
        for trial in 0..20 {
            let d = 1 + trial % 4;
            let mu = sample(&DatasetSpec::gaussian(d), 25, 100 + trial as u64).unwrap();
            let nu = sample(&DatasetSpec::gaussian(d), 35, 200 + trial as u64).unwrap();
            let theta: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let r = hessian_check(PotentialFamily::LinearPotential, &theta, &mu, &nu).unwrap();
            assert!(r.max_discrepancy < 1e-5, "linear {trial}: {}", r.max_discrepancy);
            let t = [rng.random_range(-0.5..0.5)];
            let r = hessian_check(PotentialFamily::QuadraticPotential, &t, &mu, &nu).unwrap();
            assert!(r.max_discrepancy < 1e-5, "quadratic {trial}: {}", r.max_discrepancy);
        }
        let mu = sample(&DatasetSpec::gaussian(2), 5, 1).unwrap();
        assert!(hessian_check(PotentialFamily::QuadraticPotential, &[1.0], &mu, &mu).is_err());
        assert!(hessian_check(PotentialFamily::LinearPotential, &[1.0], &mu, &mu).is_err());
    }

    #[test]
    fn alpha_values() {
        assert!((alpha(4.0, 1) - 0.1).abs() < 1e-15);
        assert!((alpha(1e12, 3) - 1.0 / 6.0).abs() < 1e-9);
    }

    #[test]
    fn identical_sources_are_stable() {
        let mu = sample(&DatasetSpec::gaussian(2), 12, 1).unwrap();
        let nu = sample(&DatasetSpec::gaussian(2), 10, 2).unwrap();
        let s = plan_stability_ratio(&mu, &mu, &nu, 4.0, &SolverOptions::default()).unwrap();
        assert!(s.w2_plans < 1e-12 && s.w1_sources < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn plan_projection_lower_bound(seed in 0u64..1_000_000, n1 in 1usize..20, n2 in 1usize..20, m in 1usize..20) {
            let mu1 = sample(&DatasetSpec::gaussian(2), n1, seed).unwrap();
            let mu2 = sample(&DatasetSpec::gaussian(2), n2, seed + 1).unwrap();
            let nu = sample(&DatasetSpec::gaussian(2), m, seed + 2).unwrap();
            let s = plan_stability_ratio(&mu1, &mu2, &nu, 2.0, &SolverOptions::default()).unwrap();
            prop_assert!(s.w2_plans >= s.w2_sources - 1e-9);
        }
    }
}
