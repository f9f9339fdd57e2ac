//! The invariant suite behind `snot-lab selftest`.
//!
//! Each suite draws its random instances from streams derived from one seed
//! and returns a report instead of panicking, so the command can print a
//! per-suite summary and the acceptance tests can reuse the suites at other
//! sizes.

use std::fmt::Write as _;

use rand::Rng;
use snot_core::analytic::{gaussian_quantile_atoms, map_gauss_to_uniform, map_gauss_to_uniform_derivative, uniform_quantile_atoms};
use snot_core::ctransform::{c_transform, cc_potential, semidual_value, GridPotential};
use snot_core::discrete_ot::{brute_force, solve_1d, solve_exact, solve_exact_with, wasserstein, Cost, Order, SolverOptions};
use snot_core::measures::{sample, DatasetSpec, EmpiricalMeasure, NoiseModel};
use snot_core::metrics::{hessian_check, plan_stability_ratio, PotentialFamily};
use snot_core::nn::gradcheck::{check_backward_with, check_jacobian, check_param_grads, min_abs_preactivation, FD_STEP};
use snot_core::nn::{backward, predict, ForwardCache, Gradients, MlpParams};
use snot_core::rng::{derive_seed, stream_rng, SnotRng};
use snot_core::schedule::{epsilon_stat, trace, NoiseSchedule};
use snot_core::trainer::{loss_minimax, Player};
use snot_core::{math, Matrix};

/// Failures kept per suite in the printed summary.
const SHOWN_FAILURES: usize = 5;

/// Relative tolerance of the finite-difference gradient checks.
pub const GRAD_TOL: f64 = 1e-5;
/// Absolute tolerance of the Jacobian check.
pub const JACOBIAN_TOL: f64 = 1e-5;
pub const HESSIAN_TOL: f64 = 1e-5;
pub const ORACLE_TOL: f64 = 1e-9;
pub const LP_DUAL_TOL: f64 = 1e-8;
pub const ANALYTIC_SUP_TOL: f64 = 0.02;
pub const ANALYTIC_DERIV_TOL: f64 = 1e-6;

/// Deliberate defects for checking that the suite notices them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mutation {
    #[default]
    None,
    /// Negates every gradient returned by the backward pass.
    BackwardSign,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub checked: usize,
    pub failures: Vec<String>,
}

impl SuiteReport {
    fn new(name: &'static str) -> Self {
        Self { name, checked: 0, failures: Vec::new() }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.failures.push(what());
        }
    }

    fn error(&mut self, what: &str, e: impl std::fmt::Display) {
        self.checked += 1;
        self.failures.push(format!("{what}: {e}"));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelftestReport {
    pub suites: Vec<SuiteReport>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(SuiteReport::passed)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<22} {:>8} {:>7}  status", "suite", "checked", "failed");
        for r in &self.suites {
            let status = if r.passed() { "PASS" } else { "FAIL" };
            let _ = writeln!(s, "{:<22} {:>8} {:>7}  {status}", r.name, r.checked, r.failures.len());
        }
        for r in self.suites.iter().filter(|r| !r.passed()) {
            for f in r.failures.iter().take(SHOWN_FAILURES) {
                let _ = writeln!(s, "  {}: {f}", r.name);
            }
            if r.failures.len() > SHOWN_FAILURES {
                let _ = writeln!(s, "  {}: ... {} more", r.name, r.failures.len() - SHOWN_FAILURES);
            }
        }
        let _ = write!(s, "{}", if self.passed() { "selftest passed" } else { "selftest FAILED" });
        s
    }
}

pub fn run(seed: u64, instances: usize, mutation: Mutation) -> SelftestReport {
    SelftestReport {
        suites: vec![
            c_transform_suite(seed, instances),
            ot_oracle_suite(seed, instances),
            gradient_suite(seed, instances, mutation),
            hessian_suite(seed, instances.min(20)),
            projection_suite(seed, instances),
            smoothing_suite(seed, instances),
            analytic_suite(),
            schedule_suite(),
        ],
    }
}

fn rows(n: usize, d: usize, seed: u64) -> Matrix {
    sample(&DatasetSpec::gaussian(d), n, seed).expect("valid gaussian spec").into_parts().0
}

/// Weights bounded away from zero, normalized.
fn weights(n: usize, rng: &mut SnotRng) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

fn measure(n: usize, d: usize, rng: &mut SnotRng) -> EmpiricalMeasure {
    let w = weights(n, rng);
    EmpiricalMeasure::new(rows(n, d, rng.random()), w).expect("valid measure")
}

fn instance_rng(seed: u64, suite: u64, k: usize) -> SnotRng {
    stream_rng(derive_seed(seed, suite), k as u64)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Lipschitz bound, `V^cc >= V`, `(V^cc)^c = V^c`, weak duality and
/// equality at the LP dual potentials.
pub fn c_transform_suite(seed: u64, instances: usize) -> SuiteReport {
    let mut r = SuiteReport::new("c_transform");
    let cost = Cost::quadratic();
    for k in 0..instances {
        let mut rng = instance_rng(seed, 1, k);
        let (m, n, d) = (rng.random_range(1..30), rng.random_range(1..25), rng.random_range(1..4));
        let support = rows(m, d, rng.random());
        let f = GridPotential::new(support.clone(), rows(m, 1, rng.random()).column(0), cost).expect("finite");
        let g = GridPotential::new(support, rows(m, 1, rng.random()).column(0), cost).expect("finite");
        let mu = measure(n, d, &mut rng);
        let nu_w = weights(m, &mut rng);
        let xs = mu.points();

        let (fc, _) = c_transform(&f, xs).expect("dims");
        let (gc, _) = c_transform(&g, xs).expect("dims");
        let lhs = max_abs_diff(&fc, &gc);
        let rhs = max_abs_diff(f.values(), g.values());
        r.check(lhs <= rhs + 1e-12, || format!("lipschitz instance {k}: {lhs} > {rhs}"));

        let fcc = cc_potential(&f, xs).expect("dims");
        let below = f.values().iter().zip(fcc.values()).map(|(v, w)| v - w).fold(f64::NEG_INFINITY, f64::max);
        r.check(below <= 1e-12, || format!("cc_above instance {k}: V exceeds V^cc by {below}"));

        let (fccc, _) = c_transform(&fcc, xs).expect("dims");
        let gap = max_abs_diff(&fccc, &fc);
        r.check(gap <= 1e-9, || format!("ccc instance {k}: |(V^cc)^c - V^c| = {gap}"));

        let nu = EmpiricalMeasure::new(f.support().clone(), nu_w.clone()).expect("valid measure");
        match solve_exact_with(&mu, &nu, &cost, &SolverOptions::default()) {
            Ok((plan, duals)) => {
                let s = semidual_value(&f, &mu, &nu_w).expect("dims");
                r.check(s <= plan.cost_value + 1e-9, || format!("weak_duality instance {k}: {s} > {}", plan.cost_value));
                let v = GridPotential::new(nu.points().clone(), duals.target, cost).expect("finite duals");
                let s = semidual_value(&v, &mu, &nu_w).expect("dims");
                let gap = (s - plan.cost_value).abs();
                r.check(gap <= LP_DUAL_TOL, || format!("lp_duals instance {k}: gap {gap}"));
            }
            Err(e) => r.error(&format!("solver instance {k}"), e),
        }
    }
    r
}

/// Network simplex against permutation search and the 1D monotone coupling.
pub fn ot_oracle_suite(seed: u64, instances: usize) -> SuiteReport {
    let mut r = SuiteReport::new("ot_oracle");
    for k in 0..instances {
        let mut rng = instance_rng(seed, 2, k);
        let cost = if k % 2 == 0 { Cost::quadratic() } else { Cost::euclidean() };
        let (n, d) = (rng.random_range(1..=6), rng.random_range(1..4));
        let mu = EmpiricalMeasure::uniform(rows(n, d, rng.random())).expect("valid");
        let nu = EmpiricalMeasure::uniform(rows(n, d, rng.random())).expect("valid");
        match (solve_exact(&mu, &nu, &cost), brute_force(&mu, &nu, &cost)) {
            (Ok(a), Ok(b)) => {
                let gap = (a.cost_value - b.cost_value).abs();
                r.check(gap <= ORACLE_TOL, || format!("brute_force instance {k}: gap {gap}"));
            }
            (Err(e), _) | (_, Err(e)) => r.error(&format!("brute_force instance {k}"), e),
        }

        let (n, m) = (rng.random_range(1..40), rng.random_range(1..40));
        let mu = measure(n, 1, &mut rng);
        let nu = measure(m, 1, &mut rng);
        match (solve_exact(&mu, &nu, &cost), solve_1d(&mu, &nu, &cost)) {
            (Ok(a), Ok(b)) => {
                let gap = (a.cost_value - b.cost_value).abs();
                r.check(gap <= ORACLE_TOL, || format!("monotone_1d instance {k}: gap {gap}"));
            }
            (Err(e), _) | (_, Err(e)) => r.error(&format!("monotone_1d instance {k}"), e),
        }
    }
    r
}

fn negated_backward(p: &MlpParams, cache: &ForwardCache, grad_out: &Matrix) -> snot_core::Result<Gradients> {
    let mut g = backward(p, cache, grad_out)?;
    g.params.scale(-1.0);
    g.input.as_mut_slice().iter_mut().for_each(|v| *v = -*v);
    Ok(g)
}

/// Draws networks and batches whose ReLU pre-activations stay clear of the
/// kink, so central differences are smooth.
fn smooth_instance(rng: &mut SnotRng, d: usize, h: usize) -> (MlpParams, MlpParams, Matrix, Matrix) {
    loop {
        let v = MlpParams::init(d, h, 1, rng);
        let t = MlpParams::init(d, h, d, rng);
        let x = rows(6, d, rng.random());
        let y = rows(5, d, rng.random());
        let tx = predict(&t, &x).expect("dims");
        if min_abs_preactivation(&t, &x) > 1e-3 && min_abs_preactivation(&v, &tx) > 1e-3 && min_abs_preactivation(&v, &y) > 1e-3 {
            return (v, t, x, y);
        }
    }
}

/// Finite differences against the backward pass, the input Jacobian and both
/// players' objective gradients.
pub fn gradient_suite(seed: u64, instances: usize, mutation: Mutation) -> SuiteReport {
    let mut r = SuiteReport::new("gradients");
    for k in 0..instances {
        let mut rng = instance_rng(seed, 3, k);
        let d = rng.random_range(1..4);
        let h = rng.random_range(2..8);
        let (v, t, x, y) = smooth_instance(&mut rng, d, h);

        let grad_out = rows(x.rows(), d, rng.random());
        let report = match mutation {
            Mutation::None => check_backward_with(&t, &x, &grad_out, backward),
            Mutation::BackwardSign => check_backward_with(&t, &x, &grad_out, negated_backward),
        };
        match report {
            Ok(g) => r.check(g.passes(GRAD_TOL), || format!("backward instance {k}: rel error {}", g.max_rel_error)),
            Err(e) => r.error(&format!("backward instance {k}"), e),
        }

        let jac = check_jacobian(&t, x.row(0));
        r.check(jac <= JACOBIAN_TOL, || format!("jacobian instance {k}: error {jac}"));

        let (tau, lambda) = (rng.random_range(0.5..2.0), if k % 2 == 0 { 0.0 } else { 0.3 });
        for player in [Player::Map, Player::Potential] {
            let eval = match loss_minimax(&v, &t, &x, &y, tau, lambda, player) {
                Ok(e) => e,
                Err(e) => {
                    r.error(&format!("loss_minimax instance {k}"), e);
                    continue;
                }
            };
            let g = match player {
                Player::Map => check_param_grads(&t, &eval.grads, FD_STEP, |q| loss_value(&v, q, &x, &y, tau, lambda, player)),
                Player::Potential => check_param_grads(&v, &eval.grads, FD_STEP, |q| loss_value(q, &t, &x, &y, tau, lambda, player)),
            };
            r.check(g.passes(GRAD_TOL), || format!("loss_minimax {player:?} instance {k}: rel error {}", g.max_rel_error));
        }
    }
    r
}

fn loss_value(v: &MlpParams, t: &MlpParams, x: &Matrix, y: &Matrix, tau: f64, lambda: f64, player: Player) -> f64 {
    loss_minimax(v, t, x, y, tau, lambda, player).map_or(f64::NAN, |e| e.value)
}

/// Formula, finite-difference and closed-form derivatives of the reduced
/// semi-dual, for each potential family.
pub fn hessian_suite(seed: u64, instances: usize) -> SuiteReport {
    let mut r = SuiteReport::new("hessian_check");
    for k in 0..instances {
        let mut rng = instance_rng(seed, 4, k);
        let d = rng.random_range(1..5);
        let mu = measure(rng.random_range(5..40), d, &mut rng);
        let nu = measure(rng.random_range(5..40), d, &mut rng);
        let theta: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let quad = [rng.random_range(-0.5..0.5)];
        for (family, th) in [(PotentialFamily::LinearPotential, &theta[..]), (PotentialFamily::QuadraticPotential, &quad[..])] {
            match hessian_check(family, th, &mu, &nu) {
                Ok(h) => r.check(h.max_discrepancy < HESSIAN_TOL, || format!("{family:?} instance {k}: discrepancy {}", h.max_discrepancy)),
                Err(e) => r.error(&format!("{family:?} instance {k}"), e),
            }
        }
    }
    r
}

/// `W_2` between optimal plans dominates `W_2` between their sources.
pub fn projection_suite(seed: u64, instances: usize) -> SuiteReport {
    let mut r = SuiteReport::new("plan_projection");
    for k in 0..instances {
        let mut rng = instance_rng(seed, 5, k);
        let d = rng.random_range(1..4);
        let mu1 = measure(rng.random_range(1..=50), d, &mut rng);
        let mu2 = measure(rng.random_range(1..=50), d, &mut rng);
        let nu = measure(rng.random_range(1..=50), d, &mut rng);
        match plan_stability_ratio(&mu1, &mu2, &nu, 2.0, &SolverOptions::default()) {
            Ok(s) => r.check(s.w2_plans >= s.w2_sources - ORACLE_TOL, || {
                format!("instance {k}: W2(plans) {} < W2(sources) {}", s.w2_plans, s.w2_sources)
            }),
            Err(e) => r.error(&format!("instance {k}"), e),
        }
    }
    r
}

/// `W_1(mu_N, mu_N^eps) <= eps * mean |Y_i|` through the identity coupling.
pub fn smoothing_suite(seed: u64, instances: usize) -> SuiteReport {
    let mut r = SuiteReport::new("smoothing_coupling");
    for k in 0..instances {
        let mut rng = instance_rng(seed, 6, k);
        let (n, d) = (rng.random_range(1..=200), rng.random_range(1..=10));
        let eps = rng.random_range(0.01..1.0);
        let noise = if k % 2 == 0 { NoiseModel::gaussian(d) } else { NoiseModel::uniform_ball(d) };
        let clean = rows(n, d, rng.random());
        let mut smoothed = clean.clone();
        let mut total_norm = 0.0;
        let mut y = vec![0.0; d];
        for i in 0..n {
            noise.draw(&mut rng, &mut y);
            total_norm += math::norm(&y);
            for (p, v) in smoothed.row_mut(i).iter_mut().zip(&y) {
                *p += eps * v;
            }
        }
        let bound = eps * total_norm / n as f64;
        let a = EmpiricalMeasure::uniform(clean).expect("valid");
        let b = EmpiricalMeasure::uniform(smoothed).expect("valid");
        match wasserstein(&a, &b, Order::One) {
            Ok(w1) => r.check(w1 <= bound + ORACLE_TOL, || format!("instance {k}: W1 {w1} > bound {bound}")),
            Err(e) => r.error(&format!("instance {k}"), e),
        }
    }
    r
}

/// Sup error of the monotone map from Gaussian quantile atoms onto uniform
/// quantile atoms against `2 Phi(x / eps) - 1`, plus its slope at zero.
pub fn analytic_map_error(eps: f64, atoms: usize) -> snot_core::Result<(f64, f64)> {
    let mu = gaussian_quantile_atoms(atoms, eps)?;
    let nu = uniform_quantile_atoms(atoms, -1.0, 1.0)?;
    let plan = solve_1d(&mu, &nu, &Cost::quadratic())?;
    let map = plan.barycentric_map(&mu, &nu);
    let mut sup = 0.0f64;
    for (x, t) in mu.points().iter_rows().zip(map.iter_rows()) {
        sup = sup.max((t[0] - map_gauss_to_uniform(x[0], eps)?).abs());
    }
    let slope = map_gauss_to_uniform_derivative(0.0, eps)?;
    let expected = 2.0 / (eps * (2.0 * std::f64::consts::PI).sqrt());
    Ok((sup, (slope - expected).abs()))
}

pub fn analytic_suite() -> SuiteReport {
    let mut r = SuiteReport::new("analytic_maps");
    for eps in [0.1, 0.3, 1.0] {
        match analytic_map_error(eps, 1000) {
            Ok((sup, deriv)) => {
                r.check(sup <= ANALYTIC_SUP_TOL, || format!("eps {eps}: sup error {sup}"));
                r.check(deriv <= ANALYTIC_DERIV_TOL, || format!("eps {eps}: derivative error {deriv}"));
            }
            Err(e) => r.error(&format!("eps {eps}"), e),
        }
    }
    r
}

/// Noise level at 0-based iteration `k`, evaluated from the schedule
/// definitions without going through the schedule module.
pub fn closed_form_eps(schedule: &NoiseSchedule, k: u64, batch_size: usize) -> f64 {
    match *schedule {
        NoiseSchedule::Constant { eps } => eps,
        NoiseSchedule::StepwiseLinear { sigma_max, sigma_min, period, total } => {
            let start = k - k % period;
            let frac = ((start + 1) as f64 / total as f64).min(1.0);
            (1.0 - frac) * sigma_max + frac * sigma_min
        }
        NoiseSchedule::RateOptimal { m, e_abs_y, c0, eps_min, period } => {
            let start = k - k % period;
            let n = ((start + 1) * batch_size as u64) as f64;
            let rate = match m {
                1 => 1.0 / math::sqrt(n),
                2 => math::sqrt(math::ln(n) / n),
                3 => 1.0 / math::cbrt(n),
                _ => math::powf(n, -1.0 / m as f64),
            };
            (c0 / e_abs_y * rate).max(eps_min)
        }
    }
}

/// One schedule of each kind exercised by the trace checks.
pub fn reference_schedules() -> [NoiseSchedule; 4] {
    [
        NoiseSchedule::Constant { eps: 0.05 },
        NoiseSchedule::StepwiseLinear { sigma_max: 0.5, sigma_min: 0.01, period: 7, total: 300 },
        NoiseSchedule::RateOptimal { m: 1, e_abs_y: 1.2533141373155003, c0: 1.0, eps_min: 0.01, period: 10 },
        NoiseSchedule::RateOptimal { m: 3, e_abs_y: 1.0, c0: 2.0, eps_min: 0.0, period: 1 },
    ]
}

pub fn schedule_suite() -> SuiteReport {
    let mut r = SuiteReport::new("schedule");
    let batch = 64;
    for (s, schedule) in reference_schedules().iter().enumerate() {
        let points = trace(schedule, 400, batch);
        let bad = points.iter().filter(|p| p.eps != closed_form_eps(schedule, p.iteration, batch)).count();
        r.check(bad == 0, || format!("schedule {s}: {bad} iterations differ from the closed form"));
    }
    let stat = epsilon_stat(1_000_000, 3, 1.0, 1.0);
    r.check(stat.as_ref().is_ok_and(|&e| e == 1e-2), || format!("epsilon_stat(1e6, m=3) = {stat:?}"));
    r
}
