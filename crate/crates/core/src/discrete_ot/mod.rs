//! Exact optimal transport between empirical measures.
//!
//! [`solve_exact`] runs a network simplex on the dense cost matrix,
//! [`solve_1d`] uses the monotone (sorted) coupling, and [`brute_force`]
//! enumerates permutations for tiny uniform instances. The three agree on
//! optimal cost; optimal plans themselves are generally not unique.

mod brute;
mod network_simplex;
mod one_d;

use alloc::vec::Vec;

pub use brute::{brute_force, BRUTE_FORCE_MAX};
pub use one_d::solve_1d;

use crate::error::check_dim;
use crate::measures::EmpiricalMeasure;
use crate::{math, Error, Matrix, Result};

/// Ground cost `tau/2 |x-y|^2` or `tau |x-y|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum CostKind {
    SqEuclideanHalf,
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Cost {
    pub kind: CostKind,
    /// Cost intensity, strictly positive.
    pub tau: f64,
}

impl Cost {
    pub fn new(kind: CostKind, tau: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::Config("cost intensity must be positive"));
        }
        Ok(Self { kind, tau })
    }

    /// `½|x-y|²`.
    pub const fn quadratic() -> Self {
        Self { kind: CostKind::SqEuclideanHalf, tau: 1.0 }
    }

    /// `|x-y|`.
    pub const fn euclidean() -> Self {
        Self { kind: CostKind::Euclidean, tau: 1.0 }
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.kind {
            CostKind::SqEuclideanHalf => 0.5 * self.tau * math::sq_dist(x, y),
            CostKind::Euclidean => self.tau * math::dist(x, y),
        }
    }

    /// Cost as a function of the 1D gap `|x - y|`.
    #[inline]
    pub fn eval_gap(&self, gap: f64) -> f64 {
        match self.kind {
            CostKind::SqEuclideanHalf => 0.5 * self.tau * gap * gap,
            CostKind::Euclidean => self.tau * gap.abs(),
        }
    }
}

/// One positive-mass cell of a coupling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanEntry {
    pub source: usize,
    pub target: usize,
    pub mass: f64,
}

/// Sparse coupling between two empirical measures.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub entries: Vec<PlanEntry>,
    pub source_n: usize,
    pub target_n: usize,
    /// `sum mass * c(x_i, y_j)` under the cost the plan was solved for.
    pub cost_value: f64,
}

impl TransportPlan {
    pub fn row_sums(&self) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.source_n];
        for e in &self.entries {
            out[e.source] += e.mass;
        }
        out
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.target_n];
        for e in &self.entries {
            out[e.target] += e.mass;
        }
        out
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|e| e.mass).sum()
    }

    /// Recomputes the plan's cost under `cost`.
    pub fn cost_under(&self, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, cost: &Cost) -> f64 {
        self.entries.iter().map(|e| e.mass * cost.eval(mu.point(e.source), nu.point(e.target))).sum()
    }

    /// Largest violation of the marginal constraints.
    pub fn marginal_error(&self, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> f64 {
        let rows = self.row_sums();
        let cols = self.column_sums();
        let r = rows.iter().zip(mu.weights()).map(|(a, b)| (a - b).abs());
        let c = cols.iter().zip(nu.weights()).map(|(a, b)| (a - b).abs());
        r.chain(c).fold(0.0, f64::max)
    }

    /// The coupling as a measure on `R^{d_x + d_y}` with atoms `(x_i, y_j)`.
    pub fn to_product_measure(&self, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<EmpiricalMeasure> {
        if self.entries.is_empty() {
            return Err(Error::Empty("plan"));
        }
        let d = mu.dim() + nu.dim();
        let mut data = Vec::with_capacity(self.entries.len() * d);
        let total = self.total_mass();
        let mut weights = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            data.extend_from_slice(mu.point(e.source));
            data.extend_from_slice(nu.point(e.target));
            weights.push(e.mass / total);
        }
        EmpiricalMeasure::new(Matrix::from_vec(self.entries.len(), d, data)?, weights)
    }

    /// Image of each source atom under the plan's barycentric projection.
    pub fn barycentric_map(&self, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Matrix {
        let mut out = Matrix::zeros(self.source_n, nu.dim());
        for e in &self.entries {
            let w = e.mass;
            let y = nu.point(e.target);
            for (o, v) in out.row_mut(e.source).iter_mut().zip(y) {
                *o += w * v;
            }
        }
        for (i, w) in mu.weights().iter().enumerate() {
            if *w > 0.0 {
                for o in out.row_mut(i) {
                    *o /= w;
                }
            }
        }
        out
    }
}

/// Kantorovich dual potentials: `source[i] + target[j] <= c(x_i, y_j)`
/// with equality on the support of the optimal plan.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPotentials {
    pub source: Vec<f64>,
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Largest admissible `N * M`.
    pub max_entries: usize,
}

pub const DEFAULT_MAX_ENTRIES: usize = 4_000_000;

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_entries: DEFAULT_MAX_ENTRIES }
    }
}

/// Fixed-point scale for masses inside the simplex: `2^40` units per unit mass.
const MASS_SCALE: f64 = 1_099_511_627_776.0;

/// Optimal coupling of `mu` and `nu` under `cost`.
pub fn solve_exact(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, cost: &Cost) -> Result<TransportPlan> {
    solve_exact_with(mu, nu, cost, &SolverOptions::default()).map(|(plan, _)| plan)
}

/// [`solve_exact`] with explicit options, also returning dual potentials.
pub fn solve_exact_with(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    cost: &Cost,
    opts: &SolverOptions,
) -> Result<(TransportPlan, DualPotentials)> {
    check_dim(mu.dim(), nu.dim())?;
    let n = mu.len();
    let m = nu.len();
    let entries = n.checked_mul(m).unwrap_or(usize::MAX);
    if entries > opts.max_entries {
        return Err(Error::Capacity { requested: entries, limit: opts.max_entries });
    }
    let costs = cost_matrix(mu, nu, cost);
    let (src, tgt) = integer_masses(mu.weights(), nu.weights());
    let max_pivots = 1000 * (n as u64 + m as u64) * 64 + 1_000_000;
    let flow = network_simplex::NetworkSimplex::new(n, m, &costs, &src, &tgt).run(max_pivots)?;

    let mut plan_entries = Vec::with_capacity(flow.entries.len());
    let mut cost_value = 0.0;
    for &(i, j, f) in &flow.entries {
        let mass = f as f64 / MASS_SCALE;
        cost_value += mass * costs[i * m + j];
        plan_entries.push(PlanEntry { source: i, target: j, mass });
    }
    let duals = DualPotentials {
        source: flow.pi[..n].iter().map(|p| -p).collect(),
        target: flow.pi[n..n + m].to_vec(),
    };
    Ok((TransportPlan { entries: plan_entries, source_n: n, target_n: m, cost_value }, duals))
}

/// Dense row-major `c(x_i, y_j)`.
pub fn cost_matrix(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, cost: &Cost) -> Vec<f64> {
    let mut out = Vec::with_capacity(mu.len() * nu.len());
    for x in mu.points().iter_rows() {
        for y in nu.points().iter_rows() {
            out.push(cost.eval(x, y));
        }
    }
    out
}

/// Rounds both weight vectors onto the `MASS_SCALE` grid with equal totals.
fn integer_masses(a: &[f64], b: &[f64]) -> (Vec<i64>, Vec<i64>) {
    let target = MASS_SCALE as i64;
    let fix = |w: &[f64]| -> Vec<i64> {
        let mut out: Vec<i64> = w.iter().map(|x| math::round(x * MASS_SCALE) as i64).collect();
        let mut diff = target - out.iter().sum::<i64>();
        if diff != 0 {
            let mut order: Vec<usize> = (0..out.len()).collect();
            order.sort_by(|&i, &j| out[j].cmp(&out[i]));
            for &k in &order {
                if diff == 0 {
                    break;
                }
                let change = if diff > 0 { diff } else { diff.max(-out[k]) };
                out[k] += change;
                diff -= change;
            }
        }
        out
    };
    (fix(a), fix(b))
}

/// Order of a Wasserstein distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    One,
    Two,
}

/// `W_1` (Euclidean cost) or `W_2` (square root of the optimal `|x-y|^2` cost).
/// One-dimensional inputs take the sorted-coupling path.
pub fn wasserstein(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, order: Order) -> Result<f64> {
    wasserstein_with(mu, nu, order, &SolverOptions::default())
}

pub fn wasserstein_with(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    order: Order,
    opts: &SolverOptions,
) -> Result<f64> {
    let cost = match order {
        Order::One => Cost::euclidean(),
        Order::Two => Cost { kind: CostKind::SqEuclideanHalf, tau: 2.0 },
    };
    let value = if mu.dim() == 1 && nu.dim() == 1 {
        solve_1d(mu, nu, &cost)?.cost_value
    } else {
        solve_exact_with(mu, nu, &cost, opts)?.0.cost_value
    };
    Ok(match order {
        Order::One => value.max(0.0),
        Order::Two => math::sqrt(value.max(0.0)),
    })
}

/// A coupling together with the measures it couples.
#[derive(Debug, Clone, Copy)]
pub struct CoupledPlan<'a> {
    pub plan: &'a TransportPlan,
    pub mu: &'a EmpiricalMeasure,
    pub nu: &'a EmpiricalMeasure,
}

/// `W_2` between two couplings viewed as measures on the product space.
pub fn plan_distance(a: CoupledPlan<'_>, b: CoupledPlan<'_>, opts: &SolverOptions) -> Result<f64> {
    let pa = a.plan.to_product_measure(a.mu, a.nu)?;
    let pb = b.plan.to_product_measure(b.mu, b.nu)?;
    wasserstein_with(&pa, &pb, Order::Two, opts)
}
