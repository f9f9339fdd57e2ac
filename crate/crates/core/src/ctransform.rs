//! c-transforms of potentials tabulated on a finite candidate set.
//!
//! The infimum defining `V^c(x) = inf_y c(x,y) - V(y)` is taken over the
//! support rows only, so every quantity here is exact for the discretized
//! problem.

use alloc::vec::Vec;

use crate::discrete_ot::Cost;
use crate::error::check_dim;
use crate::measures::EmpiricalMeasure;
use crate::{math, Error, Matrix, Result};

/// A potential `V` known at the rows of `support`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridPotential {
    support: Matrix,
    values: Vec<f64>,
    cost: Cost,
}

impl GridPotential {
    pub fn new(support: Matrix, values: Vec<f64>, cost: Cost) -> Result<Self> {
        if support.rows() == 0 {
            return Err(Error::Empty("potential support"));
        }
        check_dim(support.rows(), values.len())?;
        if values.iter().any(|v| !v.is_finite()) || !support.is_finite() {
            return Err(Error::Config("potential values must be finite"));
        }
        Ok(Self { support, values, cost })
    }

    pub fn support(&self) -> &Matrix {
        &self.support
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cost(&self) -> &Cost {
        &self.cost
    }

    pub fn dim(&self) -> usize {
        self.support.cols()
    }

    /// Support row closest to the origin (smallest index on ties).
    pub fn anchor_index(&self) -> usize {
        let mut best = 0;
        let mut best_norm = f64::INFINITY;
        for (j, y) in self.support.iter_rows().enumerate() {
            let r = y.iter().map(|v| v * v).sum::<f64>();
            if r < best_norm {
                best_norm = r;
                best = j;
            }
        }
        best
    }

    /// Shifts values so the anchor carries exactly zero. Potentials are only
    /// defined up to a constant; this fixes the representative.
    pub fn normalize(&mut self) {
        let shift = self.values[self.anchor_index()];
        for v in &mut self.values {
            *v -= shift;
        }
    }

    /// Index of the support row nearest to `y`.
    pub fn nearest(&self, y: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, s) in self.support.iter_rows().enumerate() {
            let d = math::sq_dist(s, y);
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        best
    }

    fn c_transform_point(&self, x: &[f64]) -> (f64, usize) {
        let mut best = f64::INFINITY;
        let mut arg = 0;
        for (j, y) in self.support.iter_rows().enumerate() {
            let v = self.cost.eval(x, y) - self.values[j];
            if v < best {
                best = v;
                arg = j;
            }
        }
        (best, arg)
    }
}

/// `V^c` at each row of `x_points`, with the attaining support index.
pub fn c_transform(v: &GridPotential, x_points: &Matrix) -> Result<(Vec<f64>, Vec<usize>)> {
    check_dim(v.dim(), x_points.cols())?;
    let mut values = Vec::with_capacity(x_points.rows());
    let mut args = Vec::with_capacity(x_points.rows());
    for x in x_points.iter_rows() {
        let (val, j) = v.c_transform_point(x);
        values.push(val);
        args.push(j);
    }
    Ok((values, args))
}

/// `V^cc(y) = min_i c(x_i, y) - V^c(x_i)` over the candidate rows `x_grid`.
pub fn cc_transform(v: &GridPotential, x_grid: &Matrix, y_eval: &Matrix) -> Result<Vec<f64>> {
    if x_grid.rows() == 0 || y_eval.rows() == 0 {
        return Err(Error::Empty("c-transform grid"));
    }
    check_dim(v.dim(), y_eval.cols())?;
    let (vc, _) = c_transform(v, x_grid)?;
    let out = y_eval
        .iter_rows()
        .map(|y| {
            x_grid
                .iter_rows()
                .zip(&vc)
                .map(|(x, c)| v.cost.eval(x, y) - c)
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    Ok(out)
}

/// The c-concave envelope of `v` as a new potential on the same support.
pub fn cc_potential(v: &GridPotential, x_grid: &Matrix) -> Result<GridPotential> {
    let values = cc_transform(v, x_grid, &v.support)?;
    GridPotential::new(v.support.clone(), values, v.cost)
}

/// Semi-dual objective `sum_i mu_i V^c(x_i) + sum_j nu_j V(y_j)`.
pub fn semidual_value(v: &GridPotential, mu: &EmpiricalMeasure, nu_weights: &[f64]) -> Result<f64> {
    check_dim(v.values.len(), nu_weights.len())?;
    let (vc, _) = c_transform(v, mu.points())?;
    let a: f64 = vc.iter().zip(mu.weights()).map(|(c, w)| c * w).sum();
    let b: f64 = v.values.iter().zip(nu_weights).map(|(c, w)| c * w).sum();
    Ok(a + b)
}

/// Weighted mean of `c(x, T(x)) - V(T(x)) - V^c(x)`, with each `T(x_i)`
/// first snapped to its nearest support row. Nonnegative up to rounding; zero
/// exactly when every snapped `T(x_i)` attains the c-transform.
pub fn recovery_residual(v: &GridPotential, t_values: &Matrix, x_points: &Matrix, mu_weights: &[f64]) -> Result<f64> {
    check_dim(x_points.rows(), t_values.rows())?;
    check_dim(x_points.rows(), mu_weights.len())?;
    check_dim(v.dim(), t_values.cols())?;
    let (vc, _) = c_transform(v, x_points)?;
    let mut total = 0.0;
    for i in 0..x_points.rows() {
        let x = x_points.row(i);
        let j = v.nearest(t_values.row(i));
        total += mu_weights[i] * (v.cost.eval(x, v.support.row(j)) - v.values[j] - vc[i]);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete_ot::{solve_exact, solve_exact_with, SolverOptions};
    use crate::measures::{sample, DatasetSpec};
    use alloc::vec;
    use proptest::prelude::*;

    fn line(points: &[f64]) -> Matrix {
        Matrix::from_vec(points.len(), 1, points.to_vec()).unwrap()
    }

    fn random_potential(m: usize, d: usize, seed: u64) -> GridPotential {
        let support = sample(&DatasetSpec::gaussian(d), m, seed).unwrap().into_parts().0;
        let values = sample(&DatasetSpec::gaussian(1), m, seed + 1).unwrap().points().column(0);
        GridPotential::new(support, values, Cost::quadratic()).unwrap()
    }

    fn gaussian_rows(n: usize, d: usize, seed: u64) -> Matrix {
        sample(&DatasetSpec::gaussian(d), n, seed).unwrap().into_parts().0
    }

    #[test]
    fn two_point_examples() {
        let v = GridPotential::new(line(&[0.0, 1.0]), vec![0.0, 0.0], Cost::quadratic()).unwrap();
        let (vals, args) = c_transform(&v, &line(&[0.5])).unwrap();
        assert!((vals[0] - 0.125).abs() < 1e-15);
        assert_eq!(args[0], 0);

        let v = GridPotential::new(line(&[0.0, 1.0]), vec![0.0, 1.0], Cost::quadratic()).unwrap();
        let (vals, args) = c_transform(&v, &line(&[0.5])).unwrap();
        assert!((vals[0] + 0.875).abs() < 1e-15);
        assert_eq!(args[0], 1);
    }

    #[test]
    fn empty_support_is_rejected() {
        assert!(GridPotential::new(Matrix::zeros(0, 2), vec![], Cost::quadratic()).is_err());
        let v = random_potential(4, 2, 0);
        assert!(cc_transform(&v, &Matrix::zeros(0, 2), v.support()).is_err());
        assert!(c_transform(&v, &Matrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn matches_enumeration() {
        let v = random_potential(50, 3, 7);
        let xs = gaussian_rows(20, 3, 8);
        let (vals, args) = c_transform(&v, &xs).unwrap();
        for (i, x) in xs.iter_rows().enumerate() {
            let mut best = f64::INFINITY;
            for j in 0..50 {
                let y = v.support().row(j);
                let c: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() * 0.5;
                best = best.min(c - v.values()[j]);
            }
            assert_eq!(vals[i], best);
            let y = v.support().row(args[i]);
            assert_eq!(Cost::quadratic().eval(x, y) - v.values()[args[i]], best);
        }
    }

    #[test]
    fn normalize_zeroes_anchor() {
        let support = Matrix::from_rows(&[[3.0, 0.0], [0.1, -0.1], [1.0, 1.0]]).unwrap();
        let mut v = GridPotential::new(support, vec![1.0, 2.5, -4.0], Cost::quadratic()).unwrap();
        assert_eq!(v.anchor_index(), 1);
        v.normalize();
        assert_eq!(v.values(), &[-1.5, 0.0, -6.5]);
    }

    #[test]
    fn c_concave_potential_is_fixed() {
        // V = W^c for an arbitrary W on the x grid is c-concave relative to it.
        let xs = gaussian_rows(25, 2, 3);
        let w = GridPotential::new(xs.clone(), gaussian_rows(25, 1, 4).column(0), Cost::quadratic()).unwrap();
        let ys = gaussian_rows(30, 2, 5);
        let (vals, _) = c_transform(&w, &ys).unwrap();
        let v = GridPotential::new(ys.clone(), vals, Cost::quadratic()).unwrap();
        let vcc = cc_transform(&v, &xs, &ys).unwrap();
        for (a, b) in vcc.iter().zip(v.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn strong_duality_with_lp_potentials() {
        for trial in 0..100 {
            let n = 5 + (trial % 20) as usize;
            let m = 4 + (trial % 13) as usize;
            let mu = sample(&DatasetSpec::gaussian(2), n, 100 + trial).unwrap();
            let nu = sample(&DatasetSpec::gaussian(2), m, 300 + trial).unwrap();
            let (plan, duals) = solve_exact_with(&mu, &nu, &Cost::quadratic(), &SolverOptions::default()).unwrap();
            let v = GridPotential::new(nu.points().clone(), duals.target.clone(), Cost::quadratic()).unwrap();
            let s = semidual_value(&v, &mu, nu.weights()).unwrap();
            assert!((s - plan.cost_value).abs() < 1e-8, "trial {trial}: {s} vs {}", plan.cost_value);
        }
    }

    #[test]
    fn trivial_semidual_and_misalignment() {
        let d = crate::measures::EmpiricalMeasure::dirac(&[0.0]);
        let v = GridPotential::new(line(&[0.0]), vec![0.0], Cost::quadratic()).unwrap();
        assert_eq!(semidual_value(&v, &d, &[1.0]).unwrap(), 0.0);
        assert!(semidual_value(&v, &d, &[0.5, 0.5]).is_err());
    }

    #[test]
    fn argmin_map_has_zero_residual() {
        let v = random_potential(40, 2, 11);
        let mu = sample(&DatasetSpec::gaussian(2), 30, 12).unwrap();
        let (_, args) = c_transform(&v, mu.points()).unwrap();
        let rows: Vec<&[f64]> = args.iter().map(|&j| v.support().row(j)).collect();
        let t = Matrix::from_rows(&rows).unwrap();
        let r = recovery_residual(&v, &t, mu.points(), mu.weights()).unwrap();
        assert!(r.abs() < 1e-12);

        // Worst candidate per x.
        let worst: Vec<&[f64]> = mu
            .points()
            .iter_rows()
            .map(|x| {
                let j = (0..40)
                    .max_by(|&a, &b| {
                        let ca = Cost::quadratic().eval(x, v.support().row(a)) - v.values()[a];
                        let cb = Cost::quadratic().eval(x, v.support().row(b)) - v.values()[b];
                        ca.partial_cmp(&cb).unwrap()
                    })
                    .unwrap();
                v.support().row(j)
            })
            .collect();
        let t = Matrix::from_rows(&worst).unwrap();
        assert!(recovery_residual(&v, &t, mu.points(), mu.weights()).unwrap() > 0.1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn transform_is_one_lipschitz(seed in 0u64..1_000_000, m in 1usize..30, d in 1usize..4) {
            let f = random_potential(m, d, seed);
            let g_vals = gaussian_rows(m, 1, seed + 17).column(0);
            let g = GridPotential::new(f.support().clone(), g_vals, Cost::quadratic()).unwrap();
            let xs = gaussian_rows(25, d, seed + 29);
            let (fc, _) = c_transform(&f, &xs).unwrap();
            let (gc, _) = c_transform(&g, &xs).unwrap();
            let lhs = fc.iter().zip(&gc).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let rhs = f.values().iter().zip(g.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(lhs <= rhs + 1e-12);
        }

        #[test]
        fn dual_feasibility(seed in 0u64..1_000_000, m in 1usize..30) {
            let v = random_potential(m, 2, seed);
            let xs = gaussian_rows(20, 2, seed + 3);
            let (vc, _) = c_transform(&v, &xs).unwrap();
            for (i, x) in xs.iter_rows().enumerate() {
                for (j, y) in v.support().iter_rows().enumerate() {
                    prop_assert!(vc[i] + v.values()[j] <= Cost::quadratic().eval(x, y) + 1e-12);
                }
            }
        }

        #[test]
        fn cc_dominates_and_preserves_c(seed in 0u64..1_000_000, m in 1usize..30) {
            let v = random_potential(m, 2, seed);
            let xs = gaussian_rows(20, 2, seed + 5);
            let vcc = cc_potential(&v, &xs).unwrap();
            for (a, b) in vcc.values().iter().zip(v.values()) {
                prop_assert!(*a >= b - 1e-12);
            }
            let (c1, _) = c_transform(&v, &xs).unwrap();
            let (c2, _) = c_transform(&vcc, &xs).unwrap();
            for (a, b) in c1.iter().zip(&c2) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            let vcccc = cc_potential(&vcc, &xs).unwrap();
            for (a, b) in vcccc.values().iter().zip(vcc.values()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn weak_duality(seed in 0u64..1_000_000, n in 1usize..15, m in 1usize..15) {
            let mu = sample(&DatasetSpec::gaussian(2), n, seed).unwrap();
            let nu = sample(&DatasetSpec::gaussian(2), m, seed + 1).unwrap();
            let vals = gaussian_rows(m, 1, seed + 2).column(0);
            let v = GridPotential::new(nu.points().clone(), vals, Cost::quadratic()).unwrap();
            let ot = solve_exact(&mu, &nu, &Cost::quadratic()).unwrap().cost_value;
            prop_assert!(semidual_value(&v, &mu, nu.weights()).unwrap() <= ot + 1e-9);
        }

        #[test]
        fn residual_is_nonnegative(seed in 0u64..1_000_000, m in 1usize..20) {
            let v = random_potential(m, 2, seed);
            let mu = sample(&DatasetSpec::gaussian(2), 10, seed + 9).unwrap();
            let t = gaussian_rows(10, 2, seed + 10);
            prop_assert!(recovery_residual(&v, &t, mu.points(), mu.weights()).unwrap() >= -1e-9);
        }
    }
}
