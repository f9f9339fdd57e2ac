use alloc::vec::Vec;

use super::{Cost, PlanEntry, TransportPlan};
use crate::error::check_dim;
use crate::measures::EmpiricalMeasure;
use crate::{Error, Result};

/// Largest instance [`brute_force`] accepts (`8! = 40320` permutations).
pub const BRUTE_FORCE_MAX: usize = 8;

/// Exhaustive search over all permutations for equal-size uniform measures.
///
/// With uniform weights on both sides, the Birkhoff polytope's vertices are
/// permutation matrices, so the best permutation is an optimal coupling.
pub fn brute_force(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, cost: &Cost) -> Result<TransportPlan> {
    check_dim(mu.dim(), nu.dim())?;
    let n = mu.len();
    check_dim(n, nu.len())?;
    if n > BRUTE_FORCE_MAX {
        return Err(Error::Capacity { requested: n, limit: BRUTE_FORCE_MAX });
    }
    let w = 1.0 / n as f64;
    let uniform = |m: &EmpiricalMeasure| m.weights().iter().all(|x| (x - w).abs() < 1e-12);
    if !uniform(mu) || !uniform(nu) {
        return Err(Error::Config("brute force needs uniform weights"));
    }
    let c: Vec<f64> = (0..n * n).map(|k| cost.eval(mu.point(k / n), nu.point(k % n))).collect();

    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = perm.clone();
    let mut best_cost = f64::INFINITY;
    let mut counters = alloc::vec![0usize; n];
    let total = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| c[i * n + j]).sum::<f64>();
    best_cost = best_cost.min(total(&perm));
    // Heap's algorithm, iterative.
    let mut i = 1;
    while i < n {
        if counters[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(counters[i], i);
            }
            let t = total(&perm);
            if t < best_cost {
                best_cost = t;
                best.copy_from_slice(&perm);
            }
            counters[i] += 1;
            i = 1;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }
    let entries = best
        .iter()
        .enumerate()
        .map(|(i, &j)| PlanEntry { source: i, target: j, mass: w })
        .collect();
    Ok(TransportPlan { entries, source_n: n, target_n: n, cost_value: best_cost * w })
}
