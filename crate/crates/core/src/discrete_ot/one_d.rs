use alloc::vec::Vec;

use super::{Cost, PlanEntry, TransportPlan};
use crate::measures::EmpiricalMeasure;
use crate::{Error, Result};

/// Monotone coupling of two measures on the real line.
///
/// Optimal for every cost that is a convex function of `|x - y|`, which
/// covers both [`super::CostKind`] variants.
pub fn solve_1d(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, cost: &Cost) -> Result<TransportPlan> {
    if mu.dim() != 1 || nu.dim() != 1 {
        return Err(Error::Dimension { expected: 1, found: mu.dim().max(nu.dim()) });
    }
    let xs = sorted_order(mu);
    let ys = sorted_order(nu);
    let (wa, wb) = (mu.weights(), nu.weights());

    let mut entries = Vec::with_capacity(xs.len() + ys.len());
    let mut cost_value = 0.0;
    let (mut i, mut j) = (0, 0);
    let mut ra = wa[xs[0]];
    let mut rb = wb[ys[0]];
    loop {
        let mass = ra.min(rb);
        if mass > 0.0 {
            let (si, tj) = (xs[i], ys[j]);
            cost_value += mass * cost.eval_gap(mu.point(si)[0] - nu.point(tj)[0]);
            entries.push(PlanEntry { source: si, target: tj, mass });
        }
        ra -= mass;
        rb -= mass;
        // Advance whichever side is exhausted; on ties advance both.
        let advance_a = ra <= rb;
        let advance_b = rb <= ra;
        if advance_a {
            i += 1;
        }
        if advance_b {
            j += 1;
        }
        if i == xs.len() || j == ys.len() {
            break;
        }
        if advance_a {
            ra = wa[xs[i]];
        }
        if advance_b {
            rb = wb[ys[j]];
        }
    }
    Ok(TransportPlan { entries, source_n: mu.len(), target_n: nu.len(), cost_value })
}

fn sorted_order(m: &EmpiricalMeasure) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..m.len()).collect();
    idx.sort_by(|&a, &b| m.point(a)[0].total_cmp(&m.point(b)[0]).then(a.cmp(&b)));
    idx
}
