//! Primal network simplex for the complete bipartite transportation problem.
//!
//! Spanning-tree bookkeeping follows the classical thread/`succ_num` layout
//! with an artificial root and the strongly feasible leaving-arc rule, which
//! rules out cycling under degenerate pivots. Arcs are implicit: arc
//! `e = i * m + j` joins source `i` to target node `n + j`, and the cost of
//! every arc is read from a dense row-major matrix. Non-tree arcs are always
//! at flow zero because the problem is uncapacitated, so flow is stored per
//! tree node (on the arc to its parent).
//!
//! Masses are integers: the caller scales probabilities to a fixed-point
//! grid so every pivot is exact, while potentials stay in `f64`.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

const NONE: usize = usize::MAX;

/// Potentials are recomputed exactly from the tree this often.
const RECOMPUTE_EVERY: u64 = 512;

pub(crate) struct Flow {
    /// `(source, target, integer mass)` for positive tree flows.
    pub entries: Vec<(usize, usize, i64)>,
    /// Node potentials `pi`; reduced cost of arc `(i, j)` is `c_ij + pi_i - pi_{n+j}`.
    pub pi: Vec<f64>,
}

pub(crate) struct NetworkSimplex<'a> {
    n_src: usize,
    n_tgt: usize,
    n_real: usize,
    costs: &'a [f64],
    root: usize,
    art_cost: f64,
    tol: f64,
    art_up: Vec<bool>,

    parent: Vec<usize>,
    pred: Vec<usize>,
    up: Vec<bool>,
    flow: Vec<i64>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    pi: Vec<f64>,
    dirty_revs: Vec<usize>,

    block_size: usize,
    next_arc: usize,

    in_arc: usize,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
    delta: i64,
}

impl<'a> NetworkSimplex<'a> {
    /// `supply` holds source masses followed by target masses (as positive
    /// numbers); both sides must have the same total.
    pub fn new(n_src: usize, n_tgt: usize, costs: &'a [f64], src: &[i64], tgt: &[i64]) -> Self {
        debug_assert_eq!(costs.len(), n_src * n_tgt);
        debug_assert_eq!(src.iter().sum::<i64>(), tgt.iter().sum::<i64>());
        let n = n_src + n_tgt;
        let root = n;
        let max_cost = costs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        // Any artificial cost above the largest real arc cost drives all
        // artificial flow out at an optimal basis (every source-target pair is
        // joined by a real arc).
        let art_cost = 2.0 * max_cost + 1.0;
        let tol = 1e-12 * art_cost;

        let mut s = Self {
            n_src,
            n_tgt,
            n_real: n_src * n_tgt,
            costs,
            root,
            art_cost,
            tol,
            art_up: vec![false; n],
            parent: vec![NONE; n + 1],
            pred: vec![NONE; n + 1],
            up: vec![false; n + 1],
            flow: vec![0; n + 1],
            thread: vec![0; n + 1],
            rev_thread: vec![0; n + 1],
            succ_num: vec![1; n + 1],
            last_succ: vec![0; n + 1],
            pi: vec![0.0; n + 1],
            dirty_revs: Vec::new(),
            block_size: 10usize.max(crate::math::sqrt((n_src * n_tgt) as f64) as usize),
            next_arc: 0,
            in_arc: 0,
            join: 0,
            u_in: 0,
            v_in: 0,
            u_out: 0,
            delta: 0,
        };

        s.thread[root] = 0;
        s.rev_thread[0] = root;
        s.succ_num[root] = n + 1;
        s.last_succ[root] = root - 1;
        for u in 0..n {
            let supply = if u < n_src { src[u] } else { -tgt[u - n_src] };
            s.parent[u] = root;
            s.pred[u] = s.n_real + u;
            s.thread[u] = u + 1;
            s.rev_thread[u + 1] = u;
            s.succ_num[u] = 1;
            s.last_succ[u] = u;
            if supply >= 0 {
                s.art_up[u] = true;
                s.up[u] = true;
                s.flow[u] = supply;
                s.pi[u] = 0.0;
            } else {
                s.art_up[u] = false;
                s.up[u] = false;
                s.flow[u] = -supply;
                s.pi[u] = art_cost;
            }
        }
        s
    }

    #[inline]
    fn source(&self, e: usize) -> usize {
        if e < self.n_real {
            e / self.n_tgt
        } else if self.art_up[e - self.n_real] {
            e - self.n_real
        } else {
            self.root
        }
    }

    #[inline]
    fn cost(&self, e: usize) -> f64 {
        if e < self.n_real {
            self.costs[e]
        } else if self.art_up[e - self.n_real] {
            0.0
        } else {
            self.art_cost
        }
    }

    #[inline]
    fn in_tree(&self, e: usize, i: usize, tnode: usize) -> bool {
        self.pred[i] == e || self.pred[tnode] == e
    }

    /// Block search: scan arcs cyclically in blocks, take the most negative
    /// reduced cost of the first block that contains any eligible arc.
    fn find_entering(&mut self) -> bool {
        let m = self.n_tgt;
        let total = self.n_real;
        let mut min = -self.tol;
        let mut found = NONE;
        let mut cnt = self.block_size;
        let mut e = self.next_arc;
        let mut scanned = 0;
        while scanned < total {
            let i = e / m;
            let j0 = e % m;
            let pi_i = self.pi[i];
            let row = &self.costs[i * m..(i + 1) * m];
            let pi_t = &self.pi[self.n_src..self.n_src + m];
            let mut j = j0;
            while j < m && scanned < total {
                let rc = row[j] + pi_i - pi_t[j];
                if rc < min {
                    let arc = i * m + j;
                    if !self.in_tree(arc, i, self.n_src + j) {
                        min = rc;
                        found = arc;
                    }
                }
                j += 1;
                scanned += 1;
                cnt -= 1;
                if cnt == 0 {
                    if found != NONE {
                        self.in_arc = found;
                        self.next_arc = (i * m + j) % total;
                        return true;
                    }
                    cnt = self.block_size;
                }
            }
            e = (i * m + j) % total;
        }
        if found != NONE {
            self.in_arc = found;
            self.next_arc = e;
            return true;
        }
        false
    }

    fn find_join(&mut self) {
        let mut u = self.source(self.in_arc);
        let mut v = self.n_src + self.in_arc % self.n_tgt;
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        self.join = u;
    }

    fn find_leaving(&mut self) -> Result<()> {
        let first = self.source(self.in_arc);
        let second = self.n_src + self.in_arc % self.n_tgt;
        let mut delta = i64::MAX;
        let mut result = 0;
        let mut u = first;
        while u != self.join {
            if self.up[u] && self.flow[u] < delta {
                delta = self.flow[u];
                self.u_out = u;
                result = 1;
            }
            u = self.parent[u];
        }
        u = second;
        while u != self.join {
            if !self.up[u] && self.flow[u] <= delta {
                delta = self.flow[u];
                self.u_out = u;
                result = 2;
            }
            u = self.parent[u];
        }
        if result == 0 {
            return Err(Error::Domain("unbounded transport problem"));
        }
        if result == 1 {
            self.u_in = first;
            self.v_in = second;
        } else {
            self.u_in = second;
            self.v_in = first;
        }
        self.delta = delta;
        Ok(())
    }

    fn change_flow(&mut self) {
        let delta = self.delta;
        if delta > 0 {
            let mut u = self.source(self.in_arc);
            while u != self.join {
                if self.up[u] {
                    self.flow[u] -= delta;
                } else {
                    self.flow[u] += delta;
                }
                u = self.parent[u];
            }
            u = self.n_src + self.in_arc % self.n_tgt;
            while u != self.join {
                if self.up[u] {
                    self.flow[u] += delta;
                } else {
                    self.flow[u] -= delta;
                }
                u = self.parent[u];
            }
        }
    }

    fn update_tree(&mut self) {
        let u_in = self.u_in;
        let v_in = self.v_in;
        let u_out = self.u_out;
        let in_arc = self.in_arc;
        let in_flow = self.delta;
        let join = self.join;

        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = in_arc;
            self.up[u_in] = u_in == self.source(in_arc);
            self.flow[u_in] = in_flow;

            if self.thread[v_in] != u_out {
                let mut after = self.thread[old_last_succ];
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
                after = self.thread[v_in];
                self.thread[v_in] = u_out;
                self.rev_thread[u_out] = v_in;
                self.thread[old_last_succ] = after;
                self.rev_thread[after] = old_last_succ;
            }
        } else {
            let thread_continue = if old_rev_thread == v_in {
                self.thread[old_last_succ]
            } else {
                self.thread[v_in]
            };

            // Re-hang the stem nodes between u_in and u_out.
            let mut stem = u_in;
            let mut par_stem = v_in;
            let mut last = self.last_succ[u_in];
            let mut after = self.thread[last];
            self.thread[v_in] = u_in;
            self.dirty_revs.clear();
            self.dirty_revs.push(v_in);
            while stem != u_out {
                let next_stem = self.parent[stem];
                self.thread[last] = next_stem;
                self.dirty_revs.push(last);

                let before = self.rev_thread[stem];
                self.thread[before] = after;
                self.rev_thread[after] = before;

                self.parent[stem] = par_stem;
                par_stem = stem;
                stem = next_stem;

                last = if self.last_succ[stem] == self.last_succ[par_stem] {
                    self.rev_thread[par_stem]
                } else {
                    self.last_succ[stem]
                };
                after = self.thread[last];
            }
            self.parent[u_out] = par_stem;
            self.thread[last] = thread_continue;
            self.rev_thread[thread_continue] = last;
            self.last_succ[u_out] = last;

            if old_rev_thread != v_in {
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
            }

            for k in 0..self.dirty_revs.len() {
                let u = self.dirty_revs[k];
                let t = self.thread[u];
                self.rev_thread[t] = u;
            }

            // Reverse pred arcs along the stem.
            let mut tmp_sc = 0usize;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            let mut p = self.parent[u];
            while u != u_in {
                self.pred[u] = self.pred[p];
                self.up[u] = !self.up[p];
                self.flow[u] = self.flow[p];
                tmp_sc = tmp_sc + self.succ_num[u] - self.succ_num[p];
                self.succ_num[u] = tmp_sc;
                self.last_succ[p] = tmp_ls;
                u = p;
                p = self.parent[u];
            }
            self.pred[u_in] = in_arc;
            self.up[u_in] = u_in == self.source(in_arc);
            self.flow[u_in] = in_flow;
            self.succ_num[u_in] = old_succ_num;
        }

        let up_limit_out = if self.last_succ[join] == v_in { join } else { NONE };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in;
        while u != NONE && self.last_succ[u] == v_in {
            self.last_succ[u] = last_succ_out;
            u = self.parent[u];
        }

        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = old_rev_thread;
                u = self.parent[u];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = last_succ_out;
                u = self.parent[u];
            }
        }

        let mut u = v_in;
        while u != join {
            self.succ_num[u] += old_succ_num;
            u = self.parent[u];
        }
        let mut u = v_out;
        while u != join {
            self.succ_num[u] -= old_succ_num;
            u = self.parent[u];
        }
    }

    fn update_potential(&mut self) {
        let sign = if self.up[self.u_in] { 1.0 } else { -1.0 };
        let sigma = self.pi[self.v_in] - self.pi[self.u_in] - sign * self.cost(self.in_arc);
        let end = self.thread[self.last_succ[self.u_in]];
        let mut u = self.u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
    }

    /// Rebuilds potentials from the tree so tree arcs have zero reduced cost.
    fn recompute_potentials(&mut self) {
        self.pi[self.root] = 0.0;
        let mut u = self.thread[self.root];
        while u != self.root {
            let p = self.parent[u];
            let c = self.cost(self.pred[u]);
            self.pi[u] = if self.up[u] { self.pi[p] - c } else { self.pi[p] + c };
            u = self.thread[u];
        }
    }

    pub fn run(mut self, max_pivots: u64) -> Result<Flow> {
        let mut pivots = 0u64;
        loop {
            if !self.find_entering() {
                self.recompute_potentials();
                if !self.find_entering() {
                    break;
                }
            }
            self.find_join();
            self.find_leaving()?;
            self.change_flow();
            self.update_tree();
            self.update_potential();
            #[cfg(test)]
            self.validate();
            pivots += 1;
            if pivots % RECOMPUTE_EVERY == 0 {
                self.recompute_potentials();
            }
            if pivots > max_pivots {
                return Err(Error::Capacity { requested: pivots as usize, limit: max_pivots as usize });
            }
        }

        for u in 0..self.root {
            if self.pred[u] >= self.n_real && self.flow[u] != 0 {
                return Err(Error::Domain("infeasible transport problem"));
            }
        }
        let mut entries = Vec::with_capacity(self.root);
        for u in 0..self.root {
            let e = self.pred[u];
            if e < self.n_real && self.flow[u] > 0 {
                entries.push((e / self.n_tgt, e % self.n_tgt, self.flow[u]));
            }
        }
        entries.sort_unstable();
        Ok(Flow { entries, pi: self.pi })
    }

    #[cfg(test)]
    fn validate(&self) {
        let n = self.root + 1;
        // Thread visits every node once, rev_thread inverts it.
        let mut seen = vec![false; n];
        let mut u = self.root;
        for _ in 0..n {
            assert!(!seen[u], "thread revisits {u}");
            seen[u] = true;
            assert_eq!(self.rev_thread[self.thread[u]], u);
            u = self.thread[u];
        }
        assert_eq!(u, self.root);
        // Subtree sizes and last successors agree with the thread order.
        for v in 0..n {
            let mut count = 1;
            let mut w = v;
            while self.thread[w] != self.root && self.is_descendant(self.thread[w], v) {
                w = self.thread[w];
                count += 1;
            }
            assert_eq!(self.succ_num[v], count, "succ_num of {v}");
            assert_eq!(self.last_succ[v], w, "last_succ of {v}");
        }
        // Pred arcs join each node to its parent in the recorded direction.
        for v in 0..self.root {
            let e = self.pred[v];
            let p = self.parent[v];
            let (s, t) = if e < self.n_real {
                (e / self.n_tgt, self.n_src + e % self.n_tgt)
            } else {
                let a = e - self.n_real;
                if self.art_up[a] { (a, self.root) } else { (self.root, a) }
            };
            if self.up[v] {
                assert_eq!((s, t), (v, p));
            } else {
                assert_eq!((s, t), (p, v));
            }
            assert!(self.flow[v] >= 0);
        }
    }

    #[cfg(test)]
    fn is_descendant(&self, mut v: usize, anc: usize) -> bool {
        while v != NONE {
            if v == anc {
                return true;
            }
            v = self.parent[v];
        }
        false
    }
}
