//! Primal network simplex for uncapacitated transportation problems.
//!
//! Spanning-tree representation with parent/thread/depth-free successor counts, block
//! search pricing and the strongly feasible leaving-arc rule (see Kelly & O'Neill, and
//! the LEMON implementation for the tree update). An artificial root joined to every node
//! gives the initial basis. Arcs can be appended between solves, so a restricted problem
//! can be grown by column generation while keeping the current basis.

const NONE: usize = usize::MAX;
const UP: i8 = 1;
const DOWN: i8 = -1;
const TREE: i8 = 0;
const LOWER: i8 = 1;

pub(crate) struct TransportSimplex {
    sources: usize,
    nodes: usize,
    // arcs: the first `nodes` are artificial (arc u joins node u and the root)
    src: Vec<usize>,
    dst: Vec<usize>,
    cost: Vec<f64>,
    flow: Vec<i64>,
    state: Vec<i8>,
    // spanning tree
    parent: Vec<usize>,
    pred: Vec<usize>,
    pred_dir: Vec<i8>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    pi: Vec<f64>,
    dirty_revs: Vec<usize>,
    next_arc: usize,
    eps: f64,
    // pivot scratch
    in_arc: usize,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
    delta: i64,
    pub pivots: usize,
}

impl TransportSimplex {
    /// `supply` for sources, `demand` for sinks (both nonnegative, equal totals).
    /// `art_cost` must exceed the cost of any path through real arcs.
    pub fn new(supply: &[i64], demand: &[i64], art_cost: f64, eps: f64) -> Self {
        let sources = supply.len();
        let nodes = sources + demand.len();
        let root = nodes;
        let mut s = Self {
            sources,
            nodes,
            src: vec![0; nodes],
            dst: vec![0; nodes],
            cost: vec![0.0; nodes],
            flow: vec![0; nodes],
            state: vec![TREE; nodes],
            parent: vec![NONE; nodes + 1],
            pred: vec![NONE; nodes + 1],
            pred_dir: vec![0; nodes + 1],
            thread: vec![0; nodes + 1],
            rev_thread: vec![0; nodes + 1],
            succ_num: vec![1; nodes + 1],
            last_succ: vec![0; nodes + 1],
            pi: vec![0.0; nodes + 1],
            dirty_revs: Vec::new(),
            next_arc: nodes,
            eps,
            in_arc: NONE,
            join: NONE,
            u_in: NONE,
            v_in: NONE,
            u_out: NONE,
            delta: 0,
            pivots: 0,
        };
        s.thread[root] = 0;
        s.rev_thread[0] = root;
        s.succ_num[root] = nodes + 1;
        s.last_succ[root] = root - 1;
        for u in 0..nodes {
            let e = u;
            s.parent[u] = root;
            s.pred[u] = e;
            s.thread[u] = u + 1;
            s.rev_thread[u + 1] = u;
            s.last_succ[u] = u;
            let b = if u < sources { supply[u] } else { -demand[u - sources] };
            if b >= 0 {
                s.pred_dir[u] = UP;
                s.src[e] = u;
                s.dst[e] = root;
                s.flow[e] = b;
                s.cost[e] = 0.0;
                s.pi[u] = 0.0;
            } else {
                s.pred_dir[u] = DOWN;
                s.src[e] = root;
                s.dst[e] = u;
                s.flow[e] = -b;
                s.cost[e] = art_cost;
                s.pi[u] = art_cost;
            }
        }
        s
    }

    /// Adds the arc source `i` → sink `j` with zero flow.
    pub fn add_arc(&mut self, i: usize, j: usize, cost: f64) {
        self.src.push(i);
        self.dst.push(self.sources + j);
        self.cost.push(cost);
        self.flow.push(0);
        self.state.push(LOWER);
    }

    pub fn real_arcs(&self) -> usize {
        self.src.len() - self.nodes
    }

    pub fn source_potential(&self, i: usize) -> f64 {
        self.pi[i]
    }

    pub fn sink_potential(&self, j: usize) -> f64 {
        self.pi[self.sources + j]
    }

    /// Positive flows on real arcs as `(i, j, flow, cost)`.
    pub fn flows(&self) -> impl Iterator<Item = (usize, usize, i64, f64)> + '_ {
        (self.nodes..self.src.len())
            .filter(|&e| self.flow[e] > 0)
            .map(|e| (self.src[e], self.dst[e] - self.sources, self.flow[e], self.cost[e]))
    }

    /// Flow left on artificial arcs; zero once the real arcs carry a feasible plan.
    pub fn artificial_flow(&self) -> i64 {
        self.flow[..self.nodes].iter().sum()
    }

    /// Pivots until no arc in the current set has negative reduced cost.
    pub fn solve(&mut self) {
        let block = ((self.real_arcs() as f64).sqrt() as usize).max(10);
        loop {
            self.pivot_until_optimal(block);
            // incremental potential updates drift; rebuild them and look again
            self.recompute_potentials();
            if !self.find_entering_arc(block) {
                break;
            }
        }
    }

    fn pivot_until_optimal(&mut self, block: usize) {
        while self.find_entering_arc(block) {
            self.find_join_node();
            if !self.find_leaving_arc() {
                // all arcs are uncapacitated and costs bounded below: cannot happen
                unreachable!("unbounded transportation problem");
            }
            self.change_flow();
            self.update_tree_structure();
            self.update_potential();
            self.pivots += 1;
        }
    }

    /// Potentials from scratch along the thread, so tree arcs have zero reduced cost.
    fn recompute_potentials(&mut self) {
        let root = self.nodes;
        self.pi[root] = 0.0;
        let mut u = self.thread[root];
        while u != root {
            let e = self.pred[u];
            let p = self.pi[self.parent[u]];
            self.pi[u] = if self.pred_dir[u] == UP { p - self.cost[e] } else { p + self.cost[e] };
            u = self.thread[u];
        }
    }

    #[inline]
    fn arc_reduced(&self, e: usize) -> f64 {
        self.state[e] as f64 * (self.cost[e] + self.pi[self.src[e]] - self.pi[self.dst[e]])
    }

    fn find_entering_arc(&mut self, block: usize) -> bool {
        let start = self.nodes;
        let end = self.src.len();
        if end == start {
            return false;
        }
        if self.next_arc < start || self.next_arc >= end {
            self.next_arc = start;
        }
        let mut min = -self.eps;
        let mut found = NONE;
        let mut cnt = block;
        let mut e = self.next_arc;
        for _ in 0..(end - start) {
            let c = self.arc_reduced(e);
            if c < min {
                min = c;
                found = e;
            }
            e += 1;
            if e == end {
                e = start;
            }
            cnt -= 1;
            if cnt == 0 {
                if found != NONE {
                    break;
                }
                cnt = block;
            }
        }
        if found == NONE {
            return false;
        }
        self.in_arc = found;
        self.next_arc = e;
        true
    }

    fn find_join_node(&mut self) {
        let mut u = self.src[self.in_arc];
        let mut v = self.dst[self.in_arc];
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        self.join = u;
    }

    fn find_leaving_arc(&mut self) -> bool {
        // entering arcs are always at their lower bound
        let first = self.src[self.in_arc];
        let second = self.dst[self.in_arc];
        let mut delta = i64::MAX;
        let mut result = 0;
        let mut u = first;
        while u != self.join {
            if self.pred_dir[u] == UP {
                let d = self.flow[self.pred[u]];
                if d < delta {
                    delta = d;
                    self.u_out = u;
                    result = 1;
                }
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != self.join {
            if self.pred_dir[u] == DOWN {
                let d = self.flow[self.pred[u]];
                if d <= delta {
                    delta = d;
                    self.u_out = u;
                    result = 2;
                }
            }
            u = self.parent[u];
        }
        if result == 1 {
            self.u_in = first;
            self.v_in = second;
        } else {
            self.u_in = second;
            self.v_in = first;
        }
        self.delta = delta;
        result != 0
    }

    fn change_flow(&mut self) {
        let val = self.delta;
        if val > 0 {
            self.flow[self.in_arc] += val;
            let mut u = self.src[self.in_arc];
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] -= self.pred_dir[u] as i64 * val;
                u = self.parent[u];
            }
            let mut u = self.dst[self.in_arc];
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] += self.pred_dir[u] as i64 * val;
                u = self.parent[u];
            }
        }
        self.state[self.in_arc] = TREE;
        let out = self.pred[self.u_out];
        self.state[out] = LOWER;
    }

    fn update_tree_structure(&mut self) {
        let (u_in, v_in, u_out, join, in_arc) = (self.u_in, self.v_in, self.u_out, self.join, self.in_arc);
        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = in_arc;
            self.pred_dir[u_in] = if u_in == self.src[in_arc] { UP } else { DOWN };
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
            let thread_continue =
                if old_rev_thread == v_in { self.thread[old_last_succ] } else { self.thread[v_in] };
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
            let mut tmp_sc = 0usize;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            while u != u_in {
                let p = self.parent[u];
                self.pred[u] = self.pred[p];
                self.pred_dir[u] = -self.pred_dir[p];
                tmp_sc = tmp_sc + self.succ_num[u] - self.succ_num[p];
                self.succ_num[u] = tmp_sc;
                self.last_succ[p] = tmp_ls;
                u = p;
            }
            self.pred[u_in] = in_arc;
            self.pred_dir[u_in] = if u_in == self.src[in_arc] { UP } else { DOWN };
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
        let sigma = self.pi[self.v_in] - self.pi[self.u_in] - self.pred_dir[self.u_in] as f64 * self.cost[self.in_arc];
        let end = self.thread[self.last_succ[self.u_in]];
        let mut u = self.u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_assignment() {
        // cheap diagonal is optimal
        let mut s = TransportSimplex::new(&[1, 1], &[1, 1], 1e3, 1e-12);
        s.add_arc(0, 0, 1.0);
        s.add_arc(0, 1, 5.0);
        s.add_arc(1, 0, 5.0);
        s.add_arc(1, 1, 1.0);
        s.solve();
        let f: Vec<_> = s.flows().collect();
        assert_eq!(s.artificial_flow(), 0);
        assert_eq!(f.len(), 2);
        assert!(f.iter().all(|&(i, j, m, _)| i == j && m == 1));
    }

    #[test]
    fn restricted_problem_keeps_artificial_flow() {
        let mut s = TransportSimplex::new(&[2, 1], &[1, 2], 1e3, 1e-12);
        s.add_arc(0, 0, 1.0);
        s.solve();
        assert!(s.artificial_flow() > 0);
        s.add_arc(0, 1, 1.0);
        s.add_arc(1, 1, 1.0);
        s.solve();
        assert_eq!(s.artificial_flow(), 0);
    }
}
