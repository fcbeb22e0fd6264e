use super::exact::OtOptions;
use super::measure::{check_pair, integer_masses, Coupling, DiscreteMeasure, Transfer, MASS_SCALE};
use super::neighbors::PointGrid;
use crate::error::{Error, Result};

/// Dinic's blocking-flow algorithm on a small adjacency-list graph.
#[derive(Clone)]
struct Dinic {
    head: Vec<usize>,
    next: Vec<usize>,
    to: Vec<usize>,
    cap: Vec<i64>,
    level: Vec<i32>,
    iter: Vec<usize>,
}

const NIL: usize = usize::MAX;

impl Dinic {
    fn new(nodes: usize, edges: usize) -> Self {
        Self {
            head: vec![NIL; nodes],
            next: Vec::with_capacity(2 * edges),
            to: Vec::with_capacity(2 * edges),
            cap: Vec::with_capacity(2 * edges),
            level: vec![0; nodes],
            iter: vec![0; nodes],
        }
    }

    /// Adds `u → v`; returns the index of the forward edge.
    fn add(&mut self, u: usize, v: usize, c: i64) -> usize {
        let e = self.to.len();
        for (a, b, cc) in [(u, v, c), (v, u, 0)] {
            self.to.push(b);
            self.cap.push(cc);
            self.next.push(self.head[a]);
            self.head[a] = self.to.len() - 1;
        }
        e
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.iter_mut().for_each(|l| *l = -1);
        let mut queue = std::collections::VecDeque::new();
        self.level[s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            let mut e = self.head[u];
            while e != NIL {
                let v = self.to[e];
                if self.cap[e] > 0 && self.level[v] < 0 {
                    self.level[v] = self.level[u] + 1;
                    queue.push_back(v);
                }
                e = self.next[e];
            }
        }
        self.level[t] >= 0
    }

    /// Iterative augmenting-path search in the level graph.
    fn dfs(&mut self, s: usize, t: usize) -> i64 {
        let mut path: Vec<usize> = Vec::new();
        let mut u = s;
        loop {
            if u == t {
                let f = path.iter().map(|&e| self.cap[e]).min().unwrap_or(0);
                for &e in &path {
                    self.cap[e] -= f;
                    self.cap[e ^ 1] += f;
                }
                return f;
            }
            let mut advanced = false;
            while self.iter[u] != NIL {
                let e = self.iter[u];
                let v = self.to[e];
                if self.cap[e] > 0 && self.level[v] == self.level[u] + 1 {
                    path.push(e);
                    u = v;
                    advanced = true;
                    break;
                }
                self.iter[u] = self.next[e];
            }
            if !advanced {
                // dead end: retreat
                self.level[u] = -1;
                match path.pop() {
                    Some(e) => {
                        u = self.to[e ^ 1];
                        self.iter[u] = self.next[self.iter[u]];
                    }
                    None => return 0,
                }
            }
        }
    }

    fn max_flow(&mut self, s: usize, t: usize) -> i64 {
        let mut total = 0;
        while self.bfs(s, t) {
            self.iter.clone_from(&self.head);
            loop {
                let f = self.dfs(s, t);
                if f == 0 {
                    break;
                }
                total += f;
            }
        }
        total
    }
}

/// Arcs `(i, j, dist)` sorted by distance.
type Arcs = Vec<(usize, usize, f64)>;

/// Flow network over a growing prefix of the sorted arcs, with its current max flow.
///
/// Adding arcs never invalidates a flow, so each threshold test only augments what the
/// previous prefix could not carry.
#[derive(Clone)]
struct Network {
    g: Dinic,
    m: usize,
    n: usize,
    arcs: usize,
    flow: i64,
}

impl Network {
    fn new(a: &[i64], b: &[i64], capacity: usize) -> Self {
        let (m, n) = (a.len(), b.len());
        let mut g = Dinic::new(m + n + 2, m + n + capacity);
        for (i, &ai) in a.iter().enumerate() {
            g.add(m + n, i, ai);
        }
        for (j, &bj) in b.iter().enumerate() {
            g.add(m + j, m + n + 1, bj);
        }
        Self { g, m, n, arcs: 0, flow: 0 }
    }

    fn extend(&mut self, arcs: &[(usize, usize, f64)]) {
        for &(i, j, _) in arcs {
            self.g.add(i, self.m + j, MASS_SCALE);
        }
        self.arcs += arcs.len();
        self.flow += self.g.max_flow(self.m + self.n, self.m + self.n + 1);
    }

    /// Rounding to integer masses moves up to one unit per atom, so a shortfall of `m + n`
    /// units still counts as feasible.
    fn feasible(&self) -> bool {
        self.flow >= MASS_SCALE - (self.m + self.n) as i64
    }

    /// Flow on the `k`-th added arc.
    fn arc_flow(&self, k: usize) -> i64 {
        self.g.cap[2 * (self.m + self.n + k) + 1]
    }
}

fn arcs_within(mu: &DiscreteMeasure, nu: &DiscreteMeasure, r: f64, cap: usize) -> Result<Arcs> {
    let grid = PointGrid::new(nu.points(), r.max(1e-12));
    let mut arcs = Vec::new();
    for (i, x) in mu.points().iter().enumerate() {
        grid.for_each_within(x, r, |j, d| arcs.push((i, j, d)));
        if arcs.len() > cap {
            return Err(Error::SizeCap(format!("more than {cap} arcs within distance {r:e}")));
        }
    }
    arcs.sort_by(|p, q| p.2.total_cmp(&q.2).then((p.0, p.1).cmp(&(q.0, q.1))));
    Ok(arcs)
}

/// `W_∞(μ, ν)` with a witness plan.
pub fn wasserstein_inf(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<(f64, Coupling)> {
    wasserstein_inf_with(mu, nu, &OtOptions::default())
}

/// Smallest threshold `D` such that all mass can move along arcs of length `≤ D`.
///
/// Feasibility of a threshold is a max-flow question. Arcs enter in order of length:
/// the radius grows geometrically from the nearest-neighbor lower bound until the flow
/// carries all mass, then bisection over the distinct lengths of the last batch finds
/// the exact threshold.
pub fn wasserstein_inf_with(mu: &DiscreteMeasure, nu: &DiscreteMeasure, opts: &OtOptions) -> Result<(f64, Coupling)> {
    check_pair(mu, nu)?;
    let a = integer_masses(mu.weights());
    let b = integer_masses(nu.weights());
    // every atom has to travel at least to its nearest neighbor on the other side
    let gy = PointGrid::with_density(nu.points(), 2.0);
    let gx = PointGrid::with_density(mu.points(), 2.0);
    let lower = mu
        .points()
        .iter()
        .map(|x| gy.nearest(x, 1)[0].1)
        .chain(nu.points().iter().map(|y| gx.nearest(y, 1)[0].1))
        .fold(0.0, f64::max);
    let mut net = Network::new(&a, &b, 0);
    let mut used: Arcs = Vec::new();
    let mut below = -1.0;
    let mut r = if lower > 0.0 { lower } else { 1e-12 };
    let batch = loop {
        let all = arcs_within(mu, nu, r, opts.max_arcs)?;
        let batch: Arcs = all.into_iter().filter(|x| x.2 > below).collect();
        let mut trial = net.clone();
        trial.extend(&batch);
        if trial.feasible() {
            break batch;
        }
        net = trial;
        used.extend_from_slice(&batch);
        below = r;
        r *= 1.5;
    };
    // distinct lengths in the batch; `net` holds everything shorter than the first
    let mut cands: Vec<f64> = batch.iter().map(|x| x.2).collect();
    cands.dedup();
    let prefix = |d: f64| batch.partition_point(|x| x.2 <= d);
    let (mut lo, mut hi) = (0usize, cands.len() - 1);
    let mut best: Option<Network> = None;
    // invariant: cands[hi] feasible; everything below cands[lo] infeasible; net holds prefix(cands[lo - 1])
    while lo < hi {
        let mid = (lo + hi) / 2;
        let mut trial = net.clone();
        let start = trial.arcs - used.len();
        trial.extend(&batch[start..prefix(cands[mid])]);
        if trial.feasible() {
            hi = mid;
            best = Some(trial);
        } else {
            lo = mid + 1;
            net = trial;
        }
    }
    let done = match best {
        Some(b) if b.arcs - used.len() == prefix(cands[hi]) => b,
        _ => {
            let mut t = net.clone();
            let start = t.arcs - used.len();
            t.extend(&batch[start..prefix(cands[hi])]);
            t
        }
    };
    used.extend_from_slice(&batch[..prefix(cands[hi])]);
    let scale = MASS_SCALE as f64;
    let plan: Vec<Transfer> = used
        .iter()
        .enumerate()
        .map(|(k, &(i, j, d))| (i, j, d, done.arc_flow(k)))
        .filter(|x| x.3 > 0)
        .map(|(i, j, d, f)| Transfer { src: i, dst: j, mass: f as f64 / scale, dist: d })
        .collect();
    let coupling = Coupling::from_plan(plan, f64::INFINITY);
    Ok((coupling.bottleneck, coupling))
}
