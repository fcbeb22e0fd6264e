use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::measure::{check_pair, integer_masses, Coupling, DiscreteMeasure, Transfer, MASS_SCALE};
use super::neighbors::PointGrid;
use super::simplex::TransportSimplex;
use crate::error::{Error, Result};

/// Limits and sparsification parameters of the exact solvers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OtOptions {
    /// Largest number of source-target arcs a restricted problem may hold.
    pub max_arcs: usize,
    /// Problems with at most this many pairs are solved on the complete graph.
    pub dense_pairs: usize,
    /// Nearest neighbors per atom in the initial candidate set.
    pub neighbors: usize,
    /// Most violated arcs added per source and pricing round.
    pub columns_per_row: usize,
}

impl Default for OtOptions {
    fn default() -> Self {
        Self { max_arcs: 4_000_000, dense_pairs: 40_000, neighbors: 8, columns_per_row: 8 }
    }
}

#[inline]
pub(crate) fn ground_cost(x: &Vector3<f64>, y: &Vector3<f64>, p: f64) -> f64 {
    let d2 = (x - y).norm_squared();
    if p == 2.0 {
        d2
    } else if p == 1.0 {
        d2.sqrt()
    } else {
        d2.sqrt().powf(p)
    }
}

/// `W_p(μ, ν)` and an optimal plan, for `1 ≤ p < ∞`.
pub fn wasserstein_p(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64) -> Result<(f64, Coupling)> {
    wasserstein_p_with(mu, nu, p, &OtOptions::default())
}

/// Network simplex on the transportation problem with cost `|x − y|^p`.
///
/// Small problems use every arc. Larger ones start from a Morton-order northwest-corner
/// plan plus nearest-neighbor arcs and grow the arc set by pricing all pairs against the
/// simplex potentials until none has negative reduced cost, which certifies optimality on
/// the complete graph.
pub fn wasserstein_p_with(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    p: f64,
    opts: &OtOptions,
) -> Result<(f64, Coupling)> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidInput(format!("exponent p = {p} must lie in [1, ∞)")));
    }
    check_pair(mu, nu)?;
    let (x, y) = (mu.points(), nu.points());
    let (m, n) = (x.len(), y.len());
    let a = integer_masses(mu.weights());
    let b = integer_masses(nu.weights());

    let (lo_a, hi_a) = mu.bounding_box();
    let (lo_b, hi_b) = nu.bounding_box();
    let diam = (hi_a.sup(&hi_b) - lo_a.inf(&lo_b)).norm();
    let max_cost = diam.powf(p).max(f64::MIN_POSITIVE);
    let art = (max_cost + 1.0) * (m + n + 1) as f64;
    let eps = 1e-12 * (max_cost + 1.0);
    let mut ns = TransportSimplex::new(&a, &b, art, eps);

    let dense = m.saturating_mul(n) <= opts.dense_pairs;
    if dense {
        if m * n > opts.max_arcs {
            return Err(Error::SizeCap(format!("{m}×{n} arcs exceed the cap {}", opts.max_arcs)));
        }
        for (i, xi) in x.iter().enumerate() {
            for (j, yj) in y.iter().enumerate() {
                ns.add_arc(i, j, ground_cost(xi, yj, p));
            }
        }
        ns.solve();
    } else {
        let mut seen = std::collections::HashSet::new();
        let mut add = |ns: &mut TransportSimplex, i: usize, j: usize| {
            if seen.insert((i as u32, j as u32)) {
                ns.add_arc(i, j, ground_cost(&x[i], &y[j], p));
            }
        };
        for (i, j) in northwest_corner(x, &a, y, &b) {
            add(&mut ns, i, j);
        }
        let gy = PointGrid::with_density(y, 2.0);
        for (i, xi) in x.iter().enumerate() {
            for (j, _) in gy.nearest(xi, opts.neighbors) {
                add(&mut ns, i, j);
            }
        }
        let gx = PointGrid::with_density(x, 2.0);
        for (j, yj) in y.iter().enumerate() {
            for (i, _) in gx.nearest(yj, opts.neighbors) {
                add(&mut ns, i, j);
            }
        }
        loop {
            if ns.real_arcs() > opts.max_arcs {
                return Err(Error::SizeCap(format!(
                    "{} candidate arcs exceed the cap {}",
                    ns.real_arcs(),
                    opts.max_arcs
                )));
            }
            ns.solve();
            let violated = price(&ns, x, y, p, eps, opts.columns_per_row);
            if violated.is_empty() {
                break;
            }
            log::debug!("column generation: {} arcs, adding {}", ns.real_arcs(), violated.len());
            for (i, j) in violated {
                add(&mut ns, i, j);
            }
        }
    }
    if ns.artificial_flow() != 0 {
        return Err(Error::Infeasible("optimal basis still uses artificial arcs".into()));
    }
    let scale = MASS_SCALE as f64;
    let plan: Vec<Transfer> = ns
        .flows()
        .map(|(i, j, f, _)| Transfer { src: i, dst: j, mass: f as f64 / scale, dist: (x[i] - y[j]).norm() })
        .collect();
    let coupling = Coupling::from_plan(plan, p);
    Ok((coupling.cost, coupling))
}

/// Arcs with negative reduced cost, the most negative few per source.
fn price(ns: &TransportSimplex, x: &[Vector3<f64>], y: &[Vector3<f64>], p: f64, eps: f64, per_row: usize) -> Vec<(usize, usize)> {
    let sink_pi: Vec<f64> = (0..y.len()).map(|j| ns.sink_potential(j)).collect();
    let rows: Vec<Vec<(usize, usize)>> = (0..x.len())
        .into_par_iter()
        .map(|i| {
            let base = ns.source_potential(i);
            let mut best: Vec<(f64, usize)> = Vec::new();
            for (j, yj) in y.iter().enumerate() {
                let rc = ground_cost(&x[i], yj, p) + base - sink_pi[j];
                if rc < -eps {
                    best.push((rc, j));
                }
            }
            if best.len() > per_row {
                best.select_nth_unstable_by(per_row - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                best.truncate(per_row);
            }
            best.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            best.into_iter().map(|(_, j)| (i, j)).collect()
        })
        .collect();
    rows.into_iter().flatten().collect()
}

/// Morton key of `x` in the box `[lo, lo + ext]` with 21 bits per axis.
fn morton_key(x: &Vector3<f64>, lo: &Vector3<f64>, ext: f64) -> u64 {
    let scale = ((1u64 << 21) - 1) as f64 / ext.max(f64::MIN_POSITIVE);
    let c = [0, 1, 2].map(|d| ((x[d] - lo[d]) * scale).clamp(0.0, ((1u64 << 21) - 1) as f64) as u64);
    let spread = |v: u64| {
        let mut x = v & 0x1f_ffff;
        x = (x | x << 32) & 0x1f00000000ffff;
        x = (x | x << 16) & 0x1f0000ff0000ff;
        x = (x | x << 8) & 0x100f00f00f00f00f;
        x = (x | x << 4) & 0x10c30c30c30c30c3;
        x = (x | x << 2) & 0x1249249249249249;
        x
    };
    spread(c[0]) | spread(c[1]) << 1 | spread(c[2]) << 2
}

/// A feasible plan pairing both measures along a common space-filling order.
fn northwest_corner(x: &[Vector3<f64>], a: &[i64], y: &[Vector3<f64>], b: &[i64]) -> Vec<(usize, usize)> {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in x.iter().chain(y) {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let ext = (hi - lo).max();
    let mut ox: Vec<usize> = (0..x.len()).collect();
    ox.sort_by_key(|&i| (morton_key(&x[i], &lo, ext), i));
    let mut oy: Vec<usize> = (0..y.len()).collect();
    oy.sort_by_key(|&j| (morton_key(&y[j], &lo, ext), j));
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[ox[0]], b[oy[0]]);
    let mut arcs = Vec::with_capacity(x.len() + y.len());
    loop {
        arcs.push((ox[i], oy[j]));
        let t = ra.min(rb);
        ra -= t;
        rb -= t;
        if ra == 0 {
            i += 1;
            if i == ox.len() {
                break;
            }
            ra = a[ox[i]];
        }
        if rb == 0 {
            j += 1;
            if j == oy.len() {
                break;
            }
            rb = b[oy[j]];
        }
    }
    arcs
}
