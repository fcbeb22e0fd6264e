//! Independent optimal transport oracles for small instances.

use nalgebra::Vector3;

/// Minimizes `Σ c_ij x_ij` over transport plans with marginals `a`, `b` by a dense
/// two-phase tableau simplex with Bland's rule.
pub fn transport_lp(a: &[f64], b: &[f64], cost: &[Vec<f64>]) -> f64 {
    let (m, n) = (a.len(), b.len());
    let nx = m * n;
    let rows = m + n;
    let cols = nx + rows + 1; // plans, artificials, rhs
    let rhs = cols - 1;
    let mut t = vec![vec![0.0; cols]; rows];
    for i in 0..m {
        for j in 0..n {
            t[i][i * n + j] = 1.0;
            t[m + j][i * n + j] = 1.0;
        }
    }
    for r in 0..rows {
        t[r][nx + r] = 1.0;
        t[r][rhs] = if r < m { a[r] } else { b[r - m] };
    }
    let mut basis: Vec<usize> = (nx..nx + rows).collect();
    let eps = 1e-13;

    let run = |t: &mut Vec<Vec<f64>>, basis: &mut Vec<usize>, obj: &[f64], allowed: usize| {
        loop {
            // reduced costs c_j − c_B B^{-1} A_j, read off the tableau
            let mut enter = None;
            for j in 0..allowed {
                if basis.contains(&j) {
                    continue;
                }
                let mut rc = obj[j];
                for (r, &bv) in basis.iter().enumerate() {
                    rc -= obj[bv] * t[r][j];
                }
                if rc < -eps {
                    enter = Some(j);
                    break;
                }
            }
            let Some(j) = enter else { return };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..t.len() {
                if t[r][j] > eps {
                    let ratio = t[r][rhs] / t[r][j];
                    let better = match leave {
                        None => true,
                        Some((lr, lv)) => ratio < lv - 1e-15 || (ratio <= lv + 1e-15 && basis[r] < basis[lr]),
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let (r, _) = leave.expect("bounded");
            pivot(t, r, j);
            basis[r] = j;
        }
    };

    let mut phase1 = vec![0.0; cols - 1];
    for v in phase1.iter_mut().skip(nx) {
        *v = 1.0;
    }
    run(&mut t, &mut basis, &phase1, cols - 1);
    // drive remaining artificials out of the basis or drop their redundant rows
    let mut r = 0;
    while r < t.len() {
        if basis[r] >= nx {
            if let Some(j) = (0..nx).find(|&j| !basis.contains(&j) && t[r][j].abs() > 1e-9) {
                pivot(&mut t, r, j);
                basis[r] = j;
            } else {
                t.remove(r);
                basis.remove(r);
                continue;
            }
        }
        r += 1;
    }
    let mut phase2 = vec![0.0; cols - 1];
    for i in 0..m {
        for j in 0..n {
            phase2[i * n + j] = cost[i][j];
        }
    }
    run(&mut t, &mut basis, &phase2, nx);
    basis.iter().enumerate().map(|(r, &bv)| phase2[bv] * t[r][rhs]).sum()
}

fn pivot(t: &mut [Vec<f64>], r: usize, j: usize) {
    let p = t[r][j];
    for v in t[r].iter_mut() {
        *v /= p;
    }
    let row = t[r].clone();
    for (k, other) in t.iter_mut().enumerate() {
        if k != r {
            let f = other[j];
            if f != 0.0 {
                for (o, v) in other.iter_mut().zip(&row) {
                    *o -= f * v;
                }
            }
        }
    }
}

/// Bottleneck assignment between equal-size point sets by enumerating permutations.
pub fn bottleneck_by_permutations(x: &[Vector3<f64>], y: &[Vector3<f64>]) -> f64 {
    fn go(k: usize, perm: &mut Vec<usize>, x: &[Vector3<f64>], y: &[Vector3<f64>], cur: f64, best: &mut f64) {
        if cur >= *best {
            return;
        }
        if k == perm.len() {
            *best = cur;
            return;
        }
        for s in k..perm.len() {
            perm.swap(k, s);
            let d = (x[k] - y[perm[k]]).norm();
            go(k + 1, perm, x, y, cur.max(d), best);
            perm.swap(k, s);
        }
    }
    let mut perm: Vec<usize> = (0..y.len()).collect();
    let mut best = f64::INFINITY;
    go(0, &mut perm, x, y, 0.0, &mut best);
    best
}
