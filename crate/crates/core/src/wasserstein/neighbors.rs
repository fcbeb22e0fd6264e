use nalgebra::Vector3;

/// Uniform bucket grid over a point set.
pub(crate) struct PointGrid<'a> {
    points: &'a [Vector3<f64>],
    lo: Vector3<f64>,
    cell: f64,
    dims: [usize; 3],
    start: Vec<usize>,
    order: Vec<usize>,
}

const MAX_BUCKETS: usize = 1 << 22;

impl<'a> PointGrid<'a> {
    pub fn new(points: &'a [Vector3<f64>], cell: f64) -> Self {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for x in points {
            lo = lo.inf(x);
            hi = hi.sup(x);
        }
        let ext = hi - lo;
        let mut cell = if cell > 0.0 && cell.is_finite() { cell } else { ext.max().max(1.0) };
        let count = |c: f64| [0, 1, 2].map(|d| (ext[d] / c).floor() + 1.0);
        while count(cell).iter().product::<f64>() > MAX_BUCKETS as f64 {
            cell *= 2.0;
        }
        let dims = count(cell).map(|c| c as usize);
        let nb = dims.iter().product::<usize>();
        let mut counts = vec![0usize; nb + 1];
        let mut key = Vec::with_capacity(points.len());
        for x in points {
            let b = Self::bucket_of(lo, cell, dims, x);
            counts[b + 1] += 1;
            key.push(b);
        }
        for b in 0..nb {
            counts[b + 1] += counts[b];
        }
        let start = counts.clone();
        let mut fill = counts;
        let mut order = vec![0; points.len()];
        for (i, &b) in key.iter().enumerate() {
            order[fill[b]] = i;
            fill[b] += 1;
        }
        Self { points, lo, cell, dims, start, order }
    }

    /// Grid sized for roughly `per_cell` points per occupied bucket.
    pub fn with_density(points: &'a [Vector3<f64>], per_cell: f64) -> Self {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for x in points {
            lo = lo.inf(x);
            hi = hi.sup(x);
        }
        let ext = (hi - lo).map(|e| e.max(1e-12));
        let vol = ext.x * ext.y * ext.z;
        let cell = (vol * per_cell / points.len().max(1) as f64).cbrt();
        Self::new(points, cell)
    }

    fn bucket_of(lo: Vector3<f64>, cell: f64, dims: [usize; 3], x: &Vector3<f64>) -> usize {
        let c = [0, 1, 2].map(|d| (((x[d] - lo[d]) / cell).floor().max(0.0) as usize).min(dims[d] - 1));
        c[0] + dims[0] * (c[1] + dims[1] * c[2])
    }

    fn cell_range(&self, x: &Vector3<f64>, r: f64) -> [(usize, usize); 3] {
        [0, 1, 2].map(|d| {
            let a = ((x[d] - r - self.lo[d]) / self.cell).floor();
            let b = ((x[d] + r - self.lo[d]) / self.cell).floor();
            let top = self.dims[d] as f64 - 1.0;
            (a.clamp(0.0, top) as usize, b.clamp(0.0, top) as usize)
        })
    }

    /// Calls `f(index, distance)` for every point within `r` of `x`.
    pub fn for_each_within(&self, x: &Vector3<f64>, r: f64, mut f: impl FnMut(usize, f64)) {
        let rng = self.cell_range(x, r);
        for k in rng[2].0..=rng[2].1 {
            for j in rng[1].0..=rng[1].1 {
                let row = self.dims[0] * (j + self.dims[1] * k);
                let (a, b) = (self.start[row + rng[0].0], self.start[row + rng[0].1 + 1]);
                for &i in &self.order[a..b] {
                    let d = (self.points[i] - x).norm();
                    if d <= r {
                        f(i, d);
                    }
                }
            }
        }
    }

    /// The `k` nearest points to `x` as `(index, distance)`, nearest first.
    pub fn nearest(&self, x: &Vector3<f64>, k: usize) -> Vec<(usize, f64)> {
        let k = k.min(self.points.len());
        if k == 0 {
            return Vec::new();
        }
        let mut r = self.cell;
        loop {
            let mut found = Vec::new();
            self.for_each_within(x, r, |i, d| found.push((i, d)));
            if found.len() >= k || found.len() == self.points.len() {
                found.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                found.truncate(k);
                return found;
            }
            r *= 2.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_matches_brute_force() {
        let pts: Vec<Vector3<f64>> = (0..300)
            .map(|i| {
                let t = i as f64;
                Vector3::new((t * 0.37).sin(), (t * 0.71).cos(), (t * 0.13).sin() * 2.0)
            })
            .collect();
        let grid = PointGrid::with_density(&pts, 2.0);
        let x = Vector3::new(0.1, -0.2, 0.3);
        let got = grid.nearest(&x, 7);
        let mut all: Vec<(usize, f64)> = pts.iter().enumerate().map(|(i, p)| (i, (p - x).norm())).collect();
        all.sort_by(|a, b| a.1.total_cmp(&b.1));
        assert_eq!(got.iter().map(|p| p.0).collect::<Vec<_>>(), all[..7].iter().map(|p| p.0).collect::<Vec<_>>());
        let mut within = Vec::new();
        grid.for_each_within(&x, 0.5, |i, _| within.push(i));
        within.sort();
        let mut exact: Vec<usize> = all.iter().filter(|p| p.1 <= 0.5).map(|p| p.0).collect();
        exact.sort();
        assert_eq!(within, exact);
    }
}
