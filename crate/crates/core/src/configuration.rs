//! Particle clouds and their separation statistics.
//!
//! A configuration is the list of centers `X_i` together with the [`PhysicalSetup`].
//! [`compute_stats`] measures how well separated the cloud is, [`generate_well_prepared`]
//! builds clouds with `d_min ≍ N^{-1/3}`, and [`mollified_density`] smooths a cloud into
//! a continuum density at the scale `d_min`.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::continuum::{DensityField, GridSpec};
use crate::density::{bump, Density, BUMP_NORMALIZATION};
use crate::error::{Error, Result};
use crate::kernels::PhysicalSetup;
use crate::sum::Neumaier;

/// Centers of `N` spheres at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleConfiguration {
    positions: Vec<Vector3<f64>>,
    setup: PhysicalSetup,
    time: f64,
}

impl ParticleConfiguration {
    /// Checks the count, finiteness and that no two balls of radius `R` overlap.
    pub fn new(positions: Vec<Vector3<f64>>, setup: PhysicalSetup, time: f64) -> Result<Self> {
        let cfg = Self::unchecked(positions, setup, time)?;
        if cfg.len() >= 2 {
            let (d, i, j) = closest_pair(&cfg.positions);
            if d == 0.0 {
                return Err(Error::Coincident(i, j));
            }
            if d <= 2.0 * setup.radius {
                return Err(Error::InvalidInput(format!(
                    "particles {i} and {j} overlap: distance {d:e} <= 2R = {:e}",
                    2.0 * setup.radius
                )));
            }
        }
        Ok(cfg)
    }

    /// Like [`new`](Self::new) without the O(N²) overlap check.
    pub(crate) fn unchecked(positions: Vec<Vector3<f64>>, setup: PhysicalSetup, time: f64) -> Result<Self> {
        if positions.len() != setup.particle_count {
            return Err(Error::InvalidInput(format!(
                "{} positions for particle_count {}",
                positions.len(),
                setup.particle_count
            )));
        }
        if !time.is_finite() {
            return Err(Error::NotFinite(time));
        }
        if positions.iter().any(|x| !x.iter().all(|c| c.is_finite())) {
            return Err(Error::NotFinite(time));
        }
        Ok(Self { positions, setup, time })
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn setup(&self) -> &PhysicalSetup {
        &self.setup
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Same particles with another setup (e.g. a different radius).
    pub fn with_setup(&self, setup: PhysicalSetup) -> Result<Self> {
        Self::new(self.positions.clone(), setup, self.time)
    }

    pub fn centroid(&self) -> Vector3<f64> {
        self.positions.iter().sum::<Vector3<f64>>() / self.len() as f64
    }

    /// Smallest pairwise distance; infinite for a single particle.
    pub fn min_distance(&self) -> f64 {
        closest_pair(&self.positions).0
    }

    /// Writes the plain-text table: `N R gx gy gz`, then one `x y z` line per particle.
    pub fn write_text(&self, w: &mut impl Write) -> Result<()> {
        let g = self.setup.gravity;
        writeln!(w, "{} {:.16e} {:.16e} {:.16e} {:.16e}", self.len(), self.setup.radius, g.x, g.y, g.z)?;
        for x in &self.positions {
            writeln!(w, "{:.16e} {:.16e} {:.16e}", x.x, x.y, x.z)?;
        }
        Ok(())
    }

    /// Reads the table written by [`write_text`](Self::write_text); time is set to 0.
    pub fn read_text(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines().filter(|l| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true));
        let header = lines.next().ok_or_else(|| Error::Parse("empty configuration file".into()))??;
        let head: Vec<&str> = header.split_whitespace().collect();
        if head.len() != 5 {
            return Err(Error::Parse(format!("header needs `N R gx gy gz`, got {header:?}")));
        }
        let n: usize = head[0].parse().map_err(|_| Error::Parse(format!("bad particle count {:?}", head[0])))?;
        let nums = parse_reals(&head[1..])?;
        let setup = PhysicalSetup::new(Vector3::new(nums[1], nums[2], nums[3]), n, nums[0])?;
        let mut positions = Vec::with_capacity(n);
        for line in lines {
            let line = line?;
            let v = parse_reals(&line.split_whitespace().collect::<Vec<_>>())?;
            if v.len() != 3 {
                return Err(Error::Parse(format!("expected `x y z`, got {line:?}")));
            }
            positions.push(Vector3::new(v[0], v[1], v[2]));
        }
        Self::new(positions, setup, 0.0)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_text(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_text(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn parse_reals(fields: &[&str]) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|s| s.parse::<f64>().map_err(|_| Error::Parse(format!("not a number: {s:?}"))))
        .collect()
}

/// Smallest distance and the pair realizing it (lowest indices on ties).
pub(crate) fn closest_pair(x: &[Vector3<f64>]) -> (f64, usize, usize) {
    (0..x.len())
        .into_par_iter()
        .map(|i| {
            let mut best = (f64::INFINITY, i, i);
            for j in i + 1..x.len() {
                let d = (x[i] - x[j]).norm();
                if d < best.0 {
                    best = (d, i, j);
                }
            }
            best
        })
        .reduce(|| (f64::INFINITY, 0, 0), |a, b| if b.0 < a.0 || (b.0 == a.0 && (b.1, b.2) < (a.1, a.2)) { b } else { a })
}

/// Separation statistics of a configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigurationStats {
    pub d_min: f64,
    /// `α_k = max_i (1/N) Σ_{j≠i} |X_i − X_j|^{-k}` for k = 1, 2, 3.
    pub alpha: [f64; 3],
    /// Exponent used for `lambda_q`.
    pub q: f64,
    /// `λ_q = max_i Σ_{j≠i} R³/|X_i − X_j|^{2q}`.
    pub lambda_q: f64,
    /// `R³/d_min³`.
    pub c0: f64,
}

impl ConfigurationStats {
    /// `d_min·N^{1/3}`, bounded above and below for well-prepared clouds.
    pub fn separation(&self, n: usize) -> f64 {
        self.d_min * (n as f64).cbrt()
    }
}

/// Computes `d_min`, `α_1..3`, `λ_q` and `c_0`.
pub fn compute_stats(cfg: &ParticleConfiguration, q: f64) -> Result<ConfigurationStats> {
    let x = cfg.positions();
    let n = x.len();
    if n < 2 {
        return Err(Error::InvalidInput("statistics need at least two particles".into()));
    }
    if !q.is_finite() {
        return Err(Error::InvalidInput(format!("exponent q = {q} is invalid")));
    }
    let r3 = cfg.setup().radius.powi(3);
    let per: Vec<std::result::Result<(f64, [f64; 3], f64), (usize, usize)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut d_min = f64::INFINITY;
            let mut s = [Neumaier::default(); 4];
            for j in 0..n {
                if j == i {
                    continue;
                }
                let d2 = (x[i] - x[j]).norm_squared();
                if d2 == 0.0 {
                    return Err((i.min(j), i.max(j)));
                }
                let d = d2.sqrt();
                d_min = d_min.min(d);
                let inv = 1.0 / d;
                s[0].add(inv);
                s[1].add(inv * inv);
                s[2].add(inv * inv * inv);
                s[3].add(r3 * d2.powf(-q));
            }
            let nf = n as f64;
            Ok((d_min, [s[0].value() / nf, s[1].value() / nf, s[2].value() / nf], s[3].value()))
        })
        .collect();
    let mut out = ConfigurationStats { d_min: f64::INFINITY, alpha: [0.0; 3], q, lambda_q: 0.0, c0: 0.0 };
    for p in per {
        let (d, a, l) = p.map_err(|(i, j)| Error::Coincident(i, j))?;
        out.d_min = out.d_min.min(d);
        for k in 0..3 {
            out.alpha[k] = out.alpha[k].max(a[k]);
        }
        out.lambda_q = out.lambda_q.max(l);
    }
    out.c0 = r3 / out.d_min.powi(3);
    Ok(out)
}

/// Volume fraction as a function of `N`: `φ_N = φ₀ N^{-θ}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiSchedule {
    pub phi0: f64,
    pub theta: f64,
}

impl PhiSchedule {
    pub fn new(phi0: f64, theta: f64) -> Result<Self> {
        if !(phi0 > 0.0 && phi0.is_finite()) {
            return Err(Error::InvalidInput(format!("phi0 = {phi0} must be positive")));
        }
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::InvalidInput(format!("theta = {theta} must lie in (0, 1)")));
        }
        Ok(Self { phi0, theta })
    }

    /// Schedule with `φ_N log N = target` at `n_max`.
    pub fn for_largest(n_max: usize, theta: f64, target: f64) -> Result<Self> {
        if n_max < 2 {
            return Err(Error::InvalidInput("the largest N must be at least 2".into()));
        }
        let n = n_max as f64;
        Self::new(target / (n.powf(-theta) * n.ln()), theta)
    }

    pub fn phi(&self, n: usize) -> f64 {
        self.phi0 * (n.max(1) as f64).powf(-self.theta)
    }

    /// Sphere radius realizing `φ_N` for `N` particles.
    pub fn radius(&self, n: usize) -> f64 {
        (3.0 * self.phi(n) / (4.0 * std::f64::consts::PI * n.max(1) as f64)).cbrt()
    }
}

/// `φ_N log N` bound at the largest sweep size when no φ₀ is given.
pub const DEFAULT_DILUTENESS: f64 = 0.2;

/// Largest jitter, as a fraction of the lattice spacing.
pub const JITTER: f64 = 0.25;
/// Smallest accepted `d_min`, as a fraction of the lattice spacing.
pub const MIN_SEPARATION: f64 = 0.4;
const RETRIES: usize = 100;
const MAX_NODES: usize = 1 << 26;

fn morton(c: [usize; 3]) -> u64 {
    fn spread(v: usize) -> u64 {
        let mut x = v as u64 & 0x1f_ffff;
        x = (x | x << 32) & 0x1f00000000ffff;
        x = (x | x << 16) & 0x1f0000ff0000ff;
        x = (x | x << 8) & 0x100f00f00f00f00f;
        x = (x | x << 4) & 0x10c30c30c30c30c3;
        x = (x | x << 2) & 0x1249249249249249;
        x
    }
    spread(c[0]) | spread(c[1]) << 1 | spread(c[2]) << 2
}

pub(crate) struct Lattice {
    pub spacing: f64,
    pub nodes: Vec<(u64, Vector3<f64>, f64)>,
}

/// Cell-centered lattice of spacing `h` over the support box, positive-density nodes only,
/// in Morton order.
pub(crate) fn lattice(density: &dyn Density, h: f64) -> Result<Lattice> {
    let (lo, hi) = density.support_box();
    let ext = hi - lo;
    let counts = [0, 1, 2].map(|d| ((ext[d] / h).ceil() as usize).max(1));
    if counts.iter().product::<usize>() > MAX_NODES {
        return Err(Error::Support(format!("lattice of spacing {h:e} has too many nodes")));
    }
    let start = [0, 1, 2].map(|d| lo[d] + 0.5 * (ext[d] - (counts[d] - 1) as f64 * h));
    let mut nodes = Vec::new();
    for k in 0..counts[2] {
        for j in 0..counts[1] {
            for i in 0..counts[0] {
                let x = Vector3::new(start[0] + i as f64 * h, start[1] + j as f64 * h, start[2] + k as f64 * h);
                let v = density.value(&x);
                if v > 0.0 {
                    nodes.push((morton([i, j, k]), x, v));
                }
            }
        }
    }
    nodes.sort_by_key(|n| n.0);
    Ok(Lattice { spacing: h, nodes })
}

/// Lattice fine enough that every node is kept with probability at most one.
fn thinning_lattice(density: &dyn Density, n: usize) -> Result<(Lattice, Vec<f64>)> {
    let rho_max = density.max_value();
    if !(rho_max > 0.0 && rho_max.is_finite()) {
        return Err(Error::Support("density has no positive finite maximum".into()));
    }
    let mut h = (n as f64 * rho_max).powf(-1.0 / 3.0);
    for _ in 0..60 {
        let lat = lattice(density, h)?;
        let total: f64 = lat.nodes.iter().map(|n| n.2).sum();
        if lat.nodes.len() >= n && total > 0.0 {
            let p: Vec<f64> = lat.nodes.iter().map(|x| n as f64 * x.2 / total).collect();
            let pmax = p.iter().cloned().fold(0.0, f64::max);
            if pmax <= 1.0 {
                return Ok((lat, p));
            }
            h *= pmax.powf(-1.0 / 3.0) * 0.999;
        } else {
            h *= 0.9;
        }
    }
    Err(Error::Support(format!("support too small to place {n} lattice nodes")))
}

/// Spacing of the lattice [`generate_well_prepared`] uses for `n` points.
pub fn lattice_spacing(density: &dyn Density, n: usize) -> Result<f64> {
    Ok(thinning_lattice(density, n.max(1))?.0.spacing)
}

/// Systematic sampling along the Morton order: exactly `n` distinct nodes.
fn systematic_pick(p: &[f64], n: usize, u: f64) -> Vec<usize> {
    let mut cum = Vec::with_capacity(p.len());
    let mut acc = 0.0;
    for &q in p {
        acc += q;
        cum.push(acc);
    }
    let scale = acc / n as f64;
    let mut picked = Vec::with_capacity(n);
    let mut i = 0;
    for m in 0..n {
        let t = (m as f64 + u) * scale;
        while i + 1 < cum.len() && cum[i] <= t {
            i += 1;
        }
        if picked.last() == Some(&i) && i + 1 < cum.len() {
            i += 1;
        }
        picked.push(i);
    }
    picked.dedup();
    picked
}

fn jitter(rng: &mut ChaCha8Rng, radius: f64) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
        );
        if v.norm_squared() <= 1.0 {
            return v * radius;
        }
    }
}

/// Builds `n` well-separated points distributed like `density`.
///
/// A cubic lattice of spacing `h ≈ (N‖ρ‖∞)^{-1/3}` covers the support; node `i` is kept
/// with probability `p_i ∝ ρ(x_i)` by systematic sampling along a Morton curve, so exactly
/// `n` nodes survive and they are spread evenly. Each survivor is moved by a uniform
/// offset in the ball of radius `0.25h`, staying inside the support. The radius follows
/// `schedule`. Deterministic in `seed`.
pub fn generate_well_prepared(
    density: &dyn Density,
    n: usize,
    schedule: &PhiSchedule,
    gravity: Vector3<f64>,
    seed: u64,
) -> Result<ParticleConfiguration> {
    if n == 0 {
        return Err(Error::InvalidInput("particle count must be at least 1".into()));
    }
    let setup = PhysicalSetup::new(gravity, n, schedule.radius(n))?;
    if n == 1 {
        return ParticleConfiguration::new(vec![density.support_center()], setup, 0.0);
    }
    let (lat, p) = thinning_lattice(density, n)?;
    let h = lat.spacing;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..RETRIES {
        let u: f64 = rng.random();
        let picked = systematic_pick(&p, n, u);
        if picked.len() != n {
            continue;
        }
        let positions: Vec<Vector3<f64>> = picked
            .iter()
            .map(|&i| {
                let node = lat.nodes[i].1;
                for _ in 0..RETRIES {
                    let x = node + jitter(&mut rng, JITTER * h);
                    if density.value(&x) > 0.0 {
                        return x;
                    }
                }
                node
            })
            .collect();
        let d_min = closest_pair(&positions).0;
        if d_min >= MIN_SEPARATION * h {
            if d_min <= 2.0 * setup.radius {
                return Err(Error::InvalidInput(format!(
                    "radius {:e} too large for separation {d_min:e}; lower phi0",
                    setup.radius
                )));
            }
            return ParticleConfiguration::new(positions, setup, 0.0);
        }
    }
    Err(Error::Rejection(RETRIES))
}

/// `ρ̄(x) = (1/(N d³)) Σ_i ψ((x − X_i)/d)` with `d = d_min` and `ψ` the normalized bump.
pub fn mollified_density(cfg: &ParticleConfiguration, grid: &GridSpec) -> Result<DensityField> {
    if cfg.len() < 2 {
        return Err(Error::InvalidInput("d_min is undefined for one particle; use a fixed width".into()));
    }
    mollified_density_with_width(cfg, grid, cfg.min_distance())
}

/// Mollification at an arbitrary width.
///
/// Each cell holds the cell average of the bump (sampled on a sub-lattice when the width
/// is comparable to the cell), and every bump is rescaled to carry mass exactly `1/N`.
pub fn mollified_density_with_width(cfg: &ParticleConfiguration, grid: &GridSpec, width: f64) -> Result<DensityField> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(Error::InvalidInput(format!("mollifier width {width} must be positive")));
    }
    let (lo, hi) = (grid.origin, grid.upper());
    for (i, x) in cfg.positions().iter().enumerate() {
        if (0..3).any(|d| x[d] - width < lo[d] || x[d] + width > hi[d]) {
            return Err(Error::OutsideDomain(i));
        }
    }
    let h = grid.cell;
    let sub = ((4.0 * h / width).ceil() as usize).clamp(1, 8);
    let offsets: Vec<f64> = (0..sub).map(|s| ((s as f64 + 0.5) / sub as f64 - 0.5) * h).collect();
    let inv_w2 = 1.0 / (width * width);
    let share = 1.0 / cfg.len() as f64;
    let reach = (width / h).ceil() as i64 + 1;
    let dims = grid.dims.map(|d| d as i64);

    let bumps: Vec<Vec<(usize, f64)>> = cfg
        .positions()
        .par_iter()
        .map(|x| {
            let c = [0, 1, 2].map(|d| ((x[d] - grid.origin[d]) / h).floor() as i64);
            let mut cells = Vec::new();
            let mut total = 0.0;
            for k in (c[2] - reach).max(0)..=(c[2] + reach).min(dims[2] - 1) {
                for j in (c[1] - reach).max(0)..=(c[1] + reach).min(dims[1] - 1) {
                    for i in (c[0] - reach).max(0)..=(c[0] + reach).min(dims[0] - 1) {
                        let center = grid.cell_center(i as usize, j as usize, k as usize) - x;
                        let mut s = 0.0;
                        for oz in &offsets {
                            for oy in &offsets {
                                for ox in &offsets {
                                    let y = center + Vector3::new(*ox, *oy, *oz);
                                    s += bump(y.norm_squared() * inv_w2);
                                }
                            }
                        }
                        if s > 0.0 {
                            total += s;
                            cells.push((grid.index(i as usize, j as usize, k as usize), s));
                        }
                    }
                }
            }
            // mass of the samples is total·h³/sub³; rescale to exactly 1/N
            let scale = if total > 0.0 { share / (total * grid.cell_volume()) } else { 0.0 };
            cells.into_iter().map(|(idx, s)| (idx, s * scale)).collect()
        })
        .collect();
    let mut values = vec![0.0; grid.len()];
    for cells in bumps {
        if cells.is_empty() {
            return Err(Error::Support(format!("mollifier width {width:e} is below the grid resolution")));
        }
        for (idx, v) in cells {
            values[idx] += v;
        }
    }
    DensityField::new(*grid, values)
}

/// Peak of a single bump of width `d` carrying unit mass, `c_ψ/d³`.
pub fn bump_peak(width: f64) -> f64 {
    BUMP_NORMALIZATION / width.powi(3)
}
