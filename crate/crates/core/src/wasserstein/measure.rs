use std::io::Write;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::configuration::ParticleConfiguration;
use crate::error::{Error, Result};

/// Tolerance on the total mass of a measure and on coupling marginals.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// A finite sum of weighted Diracs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    points: Vec<Vector3<f64>>,
    weights: Vec<f64>,
    /// How far, at most, any unit of mass was moved when this measure was built from a
    /// continuous one. Zero for exact measures.
    displacement_bound: f64,
}

impl DiscreteMeasure {
    /// Weights must be positive and sum to one within [`MASS_TOLERANCE`].
    pub fn new(points: Vec<Vector3<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("a measure needs at least one atom".into()));
        }
        if points.len() != weights.len() {
            return Err(Error::InvalidInput(format!("{} points but {} weights", points.len(), weights.len())));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidInput(format!("weight {w} is not positive")));
        }
        if points.iter().any(|x| !x.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidInput("atom positions must be finite".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidInput(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { points, weights, displacement_bound: 0.0 })
    }

    /// Rescales positive weights to unit mass first.
    pub fn normalized(points: Vec<Vector3<f64>>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidInput(format!("total mass {total} cannot be normalized")));
        }
        Self::new(points, weights.into_iter().map(|w| w / total).collect())
    }

    /// Equal weights `1/n`.
    pub fn uniform(points: Vec<Vector3<f64>>) -> Result<Self> {
        let n = points.len().max(1);
        Self::new(points, vec![1.0 / n as f64; n])
    }

    /// The empirical measure `(1/N) Σ δ_{X_i}`.
    pub fn empirical(cfg: &ParticleConfiguration) -> Self {
        Self::uniform(cfg.positions().to_vec()).expect("configurations are non-empty and finite")
    }

    pub fn with_displacement_bound(mut self, bound: f64) -> Self {
        self.displacement_bound = bound;
        self
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn displacement_bound(&self) -> f64 {
        self.displacement_bound
    }

    pub fn mean(&self) -> Vector3<f64> {
        self.points.iter().zip(&self.weights).map(|(x, w)| x * *w).sum()
    }

    pub(crate) fn bounding_box(&self) -> (Vector3<f64>, Vector3<f64>) {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for x in &self.points {
            lo = lo.inf(x);
            hi = hi.sup(x);
        }
        (lo, hi)
    }
}

/// One arc of a transport plan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transfer {
    pub src: usize,
    pub dst: usize,
    pub mass: f64,
    pub dist: f64,
}

/// A transport plan between two discrete measures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub plan: Vec<Transfer>,
    /// Exponent the plan was optimized for; infinite for the bottleneck problem.
    pub p: f64,
    /// `(Σ mass·dist^p)^{1/p}`, or the bottleneck when `p` is infinite.
    pub cost: f64,
    /// Longest distance carrying mass.
    pub bottleneck: f64,
}

impl Coupling {
    pub(crate) fn from_plan(plan: Vec<Transfer>, p: f64) -> Self {
        let bottleneck = plan.iter().filter(|t| t.mass > 0.0).map(|t| t.dist).fold(0.0, f64::max);
        let cost = if p.is_infinite() { bottleneck } else { Self::cost_of(&plan, p) };
        Self { plan, p, cost, bottleneck }
    }

    fn cost_of(plan: &[Transfer], p: f64) -> f64 {
        let s: f64 = plan.iter().map(|t| t.mass * t.dist.powf(p)).sum();
        s.max(0.0).powf(1.0 / p)
    }

    /// `(Σ mass·dist^q)^{1/q}` of this plan for any finite `q`.
    pub fn cost_for(&self, q: f64) -> f64 {
        Self::cost_of(&self.plan, q)
    }

    /// Row and column sums.
    pub fn marginals(&self, m: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut a = vec![0.0; m];
        let mut b = vec![0.0; n];
        for t in &self.plan {
            a[t.src] += t.mass;
            b[t.dst] += t.mass;
        }
        (a, b)
    }

    /// Largest deviation of the marginals from the given weights.
    pub fn marginal_error(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
        let (a, b) = self.marginals(mu.len(), nu.len());
        let ea = a.iter().zip(mu.weights()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let eb = b.iter().zip(nu.weights()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        ea.max(eb)
    }

    /// CSV with columns `src_idx, dst_idx, mass, dist`.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["src_idx", "dst_idx", "mass", "dist"]).map_err(csv_error)?;
        for t in &self.plan {
            out.write_record(&[t.src.to_string(), t.dst.to_string(), format!("{:e}", t.mass), format!("{:e}", t.dist)])
                .map_err(csv_error)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Total of the integer masses used by the exact solvers.
pub(crate) const MASS_SCALE: i64 = 1 << 40;

/// Weights as integers summing exactly to [`MASS_SCALE`] (largest remainder rounding).
pub(crate) fn integer_masses(weights: &[f64]) -> Vec<i64> {
    let total: f64 = weights.iter().sum();
    let scaled: Vec<f64> = weights.iter().map(|w| w / total * MASS_SCALE as f64).collect();
    let mut out: Vec<i64> = scaled.iter().map(|s| s.floor() as i64).collect();
    let short = MASS_SCALE - out.iter().sum::<i64>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&i, &j| {
        let (fi, fj) = (scaled[i] - scaled[i].floor(), scaled[j] - scaled[j].floor());
        fj.total_cmp(&fi).then(i.cmp(&j))
    });
    let len = order.len() as i64;
    for k in 0..short.rem_euclid(len.max(1)) {
        out[order[k as usize]] += 1;
    }
    let whole = short.div_euclid(len.max(1));
    if whole != 0 {
        for v in out.iter_mut() {
            *v += whole;
        }
    }
    out
}

pub(crate) fn check_pair(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<()> {
    let a: f64 = mu.weights().iter().sum();
    let b: f64 = nu.weights().iter().sum();
    if (a - b).abs() > MASS_TOLERANCE {
        return Err(Error::Infeasible(format!("total masses {a} and {b} differ")));
    }
    Ok(())
}
