use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kernels::{oseen, stokeslet_strain, stresslet_velocity, StrainMatrix};

/// Kernels the condition `|K(x)| + |x||∇K(x)| ≤ C/|x|^α` can be checked on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    /// `x ↦ Φ(x)g`.
    Stokeslet,
    /// `x ↦ ∂Φ(x):S` with `S` the strain of `Φg` at a fixed unit offset.
    Stresslet,
}

impl std::str::FromStr for KernelChoice {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "stokeslet" => Ok(Self::Stokeslet),
            "stresslet" => Ok(Self::Stresslet),
            _ => Err(crate::Error::Parse(format!("unknown kernel {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelReport {
    pub kernel: KernelChoice,
    pub alpha: f64,
    pub samples: usize,
    /// Smallest `C` covering every sample.
    pub constant: f64,
    /// Log-log slope of the per-shell envelope of `|x|^α(|K| + |x||∇K|)` over `|x| ≤ 1`
    /// and over `|x| ≥ 1`.
    pub slope_near: f64,
    pub slope_far: f64,
    /// Bounded as `|x| → 0`.
    pub holds_near: bool,
    /// Bounded as `|x| → ∞`.
    pub holds_far: bool,
    /// Largest finite-difference `|div K|·|x|/|K|`.
    pub divergence: f64,
    pub divergence_free: bool,
    /// Holds on all of R³ with a single constant.
    pub uniform: bool,
}

/// Envelope slopes above this count as growth.
pub const SLOPE_TOLERANCE: f64 = 0.1;
/// Relative finite-difference divergence accepted as zero.
pub const DIVERGENCE_TOLERANCE: f64 = 1e-6;

fn evaluate(kernel: KernelChoice, g: &Vector3<f64>, s: &StrainMatrix, x: &Vector3<f64>) -> Vector3<f64> {
    match kernel {
        KernelChoice::Stokeslet => oseen(x).expect("samples avoid the origin") * g,
        KernelChoice::Stresslet => stresslet_velocity(x, s).expect("samples avoid the origin"),
    }
}

/// Samples `count` points log-uniformly in `|x| ∈ [1e-3, 1e3]` and checks the condition.
pub fn check_kernel_condition(kernel: KernelChoice, alpha: f64, count: usize, seed: u64) -> KernelReport {
    let g = Vector3::new(0.0, 0.0, -1.0);
    let s = stokeslet_strain(&Vector3::new(1.0, 0.5, -0.25).normalize(), &g).expect("nonzero offset");
    let k = |x: &Vector3<f64>| evaluate(kernel, &g, &s, x);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (1e-3f64.ln(), 1e3f64.ln());
    const SHELLS: usize = 24;
    let mut envelope = vec![0.0f64; SHELLS];
    let mut divergence = 0.0f64;
    for _ in 0..count {
        let t: f64 = rng.random();
        let r = (lo + t * (hi - lo)).exp();
        let dir = loop {
            let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if v.norm() > 0.1 && v.norm() <= 1.0 {
                break v.normalize();
            }
        };
        let x = dir * r;
        let h = 1e-4 * r;
        let mut jac = Matrix3::zeros();
        for d in 0..3 {
            let mut e = Vector3::zeros();
            e[d] = h;
            let col = (-k(&(x + 2.0 * e)) + 8.0 * k(&(x + e)) - 8.0 * k(&(x - e)) + k(&(x - 2.0 * e))) / (12.0 * h);
            jac.set_column(d, &col);
        }
        let kx = k(&x);
        let value = r.powf(alpha) * (kx.norm() + r * jac.norm());
        let shell = ((t * SHELLS as f64) as usize).min(SHELLS - 1);
        envelope[shell] = envelope[shell].max(value);
        divergence = divergence.max(jac.trace().abs() * r / kx.norm().max(f64::MIN_POSITIVE));
    }
    let centers: Vec<f64> = (0..SHELLS).map(|i| lo + (i as f64 + 0.5) * (hi - lo) / SHELLS as f64).collect();
    let slope = |range: std::ops::Range<usize>| {
        let pts: Vec<(f64, f64)> =
            range.filter(|&i| envelope[i] > 0.0).map(|i| (centers[i], envelope[i].ln())).collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    };
    let slope_near = slope(0..SHELLS / 2);
    let slope_far = slope(SHELLS / 2..SHELLS);
    let holds_near = slope_near >= -SLOPE_TOLERANCE;
    let holds_far = slope_far <= SLOPE_TOLERANCE;
    let divergence_free = divergence <= DIVERGENCE_TOLERANCE;
    KernelReport {
        kernel,
        alpha,
        samples: count,
        constant: envelope.iter().cloned().fold(0.0, f64::max),
        slope_near,
        slope_far,
        holds_near,
        holds_far,
        divergence,
        divergence_free,
        uniform: holds_near && holds_far && divergence_free,
    }
}
