//! Closed-form Stokes kernels.
//!
//! The Oseen tensor `Φ(x) = (I/|x| + x⊗x/|x|³)/8π` is the velocity of a unit point
//! force in unbounded Stokes flow. Everything else here is derived from it: its
//! Laplacian, the strain of a Stokeslet, the velocity of a force dipole (stresslet),
//! and the exact field of a single translating sphere.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Below this distance kernels refuse to evaluate.
pub const SINGULARITY_GUARD: f64 = 1e-12;

const INV_8PI: f64 = 1.0 / (8.0 * PI);
const INV_4PI: f64 = 1.0 / (4.0 * PI);

/// Global parameters of a sedimenting suspension of `N` spheres of radius `R`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalSetup {
    pub gravity: Vector3<f64>,
    pub particle_count: usize,
    pub radius: f64,
}

impl PhysicalSetup {
    pub fn new(gravity: Vector3<f64>, particle_count: usize, radius: f64) -> Result<Self> {
        if particle_count == 0 {
            return Err(Error::InvalidInput("particle_count must be at least 1".into()));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidInput(format!("radius must be positive, got {radius}")));
        }
        if !gravity.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidInput("gravity must be finite".into()));
        }
        Ok(Self { gravity, particle_count, radius })
    }

    /// Setup whose radius realizes the volume fraction `phi`.
    pub fn from_volume_fraction(gravity: Vector3<f64>, particle_count: usize, phi: f64) -> Result<Self> {
        if !(phi > 0.0) {
            return Err(Error::InvalidInput(format!("volume fraction must be positive, got {phi}")));
        }
        let n = particle_count.max(1) as f64;
        Self::new(gravity, particle_count, (3.0 * phi / (4.0 * PI * n)).cbrt())
    }

    /// φ_N = (4π/3) N R³.
    pub fn volume_fraction(&self) -> f64 {
        4.0 / 3.0 * PI * self.particle_count as f64 * self.radius.powi(3)
    }

    /// γ_N = N R.
    pub fn interaction_strength(&self) -> f64 {
        self.particle_count as f64 * self.radius
    }

    /// Settling velocity of an isolated particle, g/(6πNR).
    pub fn self_velocity(&self) -> Vector3<f64> {
        self.gravity / (6.0 * PI * self.interaction_strength())
    }
}

/// A symmetric 3×3 rate-of-strain matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StrainMatrix(Matrix3<f64>);

impl StrainMatrix {
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        let asym = (m - m.transpose()).abs().max();
        let scale = m.abs().max().max(f64::MIN_POSITIVE);
        if asym > 1e-12 * scale {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(Self((m + m.transpose()) * 0.5))
    }

    pub fn zero() -> Self {
        Self(Matrix3::zeros())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Frobenius contraction `A : B`.
    pub fn contract(&self, other: &Matrix3<f64>) -> f64 {
        self.0.component_mul(other).sum()
    }
}

fn guarded_norm(x: &Vector3<f64>) -> Result<f64> {
    let r = x.norm();
    if !(r >= SINGULARITY_GUARD) {
        return Err(Error::Singular(r));
    }
    Ok(r)
}

/// The Oseen tensor Φ(x).
pub fn oseen(x: &Vector3<f64>) -> Result<Matrix3<f64>> {
    let r = guarded_norm(x)?;
    Ok((Matrix3::identity() / r + x * x.transpose() / (r * r * r)) * INV_8PI)
}

/// ΔΦ(x) = (I − 3x̂⊗x̂)/(4π|x|³).
pub fn oseen_laplacian(x: &Vector3<f64>) -> Result<Matrix3<f64>> {
    let r = guarded_norm(x)?;
    let xh = x / r;
    Ok((Matrix3::identity() - xh * xh.transpose() * 3.0) * (INV_4PI / (r * r * r)))
}

/// Velocity induced at offset `x` by one particle of the suspension, the exact
/// translating-sphere solution scaled to force g/N. Rigid inside the ball.
pub fn single_particle_field(x: &Vector3<f64>, setup: &PhysicalSetup) -> Vector3<f64> {
    let r = x.norm();
    let g = setup.gravity;
    let n = setup.particle_count as f64;
    let a = setup.radius;
    if r <= a {
        return setup.self_velocity();
    }
    let xh = x / r;
    let xg = xh.dot(&g);
    let stokeslet = (g + xh * xg) * (INV_8PI / r);
    let degenerate = (g - 3.0 * xh * xg) * (INV_4PI / (r * r * r));
    (stokeslet + degenerate * (a * a / 6.0)) / n
}

/// Strain of the Stokeslet velocity `Φ(·)g` at `x`:
/// ((x·g)/(8π|x|³))(I − 3x̂⊗x̂).
pub fn stokeslet_strain(x: &Vector3<f64>, g: &Vector3<f64>) -> Result<StrainMatrix> {
    let r = guarded_norm(x)?;
    Ok(StrainMatrix(strain_unchecked(x, r, g)))
}

/// Velocity at `x` of a force dipole with strength `S` at the origin,
/// `Σ_jk ∂_kΦ_ij(x) S_jk = (x tr S − 3x (x̂·Sx̂))/(8π|x|³)`.
pub fn stresslet_velocity(x: &Vector3<f64>, s: &StrainMatrix) -> Result<Vector3<f64>> {
    let r = guarded_norm(x)?;
    Ok(stresslet_unchecked(x, r, &s.0))
}

/// Gradient of Φ: `out[k]` holds ∂_kΦ.
pub fn oseen_gradient(x: &Vector3<f64>) -> Result<[Matrix3<f64>; 3]> {
    let r = guarded_norm(x)?;
    let r3 = r * r * r;
    let r5 = r3 * r * r;
    let mut out = [Matrix3::zeros(); 3];
    for (k, m) in out.iter_mut().enumerate() {
        for i in 0..3 {
            for j in 0..3 {
                let dik = if i == k { 1.0 } else { 0.0 };
                let djk = if j == k { 1.0 } else { 0.0 };
                let dij = if i == j { 1.0 } else { 0.0 };
                m[(i, j)] = INV_8PI
                    * (-dij * x[k] / r3 + (dik * x[j] + djk * x[i]) / r3 - 3.0 * x[i] * x[j] * x[k] / r5);
            }
        }
    }
    Ok(out)
}

#[inline]
pub(crate) fn oseen_apply_unchecked(x: &Vector3<f64>, r2: f64, g: &Vector3<f64>) -> Vector3<f64> {
    let inv_r = 1.0 / r2.sqrt();
    let xg = x.dot(g) * inv_r * inv_r;
    (g + x * xg) * (INV_8PI * inv_r)
}

#[inline]
pub(crate) fn strain_unchecked(x: &Vector3<f64>, r: f64, g: &Vector3<f64>) -> Matrix3<f64> {
    let xh = x / r;
    let pref = x.dot(g) * INV_8PI / (r * r * r);
    (Matrix3::identity() - xh * xh.transpose() * 3.0) * pref
}

#[inline]
pub(crate) fn stresslet_unchecked(x: &Vector3<f64>, r: f64, s: &Matrix3<f64>) -> Vector3<f64> {
    let xh = x / r;
    let q = xh.dot(&(s * xh));
    x * ((s.trace() - 3.0 * q) * INV_8PI / (r * r * r))
}
