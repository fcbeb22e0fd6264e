//! Probability densities that can seed particle clouds and continuum fields.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::continuum::DensityField;

/// A probability density with compact support.
pub trait Density {
    fn value(&self, x: &Vector3<f64>) -> f64;

    /// Axis-aligned box containing the support.
    fn support_box(&self) -> (Vector3<f64>, Vector3<f64>);

    fn support_center(&self) -> Vector3<f64> {
        let (lo, hi) = self.support_box();
        (lo + hi) / 2.0
    }

    /// Largest value of the density.
    fn max_value(&self) -> f64;
}

/// Normalization of the bump `(1 − |y|²)³` on the unit ball, `315/(64π)`.
pub const BUMP_NORMALIZATION: f64 = 315.0 / (64.0 * PI);

#[inline]
pub(crate) fn bump(r2: f64) -> f64 {
    if r2 >= 1.0 {
        0.0
    } else {
        let s = 1.0 - r2;
        s * s * s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalyticDensity {
    UniformBox { lo: Vector3<f64>, hi: Vector3<f64> },
    UniformBall { center: Vector3<f64>, radius: f64 },
    /// `(315/(64πa³))(1 − |x−c|²/a²)³₊`, the C² polynomial blob.
    Blob { center: Vector3<f64>, radius: f64 },
    /// Isotropic Gaussian, treated as supported on the ball of radius `cutoff·sigma`.
    Gaussian { center: Vector3<f64>, sigma: f64, cutoff: f64 },
}

impl AnalyticDensity {
    pub fn unit_blob() -> Self {
        Self::Blob { center: Vector3::zeros(), radius: 1.0 }
    }

    pub fn gaussian(center: Vector3<f64>, sigma: f64) -> Self {
        Self::Gaussian { center, sigma, cutoff: 8.0 }
    }

    pub fn sample(&self, grid: &crate::continuum::GridSpec) -> crate::Result<DensityField> {
        DensityField::from_fn(*grid, |x| self.value(x))
    }
}

impl Density for AnalyticDensity {
    fn value(&self, x: &Vector3<f64>) -> f64 {
        match *self {
            Self::UniformBox { lo, hi } => {
                if (0..3).all(|d| x[d] >= lo[d] && x[d] <= hi[d]) {
                    1.0 / (hi - lo).product()
                } else {
                    0.0
                }
            }
            Self::UniformBall { center, radius } => {
                if (x - center).norm() <= radius {
                    3.0 / (4.0 * PI * radius.powi(3))
                } else {
                    0.0
                }
            }
            Self::Blob { center, radius } => {
                BUMP_NORMALIZATION / radius.powi(3) * bump((x - center).norm_squared() / (radius * radius))
            }
            Self::Gaussian { center, sigma, cutoff } => {
                let r2 = (x - center).norm_squared() / (sigma * sigma);
                if r2 > cutoff * cutoff {
                    0.0
                } else {
                    (-0.5 * r2).exp() / ((2.0 * PI).powf(1.5) * sigma.powi(3))
                }
            }
        }
    }

    fn support_box(&self) -> (Vector3<f64>, Vector3<f64>) {
        match *self {
            Self::UniformBox { lo, hi } => (lo, hi),
            Self::UniformBall { center, radius } | Self::Blob { center, radius } => {
                (center - Vector3::repeat(radius), center + Vector3::repeat(radius))
            }
            Self::Gaussian { center, sigma, cutoff } => {
                (center - Vector3::repeat(cutoff * sigma), center + Vector3::repeat(cutoff * sigma))
            }
        }
    }

    fn max_value(&self) -> f64 {
        match *self {
            Self::UniformBox { lo, hi } => 1.0 / (hi - lo).product(),
            Self::UniformBall { radius, .. } => 3.0 / (4.0 * PI * radius.powi(3)),
            Self::Blob { radius, .. } => BUMP_NORMALIZATION / radius.powi(3),
            Self::Gaussian { sigma, .. } => 1.0 / ((2.0 * PI).powf(1.5) * sigma.powi(3)),
        }
    }
}

impl Density for DensityField {
    /// Piecewise constant: the value of the cell containing `x`.
    fn value(&self, x: &Vector3<f64>) -> f64 {
        let g = self.grid();
        if !g.contains(x) {
            return 0.0;
        }
        let r = (x - g.origin) / g.cell;
        let i = (r.x.floor() as usize).min(g.dims[0] - 1);
        let j = (r.y.floor() as usize).min(g.dims[1] - 1);
        let k = (r.z.floor() as usize).min(g.dims[2] - 1);
        self.values()[g.index(i, j, k)]
    }

    fn support_box(&self) -> (Vector3<f64>, Vector3<f64>) {
        let g = self.grid();
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        for (idx, &v) in self.values().iter().enumerate() {
            if v > 0.0 {
                let c = g.unindex(idx);
                for d in 0..3 {
                    lo[d] = lo[d].min(c[d]);
                    hi[d] = hi[d].max(c[d] + 1);
                }
            }
        }
        if lo[0] == usize::MAX {
            return (g.center(), g.center());
        }
        let to = |c: [usize; 3]| g.origin + Vector3::new(c[0] as f64, c[1] as f64, c[2] as f64) * g.cell;
        (to(lo), to(hi))
    }

    fn max_value(&self) -> f64 {
        DensityField::max_value(self)
    }
}
