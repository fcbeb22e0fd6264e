//! Semi-Lagrangian transport of densities.

use nalgebra::Vector3;

use super::grid::{DensityField, GridSpec, VelocityField};
use crate::error::{Error, Result};

/// Mass corrections above this relative size are logged.
pub const MASS_WARNING: f64 = 1e-3;

#[inline]
fn catmull_rom(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

/// Zero-extended tricubic (Catmull-Rom) value at `x`, clamped to the range of the eight
/// nearest values so that no new extrema appear.
pub(crate) fn interpolate_cubic_clamped(grid: &GridSpec, values: &[f64], x: &Vector3<f64>) -> f64 {
    let r = (x - grid.origin) / grid.cell;
    let mut lo = [0i64; 3];
    let mut w = [[0.0; 4]; 3];
    for d in 0..3 {
        let f = r[d] - 0.5;
        let fl = f.floor();
        lo[d] = fl as i64;
        w[d] = catmull_rom(f - fl);
    }
    let dims = grid.dims.map(|d| d as i64);
    let at = |i: i64, j: i64, k: i64| -> f64 {
        if i < 0 || j < 0 || k < 0 || i >= dims[0] || j >= dims[1] || k >= dims[2] {
            0.0
        } else {
            values[grid.index(i as usize, j as usize, k as usize)]
        }
    };
    let (mut acc, mut min, mut max) = (0.0, f64::INFINITY, f64::NEG_INFINITY);
    for (c, wz) in w[2].iter().enumerate() {
        let k = lo[2] + c as i64 - 1;
        for (b, wy) in w[1].iter().enumerate() {
            let j = lo[1] + b as i64 - 1;
            let mut row = 0.0;
            for (a, wx) in w[0].iter().enumerate() {
                let i = lo[0] + a as i64 - 1;
                let v = at(i, j, k);
                row += wx * v;
                if (1..=2).contains(&a) && (1..=2).contains(&b) && (1..=2).contains(&c) {
                    min = min.min(v);
                    max = max.max(v);
                }
            }
            acc += wy * wz * row;
        }
    }
    acc.clamp(min, max)
}

/// Padded box: the grid box grown symmetrically to the padded extent.
fn inside_padded(grid: &GridSpec, x: &Vector3<f64>) -> bool {
    let grow = grid.extent() * ((grid.padding_factor as f64 - 1.0) / 2.0);
    let lo = grid.origin - grow;
    let hi = grid.upper() + grow;
    (0..3).all(|d| x[d] >= lo[d] && x[d] <= hi[d])
}

/// One semi-Lagrangian step along `vel + drift`, returning the new field and the
/// relative mass correction applied.
pub(crate) fn transport_step_report(
    rho: &DensityField,
    vel: &VelocityField,
    drift: &Vector3<f64>,
    dt: f64,
) -> Result<(DensityField, f64)> {
    let grid = rho.grid();
    if !grid.same_shape(vel.grid()) {
        return Err(Error::GridMismatch("density and velocity live on different grids".into()));
    }
    if !(dt >= 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInput(format!("time step {dt} is invalid")));
    }
    if dt == 0.0 {
        return Ok((rho.clone(), 0.0));
    }
    let speed = |x: &Vector3<f64>| vel.interpolate_clamped(x) + drift;
    let trace = |x: &Vector3<f64>, h: f64| {
        let mid = x + speed(x) * (h / 2.0);
        x + speed(&mid) * h
    };
    let mut values = vec![0.0; grid.len()];
    for (idx, out) in values.iter_mut().enumerate() {
        let foot = trace(&grid.cell_center_of(idx), -dt);
        if !inside_padded(grid, &foot) {
            return Err(Error::OutsideDomain(idx));
        }
        *out = interpolate_cubic_clamped(grid, rho.values(), &foot);
    }
    let before = rho.total_mass();
    let after = values.iter().sum::<f64>() * grid.cell_volume();
    let mut correction = 0.0;
    if after > 0.0 && before > 0.0 {
        let s = before / after;
        correction = s - 1.0;
        if correction.abs() > MASS_WARNING {
            log::warn!("transport renormalized mass by {:.3e}", correction);
        }
        for v in values.iter_mut() {
            *v *= s;
        }
    }
    Ok((DensityField::new(*grid, values)?, correction))
}

/// Transports `rho` for time `dt` along `vel + drift` and restores the total mass.
///
/// Semi-Lagrangian: each cell center is traced back one RK2 step and the old density is
/// read there by clamped tricubic interpolation. The clamp keeps the maximum principle
/// and positivity; plain trilinear reads smear a blob by several cells per revolution.
pub fn transport_step(rho: &DensityField, vel: &VelocityField, drift: &Vector3<f64>, dt: f64) -> Result<DensityField> {
    transport_step_report(rho, vel, drift, dt).map(|(f, _)| f)
}
