use std::collections::BTreeMap;

use nalgebra::Vector3;

use super::measure::DiscreteMeasure;
use crate::continuum::DensityField;
use crate::error::{Error, Result};

/// Cells lighter than this fraction of the total mass are dropped.
pub const QUANTIZE_THRESHOLD: f64 = 1e-12;

/// Atoms at cell centers, merged over octree blocks of `2^ℓ` cells until at most
/// `max_atoms` remain.
///
/// Every unit of mass ends within half a block diagonal, `2^ℓ h √3/2`, of where it was;
/// that bound is stored as the measure's displacement bound and bounds the change of
/// every `W_p`, `p ≤ ∞`.
pub fn quantize(field: &DensityField, max_atoms: usize) -> Result<DiscreteMeasure> {
    let grid = field.grid();
    let total = field.total_mass();
    if (total - 1.0).abs() > 1e-3 {
        return Err(Error::InvalidInput(format!("field has mass {total}, expected 1")));
    }
    if max_atoms == 0 {
        return Err(Error::InvalidInput("max_atoms must be positive".into()));
    }
    let h = grid.cell;
    let vol = grid.cell_volume();
    let cells: Vec<([usize; 3], f64)> = field
        .values()
        .iter()
        .enumerate()
        .map(|(idx, v)| (grid.unindex(idx), v * vol))
        .filter(|(_, m)| *m >= QUANTIZE_THRESHOLD * total)
        .collect();
    let top = grid.dims.iter().copied().max().unwrap_or(1);
    let mut level = 0u32;
    loop {
        let side = 1usize << level;
        let mut blocks: BTreeMap<[usize; 3], f64> = BTreeMap::new();
        for (c, m) in &cells {
            // z-major key keeps the atom order equal to storage order at level 0
            *blocks.entry([c[2] / side, c[1] / side, c[0] / side]).or_insert(0.0) += m;
        }
        if blocks.len() <= max_atoms || side >= top {
            if blocks.len() > max_atoms {
                return Err(Error::SizeCap(format!(
                    "{} atoms remain after maximal coarsening, limit {max_atoms}",
                    blocks.len()
                )));
            }
            let mut points = Vec::with_capacity(blocks.len());
            let mut weights = Vec::with_capacity(blocks.len());
            for ([bz, by, bx], m) in blocks {
                // center of the block's intersection with the grid
                let b = [bx, by, bz];
                let center = Vector3::from_fn(|d, _| {
                    let lo = b[d] * side;
                    let hi = ((b[d] + 1) * side).min(grid.dims[d]);
                    grid.origin[d] + 0.5 * (lo + hi) as f64 * h
                });
                points.push(center);
                weights.push(m);
            }
            let bound = side as f64 * h * 3f64.sqrt() / 2.0;
            return Ok(DiscreteMeasure::normalized(points, weights)?.with_displacement_bound(bound));
        }
        level += 1;
    }
}
