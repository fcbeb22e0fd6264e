use crate::continuum::{DensityField, StokesSolver};
use crate::error::{Error, Result};

/// `‖f − g‖` in `Ḣ^{-1}`, i.e. `(∫ (f−g) G∗(f−g))^{1/2}` with `G` the Newtonian potential.
///
/// Computed spectrally on the zero-padded grid with the free-space (truncated) Laplace
/// symbol, so the value does not feel the periodic images. Masses must agree.
pub fn sobolev_w12_distance(f: &DensityField, g: &DensityField) -> Result<f64> {
    if f.grid() != g.grid() {
        return Err(Error::GridMismatch("densities live on different grids".into()));
    }
    let (mf, mg) = (f.total_mass(), g.total_mass());
    if (mf - mg).abs() > 1e-3 * mf.abs().max(mg.abs()).max(1.0) {
        return Err(Error::InvalidInput(format!("masses {mf} and {mg} differ")));
    }
    let diff: Vec<f64> = f.values().iter().zip(g.values()).map(|(a, b)| a - b).collect();
    if diff.iter().all(|d| *d == 0.0) {
        return Ok(0.0);
    }
    let solver = StokesSolver::new(f.grid())?;
    Ok(solver.laplace_energy(&diff)?.max(0.0).sqrt())
}
