//! Free-space Stokes solves on a zero-padded periodic grid.
//!
//! The Oseen tensor is `Φ = (IΔ − ∇∇)B` with `B = |x|/8π`. Truncating `B` to a ball of
//! radius `L` gives a kernel whose transform is known in closed form,
//! `Φ̂_L(k) = m(k)(I − k̂⊗k̂)` with
//! `m(k) = (1 − cos kL)/k² − L sin(kL)/k + L² cos(kL)/2`.
//! The truncated kernel equals `Φ` for all separations below `L`. With sources and targets
//! in a ball of radius `a` around the box center and `L = P − 2a` for period `P`, every pair
//! interacts exactly and periodic images never do.

use nalgebra::Vector3;
use rustfft::num_complex::Complex64;

use super::grid::{DensityField, GridSpec, VelocityField};
use super::spectral::{wavenumbers, Fft3};
use crate::error::{Error, Result};

/// Largest allowed fraction of source mass outside the exact ball.
pub const TRUNCATION_TOLERANCE: f64 = 1e-2;

pub(crate) type Spectrum = Vec<Complex64>;

/// Symmetric tensor components in the order xx, yy, zz, xy, xz, yz.
pub(crate) const SYM_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

/// Transform-space Stokes solver bound to one grid.
pub struct StokesSolver {
    grid: GridSpec,
    pdims: [usize; 3],
    fft: Fft3,
    k: [Vec<f64>; 3],
    symbol: Vec<f64>,
    truncation: f64,
    exact: f64,
    mask: Vec<bool>,
}

impl StokesSolver {
    pub fn new(grid: &GridSpec) -> Result<Self> {
        let pdims = grid.padded_dims();
        let periods = pdims.map(|n| n as f64 * grid.cell);
        let exact = exact_ball_radius(grid);
        let truncation = periods.iter().fold(f64::INFINITY, |a, &p| a.min(p - 2.0 * exact));
        let k = [0, 1, 2].map(|d| wavenumbers(pdims[d], periods[d]));
        let n = pdims.iter().product();
        let mut symbol = vec![0.0; n];
        for kk in 0..pdims[2] {
            for jj in 0..pdims[1] {
                for ii in 0..pdims[0] {
                    let idx = ii + pdims[0] * (jj + pdims[1] * kk);
                    let k2 = k[0][ii].powi(2) + k[1][jj].powi(2) + k[2][kk].powi(2);
                    symbol[idx] = truncated_symbol(k2.sqrt(), truncation);
                }
            }
        }
        let mask = exact_mask(grid, exact);
        Ok(Self { grid: *grid, pdims, fft: Fft3::with_active(pdims, grid.dims), k, symbol, truncation, exact, mask })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Truncation radius of the kernel.
    pub fn truncation_length(&self) -> f64 {
        self.truncation
    }

    /// Grid with the same shape moved to a new origin; the solver is translation invariant.
    pub fn rebind(&mut self, grid: &GridSpec) -> Result<()> {
        if grid.dims != self.grid.dims || grid.padding_factor != self.grid.padding_factor || grid.cell != self.grid.cell {
            return Err(Error::GridMismatch("rebind requires an identically shaped grid".into()));
        }
        self.grid = *grid;
        Ok(())
    }

    /// Velocity of the force density `f` (three components on the unpadded grid).
    pub fn solve(&self, f: &[&[f64]; 3]) -> Result<VelocityField> {
        self.check_source(f)?;
        let mut fhat = self.forward_real(f);
        self.apply_kernel(&mut fhat);
        Ok(self.velocity(&fhat))
    }

    /// Velocity of the force density `ρg`.
    pub fn solve_density(&self, rho: &DensityField, g: &Vector3<f64>) -> Result<VelocityField> {
        self.check_grid(rho.grid())?;
        let f = [0, 1, 2].map(|c| rho.values().iter().map(|v| v * g[c]).collect::<Vec<f64>>());
        self.solve(&[&f[0], &f[1], &f[2]])
    }

    pub(crate) fn check_grid(&self, g: &GridSpec) -> Result<()> {
        if g.dims != self.grid.dims || (g.cell - self.grid.cell).abs() > 1e-12 * g.cell {
            return Err(Error::GridMismatch("field grid differs from the solver grid".into()));
        }
        Ok(())
    }

    /// Cells whose centers lie in the exact ball.
    pub(crate) fn exact_mask(&self) -> &[bool] {
        &self.mask
    }

    /// Ball around the box center inside which all source/target pairs are exact.
    pub fn exact_radius(&self) -> f64 {
        self.exact
    }

    /// Rejects sources with more than 1% of their absolute mass outside the exact ball.
    pub(crate) fn check_source(&self, f: &[&[f64]]) -> Result<()> {
        let center = self.grid.center();
        let r = self.exact_radius();
        let mut outside = 0.0;
        let mut total = 0.0;
        for idx in 0..self.grid.len() {
            let m: f64 = f.iter().map(|c| c[idx].abs()).sum();
            if m == 0.0 {
                continue;
            }
            total += m;
            if (self.grid.cell_center_of(idx) - center).norm() > r {
                outside += m;
            }
        }
        if total > 0.0 && outside / total > TRUNCATION_TOLERANCE {
            return Err(Error::Truncation(outside / total));
        }
        Ok(())
    }

    fn embed(&self, f: &[f64]) -> Spectrum {
        let [nx, ny, nz] = self.grid.dims;
        let [px, py, _] = self.pdims;
        let mut out = vec![Complex64::default(); self.fft.len()];
        for k in 0..nz {
            for j in 0..ny {
                let src = nx * (j + ny * k);
                let dst = px * (j + py * k);
                for i in 0..nx {
                    out[dst + i] = Complex64::new(f[src + i], 0.0);
                }
            }
        }
        out
    }

    fn extract(&self, s: &[Complex64]) -> Vec<f64> {
        let [nx, ny, nz] = self.grid.dims;
        let [px, py, _] = self.pdims;
        let mut out = vec![0.0; self.grid.len()];
        for k in 0..nz {
            for j in 0..ny {
                let dst = nx * (j + ny * k);
                let src = px * (j + py * k);
                for i in 0..nx {
                    out[dst + i] = s[src + i].re;
                }
            }
        }
        out
    }

    /// Forward transforms of real fields given on the unpadded grid.
    pub(crate) fn forward_real(&self, fields: &[&[f64]]) -> Vec<Spectrum> {
        let mut out: Vec<Spectrum> = fields.iter().map(|f| self.embed(f)).collect();
        let mut it = out.chunks_mut(2);
        for pair in &mut it {
            match pair {
                [a, b] => self.fft.forward_real_pair(a, Some(b)),
                [a] => self.fft.forward_real_pair(a, None),
                _ => unreachable!(),
            }
        }
        out
    }

    /// Inverse transforms of spectra of real fields, restricted to the unpadded grid.
    pub(crate) fn inverse_real(&self, spectra: Vec<Spectrum>) -> Vec<Vec<f64>> {
        let mut spectra = spectra;
        for pair in spectra.chunks_mut(2) {
            match pair {
                [a, b] => self.fft.inverse_real_pair(a, Some(b)),
                [a] => self.fft.inverse_real_pair(a, None),
                _ => unreachable!(),
            }
        }
        spectra.iter().map(|s| self.extract(s)).collect()
    }

    /// Calls `f(idx, k)` for every mode in storage order.
    #[inline]
    fn for_each_mode(&self, mut f: impl FnMut(usize, [f64; 3])) {
        let [px, py, pz] = self.pdims;
        let mut idx = 0;
        for c in 0..pz {
            let kz = self.k[2][c];
            for b in 0..py {
                let ky = self.k[1][b];
                for &kx in &self.k[0][..px] {
                    f(idx, [kx, ky, kz]);
                    idx += 1;
                }
            }
        }
    }

    /// `⟨f, G∗f⟩` for `G = 1/(4π|x|)` cut at the truncation radius, i.e. `‖f‖²` in `Ḣ^{-1}`
    /// when `f` has zero mass.
    pub(crate) fn laplace_energy(&self, f: &[f64]) -> Result<f64> {
        self.check_source(&[f])?;
        let fhat = self.forward_real(&[f]).pop().expect("one field");
        let l = self.truncation;
        let periods = self.pdims.map(|n| n as f64 * self.grid.cell);
        // signed wavenumbers, keeping the Nyquist mode
        let k = [0, 1, 2].map(|d| {
            let n = self.pdims[d];
            (0..n)
                .map(|m| {
                    let s = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
                    2.0 * std::f64::consts::PI * s / periods[d]
                })
                .collect::<Vec<f64>>()
        });
        let [px, py, pz] = self.pdims;
        let mut acc = 0.0;
        let mut idx = 0;
        for c in 0..pz {
            for b in 0..py {
                for a in 0..px {
                    let kn = (k[0][a].powi(2) + k[1][b].powi(2) + k[2][c].powi(2)).sqrt();
                    acc += fhat[idx].norm_sqr() * laplace_symbol(kn, l);
                    idx += 1;
                }
            }
        }
        Ok(acc * self.grid.cell_volume() / self.fft.len() as f64)
    }

    /// Applies `m(k)(I − k̂⊗k̂)` in place.
    pub(crate) fn apply_kernel(&self, fhat: &mut [Spectrum]) {
        self.apply_symbol(fhat, true)
    }

    /// Applies `(I − k̂⊗k̂)/|k|²`, the Stokes operator of the padded periodic box.
    pub(crate) fn apply_periodic_kernel(&self, fhat: &mut [Spectrum]) {
        self.apply_symbol(fhat, false)
    }

    fn apply_symbol(&self, fhat: &mut [Spectrum], truncated: bool) {
        let [f0, f1, f2] = fhat else { panic!("three components expected") };
        self.for_each_mode(|idx, k| {
            let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            if k2 == 0.0 {
                f0[idx] = Complex64::default();
                f1[idx] = Complex64::default();
                f2[idx] = Complex64::default();
                return;
            }
            let f = [f0[idx], f1[idx], f2[idx]];
            let kf = (f[0] * k[0] + f[1] * k[1] + f[2] * k[2]) / k2;
            let m = if truncated { self.symbol[idx] } else { 1.0 / k2 };
            f0[idx] = (f[0] - kf * k[0]) * m;
            f1[idx] = (f[1] - kf * k[1]) * m;
            f2[idx] = (f[2] - kf * k[2]) * m;
        });
    }

    /// Real-space velocity from its spectrum, with the spectral divergence residual.
    pub(crate) fn velocity(&self, uhat: &[Spectrum]) -> VelocityField {
        let div = self.divergence_residual(uhat);
        let comps = self.inverse_real(uhat.to_vec());
        let [a, b, c]: [Vec<f64>; 3] = comps.try_into().expect("three components");
        VelocityField::new(self.grid, [a, b, c], div).expect("grid-shaped components")
    }

    /// ‖k·û‖ / ‖|k| û‖ over all modes.
    pub(crate) fn divergence_residual(&self, uhat: &[Spectrum]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        self.for_each_mode(|idx, k| {
            let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            let d = uhat[0][idx] * k[0] + uhat[1][idx] * k[1] + uhat[2][idx] * k[2];
            num += d.norm_sqr();
            den += k2 * (uhat[0][idx].norm_sqr() + uhat[1][idx].norm_sqr() + uhat[2][idx].norm_sqr());
        });
        if den > 0.0 {
            (num / den).sqrt()
        } else {
            0.0
        }
    }

    /// Spectra of the six strain components `(i/2)(k_a û_b + k_b û_a)`.
    pub(crate) fn strain_spectra(&self, uhat: &[Spectrum]) -> Vec<Spectrum> {
        let n = self.fft.len();
        let mut out = vec![vec![Complex64::default(); n]; 6];
        self.for_each_mode(|idx, k| {
            for (s, &(a, b)) in SYM_PAIRS.iter().enumerate() {
                let v = uhat[b][idx] * k[a] + uhat[a][idx] * k[b];
                out[s][idx] = Complex64::new(-0.5 * v.im, 0.5 * v.re);
            }
        });
        out
    }

    /// Strain of the velocity with spectrum `uhat`, on the unpadded grid.
    pub(crate) fn strain(&self, uhat: &[Spectrum]) -> Vec<Vec<f64>> {
        self.inverse_real(self.strain_spectra(uhat))
    }

    /// Spectrum of `div A` for a symmetric tensor field `A` given on the unpadded grid.
    pub(crate) fn divergence_of_symmetric(&self, a: &[Vec<f64>]) -> Vec<Spectrum> {
        let refs: Vec<&[f64]> = a.iter().map(|v| v.as_slice()).collect();
        let ahat = self.forward_real(&refs);
        let n = self.fft.len();
        let mut out = vec![vec![Complex64::default(); n]; 3];
        // row i of the symmetric tensor as indices into SYM_PAIRS
        const ROWS: [[usize; 3]; 3] = [[0, 3, 4], [3, 1, 5], [4, 5, 2]];
        self.for_each_mode(|idx, k| {
            for (i, row) in ROWS.iter().enumerate() {
                let v = ahat[row[0]][idx] * k[0] + ahat[row[1]][idx] * k[1] + ahat[row[2]][idx] * k[2];
                out[i][idx] = Complex64::new(-v.im, v.re);
            }
        });
        out
    }
}

/// Cells kept between the exact ball and the box faces. Pairs at separation close to the
/// truncation radius see the kernel's cut, so the ball stays clear of it.
pub const EXACT_MARGIN_CELLS: f64 = 4.0;

/// Radius of the exact ball of a grid: half the shortest side less a margin.
pub(crate) fn exact_ball_radius(grid: &GridSpec) -> f64 {
    let half = grid.dims.iter().copied().min().unwrap_or(1) as f64 * grid.cell / 2.0;
    let r = half - EXACT_MARGIN_CELLS * grid.cell;
    if r >= 0.5 * half {
        r
    } else {
        half
    }
}

fn exact_mask(grid: &GridSpec, r: f64) -> Vec<bool> {
    let c = grid.center();
    (0..grid.len()).map(|idx| (grid.cell_center_of(idx) - c).norm() <= r).collect()
}

/// Transform of the truncated Oseen kernel's scalar factor, `m(k)`.
pub(crate) fn truncated_symbol(k: f64, l: f64) -> f64 {
    let a = k * l;
    if a < 1e-3 {
        return -k * k * l.powi(4) / 8.0;
    }
    let (s, c) = a.sin_cos();
    (1.0 - c) / (k * k) - l * s / k + l * l * c / 2.0
}

/// Transform of `1/(4π|x|)` cut at radius `l`: `(1 − cos kl)/k²`.
pub(crate) fn laplace_symbol(k: f64, l: f64) -> f64 {
    let a = k * l;
    if a < 1e-4 {
        return l * l * (0.5 - a * a / 24.0);
    }
    (1.0 - a.cos()) / (k * k)
}

/// Velocity of the force density `f` in free space.
pub fn stokes_solve(grid: &GridSpec, f: &[&[f64]; 3]) -> Result<VelocityField> {
    StokesSolver::new(grid)?.solve(f)
}

/// Velocity of the force density `ρg` in free space.
pub fn stokes_solve_density(rho: &DensityField, g: &Vector3<f64>) -> Result<VelocityField> {
    StokesSolver::new(rho.grid())?.solve_density(rho, g)
}
