//! Einstein's effective-viscosity correction.
//!
//! A dilute suspension raises the viscosity to `1 + (5/2)φρ`. In weak form the velocity
//! then solves `−Δu + ∇p = ρg + div(5φ ρ e u)`, and convolving with Φ gives the fixed
//! point `u = Φ∗(ρg) + 5φ Φ∗div(ρ e u)`.

use nalgebra::Vector3;
use rustfft::num_complex::Complex64;

use super::grid::{DensityField, VelocityField};
use super::stokes::{Spectrum, StokesSolver};
use crate::error::{Error, Result};
use crate::kernels::PhysicalSetup;

/// Parameters the continuum systems need from a suspension.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SuspensionParams {
    pub gravity: Vector3<f64>,
    pub volume_fraction: f64,
    /// Uniform self-settling drift g/(6πγ_N).
    pub drift: Vector3<f64>,
}

impl SuspensionParams {
    pub fn new(gravity: Vector3<f64>, volume_fraction: f64, drift: Vector3<f64>) -> Result<Self> {
        if !(volume_fraction >= 0.0 && volume_fraction.is_finite()) {
            return Err(Error::InvalidInput(format!("volume fraction {volume_fraction} is invalid")));
        }
        Ok(Self { gravity, volume_fraction, drift })
    }

    /// Same parameters with another volume fraction.
    pub fn with_volume_fraction(mut self, phi: f64) -> Self {
        self.volume_fraction = phi;
        self
    }
}

impl From<&PhysicalSetup> for SuspensionParams {
    fn from(s: &PhysicalSetup) -> Self {
        Self { gravity: s.gravity, volume_fraction: s.volume_fraction(), drift: s.self_velocity() }
    }
}

/// Largest `5φ‖ρ‖∞` accepted by the effective-viscosity iteration.
pub const CONTRACTION_MARGIN: f64 = 0.5;

/// Result of the effective-viscosity fixed point.
#[derive(Clone, Debug)]
pub struct EffectiveSolution {
    pub velocity: VelocityField,
    pub iterations: usize,
    /// Ratios of successive update norms.
    pub ratios: Vec<f64>,
    /// Relative residual `‖T(u) − u‖/‖u‖` of the returned field.
    pub residual: f64,
}

pub(crate) fn spectral_norm(a: &[Spectrum]) -> f64 {
    a.iter().flat_map(|c| c.iter()).map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn spectral_diff_norm(a: &[Spectrum], b: &[Spectrum]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y))
        .map(|(p, q)| (p - q).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

fn add_into(a: &mut [Spectrum], b: &[Spectrum]) {
    for (x, y) in a.iter_mut().zip(b) {
        for (p, q) in x.iter_mut().zip(y) {
            *p += q;
        }
    }
}

impl StokesSolver {
    /// Spectrum of the velocity generated by `ρg`.
    pub(crate) fn density_velocity_spectrum(&self, rho: &DensityField, g: &Vector3<f64>) -> Result<Vec<Spectrum>> {
        self.check_grid(rho.grid())?;
        let f = [0, 1, 2].map(|c| rho.values().iter().map(|v| v * g[c]).collect::<Vec<f64>>());
        let refs = [f[0].as_slice(), f[1].as_slice(), f[2].as_slice()];
        self.check_source(&refs)?;
        let mut fhat = self.forward_real(&refs);
        self.apply_kernel(&mut fhat);
        Ok(fhat)
    }

    /// Spectrum of `Φ∗div(c·ρ·e u)` where `uhat` is the spectrum of `u`.
    ///
    /// The source is restricted to the exact ball, outside of which `u` is not the
    /// free-space velocity. The solve uses the plain `1/|k|²` symbol of the padded box: the
    /// truncated symbol oscillates with size `L²` at high wavenumbers, which turns the
    /// fixed point into an amplifier, while `1/|k|²` keeps the energy bound
    /// `‖e(Φ∗div A)‖ ≤ ‖A‖/2`. A divergence source carries no net force, so the
    /// periodic images of the padded box contribute little.
    pub(crate) fn viscous_correction_spectrum(&self, rho: &DensityField, c: f64, uhat: &[Spectrum]) -> Vec<Spectrum> {
        let strain = self.strain(uhat);
        let mask = self.exact_mask();
        let weighted: Vec<Vec<f64>> = strain
            .into_iter()
            .map(|s| {
                s.iter()
                    .zip(rho.values())
                    .zip(mask)
                    .map(|((e, r), &inside)| if inside { c * r * e } else { 0.0 })
                    .collect()
            })
            .collect();
        let mut dhat = self.divergence_of_symmetric(&weighted);
        self.apply_periodic_kernel(&mut dhat);
        dhat
    }

    /// Einstein correction `Φ∗div(5φ τ e v)` with `v = Φ∗(τg)`, given `v̂`.
    pub(crate) fn einstein_spectrum(&self, tau: &DensityField, params: &SuspensionParams, vhat: &[Spectrum]) -> Vec<Spectrum> {
        self.viscous_correction_spectrum(tau, 5.0 * params.volume_fraction, vhat)
    }

    /// Fixed-point solve of the effective-viscosity system, optionally warm started.
    pub(crate) fn effective_spectrum(
        &self,
        rho: &DensityField,
        params: &SuspensionParams,
        tol: f64,
        warm: Option<&[Spectrum]>,
    ) -> Result<(Vec<Spectrum>, usize, Vec<f64>)> {
        let c = 5.0 * params.volume_fraction;
        let margin = c * rho.max_value();
        if margin >= CONTRACTION_MARGIN {
            return Err(Error::NonContraction(format!(
                "5φ‖ρ‖∞ = {margin:.4} exceeds the margin {CONTRACTION_MARGIN}"
            )));
        }
        let base = self.density_velocity_spectrum(rho, &params.gravity)?;
        if c == 0.0 {
            return Ok((base, 1, Vec::new()));
        }
        let mut u = match warm {
            Some(w) => w.to_vec(),
            None => base.clone(),
        };
        let mut ratios = Vec::new();
        let mut prev_update = f64::NAN;
        let mut rising = 0;
        let mut iterations = 0;
        loop {
            iterations += 1;
            let mut next = self.viscous_correction_spectrum(rho, c, &u);
            add_into(&mut next, &base);
            let update = spectral_diff_norm(&next, &u);
            let size = spectral_norm(&next).max(f64::MIN_POSITIVE);
            if prev_update.is_finite() && prev_update > 0.0 {
                let ratio = update / prev_update;
                ratios.push(ratio);
                if ratio >= 1.0 {
                    rising += 1;
                    if rising >= 2 {
                        return Err(Error::NonContraction(format!(
                            "update ratio {ratio:.3} at iteration {iterations}"
                        )));
                    }
                } else {
                    rising = 0;
                }
            }
            prev_update = update;
            u = next;
            if update / size < tol || update == 0.0 {
                break;
            }
            if iterations >= 200 {
                return Err(Error::NonContraction("no convergence within 200 iterations".into()));
            }
        }
        Ok((u, iterations, ratios))
    }

    /// Relative residual of `u` for the effective fixed point.
    pub(crate) fn effective_residual(&self, rho: &DensityField, params: &SuspensionParams, uhat: &[Spectrum]) -> Result<f64> {
        let mut t = self.viscous_correction_spectrum(rho, 5.0 * params.volume_fraction, uhat);
        add_into(&mut t, &self.density_velocity_spectrum(rho, &params.gravity)?);
        Ok(spectral_diff_norm(&t, uhat) / spectral_norm(uhat).max(f64::MIN_POSITIVE))
    }
}

/// The velocity correction `Φ∗div(5φ τ e v)`, `v = Φ∗(τg)`, that the Einstein system
/// adds to `Φ∗(ρg)`. Particles feel it as the continuum replacement of their dipole sum.
pub fn einstein_strain_correction(tau: &DensityField, params: &SuspensionParams) -> Result<VelocityField> {
    let solver = StokesSolver::new(tau.grid())?;
    let vhat = solver.density_velocity_spectrum(tau, &params.gravity)?;
    let c = solver.einstein_spectrum(tau, params, &vhat);
    Ok(solver.velocity(&c))
}

/// Velocity of the effective-viscosity system for density `rho`.
pub fn solve_effective_velocity(rho: &DensityField, params: &SuspensionParams, tol: f64) -> Result<EffectiveSolution> {
    let solver = StokesSolver::new(rho.grid())?;
    solve_effective_with(&solver, rho, params, tol)
}

pub fn solve_effective_with(
    solver: &StokesSolver,
    rho: &DensityField,
    params: &SuspensionParams,
    tol: f64,
) -> Result<EffectiveSolution> {
    let (uhat, iterations, ratios) = solver.effective_spectrum(rho, params, tol, None)?;
    let residual = if params.volume_fraction == 0.0 { 0.0 } else { solver.effective_residual(rho, params, &uhat)? };
    Ok(EffectiveSolution { velocity: solver.velocity(&uhat), iterations, ratios, residual })
}

#[allow(dead_code)]
pub(crate) fn zero_spectrum(n: usize) -> Vec<Spectrum> {
    vec![vec![Complex64::default(); n]; 3]
}
