//! Time stepping of the three macroscopic systems.
//!
//! TAU: `v = Φ∗(τg)`. RHO: `u = Φ∗(ρg) + Φ∗div(5φ τ e v)` with τ from the TAU system.
//! RHO_EFF: the effective-viscosity fixed point. Every density is carried by its
//! velocity plus the uniform drift.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::einstein::SuspensionParams;
use super::grid::{DensityField, GridSpec, VelocityField};
use super::stokes::{Spectrum, StokesSolver};
use super::transport::transport_step_report;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Tau,
    Rho,
    RhoEff,
}

impl SystemKind {
    pub const ALL: [SystemKind; 3] = [SystemKind::Tau, SystemKind::Rho, SystemKind::RhoEff];

    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Tau => "tau",
            SystemKind::Rho => "rho",
            SystemKind::RhoEff => "rho_eff",
        }
    }
}

impl std::str::FromStr for SystemKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tau" => Ok(SystemKind::Tau),
            "rho" => Ok(SystemKind::Rho),
            "rho_eff" | "rhoeff" | "eff" => Ok(SystemKind::RhoEff),
            _ => Err(Error::Parse(format!("unknown system {s:?}"))),
        }
    }
}

/// One emitted state of a system.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub time: f64,
    pub density: DensityField,
    pub velocity: VelocityField,
}

#[derive(Clone, Debug)]
pub struct EvolveOptions {
    /// Emit a snapshot every this many steps (the final time is always emitted).
    pub output_stride: usize,
    /// Relative tolerance of the effective-viscosity iteration.
    pub tolerance: f64,
    /// Shift the window by whole cells to follow the τ centroid.
    pub recenter: bool,
    /// Lagrangian markers carried by every system's velocity.
    pub markers: Vec<Vector3<f64>>,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { output_stride: 1, tolerance: 1e-9, recenter: false, markers: Vec::new() }
    }
}

struct SystemState {
    kind: SystemKind,
    density: DensityField,
    uhat: Vec<Spectrum>,
    velocity: VelocityField,
    previous: Option<VelocityField>,
    markers: Vec<Vector3<f64>>,
    iterations: usize,
}

/// Steps any subset of the three systems in lockstep on one shared grid.
pub struct MacroStepper {
    solver: StokesSolver,
    params: SuspensionParams,
    options: EvolveOptions,
    dt: f64,
    time: f64,
    steps: usize,
    states: Vec<SystemState>,
    requested: Vec<SystemKind>,
    einstein: Option<VelocityField>,
    largest_mass_correction: f64,
}

impl MacroStepper {
    pub fn new(
        systems: &[SystemKind],
        rho0: &DensityField,
        params: SuspensionParams,
        dt: f64,
        options: EvolveOptions,
    ) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!("time step {dt} must be positive")));
        }
        if systems.is_empty() {
            return Err(Error::InvalidInput("no system requested".into()));
        }
        let mut kinds: Vec<SystemKind> = systems.to_vec();
        kinds.sort();
        kinds.dedup();
        let mut internal = kinds.clone();
        if internal.contains(&SystemKind::Rho) && !internal.contains(&SystemKind::Tau) {
            internal.insert(0, SystemKind::Tau);
        }
        let solver = StokesSolver::new(rho0.grid())?;
        let grid = *rho0.grid();
        let states = internal
            .iter()
            .map(|&kind| SystemState {
                kind,
                density: rho0.clone(),
                uhat: Vec::new(),
                velocity: VelocityField::zeros(grid),
                previous: None,
                markers: options.markers.clone(),
                iterations: 0,
            })
            .collect();
        let mut s = Self {
            solver,
            params,
            options,
            dt,
            time: 0.0,
            steps: 0,
            states,
            requested: kinds,
            einstein: None,
            largest_mass_correction: 0.0,
        };
        s.solve_velocities()?;
        Ok(s)
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &GridSpec {
        self.solver.grid()
    }

    pub fn systems(&self) -> &[SystemKind] {
        &self.requested
    }

    fn state(&self, kind: SystemKind) -> Result<&SystemState> {
        self.states
            .iter()
            .find(|s| s.kind == kind)
            .ok_or_else(|| Error::InvalidInput(format!("system {} is not evolved", kind.name())))
    }

    pub fn density(&self, kind: SystemKind) -> Result<&DensityField> {
        Ok(&self.state(kind)?.density)
    }

    pub fn velocity(&self, kind: SystemKind) -> Result<&VelocityField> {
        Ok(&self.state(kind)?.velocity)
    }

    pub fn markers(&self, kind: SystemKind) -> Result<&[Vector3<f64>]> {
        Ok(&self.state(kind)?.markers)
    }

    /// Fixed-point iterations used by the last effective-viscosity solve.
    pub fn effective_iterations(&self) -> usize {
        self.state(SystemKind::RhoEff).map(|s| s.iterations).unwrap_or(0)
    }

    /// Einstein correction `Φ∗div(5φ τ e v)` of the current τ, when τ is evolved.
    pub fn einstein_correction(&mut self) -> Result<&VelocityField> {
        if self.einstein.is_none() {
            let tau = self.state(SystemKind::Tau)?;
            let c = self.solver.einstein_spectrum(&tau.density, &self.params, &tau.uhat);
            self.einstein = Some(self.solver.velocity(&c));
        }
        Ok(self.einstein.as_ref().expect("just computed"))
    }

    /// Largest relative mass correction applied by transport so far.
    pub fn largest_mass_correction(&self) -> f64 {
        self.largest_mass_correction
    }

    pub fn snapshot(&self, kind: SystemKind) -> Result<Snapshot> {
        let s = self.state(kind)?;
        Ok(Snapshot { time: self.time, density: s.density.clone(), velocity: s.velocity.clone() })
    }

    fn solve_velocities(&mut self) -> Result<()> {
        self.einstein = None;
        let mut einstein_hat: Option<Vec<Spectrum>> = None;
        for i in 0..self.states.len() {
            let kind = self.states[i].kind;
            let uhat = match kind {
                SystemKind::Tau => {
                    let st = &self.states[i];
                    let vhat = self.solver.density_velocity_spectrum(&st.density, &self.params.gravity)?;
                    if self.states.iter().any(|s| s.kind == SystemKind::Rho) {
                        einstein_hat = Some(self.solver.einstein_spectrum(&st.density, &self.params, &vhat));
                    }
                    vhat
                }
                SystemKind::Rho => {
                    let st = &self.states[i];
                    let mut u = self.solver.density_velocity_spectrum(&st.density, &self.params.gravity)?;
                    let c = einstein_hat.as_ref().expect("tau is solved before rho");
                    for (a, b) in u.iter_mut().zip(c) {
                        for (p, q) in a.iter_mut().zip(b) {
                            *p += q;
                        }
                    }
                    u
                }
                SystemKind::RhoEff => {
                    let st = &self.states[i];
                    let warm = if st.uhat.is_empty() { None } else { Some(st.uhat.as_slice()) };
                    let (u, it, _) =
                        self.solver.effective_spectrum(&st.density, &self.params, self.options.tolerance, warm)?;
                    self.states[i].iterations = it;
                    u
                }
            };
            let velocity = self.solver.velocity(&uhat);
            let st = &mut self.states[i];
            st.previous = Some(std::mem::replace(&mut st.velocity, velocity));
            st.uhat = uhat;
        }
        if self.steps == 0 {
            for st in &mut self.states {
                st.previous = None;
            }
        }
        Ok(())
    }

    /// Advances every system by one step.
    pub fn step(&mut self) -> Result<()> {
        let dt = self.dt;
        let drift = self.params.drift;
        for st in &mut self.states {
            // second-order extrapolation of the velocity to the half step
            let carrier = match &st.previous {
                Some(prev) => extrapolate(&st.velocity, prev)?,
                None => st.velocity.clone(),
            };
            let (next, correction) = transport_step_report(&st.density, &carrier, &drift, dt)?;
            self.largest_mass_correction = self.largest_mass_correction.max(correction.abs());
            st.density = next;
            for x in st.markers.iter_mut() {
                let mid = *x + (carrier.interpolate_clamped(x) + drift) * (dt / 2.0);
                *x += (carrier.interpolate_clamped(&mid) + drift) * dt;
            }
        }
        self.steps += 1;
        self.time = self.steps as f64 * dt;
        if self.options.recenter {
            self.recenter()?;
        }
        self.solve_velocities()
    }

    fn recenter(&mut self) -> Result<()> {
        let reference = self
            .states
            .iter()
            .find(|s| s.kind == SystemKind::Tau)
            .unwrap_or(&self.states[0]);
        let grid = *self.solver.grid();
        let offset = (reference.density.centroid() - grid.center()) / grid.cell;
        let cells = [0, 1, 2].map(|d| offset[d].round() as i64);
        if cells.iter().all(|&c| c == 0) {
            return Ok(());
        }
        let moved = grid.shifted(cells);
        for st in &mut self.states {
            st.density = DensityField::new(moved, shift_values(&grid, st.density.values(), cells))?;
            st.velocity = shift_velocity(&st.velocity, &moved, cells)?;
            if let Some(p) = &st.previous {
                st.previous = Some(shift_velocity(p, &moved, cells)?);
            }
        }
        self.solver.rebind(&moved)
    }
}

fn extrapolate(now: &VelocityField, prev: &VelocityField) -> Result<VelocityField> {
    let a = now.components();
    let b = prev.components();
    let values = [0, 1, 2].map(|c| a[c].iter().zip(&b[c]).map(|(x, y)| 1.5 * x - 0.5 * y).collect());
    VelocityField::new(*now.grid(), values, now.divergence_norm().max(prev.divergence_norm()))
}

/// Values of a field re-expressed on the grid moved by `cells`; uncovered cells are zero.
fn shift_values(grid: &GridSpec, values: &[f64], cells: [i64; 3]) -> Vec<f64> {
    let [nx, ny, nz] = grid.dims.map(|d| d as i64);
    let mut out = vec![0.0; values.len()];
    for k in 0..nz {
        let sk = k + cells[2];
        if sk < 0 || sk >= nz {
            continue;
        }
        for j in 0..ny {
            let sj = j + cells[1];
            if sj < 0 || sj >= ny {
                continue;
            }
            for i in 0..nx {
                let si = i + cells[0];
                if si < 0 || si >= nx {
                    continue;
                }
                out[(i + nx * (j + ny * k)) as usize] = values[(si + nx * (sj + ny * sk)) as usize];
            }
        }
    }
    out
}

fn shift_velocity(v: &VelocityField, moved: &GridSpec, cells: [i64; 3]) -> Result<VelocityField> {
    let c = v.components();
    let values = [0, 1, 2].map(|d| shift_values(v.grid(), &c[d], cells));
    VelocityField::new(*moved, values, v.divergence_norm())
}

/// Number of steps and the adjusted step so that `steps·dt = t_end`.
pub(crate) fn step_count(t_end: f64, dt: f64) -> Result<(usize, f64)> {
    if !(t_end >= 0.0 && t_end.is_finite() && dt > 0.0) {
        return Err(Error::InvalidInput(format!("invalid horizon {t_end} or step {dt}")));
    }
    let n = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    Ok(if n == 0 { (0, dt) } else { (n, t_end / n as f64) })
}

/// Evolves one system from `rho0` to `t_end`, emitting snapshots at the output stride.
pub fn evolve_system(
    which: SystemKind,
    rho0: &DensityField,
    params: &SuspensionParams,
    t_end: f64,
    dt: f64,
) -> Result<Vec<Snapshot>> {
    evolve_system_with(which, rho0, params, t_end, dt, EvolveOptions::default())
}

pub fn evolve_system_with(
    which: SystemKind,
    rho0: &DensityField,
    params: &SuspensionParams,
    t_end: f64,
    dt: f64,
    options: EvolveOptions,
) -> Result<Vec<Snapshot>> {
    let (n, dt) = step_count(t_end, dt)?;
    let stride = options.output_stride.max(1);
    let mut stepper = MacroStepper::new(&[which], rho0, *params, dt, options)?;
    let mut out = vec![stepper.snapshot(which)?];
    for step in 1..=n {
        stepper.step()?;
        if step % stride == 0 || step == n {
            out.push(stepper.snapshot(which)?);
        }
    }
    Ok(out)
}
