//! Grid solvers for the macroscopic transport-Stokes systems.

mod einstein;
mod evolve;
mod grid;
mod spectral;
mod stokes;
mod transport;

pub use einstein::{
    einstein_strain_correction, solve_effective_velocity, solve_effective_with, EffectiveSolution, SuspensionParams,
    CONTRACTION_MARGIN,
};
pub use evolve::{evolve_system, evolve_system_with, EvolveOptions, MacroStepper, Snapshot, SystemKind};
pub use grid::{sidecar, DensityField, GridSpec, VelocityField};
pub use stokes::{stokes_solve, stokes_solve_density, StokesSolver, EXACT_MARGIN_CELLS, TRUNCATION_TOLERANCE};
pub use transport::{transport_step, MASS_WARNING};

pub(crate) use evolve::step_count;
