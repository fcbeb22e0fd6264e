//! Experiment harness: matched runs, distances, rate fits and their files.

mod config;
mod experiment;
mod fit;
mod kernel_check;

pub use config::{LabConfig, OutputSection, SetupSection, SweepSection};
pub use experiment::{
    decay_rate, distances, growth_rate, lattice_measure, probe_offsets, read_records, run_comparison, run_continuum, run_sweep,
    support_radius, write_records, ContinuumPoint, Failure, GridConfig, ModelKind, Record, SweepOutcome, SweepPlan,
    RECORD_COLUMNS,
};
pub use fit::RateFit;
pub use kernel_check::{check_kernel_condition, KernelChoice, KernelReport, DIVERGENCE_TOLERANCE, SLOPE_TOLERANCE};
