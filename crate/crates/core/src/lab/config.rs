use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::experiment::{GridConfig, ModelKind, SweepPlan};
use crate::density::AnalyticDensity;
use crate::error::{Error, Result};

/// Physical setup. Defaults: unit blob at the origin, `g = (0, 0, −1)`, MF0, θ = 1/2,
/// φ₀ from the diluteness rule, seed 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SetupSection {
    pub density: AnalyticDensity,
    pub gravity: [f64; 3],
    pub model: ModelKind,
    pub theta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi0: Option<f64>,
    pub seed: u64,
}

/// Sweep shape. Defaults: N = 512…4096 by doubling, schedule φ, t_end = 0.5 in five
/// intervals, default particle step, ρ_eff on, markers at the particle lattice spacing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub n_values: Vec<usize>,
    pub phi_values: Vec<f64>,
    pub t_end: f64,
    pub outputs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub micro_dt: Option<f64>,
    pub effective: bool,
    pub marker_factor: f64,
}

/// Where results go. Default `results/`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

/// The `[setup]`, `[grid]`, `[sweep]` and `[output]` sections of a lab config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabConfig {
    pub setup: SetupSection,
    pub grid: GridConfig,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

impl Default for SetupSection {
    fn default() -> Self {
        let p = SweepPlan::default();
        Self { density: p.density, gravity: p.gravity.into(), model: p.model, theta: p.theta, phi0: p.phi0, seed: p.seed }
    }
}

impl Default for SweepSection {
    fn default() -> Self {
        let p = SweepPlan::default();
        Self {
            n_values: p.n_values,
            phi_values: p.phi_values,
            t_end: p.t_end,
            outputs: p.outputs,
            micro_dt: p.micro_dt,
            effective: p.effective,
            marker_factor: p.marker_factor,
        }
    }
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("results") }
    }
}

impl LabConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn plan(&self) -> Result<SweepPlan> {
        let plan = SweepPlan {
            n_values: self.sweep.n_values.clone(),
            theta: self.setup.theta,
            phi0: self.setup.phi0,
            phi_values: self.sweep.phi_values.clone(),
            t_end: self.sweep.t_end,
            outputs: self.sweep.outputs,
            model: self.setup.model,
            density: self.setup.density,
            gravity: Vector3::from(self.setup.gravity),
            grid: self.grid,
            micro_dt: self.sweep.micro_dt,
            effective: self.sweep.effective,
            marker_factor: self.sweep.marker_factor,
            seed: self.setup.seed,
        };
        plan.validate()?;
        Ok(plan)
    }
}
