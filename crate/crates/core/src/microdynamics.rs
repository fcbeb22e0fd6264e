//! Particle dynamics under the explicit velocity models.
//!
//! MF0 is the Stokeslet mean field `V_i = g/(6πNR) + (1/N)Σ_{j≠i}Φ(X_i−X_j)g`. MF1 adds
//! the dipole each particle sets up in the strain of the others,
//! `(5φ/N)Σ_{j≠i} ∂Φ(X_i−X_j):S_j` with `S_j = (1/N)Σ_{k≠j} eΦ(X_j−X_k)g`. MF1C replaces
//! that double sum by a continuum field read off a grid.

use std::io::Write;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::configuration::{closest_pair, compute_stats, ConfigurationStats, ParticleConfiguration};
use crate::continuum::VelocityField;
use crate::error::{Error, Result};
use crate::kernels::{oseen_apply_unchecked, strain_unchecked, stresslet_unchecked, PhysicalSetup, SINGULARITY_GUARD};
use crate::sum::{NeumaierSym, NeumaierVec};

/// Contact is declared once two centers come within `2R(1 + CONTACT_SLACK)`.
pub const CONTACT_SLACK: f64 = 1e-6;

/// Exponent of `λ_q` recorded in traces.
pub const TRACE_Q: f64 = 1.0;

/// Which explicit model drives the particles.
#[derive(Clone, Debug)]
pub enum VelocityModel {
    Mf0,
    Mf1,
    /// MF0 plus the continuum dipole field `5φ Φ∗div(τ e v)` sampled at the particles.
    Mf1c(VelocityField),
}

impl VelocityModel {
    pub fn name(&self) -> &'static str {
        match self {
            VelocityModel::Mf0 => "mf0",
            VelocityModel::Mf1 => "mf1",
            VelocityModel::Mf1c(_) => "mf1c",
        }
    }
}

type V3 = Vector3<f64>;

fn coincident(i: usize, j: usize) -> Error {
    Error::Coincident(i.min(j), i.max(j))
}

fn mf0_raw(x: &[V3], setup: &PhysicalSetup) -> Result<Vec<V3>> {
    let n = x.len();
    let g = setup.gravity;
    let inv_n = 1.0 / n as f64;
    let base = setup.self_velocity();
    let guard2 = SINGULARITY_GUARD * SINGULARITY_GUARD;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = NeumaierVec::default();
            for j in (0..n).filter(|&j| j != i) {
                let d = x[i] - x[j];
                let r2 = d.norm_squared();
                if r2 < guard2 {
                    return Err(coincident(i, j));
                }
                acc.add(&oseen_apply_unchecked(&d, r2, &g));
            }
            Ok(base + acc.value() * inv_n)
        })
        .collect()
}

/// Strain `S_j` of the other particles' Stokeslets at each particle.
fn strains(x: &[V3], g: &V3) -> Result<Vec<Matrix3<f64>>> {
    let n = x.len();
    let inv_n = 1.0 / n as f64;
    (0..n)
        .into_par_iter()
        .map(|j| {
            let mut acc = NeumaierSym::default();
            for k in (0..n).filter(|&k| k != j) {
                let d = x[j] - x[k];
                let r = d.norm();
                if r < SINGULARITY_GUARD {
                    return Err(coincident(j, k));
                }
                acc.add(&strain_unchecked(&d, r, g));
            }
            Ok(acc.value() * inv_n)
        })
        .collect()
}

fn dipole_raw(x: &[V3], setup: &PhysicalSetup) -> Result<Vec<V3>> {
    let n = x.len();
    let phi = setup.volume_fraction();
    let s = strains(x, &setup.gravity)?;
    let pref = 5.0 * phi / n as f64;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = NeumaierVec::default();
            for j in (0..n).filter(|&j| j != i) {
                let d = x[i] - x[j];
                acc.add(&stresslet_unchecked(&d, d.norm(), &s[j]));
            }
            Ok(acc.value() * pref)
        })
        .collect()
}

fn field_raw(x: &[V3], field: &VelocityField) -> Result<Vec<V3>> {
    x.iter().enumerate().map(|(i, p)| field.interpolate(p).ok_or(Error::OutsideDomain(i))).collect()
}

fn velocities_raw(x: &[V3], setup: &PhysicalSetup, model: &VelocityModel) -> Result<Vec<V3>> {
    let mut v = mf0_raw(x, setup)?;
    let extra = match model {
        VelocityModel::Mf0 => return Ok(v),
        VelocityModel::Mf1 => dipole_raw(x, setup)?,
        VelocityModel::Mf1c(field) => field_raw(x, field)?,
    };
    for (a, b) in v.iter_mut().zip(extra) {
        *a += b;
    }
    Ok(v)
}

/// Stokeslet mean-field velocities.
pub fn velocities_mf0(cfg: &ParticleConfiguration) -> Result<Vec<V3>> {
    mf0_raw(cfg.positions(), cfg.setup())
}

/// MF0 plus the dipole correction, two O(N²) passes.
pub fn velocities_mf1(cfg: &ParticleConfiguration) -> Result<Vec<V3>> {
    velocities_raw(cfg.positions(), cfg.setup(), &VelocityModel::Mf1)
}

/// The dipole correction alone, `V^{MF1} − V^{MF0}`.
pub fn dipole_correction(cfg: &ParticleConfiguration) -> Result<Vec<V3>> {
    dipole_raw(cfg.positions(), cfg.setup())
}

/// MF0 plus `field` interpolated trilinearly at the particles.
pub fn velocities_mf1c(cfg: &ParticleConfiguration, field: &VelocityField) -> Result<Vec<V3>> {
    let mut v = velocities_mf0(cfg)?;
    for (a, b) in v.iter_mut().zip(field_raw(cfg.positions(), field)?) {
        *a += b;
    }
    Ok(v)
}

pub fn velocities(cfg: &ParticleConfiguration, model: &VelocityModel) -> Result<Vec<V3>> {
    velocities_raw(cfg.positions(), cfg.setup(), model)
}

/// `min(0.05, 0.1·d_min/max|V_i|)` at the initial configuration.
pub fn default_time_step(cfg: &ParticleConfiguration, model: &VelocityModel) -> Result<f64> {
    let v = velocities(cfg, model)?;
    let vmax = v.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let dmin = cfg.min_distance();
    if cfg.len() < 2 || vmax == 0.0 {
        return Ok(0.05);
    }
    Ok((0.1 * dmin / vmax).min(0.05))
}

/// Fixed-step RK4 on a particle cloud.
#[derive(Clone, Debug)]
pub struct MicroStepper {
    positions: Vec<V3>,
    setup: PhysicalSetup,
    model: VelocityModel,
    time: f64,
    dt: f64,
    steps: usize,
}

impl MicroStepper {
    pub fn new(cfg: &ParticleConfiguration, model: VelocityModel, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!("time step {dt} must be positive")));
        }
        let s = Self { positions: cfg.positions().to_vec(), setup: *cfg.setup(), model, time: cfg.time(), dt, steps: 0 };
        s.check_contact()?;
        Ok(s)
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn positions(&self) -> &[V3] {
        &self.positions
    }

    pub fn model(&self) -> &VelocityModel {
        &self.model
    }

    /// Replaces the attached MF1C field; other models are left alone.
    pub fn set_correction(&mut self, field: VelocityField) {
        if let VelocityModel::Mf1c(f) = &mut self.model {
            *f = field;
        }
    }

    pub fn configuration(&self) -> Result<ParticleConfiguration> {
        ParticleConfiguration::unchecked(self.positions.clone(), self.setup, self.time)
    }

    fn check_contact(&self) -> Result<()> {
        if self.positions.len() < 2 {
            return Ok(());
        }
        let (d, i, j) = closest_pair(&self.positions);
        if d <= 2.0 * self.setup.radius * (1.0 + CONTACT_SLACK) {
            return Err(Error::Contact { t: self.time, i, j, dist: d });
        }
        Ok(())
    }

    /// One classical Runge–Kutta step, then the contact check.
    pub fn step(&mut self) -> Result<()> {
        let (x, h) = (&self.positions, self.dt);
        let eval = |y: &[V3]| velocities_raw(y, &self.setup, &self.model);
        let shift = |k: &[V3], a: f64| -> Vec<V3> { x.iter().zip(k).map(|(p, v)| p + v * a).collect() };
        let k1 = eval(x)?;
        let k2 = eval(&shift(&k1, 0.5 * h))?;
        let k3 = eval(&shift(&k2, 0.5 * h))?;
        let k4 = eval(&shift(&k3, h))?;
        let next: Vec<V3> = (0..x.len()).map(|i| x[i] + (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (h / 6.0)).collect();
        let t = self.time + h;
        if next.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::NotFinite(t));
        }
        self.positions = next;
        self.time = t;
        self.steps += 1;
        self.check_contact()
    }
}

/// Recorded states of a particle run.
#[derive(Clone, Debug, Default)]
pub struct SimulationTrace {
    pub times: Vec<f64>,
    pub snapshots: Vec<ParticleConfiguration>,
    pub stats: Vec<ConfigurationStats>,
    /// `max_i |V_i^{MF1} − V_i^{MF0}|` at each recorded time.
    pub model_gap: Vec<f64>,
}

fn stats_or_empty(cfg: &ParticleConfiguration) -> Result<ConfigurationStats> {
    if cfg.len() < 2 {
        return Ok(ConfigurationStats { d_min: f64::INFINITY, alpha: [0.0; 3], q: TRACE_Q, lambda_q: 0.0, c0: 0.0 });
    }
    compute_stats(cfg, TRACE_Q)
}

impl SimulationTrace {
    pub fn record(&mut self, cfg: ParticleConfiguration) -> Result<()> {
        let stats = stats_or_empty(&cfg)?;
        let gap = dipole_correction(&cfg)?.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if let Some(&last) = self.times.last() {
            if cfg.time() <= last {
                return Err(Error::InvalidInput(format!("time {} does not follow {last}", cfg.time())));
            }
        }
        self.times.push(cfg.time());
        self.stats.push(stats);
        self.model_gap.push(gap);
        self.snapshots.push(cfg);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&ParticleConfiguration> {
        self.snapshots.last()
    }

    /// One row per particle per recorded time: `t,i,x,y,z,dmin,alpha2,alpha3,model_gap`.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Io(std::io::Error::other(e));
        out.write_record(["t", "i", "x", "y", "z", "dmin", "alpha2", "alpha3", "model_gap"]).map_err(err)?;
        for k in 0..self.len() {
            let s = &self.stats[k];
            for (i, p) in self.snapshots[k].positions().iter().enumerate() {
                out.write_record(&[
                    self.times[k].to_string(),
                    i.to_string(),
                    p.x.to_string(),
                    p.y.to_string(),
                    p.z.to_string(),
                    s.d_min.to_string(),
                    s.alpha[1].to_string(),
                    s.alpha[2].to_string(),
                    self.model_gap[k].to_string(),
                ])
                .map_err(err)?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Integrates from the configuration's time to `t_end` with a step no larger than `dt`, recording every step.
pub fn integrate(cfg: &ParticleConfiguration, model: VelocityModel, t_end: f64, dt: f64) -> Result<SimulationTrace> {
    integrate_with(cfg, model, t_end, dt, 1)
}

/// Like [`integrate`], recording every `stride` steps and at `t_end`.
pub fn integrate_with(
    cfg: &ParticleConfiguration,
    model: VelocityModel,
    t_end: f64,
    dt: f64,
    stride: usize,
) -> Result<SimulationTrace> {
    let (n, dt) = crate::continuum::step_count(t_end - cfg.time(), dt)?;
    let mut stepper = MicroStepper::new(cfg, model, dt)?;
    let mut trace = SimulationTrace::default();
    trace.record(stepper.configuration()?)?;
    for k in 1..=n {
        stepper.step()?;
        if k % stride.max(1) == 0 || k == n {
            trace.record(stepper.configuration()?)?;
        }
    }
    Ok(trace)
}
