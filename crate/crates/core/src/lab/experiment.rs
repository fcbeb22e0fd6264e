//! Matched particle and continuum runs, and the distances between them.
//!
//! The uniform self-interaction drift `g/(6πNR)` translates every particle alike, so the
//! continuum systems are evolved without it and their markers are shifted by `drift·t`
//! for each `N`. One continuum run per volume fraction then serves every `N`.

use std::path::Path;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::RateFit;
use crate::configuration::{generate_well_prepared, lattice, lattice_spacing, ParticleConfiguration, PhiSchedule, DEFAULT_DILUTENESS};
use crate::continuum::{step_count, EXACT_MARGIN_CELLS, DensityField, EvolveOptions, GridSpec, MacroStepper, SuspensionParams, SystemKind, VelocityField};
use crate::density::{AnalyticDensity, Density};
use crate::error::{Error, Result};
use crate::kernels::single_particle_field;
use crate::microdynamics::{default_time_step, MicroStepper, SimulationTrace, VelocityModel};
use crate::wasserstein::{wasserstein_inf, wasserstein_p, DiscreteMeasure};

type V3 = Vector3<f64>;

/// Particle velocity model, without the field MF1C carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Mf0,
    Mf1,
    Mf1c,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mf0 => "mf0",
            ModelKind::Mf1 => "mf1",
            ModelKind::Mf1c => "mf1c",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mf0" => Ok(ModelKind::Mf0),
            "mf1" => Ok(ModelKind::Mf1),
            "mf1c" => Ok(ModelKind::Mf1c),
            _ => Err(Error::Parse(format!("unknown model {s:?}"))),
        }
    }
}

/// Continuum grid and time step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Cells per axis.
    pub n: usize,
    /// Side of the cube. Unset: the solver's exact ball covers 1.2 support radii.
    pub side: Option<f64>,
    pub dt: f64,
    /// Relative tolerance of the effective-viscosity iteration.
    pub tolerance: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n: 64, side: None, dt: 0.025, tolerance: 1e-9 }
    }
}

/// Half the largest extent of the support box.
pub fn support_radius(density: &dyn Density) -> f64 {
    let (lo, hi) = density.support_box();
    (hi - lo).max() / 2.0
}

impl GridConfig {
    /// Cube centered on the support.
    pub fn spec(&self, density: &dyn Density) -> Result<GridSpec> {
        if self.n < 16 || !self.n.is_power_of_two() {
            return Err(Error::InvalidInput(format!("grid size {} must be a power of two, at least 16", self.n)));
        }
        // exact region of the solver, (n/2 − 4) cells, reaching 1.2 support radii
        let cells = (self.n / 2) as f64 - EXACT_MARGIN_CELLS;
        let side = self.side.unwrap_or(1.2 * support_radius(density) * self.n as f64 / cells);
        if !(side > 0.0 && side.is_finite()) {
            return Err(Error::InvalidInput(format!("grid side {side} must be positive")));
        }
        GridSpec::cube(density.support_center(), side, self.n)
    }
}

/// A set of runs over particle counts, optionally at fixed volume fractions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub n_values: Vec<usize>,
    /// `φ_N = φ₀ N^{-θ}`.
    pub theta: f64,
    /// Unset: chosen so that `φ_N log N` equals [`DEFAULT_DILUTENESS`] at the largest N.
    pub phi0: Option<f64>,
    /// When non-empty every N runs at each of these instead of following the schedule.
    pub phi_values: Vec<f64>,
    pub t_end: f64,
    /// Number of equal output intervals.
    pub outputs: usize,
    pub model: ModelKind,
    pub density: AnalyticDensity,
    pub gravity: V3,
    pub grid: GridConfig,
    /// Upper bound on the particle step. Unset: `min(0.05, 0.1·d_min/max|V|)`.
    pub micro_dt: Option<f64>,
    /// Evolve ρ_eff and measure η_eff.
    pub effective: bool,
    /// Marker lattice spacing in units of the particle lattice spacing.
    pub marker_factor: f64,
    pub seed: u64,
}

impl Default for SweepPlan {
    fn default() -> Self {
        Self {
            n_values: vec![512, 1024, 2048, 4096],
            theta: 0.5,
            phi0: None,
            phi_values: Vec::new(),
            t_end: 0.5,
            outputs: 5,
            model: ModelKind::Mf0,
            density: AnalyticDensity::unit_blob(),
            gravity: -V3::z(),
            grid: GridConfig::default(),
            micro_dt: None,
            effective: true,
            marker_factor: 1.0,
            seed: 1,
        }
    }
}

impl SweepPlan {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.n_values.is_empty() {
            return bad("no particle counts given".into());
        }
        if self.n_values.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("particle counts {:?} are not strictly increasing", self.n_values));
        }
        if self.n_values[0] < 2 {
            return bad("particle counts must be at least 2".into());
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return bad(format!("theta = {} must lie in (0, 1)", self.theta));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end = {} must be positive", self.t_end));
        }
        if self.outputs == 0 {
            return bad("at least one output interval is needed".into());
        }
        if let Some(p) = self.phi_values.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return bad(format!("volume fraction {p} must lie in (0, 1)"));
        }
        if let Some(dt) = self.micro_dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad(format!("micro step {dt} must be positive"));
            }
        }
        if !(self.marker_factor > 0.0 && self.marker_factor.is_finite()) {
            return bad(format!("marker factor {} must be positive", self.marker_factor));
        }
        if self.gravity.norm() == 0.0 || !self.gravity.iter().all(|g| g.is_finite()) {
            return bad("gravity must be finite and nonzero".into());
        }
        if !(self.grid.dt > 0.0 && self.grid.tolerance > 0.0) {
            return bad("grid dt and tolerance must be positive".into());
        }
        self.grid.spec(&self.density)?;
        self.schedule().map(|_| ())
    }

    pub fn schedule(&self) -> Result<PhiSchedule> {
        match self.phi0 {
            Some(p) => PhiSchedule::new(p, self.theta),
            None => PhiSchedule::for_largest(*self.n_values.last().unwrap_or(&2), self.theta, DEFAULT_DILUTENESS),
        }
    }

    /// `(N, φ)` pairs in run order: N outer, φ inner.
    pub fn entries(&self) -> Result<Vec<(usize, f64)>> {
        let s = self.schedule()?;
        Ok(if self.phi_values.is_empty() {
            self.n_values.iter().map(|&n| (n, s.phi(n))).collect()
        } else {
            self.n_values.iter().flat_map(|&n| self.phi_values.iter().map(move |&p| (n, p))).collect()
        })
    }

    /// Output times `k·t_end/outputs`.
    pub fn output_times(&self) -> Vec<f64> {
        (0..=self.outputs).map(|k| k as f64 * self.t_end / self.outputs as f64).collect()
    }
}

/// One output time of one run. Columns follow `records.csv`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    #[serde(rename = "N")]
    pub n: usize,
    pub phi: f64,
    pub t: f64,
    /// `W_∞` between the particles and τ.
    pub eta_tau: f64,
    /// `W_∞` between the particles and ρ_eff; NaN when ρ_eff is not evolved.
    pub eta_eff: f64,
    pub w1_tau: f64,
    pub w2_tau: f64,
    pub w1_eff: f64,
    pub w2_eff: f64,
    pub dmin: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    /// `W₂(ρ_N(0), ρ₀)`.
    pub floor_w2: f64,
    /// RMS of `|u_N − v|` over the probe set.
    pub vel_err_q2: f64,
}

/// A run that stopped early.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    #[serde(rename = "N")]
    pub n: usize,
    pub phi: f64,
    pub model: ModelKind,
    pub message: String,
}

/// Continuum-only distances at `t_end` for one volume fraction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuumPoint {
    pub phi: f64,
    pub t: f64,
    pub w2_eff_tau: f64,
    pub w2_eff_rho: f64,
    /// The same distances from a coarser marker lattice.
    pub coarse_eff_tau: f64,
    pub coarse_eff_rho: f64,
    /// Quantization bound of the fine markers, half a cell diagonal. It bounds the
    /// distance of each marker set to its density, so it is loose for the gap between two
    /// marker sets that started together.
    pub bar: f64,
}

impl ContinuumPoint {
    /// Fine/coarse spread of the two distances, the measured quantization error.
    pub fn error_bars(&self) -> (f64, f64) {
        ((self.w2_eff_tau - self.coarse_eff_tau).abs(), (self.w2_eff_rho - self.coarse_eff_rho).abs())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub records: Vec<Record>,
    /// MF0 runs at the first φ, kept as the baseline of the MF1 excess fit.
    pub baseline: Vec<Record>,
    pub continuum: Vec<ContinuumPoint>,
    pub fits: Vec<RateFit>,
    pub failures: Vec<Failure>,
    /// Fits that could not be formed and why.
    pub notes: Vec<String>,
}

/// Midpoint-rule atoms at the cell centers of a lattice of the given spacing over the
/// support, with displacement bound `spacing·√3/2`.
pub fn lattice_measure(density: &dyn Density, spacing: f64) -> Result<DiscreteMeasure> {
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::InvalidInput(format!("spacing {spacing} must be positive")));
    }
    let lat = lattice(density, spacing)?;
    let (points, weights) = lat.nodes.into_iter().map(|(_, x, v)| (x, v)).unzip();
    Ok(DiscreteMeasure::normalized(points, weights)?.with_displacement_bound(spacing * 3f64.sqrt() / 2.0))
}

/// `(W_∞, W₁, W₂)`.
pub fn distances(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<(f64, f64, f64)> {
    Ok((wasserstein_inf(mu, nu)?.0, wasserstein_p(mu, nu, 1.0)?.0, wasserstein_p(mu, nu, 2.0)?.0))
}

/// `max_t ln(y(t)/y(0))/t` over the times after the first; zero if nothing grows.
pub fn growth_rate(times: &[f64], values: &[f64]) -> f64 {
    let (t0, y0) = (times[0], values[0]);
    times.iter().zip(values).skip(1).map(|(t, y)| (y / y0).ln() / (t - t0)).fold(0.0, f64::max)
}

/// `max_t ln(y(0)/y(t))/t`: the smallest `C` with `y(t) ≥ y(0)e^{-Ct}` at every sample.
pub fn decay_rate(times: &[f64], values: &[f64]) -> f64 {
    let inv: Vec<f64> = values.iter().map(|v| 1.0 / v).collect();
    growth_rate(times, &inv)
}

fn fibonacci_sphere(n: usize) -> Vec<V3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2 * i + 1) as f64 / n as f64;
            let r = (1.0 - z * z).sqrt();
            let a = golden * i as f64;
            V3::new(r * a.cos(), r * a.sin(), z)
        })
        .collect()
}

/// Probe offsets: 32 directions on each of the shells at 0.25 and 0.5 support radii.
pub fn probe_offsets(support_radius: f64) -> Vec<V3> {
    let dirs = fibonacci_sphere(32);
    [0.25, 0.5].iter().flat_map(|s| dirs.iter().map(move |d| d * (s * support_radius))).collect()
}

struct Timeline {
    outputs: usize,
    per_output: usize,
    dt: f64,
    times: Vec<f64>,
}

impl Timeline {
    fn new(plan: &SweepPlan) -> Result<Self> {
        let (per_output, dt) = step_count(plan.t_end / plan.outputs as f64, plan.grid.dt)?;
        Ok(Self { outputs: plan.outputs, per_output: per_output.max(1), dt, times: plan.output_times() })
    }
}

/// Continuum markers at every output time, and the fields the particle runs need.
struct MacroTrack {
    markers: Vec<(SystemKind, Vec<Vec<V3>>)>,
    tau_velocity: Vec<VelocityField>,
    /// Einstein correction at the start of every macro step.
    corrections: Vec<VelocityField>,
}

impl MacroTrack {
    fn markers(&self, kind: SystemKind) -> Option<&Vec<Vec<V3>>> {
        self.markers.iter().find(|m| m.0 == kind).map(|m| &m.1)
    }
}

fn run_macro(
    plan: &SweepPlan,
    rho0: &DensityField,
    phi: f64,
    systems: &[SystemKind],
    markers: &[V3],
    tl: &Timeline,
    corrections: bool,
) -> Result<MacroTrack> {
    let params = SuspensionParams::new(plan.gravity, phi, V3::zeros())?;
    let options =
        EvolveOptions { output_stride: 1, tolerance: plan.grid.tolerance, recenter: true, markers: markers.to_vec() };
    let mut st = MacroStepper::new(systems, rho0, params, tl.dt, options)?;
    let mut track = MacroTrack {
        markers: systems.iter().map(|&k| (k, Vec::new())).collect(),
        tau_velocity: Vec::new(),
        corrections: Vec::new(),
    };
    let grab = |st: &MacroStepper, track: &mut MacroTrack| -> Result<()> {
        for (kind, m) in &mut track.markers {
            m.push(st.markers(*kind)?.to_vec());
        }
        track.tau_velocity.push(st.velocity(SystemKind::Tau)?.clone());
        Ok(())
    };
    grab(&st, &mut track)?;
    for _ in 0..tl.outputs {
        for _ in 0..tl.per_output {
            if corrections {
                track.corrections.push(st.einstein_correction()?.clone());
            }
            st.step()?;
        }
        log::info!("macro phi={phi}: t = {:.4}", st.time());
        grab(&st, &mut track)?;
    }
    Ok(track)
}

fn shifted(field: &VelocityField, by: V3) -> Result<VelocityField> {
    let g = field.grid();
    let grid = GridSpec { origin: g.origin + by, ..*g };
    VelocityField::new(grid, field.components().clone(), field.divergence_norm())
}

/// Particle run aligned with the macro steps. Returns what was recorded before any abort.
fn run_micro(
    plan: &SweepPlan,
    cfg: &ParticleConfiguration,
    model: ModelKind,
    track: &MacroTrack,
    tl: &Timeline,
) -> (SimulationTrace, Option<Error>) {
    let mut trace = SimulationTrace::default();
    let drift = cfg.setup().self_velocity();
    let run = |trace: &mut SimulationTrace| -> Result<()> {
        let vm = match model {
            ModelKind::Mf0 => VelocityModel::Mf0,
            ModelKind::Mf1 => VelocityModel::Mf1,
            ModelKind::Mf1c => VelocityModel::Mf1c(shifted(&track.corrections[0], V3::zeros())?),
        };
        let target = match plan.micro_dt {
            Some(dt) => dt,
            None => default_time_step(cfg, &vm)?,
        };
        let sub = ((tl.dt / target) - 1e-9).ceil().max(1.0) as usize;
        let mut stepper = MicroStepper::new(cfg, vm, tl.dt / sub as f64)?;
        trace.record(cfg.clone())?;
        let mut j = 0;
        for _ in 0..tl.outputs {
            for _ in 0..tl.per_output {
                if model == ModelKind::Mf1c {
                    stepper.set_correction(shifted(&track.corrections[j], drift * (j as f64 * tl.dt))?);
                }
                for _ in 0..sub {
                    stepper.step()?;
                }
                j += 1;
            }
            trace.record(stepper.configuration()?)?;
        }
        Ok(())
    };
    let err = run(&mut trace).err();
    (trace, err)
}

/// Marker sets of every N, concatenated.
struct Markers {
    points: Vec<V3>,
    /// `(N, start, weights, bar)`.
    sets: Vec<(usize, usize, Vec<f64>, f64)>,
}

impl Markers {
    fn new(plan: &SweepPlan) -> Result<Self> {
        let mut points = Vec::new();
        let mut sets = Vec::new();
        for &n in &plan.n_values {
            let h = lattice_spacing(&plan.density, n)? * plan.marker_factor;
            let m = lattice_measure(&plan.density, h)?;
            sets.push((n, points.len(), m.weights().to_vec(), m.displacement_bound()));
            points.extend_from_slice(m.points());
        }
        Ok(Self { points, sets })
    }

    fn set(&self, n: usize) -> &(usize, usize, Vec<f64>, f64) {
        self.sets.iter().find(|s| s.0 == n).expect("every N has markers")
    }

    /// The measure of `n`'s markers in `all`, translated by `shift`.
    fn measure(&self, n: usize, all: &[V3], shift: V3) -> Result<DiscreteMeasure> {
        let (_, start, w, bar) = self.set(n);
        let pts = all[*start..*start + w.len()].iter().map(|x| x + shift).collect();
        Ok(DiscreteMeasure::new(pts, w.clone())?.with_displacement_bound(*bar))
    }
}

fn records_for(
    plan: &SweepPlan,
    phi: f64,
    trace: &SimulationTrace,
    track: &MacroTrack,
    markers: &Markers,
    times: &[f64],
) -> Result<Vec<Record>> {
    let offsets = probe_offsets(support_radius(&plan.density));
    let eff = track.markers(SystemKind::RhoEff);
    let tau = track.markers(SystemKind::Tau).expect("tau is always evolved");
    let mut out = Vec::with_capacity(trace.len());
    let mut floor = f64::NAN;
    for k in 0..trace.len() {
        let cfg = &trace.snapshots[k];
        let n = cfg.len();
        let shift = cfg.setup().self_velocity() * times[k];
        let p = DiscreteMeasure::empirical(cfg);
        let mt = markers.measure(n, &tau[k], shift)?;
        let (eta_tau, w1_tau, w2_tau) = distances(&p, &mt)?;
        if k == 0 {
            floor = w2_tau;
        }
        let (eta_eff, w1_eff, w2_eff) = match eff {
            Some(e) => distances(&p, &markers.measure(n, &e[k], shift)?)?,
            None => (f64::NAN, f64::NAN, f64::NAN),
        };
        let s = &trace.stats[k];
        out.push(Record {
            n,
            phi,
            t: times[k],
            eta_tau,
            eta_eff,
            w1_tau,
            w2_tau,
            w1_eff,
            w2_eff,
            dmin: s.d_min,
            alpha2: s.alpha[1],
            alpha3: s.alpha[2],
            floor_w2: floor,
            vel_err_q2: velocity_error(cfg, &track.tau_velocity[k], mt.mean(), shift, &offsets),
        });
    }
    Ok(out)
}

/// RMS of `|Σ_j w(x − X_j) − v(x − shift)|` over the probes around `center` that lie
/// farther than `2R` from every particle.
fn velocity_error(cfg: &ParticleConfiguration, v: &VelocityField, center: V3, shift: V3, offsets: &[V3]) -> f64 {
    let setup = cfg.setup();
    let x = cfg.positions();
    let (mut sum, mut count) = (0.0, 0usize);
    for off in offsets {
        let probe = center + off;
        if x.iter().any(|p| (p - probe).norm() <= 2.0 * setup.radius) {
            continue;
        }
        let Some(vc) = v.interpolate(&(probe - shift)) else { continue };
        let u: V3 = x.iter().map(|p| single_particle_field(&(probe - p), setup)).sum();
        sum += (u - vc).norm_squared();
        count += 1;
    }
    if count == 0 {
        f64::NAN
    } else {
        (sum / count as f64).sqrt()
    }
}

fn configuration(plan: &SweepPlan, n: usize, phi: f64) -> Result<ParticleConfiguration> {
    let schedule = PhiSchedule::new(phi * (n as f64).powf(plan.theta), plan.theta)?;
    generate_well_prepared(&plan.density, n, &schedule, plan.gravity, plan.seed)
}

fn run_entry(
    plan: &SweepPlan,
    n: usize,
    phi: f64,
    model: ModelKind,
    track: &MacroTrack,
    markers: &Markers,
    tl: &Timeline,
) -> (Vec<Record>, Option<Failure>) {
    let fail = |e: Error| Failure { n, phi, model, message: e.to_string() };
    let cfg = match configuration(plan, n, phi) {
        Ok(c) => c,
        Err(e) => return (Vec::new(), Some(fail(e))),
    };
    let (trace, err) = run_micro(plan, &cfg, model, track, tl);
    match records_for(plan, phi, &trace, track, markers, &tl.times) {
        Ok(r) => (r, err.map(fail)),
        Err(e) => (Vec::new(), Some(fail(e))),
    }
}

fn continuum_point(phi: f64, t: f64, track: &MacroTrack, markers: &Markers, fine: usize, coarse: usize) -> Result<ContinuumPoint> {
    let last = |k| track.markers(k).and_then(|m| m.last()).expect("system evolved");
    let (tau, rho, eff) = (last(SystemKind::Tau), last(SystemKind::Rho), last(SystemKind::RhoEff));
    let w2 = |n: usize, a: &[V3], b: &[V3]| -> Result<f64> {
        Ok(wasserstein_p(&markers.measure(n, a, V3::zeros())?, &markers.measure(n, b, V3::zeros())?, 2.0)?.0)
    };
    Ok(ContinuumPoint {
        phi,
        t,
        w2_eff_tau: w2(fine, eff, tau)?,
        w2_eff_rho: w2(fine, eff, rho)?,
        coarse_eff_tau: w2(coarse, eff, tau)?,
        coarse_eff_rho: w2(coarse, eff, rho)?,
        bar: markers.set(fine).3,
    })
}

/// One N at one φ: the particle run against τ and ρ_eff.
pub fn run_comparison(plan: &SweepPlan, n: usize, phi: Option<f64>) -> Result<(Vec<Record>, Option<Failure>)> {
    let single = SweepPlan {
        n_values: vec![n],
        phi_values: phi.into_iter().collect(),
        phi0: plan.phi0.or(Some(plan.schedule()?.phi0)),
        ..plan.clone()
    };
    single.validate()?;
    let out = run_sweep(&single)?;
    Ok((out.records, out.failures.into_iter().next()))
}

/// τ, ρ and ρ_eff at every φ of the plan, compared at `t_end` on the markers of the
/// largest and smallest N. No particles are run.
pub fn run_continuum(plan: &SweepPlan) -> Result<Vec<ContinuumPoint>> {
    plan.validate()?;
    if plan.phi_values.is_empty() {
        return Err(Error::InvalidInput("continuum runs need fixed volume fractions".into()));
    }
    let tl = Timeline::new(plan)?;
    let grid = plan.grid.spec(&plan.density)?;
    let rho0 = plan.density.sample(&grid)?.normalized()?;
    let markers = Markers::new(plan)?;
    let fine = *plan.n_values.last().expect("validated");
    plan.phi_values
        .iter()
        .map(|&phi| {
            let track = run_macro(plan, &rho0, phi, &SystemKind::ALL, &markers.points, &tl, false)?;
            continuum_point(phi, plan.t_end, &track, &markers, fine, plan.n_values[0])
        })
        .collect()
}

/// Runs every entry of the plan and fits the rates.
pub fn run_sweep(plan: &SweepPlan) -> Result<SweepOutcome> {
    plan.validate()?;
    let tl = Timeline::new(plan)?;
    let grid = plan.grid.spec(&plan.density)?;
    let rho0 = plan.density.sample(&grid)?.normalized()?;
    let markers = Markers::new(plan)?;
    let entries = plan.entries()?;
    let continuum = plan.effective && plan.phi_values.len() >= 2;
    let baseline = plan.model != ModelKind::Mf0 && plan.phi_values.len() >= 2;

    let mut phis: Vec<f64> = Vec::new();
    for &(_, p) in &entries {
        if !phis.contains(&p) {
            phis.push(p);
        }
    }
    let mut systems = vec![SystemKind::Tau];
    if continuum {
        systems.push(SystemKind::Rho);
    }
    if plan.effective {
        systems.push(SystemKind::RhoEff);
    }

    let mut out = SweepOutcome::default();
    let mut rows: Vec<(usize, usize, Vec<Record>)> = Vec::new();
    for (pi, &phi) in phis.iter().enumerate() {
        log::info!("continuum run at phi = {phi}");
        let track = run_macro(plan, &rho0, phi, &systems, &markers.points, &tl, plan.model == ModelKind::Mf1c)?;
        if continuum {
            let fine = *plan.n_values.last().expect("validated");
            out.continuum.push(continuum_point(phi, plan.t_end, &track, &markers, fine, plan.n_values[0])?);
        }
        let mut jobs: Vec<(usize, ModelKind)> =
            entries.iter().filter(|e| e.1 == phi).map(|e| (e.0, plan.model)).collect();
        if baseline && pi == 0 {
            jobs.extend(plan.n_values.iter().map(|&n| (n, ModelKind::Mf0)));
        }
        let done: Vec<(usize, ModelKind, Vec<Record>, Option<Failure>)> = jobs
            .par_iter()
            .map(|&(n, model)| {
                log::info!("particle run N = {n}, phi = {phi}, model {}", model.name());
                let (r, f) = run_entry(plan, n, phi, model, &track, &markers, &tl);
                (n, model, r, f)
            })
            .collect();
        for (n, model, r, f) in done {
            out.failures.extend(f);
            if model == plan.model {
                rows.push((n, pi, r));
            } else {
                out.baseline.extend(r);
            }
        }
    }
    rows.sort_by_key(|r| (r.0, r.1));
    out.records = rows.into_iter().flat_map(|r| r.2).collect();
    out.baseline.sort_by_key(|r| r.n);
    fit_rates(plan, &mut out);
    Ok(out)
}

fn fit_rates(plan: &SweepPlan, out: &mut SweepOutcome) {
    let push = |out: &mut SweepOutcome, r: Result<RateFit>, what: &str| match r {
        Ok(f) => out.fits.push(f),
        Err(e) => out.notes.push(format!("{what}: {e}")),
    };
    let at = |rs: &[Record], n: usize, phi: f64, t: f64| -> Option<Record> {
        rs.iter().find(|r| r.n == n && r.phi == phi && (r.t - t).abs() < 1e-12).copied()
    };
    let first_phi = out.records.first().map(|r| r.phi);
    let floors: Vec<(f64, f64)> = plan
        .n_values
        .iter()
        .filter_map(|&n| {
            let phi = if plan.phi_values.is_empty() { plan.schedule().ok()?.phi(n) } else { first_phi? };
            at(&out.records, n, phi, 0.0).map(|r| (n as f64, r.floor_w2))
        })
        .collect();
    let (x, y) = floors.into_iter().unzip();
    push(out, RateFit::new("floor_w2_vs_N", x, y), "floor fit");

    if !plan.phi_values.is_empty() && plan.model != ModelKind::Mf0 {
        for &n in &plan.n_values {
            let base = at(&out.baseline, n, plan.phi_values[0], plan.t_end).map(|r| r.w2_tau);
            let mut xs = Vec::new();
            let (mut excess, mut ratio) = (Vec::new(), Vec::new());
            for &phi in &plan.phi_values {
                if let Some(r) = at(&out.records, n, phi, plan.t_end) {
                    xs.push(phi);
                    excess.push(base.map_or(f64::NAN, |b| r.w2_tau - b));
                    ratio.push(r.eta_eff / r.eta_tau);
                }
            }
            if plan.phi_values.len() >= 2 {
                push(out, RateFit::new(format!("w2_tau_excess_vs_phi_N{n}"), xs.clone(), excess), "excess fit");
                if plan.effective {
                    push(out, RateFit::new(format!("eta_ratio_vs_phi_N{n}"), xs, ratio), "ratio fit");
                }
            }
        }
    }
    if !out.continuum.is_empty() {
        let x: Vec<f64> = out.continuum.iter().map(|c| c.phi).collect();
        let a = out.continuum.iter().map(|c| c.w2_eff_tau).collect();
        let b = out.continuum.iter().map(|c| c.w2_eff_rho).collect();
        push(out, RateFit::new("w2_eff_tau_vs_phi", x.clone(), a), "continuum fit");
        push(out, RateFit::new("w2_eff_rho_vs_phi", x, b), "continuum fit");
    }
}

impl SweepOutcome {
    /// Writes `records.csv`, `fits.json` and, when present, `continuum.csv` and `failures.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_records(&self.records, &dir.join("records.csv"))?;
        let fits = serde_json::to_string_pretty(&self.fits).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(dir.join("fits.json"), fits + "\n")?;
        if !self.continuum.is_empty() {
            let mut w = csv::Writer::from_path(dir.join("continuum.csv")).map_err(csv_err)?;
            for c in &self.continuum {
                w.serialize(c).map_err(csv_err)?;
            }
            w.flush()?;
        }
        if !self.failures.is_empty() {
            let f = serde_json::to_string_pretty(&self.failures).map_err(|e| Error::Parse(e.to_string()))?;
            std::fs::write(dir.join("failures.json"), f + "\n")?;
        }
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// `records.csv` with the header `N,phi,t,eta_tau,...,vel_err_q2`.
pub fn write_records(records: &[Record], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    if records.is_empty() {
        w.write_record(RECORD_COLUMNS).map_err(csv_err)?;
    }
    for r in records {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<Record>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|x| x.map_err(|e| Error::Parse(e.to_string()))).collect()
}

pub const RECORD_COLUMNS: [&str; 14] = [
    "N", "phi", "t", "eta_tau", "eta_eff", "w1_tau", "w2_tau", "w1_eff", "w2_eff", "dmin", "alpha2", "alpha3",
    "floor_w2", "vel_err_q2",
];
