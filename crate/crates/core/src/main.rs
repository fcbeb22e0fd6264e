use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::Vector3;

use sedlab::configuration::{generate_well_prepared, PhiSchedule};
use sedlab::continuum::{evolve_system_with, EvolveOptions, SuspensionParams, SystemKind};
use sedlab::lab::{
    check_kernel_condition, run_comparison, run_sweep, write_records, KernelChoice, LabConfig, ModelKind,
    SweepOutcome,
};
use sedlab::microdynamics::{default_time_step, integrate_with, VelocityModel};
use sedlab::wasserstein::{wasserstein, DiscreteMeasure};
use sedlab::{Error, Result};

#[derive(Parser)]
#[command(name = "sedlab", version, about = "Sedimentation mean-field laboratory")]
struct Cli {
    /// TOML file with [setup], [grid], [sweep] and [output] sections; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides [output].dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Checks |K(x)| + |x||∇K(x)| ≤ C/|x|^α on random samples and prints the report as JSON.
    KernelsCheck {
        #[arg(long, default_value = "stokeslet")]
        kernel: KernelChoice,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// Integrates one particle cloud and writes trace.csv.
    SimulateMicro {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        phi: Option<f64>,
        #[arg(long)]
        model: Option<ModelKind>,
        #[arg(long)]
        dt: Option<f64>,
        /// Record every this many steps.
        #[arg(long, default_value_t = 1)]
        stride: usize,
    },
    /// Evolves one continuum system and writes its final density and velocity.
    SimulateMacro {
        #[arg(long, default_value = "tau")]
        system: SystemKind,
        #[arg(long, default_value_t = 0.02)]
        phi: f64,
    },
    /// One N against the continuum systems; writes records.csv.
    Compare {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        phi: Option<f64>,
    },
    /// Every N of the sweep; writes records.csv and fits.json.
    Sweep,
    /// Distance between two measures given as CSV files of `x,y,z[,w]` rows.
    Wdist {
        a: PathBuf,
        b: PathBuf,
        /// Exponent, or `inf`.
        #[arg(long, default_value = "2")]
        p: String,
    },
}

fn read_measure(path: &Path) -> Result<DiscreteMeasure> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let (mut pts, mut w) = (Vec::new(), Vec::new());
    for (line, row) in r.records().enumerate() {
        let row = row.map_err(|e| Error::Parse(e.to_string()))?;
        let vals: Vec<f64> = match row.iter().map(str::parse).collect() {
            Ok(v) => v,
            // a header line
            Err(_) if line == 0 => continue,
            Err(e) => return Err(Error::Parse(format!("{}:{}: {e}", path.display(), line + 1))),
        };
        match vals.len() {
            3 | 4 => {
                pts.push(Vector3::new(vals[0], vals[1], vals[2]));
                w.push(vals.get(3).copied().unwrap_or(1.0));
            }
            k => return Err(Error::Parse(format!("{}:{}: expected 3 or 4 columns, got {k}", path.display(), line + 1))),
        }
    }
    DiscreteMeasure::normalized(pts, w)
}

fn write_outcome(out: &SweepOutcome, dir: &Path) -> Result<ExitCode> {
    out.write(dir)?;
    for f in &out.fits {
        println!("{}: slope {:.4} ± {:.4}, r² {:.4}", f.name, f.slope, f.slope_stderr, f.r_squared);
    }
    for n in &out.notes {
        eprintln!("note: {n}");
    }
    for f in &out.failures {
        eprintln!("N = {} at phi = {}: {}", f.n, f.phi, f.message);
    }
    Ok(if out.failures.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = match &cli.config {
        Some(p) => LabConfig::load(p)?,
        None => LabConfig::default(),
    };
    let dir = cli.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    let plan = cfg.plan()?;
    match cli.command {
        Command::KernelsCheck { kernel, alpha, samples } => {
            let report = check_kernel_condition(kernel, alpha, samples, plan.seed);
            println!("{}", serde_json::to_string_pretty(&report).map_err(|e| Error::Parse(e.to_string()))?);
            Ok(ExitCode::SUCCESS)
        }
        Command::SimulateMicro { n, phi, model, dt, stride } => {
            let schedule = match phi {
                Some(p) => PhiSchedule::new(p * (n as f64).powf(plan.theta), plan.theta)?,
                None => plan.schedule()?,
            };
            let c = generate_well_prepared(&plan.density, n, &schedule, plan.gravity, plan.seed)?;
            let vm = match model.unwrap_or(plan.model) {
                ModelKind::Mf0 => VelocityModel::Mf0,
                ModelKind::Mf1 => VelocityModel::Mf1,
                ModelKind::Mf1c => {
                    return Err(Error::InvalidInput("MF1C needs a continuum field; use compare".into()));
                }
            };
            let dt = match dt.or(plan.micro_dt) {
                Some(d) => d,
                None => default_time_step(&c, &vm)?,
            };
            let trace = integrate_with(&c, vm, plan.t_end, dt, stride)?;
            std::fs::create_dir_all(&dir)?;
            trace.write_csv(std::fs::File::create(dir.join("trace.csv"))?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::SimulateMacro { system, phi } => {
            let grid = plan.grid.spec(&plan.density)?;
            let rho0 = plan.density.sample(&grid)?.normalized()?;
            let params = SuspensionParams::new(plan.gravity, phi, Vector3::zeros())?;
            let opts = EvolveOptions { tolerance: plan.grid.tolerance, recenter: true, ..Default::default() };
            let snaps = evolve_system_with(system, &rho0, &params, plan.t_end, plan.grid.dt, opts)?;
            let last = snaps.last().expect("the initial state is always emitted");
            std::fs::create_dir_all(&dir)?;
            last.density.write_raw(&dir.join(format!("{}_density.bin", system.name())))?;
            last.velocity.write_raw(&dir.join(format!("{}_velocity.bin", system.name())))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { n, phi } => {
            let (records, failure) = run_comparison(&plan, n, phi)?;
            std::fs::create_dir_all(&dir)?;
            write_records(&records, &dir.join("records.csv"))?;
            match failure {
                Some(f) => {
                    eprintln!("N = {n}: {}", f.message);
                    Ok(ExitCode::from(2))
                }
                None => Ok(ExitCode::SUCCESS),
            }
        }
        Command::Sweep => write_outcome(&run_sweep(&plan)?, &dir),
        Command::Wdist { a, b, p } => {
            let p: f64 = match p.as_str() {
                "inf" | "∞" => f64::INFINITY,
                s => s.parse().map_err(|_| Error::Parse(format!("bad exponent {s:?}")))?,
            };
            let (d, _) = wasserstein(&read_measure(&a)?, &read_measure(&b)?, p)?;
            println!("{d}");
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
