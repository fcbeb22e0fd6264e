use nalgebra::Vector3;
use proptest::prelude::*;
use sedlab::density::AnalyticDensity;
use sedlab::lab::*;
use sedlab::Error;

fn ball(radius: f64) -> AnalyticDensity {
    AnalyticDensity::UniformBall { center: Vector3::new(0.3, -0.2, 0.1), radius }
}

proptest! {
    #[test]
    fn rate_fit_recovers_power_laws(slope in -3.0f64..3.0, scale in 0.01f64..100.0, x0 in 0.1f64..10.0) {
        let x: Vec<f64> = (0..5).map(|k| x0 * 2f64.powi(k)).collect();
        let y: Vec<f64> = x.iter().map(|v| scale * v.powf(slope)).collect();
        let f = RateFit::new("p", x, y).unwrap();
        prop_assert!((f.slope - slope).abs() < 1e-10);
        prop_assert!((f.intercept.exp() - scale).abs() < 1e-9 * scale);
        prop_assert!(f.slope_stderr < 1e-8);
        prop_assert!((f.predict(3.7) / (scale * 3.7f64.powf(slope)) - 1.0).abs() < 1e-9);
    }
}

#[test]
fn rate_fit_against_hand_least_squares() {
    // ln x = 0, 1, 2; ln y = 0, 1, 3: slope 3/2, intercept −1/6
    let e = std::f64::consts::E;
    let f = RateFit::new("h", vec![1.0, e, e * e], vec![1.0, e, e.powi(3)]).unwrap();
    assert!((f.slope - 1.5).abs() < 1e-12);
    assert!((f.intercept + 1.0 / 6.0).abs() < 1e-12);
    // residuals 1/6, −1/3, 1/6 ⇒ sse 1/6, sxx 2, stderr √(1/12)
    assert!((f.slope_stderr - (1.0f64 / 12.0).sqrt()).abs() < 1e-12);
    assert!((f.r_squared - (1.0 - (1.0 / 6.0) / (14.0 / 3.0))).abs() < 1e-12);
}

#[test]
fn rate_fit_rejects_bad_data() {
    assert!(matches!(RateFit::new("a", vec![1.0], vec![1.0]), Err(Error::InvalidInput(_))));
    assert!(matches!(RateFit::new("a", vec![1.0, 2.0], vec![1.0, 0.0]), Err(Error::InvalidInput(_))));
    assert!(matches!(RateFit::new("a", vec![2.0, 2.0], vec![1.0, 3.0]), Err(Error::InvalidInput(_))));
    assert!(matches!(RateFit::new("a", vec![1.0, 2.0], vec![1.0]), Err(Error::InvalidInput(_))));
}

#[test]
fn growth_and_decay_rates() {
    let t = [0.0, 0.5, 1.0];
    assert!((growth_rate(&t, &[1.0, 1.0, 3f64.exp()]) - 3.0).abs() < 1e-12);
    assert_eq!(growth_rate(&t, &[2.0, 1.0, 1.5]), 0.0);
    assert!((decay_rate(&t, &[1.0, (-1.0f64).exp(), (-1.0f64).exp()]) - 2.0).abs() < 1e-12);
}

#[test]
fn stokeslet_kernel_condition() {
    let r = check_kernel_condition(KernelChoice::Stokeslet, 1.0, 10_000, 3);
    assert!(r.uniform, "{r:?}");
    assert!(r.slope_near.abs() < SLOPE_TOLERANCE && r.slope_far.abs() < SLOPE_TOLERANCE);
    // |Φg| ≥ 1/(8π|x|) on its own; the sum stays well under 1/|x|
    assert!(r.constant > 1.0 / (8.0 * std::f64::consts::PI) && r.constant < 1.0);

    let r = check_kernel_condition(KernelChoice::Stokeslet, 0.5, 10_000, 3);
    assert!(!r.holds_near && r.holds_far && !r.uniform);
    assert!((r.slope_near + 0.5).abs() < SLOPE_TOLERANCE);

    let r = check_kernel_condition(KernelChoice::Stokeslet, 2.0, 10_000, 3);
    assert!(r.holds_near && !r.holds_far && !r.uniform);
    assert!(r.divergence_free);
}

#[test]
fn stresslet_kernel_condition() {
    let r = check_kernel_condition(KernelChoice::Stresslet, 2.0, 10_000, 4);
    assert!(r.uniform, "{r:?}");
    let r = check_kernel_condition(KernelChoice::Stresslet, 1.0, 10_000, 4);
    assert!(!r.holds_near && r.holds_far);
}

#[test]
fn kernel_check_is_seeded() {
    let a = check_kernel_condition(KernelChoice::Stresslet, 2.0, 500, 9);
    let b = check_kernel_condition(KernelChoice::Stresslet, 2.0, 500, 9);
    assert_eq!(a, b);
}

#[test]
fn config_defaults_and_round_trip() {
    let empty = LabConfig::from_toml("").unwrap();
    assert_eq!(empty, LabConfig::default());
    assert_eq!(empty.plan().unwrap(), SweepPlan::default());
    assert_eq!(empty.output.dir, std::path::PathBuf::from("results"));

    let text = r#"
        [setup]
        density = { kind = "uniform_ball", center = [0.0, 0.0, 1.0], radius = 2.0 }
        gravity = [0.0, 0.0, -40.0]
        model = "mf1"
        theta = 0.25
        phi0 = 0.3
        seed = 7

        [grid]
        n = 32
        side = 8.0
        dt = 0.05

        [sweep]
        n_values = [64, 128]
        phi_values = [0.1, 0.2]
        t_end = 1.0
        outputs = 4
        micro_dt = 0.01

        [output]
        dir = "out"
    "#;
    let cfg = LabConfig::from_toml(text).unwrap();
    let plan = cfg.plan().unwrap();
    assert_eq!(plan.model, ModelKind::Mf1);
    assert_eq!(plan.n_values, vec![64, 128]);
    assert_eq!(plan.grid.n, 32);
    assert_eq!(plan.grid.tolerance, GridConfig::default().tolerance);
    assert_eq!(plan.gravity, Vector3::new(0.0, 0.0, -40.0));
    assert_eq!(plan.micro_dt, Some(0.01));
    assert_eq!(plan.seed, 7);
    assert_eq!(LabConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
}

#[test]
fn config_rejects_unknown_keys() {
    assert!(matches!(LabConfig::from_toml("[sweep]\nn_value = [1]"), Err(Error::Parse(_))));
    assert!(matches!(LabConfig::from_toml("[setup]\nmodel = \"MF2\""), Err(Error::Parse(_))));
}

#[test]
fn plan_validation() {
    let bad = |p: SweepPlan| matches!(p.validate(), Err(Error::InvalidInput(_)));
    let ok = SweepPlan::default();
    assert!(ok.validate().is_ok());
    assert!(bad(SweepPlan { n_values: vec![], ..ok.clone() }));
    assert!(bad(SweepPlan { n_values: vec![512, 512], ..ok.clone() }));
    assert!(bad(SweepPlan { n_values: vec![1], ..ok.clone() }));
    assert!(bad(SweepPlan { theta: 1.0, ..ok.clone() }));
    assert!(bad(SweepPlan { t_end: 0.0, ..ok.clone() }));
    assert!(bad(SweepPlan { outputs: 0, ..ok.clone() }));
    assert!(bad(SweepPlan { phi_values: vec![0.1, 1.5], ..ok.clone() }));
    assert!(bad(SweepPlan { micro_dt: Some(-1.0), ..ok.clone() }));
    assert!(bad(SweepPlan { marker_factor: 0.0, ..ok.clone() }));
    assert!(bad(SweepPlan { gravity: Vector3::zeros(), ..ok.clone() }));
    assert!(bad(SweepPlan { grid: GridConfig { n: 48, ..GridConfig::default() }, ..ok.clone() }));
}

#[test]
fn schedule_entries_and_times() {
    let p = SweepPlan { n_values: vec![512, 2048], ..SweepPlan::default() };
    let e = p.entries().unwrap();
    assert_eq!(e.len(), 2);
    // φ_N ∝ N^{-1/2}
    assert!((e[0].1 / e[1].1 - 2.0).abs() < 1e-12);
    // the diluteness rule at the largest N
    assert!((e[1].1 * (2048f64).ln() - sedlab::configuration::DEFAULT_DILUTENESS).abs() < 1e-12);
    let p = SweepPlan { phi_values: vec![0.1, 0.2], ..p };
    assert_eq!(p.entries().unwrap(), vec![(512, 0.1), (512, 0.2), (2048, 0.1), (2048, 0.2)]);
    assert_eq!(SweepPlan { t_end: 1.0, outputs: 4, ..p }.output_times(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
}

#[test]
fn lattice_measure_moments() {
    let a = 1.5;
    let d = ball(a);
    for h in [0.2, 0.1] {
        let m = lattice_measure(&d, h).unwrap();
        assert!((m.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((m.displacement_bound() - h * 3f64.sqrt() / 2.0).abs() < 1e-15);
        let c = m.mean();
        assert!((c - Vector3::new(0.3, -0.2, 0.1)).norm() < h);
        // second moment of the uniform ball about its center is 3a²/5
        let m2: f64 = m.points().iter().zip(m.weights()).map(|(x, w)| w * (x - c).norm_squared()).sum();
        assert!((m2 - 0.6 * a * a).abs() < 2.0 * h * a, "h = {h}: {m2}");
    }
    assert!(matches!(lattice_measure(&d, 0.0), Err(Error::InvalidInput(_))));
}

#[test]
fn records_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.csv");
    write_records(&[], &path).unwrap();
    let header = std::fs::read_to_string(&path).unwrap();
    assert_eq!(header.trim(), RECORD_COLUMNS.join(","));
    assert!(read_records(&path).unwrap().is_empty());
}

fn small_plan() -> SweepPlan {
    SweepPlan {
        n_values: vec![64, 128],
        t_end: 0.2,
        outputs: 2,
        density: ball(2.0),
        gravity: -Vector3::z() * 10.0,
        grid: GridConfig { n: 32, dt: 0.05, ..GridConfig::default() },
        ..SweepPlan::default()
    }
}

#[test]
fn sweep_output_is_deterministic() {
    let plan = small_plan();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_sweep(&plan).unwrap().write(a.path()).unwrap();
    run_sweep(&plan).unwrap().write(b.path()).unwrap();
    for f in ["records.csv", "fits.json"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, std::fs::read(b.path().join(f)).unwrap(), "{f} differs");
    }
    let back = read_records(&a.path().join("records.csv")).unwrap();
    assert_eq!(back.len(), 2 * 3);
}

#[test]
fn smoke_sweep_at_512() {
    let plan = SweepPlan {
        n_values: vec![512],
        t_end: 0.5,
        grid: GridConfig { n: 32, ..GridConfig::default() },
        ..SweepPlan::default()
    };
    let out = run_sweep(&plan).unwrap();
    assert!(out.failures.is_empty(), "{:?}", out.failures);
    assert_eq!(out.records.len(), plan.outputs + 1);
    for w in out.records.windows(2) {
        assert!(w[1].t > w[0].t);
    }
    for r in &out.records {
        let vals = [r.eta_tau, r.eta_eff, r.w1_tau, r.w2_tau, r.w1_eff, r.w2_eff, r.dmin, r.alpha2, r.alpha3, r.floor_w2];
        assert!(vals.iter().all(|v| v.is_finite() && *v > 0.0), "{r:?}");
        assert!(r.w1_tau <= r.w2_tau * (1.0 + 1e-9) && r.w2_tau <= r.eta_tau * (1.0 + 1e-9));
        assert_eq!(r.floor_w2, out.records[0].w2_tau);
    }
    // a single N gives no fit, and says why
    assert!(out.fits.is_empty());
    assert!(!out.notes.is_empty());
}

#[test]
fn comparison_matches_the_sweep_entry() {
    let plan = small_plan();
    let (single, failure) = run_comparison(&plan, 128, None).unwrap();
    assert!(failure.is_none());
    let full = run_sweep(&plan).unwrap();
    let from_sweep: Vec<Record> = full.records.into_iter().filter(|r| r.n == 128).collect();
    assert_eq!(single.len(), from_sweep.len());
    for (a, b) in single.iter().zip(&from_sweep) {
        assert_eq!(a.phi, b.phi);
        assert_eq!(a.dmin, b.dmin);
        assert!((a.eta_tau - b.eta_tau).abs() < 1e-12);
    }
}
