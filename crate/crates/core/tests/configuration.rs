mod support;

use approx::assert_relative_eq;
use nalgebra::Vector3;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use sedlab::configuration::*;
use sedlab::continuum::GridSpec;
use sedlab::density::{AnalyticDensity, Density};
use sedlab::kernels::PhysicalSetup;
use sedlab::Error;

fn setup(n: usize, r: f64) -> PhysicalSetup {
    PhysicalSetup::new(-Vector3::z(), n, r).unwrap()
}

fn cfg(points: &[[f64; 3]], r: f64) -> ParticleConfiguration {
    let x = points.iter().map(|p| Vector3::new(p[0], p[1], p[2])).collect();
    ParticleConfiguration::new(x, setup(points.len(), r), 0.0).unwrap()
}

fn schedule() -> PhiSchedule {
    PhiSchedule::new(0.1, 0.5).unwrap()
}

fn blob_cloud(n: usize, seed: u64) -> ParticleConfiguration {
    generate_well_prepared(&AnalyticDensity::unit_blob(), n, &schedule(), -Vector3::z(), seed).unwrap()
}

/// Independent double loop over all ordered pairs.
fn naive_stats(c: &ParticleConfiguration, q: f64) -> (f64, [f64; 3], f64) {
    let x = c.positions();
    let n = x.len() as f64;
    let r3 = c.setup().radius.powi(3);
    let (mut dmin, mut alpha, mut lam) = (f64::INFINITY, [0.0f64; 3], 0.0f64);
    for i in 0..x.len() {
        let mut s = [0.0; 3];
        let mut l = 0.0;
        for j in 0..x.len() {
            if i != j {
                let d = (x[i] - x[j]).norm();
                dmin = dmin.min(d);
                for k in 0..3 {
                    s[k] += d.powi(-(k as i32 + 1));
                }
                l += r3 / d.powf(2.0 * q);
            }
        }
        for k in 0..3 {
            alpha[k] = alpha[k].max(s[k] / n);
        }
        lam = lam.max(l);
    }
    (dmin, alpha, lam)
}

#[test]
fn single_pair_stats() {
    let s = compute_stats(&cfg(&[[0.0; 3], [1.0, 0.0, 0.0]], 0.1), 1.0).unwrap();
    assert_eq!(s.d_min, 1.0);
    assert_eq!(s.alpha, [0.5; 3]);
    assert_relative_eq!(s.lambda_q, 1e-3, max_relative = 1e-14);
    assert_eq!(s.c0, 0.1f64.powi(3));
}

#[test]
fn collinear_triple_stats() {
    let s = compute_stats(&cfg(&[[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]], 0.1), 1.0).unwrap();
    assert_eq!(s.d_min, 1.0);
    assert_relative_eq!(s.alpha[0], 2.0 / 3.0, max_relative = 1e-15);
    assert_relative_eq!(s.alpha[1], 2.0 / 3.0, max_relative = 1e-15);
    assert_relative_eq!(s.alpha[2], 2.0 / 3.0, max_relative = 1e-15);
}

#[test]
fn stats_match_naive_double_loop() {
    let c = blob_cloud(300, 3);
    for q in [0.5, 1.0, 1.5] {
        let s = compute_stats(&c, q).unwrap();
        let (d, a, l) = naive_stats(&c, q);
        assert_eq!(s.d_min, d);
        for k in 0..3 {
            assert_relative_eq!(s.alpha[k], a[k], max_relative = 1e-12);
        }
        assert_relative_eq!(s.lambda_q, l, max_relative = 1e-12);
        assert_eq!(s.c0, c.setup().radius.powi(3) / d.powi(3));
    }
}

#[test]
fn stats_reject_degenerate_input() {
    let one = cfg(&[[0.0; 3]], 0.1);
    assert!(matches!(compute_stats(&one, 1.0), Err(Error::InvalidInput(_))));
    let x = vec![Vector3::zeros(), Vector3::x(), Vector3::zeros()];
    assert!(matches!(ParticleConfiguration::new(x, setup(3, 0.1), 0.0), Err(Error::Coincident(0, 2))));
}

#[test]
fn overlapping_balls_are_rejected() {
    let x = vec![Vector3::zeros(), Vector3::x() * 0.15];
    assert!(ParticleConfiguration::new(x.clone(), setup(2, 0.1), 0.0).is_err());
    assert!(ParticleConfiguration::new(x, setup(2, 0.07), 0.0).is_ok());
    let wrong_count = vec![Vector3::zeros()];
    assert!(ParticleConfiguration::new(wrong_count, setup(2, 0.01), 0.0).is_err());
}

#[test]
fn generator_unit_cube_eight_points() {
    let cube = AnalyticDensity::UniformBox { lo: Vector3::zeros(), hi: Vector3::repeat(1.0) };
    let c = generate_well_prepared(&cube, 8, &schedule(), -Vector3::z(), 11).unwrap();
    assert_eq!(c.len(), 8);
    let d = c.min_distance();
    assert!((0.2..=0.5).contains(&d), "d_min = {d}");
    for x in c.positions() {
        assert!(cube.value(x) > 0.0);
    }
}

#[test]
fn generator_single_point_is_the_support_center() {
    let blob = AnalyticDensity::Blob { center: Vector3::new(0.5, -1.0, 2.0), radius: 0.7 };
    let c = generate_well_prepared(&blob, 1, &schedule(), -Vector3::z(), 0).unwrap();
    assert_eq!(c.positions(), &[Vector3::new(0.5, -1.0, 2.0)]);
}

#[test]
fn generator_is_deterministic_in_the_seed() {
    let a = blob_cloud(500, 42);
    let b = blob_cloud(500, 42);
    let c = blob_cloud(500, 43);
    assert_eq!(a, b);
    assert_ne!(a.positions(), c.positions());
}

#[test]
fn generator_respects_support_separation_and_radius() {
    let blob = AnalyticDensity::unit_blob();
    for n in [64, 512, 2000] {
        let c = blob_cloud(n, n as u64);
        let h = lattice_spacing(&blob, n).unwrap();
        let d = c.min_distance();
        assert!(d >= 0.5 * h - 1e-12 && d <= h * (1.0 + 1e-12), "n={n} d={d} h={h}");
        assert!(c.positions().iter().all(|x| x.norm() < 1.0));
        assert_relative_eq!(c.setup().volume_fraction(), schedule().phi(n), max_relative = 1e-12);
        // (H1): d_min N^{1/3} stays in a fixed band
        let sep = d * (n as f64).cbrt();
        assert!(sep > 0.2 && sep < 2.0, "n={n} separation {sep}");
    }
}

#[test]
fn generated_clouds_follow_the_density() {
    let c = blob_cloud(4000, 5);
    let blob = AnalyticDensity::unit_blob();
    // fraction inside radius 1/2 vs the exact blob mass there
    let inside = c.positions().iter().filter(|x| x.norm() < 0.5).count() as f64 / 4000.0;
    let exact = {
        let n = 4000;
        let dr = 0.5 / n as f64;
        (0..n)
            .map(|i| {
                let r = (i as f64 + 0.5) * dr;
                4.0 * std::f64::consts::PI * r * r * blob.value(&Vector3::new(r, 0.0, 0.0)) * dr
            })
            .sum::<f64>()
    };
    assert!((inside - exact).abs() < 0.02, "{inside} vs {exact}");
}

#[test]
fn alpha_bounds_hold_over_fifty_clouds() {
    let c_bound = 20.0;
    for t in 0..50u64 {
        let n = [100usize, 250, 600, 1200, 2500][t as usize % 5];
        let c = blob_cloud(n, 1000 + t);
        let s = compute_stats(&c, 1.0).unwrap();
        let nf = n as f64;
        let d = s.d_min;
        assert!(s.alpha[0] <= c_bound / (nf.cbrt() * d), "alpha1 at n={n}");
        assert!(s.alpha[1] <= c_bound / (nf.powf(2.0 / 3.0) * d * d), "alpha2 at n={n}");
        assert!(s.alpha[2] <= c_bound * nf.ln() / (nf * d.powi(3)), "alpha3 at n={n}");
    }
}

#[test]
fn schedule_diluteness() {
    let s = PhiSchedule::for_largest(4096, 0.5, DEFAULT_DILUTENESS).unwrap();
    assert_relative_eq!(s.phi(4096) * 4096f64.ln(), 0.2, max_relative = 1e-12);
    assert!(s.phi(512) > s.phi(4096));
    assert!(PhiSchedule::new(0.1, 1.0).is_err());
    assert!(PhiSchedule::new(0.1, 0.0).is_err());
    assert!(PhiSchedule::new(-0.1, 0.5).is_err());
}

#[test]
fn text_round_trip_is_exact() {
    let c = blob_cloud(50, 9);
    let mut buf = Vec::new();
    c.write_text(&mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    let head: Vec<&str> = text.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(head.len(), 5);
    assert_eq!(head[0], "50");
    assert_eq!(text.lines().count(), 51);
    let back = ParticleConfiguration::read_text(buf.as_slice()).unwrap();
    assert_eq!(back, c);
    assert!(ParticleConfiguration::read_text("2 0.1 0 0 -1\n0 0 0\n".as_bytes()).is_err());
    assert!(ParticleConfiguration::read_text("x".as_bytes()).is_err());
}

#[test]
fn mollified_single_particle() {
    let grid = GridSpec::cube(Vector3::zeros(), 2.0, 64).unwrap();
    let c = cfg(&[[0.0; 3]], 0.01);
    let width = 0.5;
    let rho = mollified_density_with_width(&c, &grid, width).unwrap();
    assert_relative_eq!(rho.total_mass(), 1.0, max_relative = 1e-12);
    // the peak cell averages the bump over a cell next to its center
    let peak = bump_peak(width);
    assert_relative_eq!(rho.max_value(), peak, max_relative = 0.05);
    assert!(rho.max_value() <= peak);
    assert!(mollified_density(&c, &grid).is_err());
}

#[test]
fn mollified_cloud_has_unit_mass_and_local_support() {
    let c = blob_cloud(1000, 2);
    let grid = GridSpec::cube(Vector3::zeros(), 2.6, 64).unwrap();
    let rho = mollified_density(&c, &grid).unwrap();
    assert!((rho.total_mass() - 1.0).abs() <= 1e-3);
    let d = c.min_distance();
    let diag = grid.cell * 3f64.sqrt() / 2.0;
    for (idx, &v) in rho.values().iter().enumerate() {
        if v > 0.0 {
            let x = grid.cell_center_of(idx);
            let near = c.positions().iter().map(|p| (p - x).norm()).fold(f64::INFINITY, f64::min);
            assert!(near <= d + diag, "mass at distance {near} > d_min {d}");
        }
    }
    // sup norm stays of the order of the blob maximum
    assert!(rho.max_value() < 10.0 * AnalyticDensity::unit_blob().max_value());
}

#[test]
fn mollifier_requires_covering_grid() {
    let c = blob_cloud(200, 1);
    let small = GridSpec::cube(Vector3::zeros(), 1.5, 16).unwrap();
    assert!(matches!(mollified_density(&c, &small), Err(Error::OutsideDomain(_))));
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cloud.txt");
    let c = blob_cloud(20, 4);
    c.save(&path).unwrap();
    assert_eq!(ParticleConfiguration::load(&path).unwrap(), c);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stats_are_permutation_invariant(seed in 0u64..1000, n in 2usize..60) {
        let c = blob_cloud(n, seed);
        let mut x = c.positions().to_vec();
        x.shuffle(&mut support::rng(seed));
        let p = ParticleConfiguration::new(x, *c.setup(), 0.0).unwrap();
        let a = compute_stats(&c, 1.3).unwrap();
        let b = compute_stats(&p, 1.3).unwrap();
        prop_assert_eq!(a.d_min, b.d_min);
        for k in 0..3 {
            prop_assert!((a.alpha[k] - b.alpha[k]).abs() <= 1e-12 * a.alpha[k]);
        }
        prop_assert!((a.lambda_q - b.lambda_q).abs() <= 1e-12 * a.lambda_q);
    }

    #[test]
    fn stats_are_translation_invariant(seed in 0u64..1000, s in prop::array::uniform3(-5.0f64..5.0)) {
        let c = blob_cloud(40, seed);
        let shift = Vector3::new(s[0], s[1], s[2]);
        let moved = ParticleConfiguration::new(c.positions().iter().map(|x| x + shift).collect(), *c.setup(), 0.0).unwrap();
        let a = compute_stats(&c, 1.0).unwrap();
        let b = compute_stats(&moved, 1.0).unwrap();
        prop_assert!((a.d_min - b.d_min).abs() <= 1e-12 * (1.0 + shift.norm()));
        prop_assert!((a.alpha[1] - b.alpha[1]).abs() <= 1e-9 * a.alpha[1]);
    }
}
