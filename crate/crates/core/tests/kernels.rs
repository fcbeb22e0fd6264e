mod support;

use approx::assert_relative_eq;
use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;
use rand::Rng;
use sedlab::kernels::*;
use sedlab::Error;
use std::f64::consts::PI;
use support::*;

fn setup() -> PhysicalSetup {
    PhysicalSetup::new(Vector3::new(0.3, -0.2, -1.0), 64, 0.01).unwrap()
}

#[test]
fn setup_derived_quantities() {
    let s = PhysicalSetup::new(Vector3::z(), 1000, 0.02).unwrap();
    assert_eq!(s.volume_fraction(), 4.0 / 3.0 * PI * 1000.0 * 0.02f64.powi(3));
    assert_eq!(s.interaction_strength(), 1000.0 * 0.02);
    let t = PhysicalSetup::from_volume_fraction(Vector3::z(), 1000, 0.05).unwrap();
    assert_relative_eq!(t.volume_fraction(), 0.05, max_relative = 1e-14);
    assert!(PhysicalSetup::new(Vector3::z(), 0, 0.1).is_err());
    assert!(PhysicalSetup::new(Vector3::z(), 3, 0.0).is_err());
    assert!(PhysicalSetup::new(Vector3::z(), 3, -1.0).is_err());
}

#[test]
fn oseen_examples() {
    let a = oseen(&Vector3::x()).unwrap();
    let expected = Matrix3::from_diagonal(&Vector3::new(1.0 / (4.0 * PI), 1.0 / (8.0 * PI), 1.0 / (8.0 * PI)));
    assert_relative_eq!(a, expected, max_relative = 1e-15);
    let b = oseen(&Vector3::new(2.0, 0.0, 0.0)).unwrap();
    assert_relative_eq!(b, expected * 0.5, max_relative = 1e-15);
    assert_eq!(oseen(&Vector3::y()).unwrap(), oseen(&-Vector3::y()).unwrap());
    assert!(matches!(oseen(&Vector3::zeros()), Err(Error::Singular(_))));
    assert!(oseen(&Vector3::new(1e-13, 0.0, 0.0)).is_err());
}

#[test]
fn laplacian_examples() {
    let a = oseen_laplacian(&Vector3::x()).unwrap();
    let expected = Matrix3::from_diagonal(&Vector3::new(-2.0, 1.0, 1.0)) / (4.0 * PI);
    assert_relative_eq!(a, expected, max_relative = 1e-15);
    let b = oseen_laplacian(&Vector3::new(2.0, 0.0, 0.0)).unwrap();
    assert_relative_eq!(b, expected / 8.0, max_relative = 1e-15);
    let mut r = rng(1);
    for _ in 0..100 {
        let x = point_in_shell(&mut r, 0.1, 10.0);
        let l = oseen_laplacian(&x).unwrap();
        assert!(l.trace().abs() <= 1e-14 * l.norm());
    }
    assert!(oseen_laplacian(&Vector3::zeros()).is_err());
}

#[test]
fn single_particle_field_examples() {
    let s = setup();
    let inside = single_particle_field(&(unit_vector(&mut rng(2)) * s.radius / 2.0), &s);
    assert_eq!(inside, s.gravity / (6.0 * PI * 64.0 * 0.01));
    assert_eq!(single_particle_field(&Vector3::zeros(), &s), s.self_velocity());

    let s1 = PhysicalSetup::new(Vector3::x(), 10, 0.05).unwrap();
    let surface = single_particle_field(&(Vector3::x() * 0.05), &s1);
    let rigid = Vector3::x() / (6.0 * PI * 10.0 * 0.05);
    assert_relative_eq!(surface, rigid, max_relative = 1e-14);

    // far field approaches the Stokeslet, magnitude ~ 1/(N|x|)
    for r in [1e2, 1e3, 1e4] {
        let x = Vector3::new(0.0, r, 0.0);
        let w = single_particle_field(&x, &s1);
        let stokeslet = oseen(&x).unwrap() * s1.gravity / 10.0;
        assert!(rel_err_vec(&w, &stokeslet) < 1e-5);
        assert_relative_eq!(w.norm() * 10.0 * r, 1.0 / (8.0 * PI), max_relative = 1e-5);
    }
}

#[test]
fn surface_consistency_pins_the_sign() {
    let mut r = rng(3);
    for _ in 0..1000 {
        let g = random_vector(&mut r, 2.0);
        let n_particles = r.random_range(1..5000);
        let radius = r.random_range(1e-3..1.0);
        let s = PhysicalSetup::new(g, n_particles, radius).unwrap();
        let n = unit_vector(&mut r);
        let on = single_particle_field(&(n * radius), &s);
        let just_outside = single_particle_field(&(n * radius * (1.0 + 1e-15)), &s);
        let rigid = g / (6.0 * PI * n_particles as f64 * radius);
        assert!(rel_err_vec(&on, &rigid) <= 1e-12);
        assert!(rel_err_vec(&just_outside, &rigid) <= 1e-12);
    }
}

#[test]
fn stokeslet_strain_examples() {
    let a = stokeslet_strain(&Vector3::x(), &Vector3::x()).unwrap();
    let expected = Matrix3::from_diagonal(&Vector3::new(-2.0, 1.0, 1.0)) / (8.0 * PI);
    assert_relative_eq!(*a.matrix(), expected, max_relative = 1e-15);
    let b = stokeslet_strain(&Vector3::x(), &Vector3::y()).unwrap();
    assert_eq!(*b.matrix(), Matrix3::zeros());
    let c = stokeslet_strain(&(Vector3::x() * 2.0), &Vector3::x()).unwrap();
    assert_relative_eq!(*c.matrix(), expected / 4.0, max_relative = 1e-15);
    assert!(stokeslet_strain(&Vector3::zeros(), &Vector3::x()).is_err());
}

#[test]
fn stresslet_velocity_examples() {
    let s = StrainMatrix::new(Matrix3::from_diagonal(&Vector3::new(-2.0, 1.0, 1.0)) / (8.0 * PI)).unwrap();
    let a = stresslet_velocity(&Vector3::x(), &s).unwrap();
    assert_relative_eq!(a, Vector3::x() * 3.0 / (32.0 * PI * PI), max_relative = 1e-14);
    assert_relative_eq!(a.x, 0.0094988, max_relative = 1e-5);
    let b = stresslet_velocity(&Vector3::y(), &s).unwrap();
    assert_relative_eq!(b, -Vector3::y() * 3.0 / (64.0 * PI * PI), max_relative = 1e-14);
    assert_eq!(stresslet_velocity(&Vector3::y(), &StrainMatrix::zero()).unwrap(), Vector3::zeros());
    assert!(stresslet_velocity(&Vector3::zeros(), &s).is_err());
    let skew = Matrix3::new(0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    assert!(matches!(StrainMatrix::new(skew), Err(Error::NotSymmetric(_))));
}

#[test]
fn stresslet_is_the_contraction_with_the_oseen_gradient() {
    let mut r = rng(4);
    for _ in 0..100 {
        let x = point_in_shell(&mut r, 0.2, 5.0);
        let s = StrainMatrix::new(random_symmetric(&mut r)).unwrap();
        let grad = oseen_gradient(&x).unwrap();
        let mut v = Vector3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    v[i] += grad[k][(i, j)] * s.matrix()[(j, k)];
                }
            }
        }
        assert!(rel_err_vec(&stresslet_velocity(&x, &s).unwrap(), &v) < 1e-13);
    }
}

#[test]
fn finite_difference_oracle() {
    let mut r = rng(5);
    for _ in 0..100 {
        let x = point_in_shell(&mut r, 0.5, 3.0);
        let g = random_vector(&mut r, 1.0);
        let h = 1e-3 * x.norm();

        let lap = fd_laplacian_mat(&|y| oseen(y).unwrap(), &x, h);
        assert!(rel_err_mat(&lap, &oseen_laplacian(&x).unwrap()) < 1e-6);

        let j = fd_jacobian(&|y| oseen(y).unwrap() * g, &x, h);
        let strain = (j + j.transpose()) * 0.5;
        assert!(rel_err_mat(&strain, stokeslet_strain(&x, &g).unwrap().matrix()) < 1e-6);

        let grad = oseen_gradient(&x).unwrap();
        for k in 0..3 {
            let mut e = Vector3::zeros();
            e[k] = h;
            let d = (oseen(&(x + e)).unwrap() * 8.0 - oseen(&(x - e)).unwrap() * 8.0
                - oseen(&(x + 2.0 * e)).unwrap()
                + oseen(&(x - 2.0 * e)).unwrap())
                / (12.0 * h);
            assert!(rel_err_mat(&d, &grad[k]) < 1e-6);
        }
    }
}

#[test]
fn divergence_free() {
    let mut r = rng(6);
    for _ in 0..200 {
        let x = point_in_shell(&mut r, 0.5, 3.0);
        let g = random_vector(&mut r, 1.0);
        let h = 1e-3 * x.norm();
        let j = fd_jacobian(&|y| oseen(y).unwrap() * g, &x, h);
        assert!(j.trace().abs() <= 1e-6 * j.norm());

        let s = StrainMatrix::new(random_symmetric(&mut r)).unwrap();
        let j = fd_jacobian(&|y| stresslet_velocity(y, &s).unwrap(), &x, h);
        assert!(j.trace().abs() <= 1e-6 * j.norm());
    }
}

#[test]
fn growth_bound() {
    // |x|·|∇(Φg)(x)| ≤ C|g|/|x| with C fitted once: the maximum of the Frobenius norm of
    // |x|²∇(Φg)/|g| is √6/8π ≈ 0.0975, attained for g ∥ x.
    const C_GRAD: f64 = 0.1;
    let mut r = rng(7);
    for _ in 0..10_000 {
        let x = point_in_shell(&mut r, 1e-3, 1e3);
        let g = random_vector(&mut r, 1.0);
        let v = oseen(&x).unwrap() * g;
        let rr = x.norm();
        assert!(v.norm() <= g.norm() / (4.0 * PI * rr) * (1.0 + 1e-14));
        let j = fd_jacobian(&|y| oseen(y).unwrap() * g, &x, 1e-4 * rr);
        assert!(rr * j.norm() <= C_GRAD * g.norm() / rr);
    }
}

#[test]
fn adjointness() {
    let mut r = rng(8);
    for _ in 0..200 {
        let x = point_in_shell(&mut r, 0.1, 10.0);
        let a = random_vector(&mut r, 1.0);
        let s = StrainMatrix::new(random_symmetric(&mut r)).unwrap();
        let lhs = a.dot(&stresslet_velocity(&x, &s).unwrap());
        let rhs = s.contract(stokeslet_strain(&x, &a).unwrap().matrix());
        let scale = a.norm() * s.matrix().norm() / (8.0 * PI * x.norm_squared());
        assert!((lhs - rhs).abs() <= 1e-12 * scale);
    }
}

#[test]
fn lipschitz_split() {
    const C: f64 = 10.0;
    let mut r = rng(9);
    for _ in 0..10_000 {
        let x = point_in_shell(&mut r, 1e-2, 1e2);
        let y = if r.random::<bool>() {
            x + random_vector(&mut r, 0.5 * x.norm())
        } else {
            point_in_shell(&mut r, 1e-2, 1e2)
        };
        if y.norm() < 1e-6 {
            continue;
        }
        let lhs = (oseen(&x).unwrap() - oseen(&y).unwrap()).norm();
        let rhs = C * (x - y).norm() * (x.norm().powi(-2) + y.norm().powi(-2));
        assert!(lhs <= rhs, "x={x:?} y={y:?}");
    }
}

fn nonzero_vec() -> impl Strategy<Value = Vector3<f64>> {
    (-10.0f64..10.0, -10.0f64..10.0, -10.0f64..10.0)
        .prop_map(|(a, b, c)| Vector3::new(a, b, c))
        .prop_filter("away from origin", |v| v.norm() > 1e-3)
}

proptest! {
    #[test]
    fn oseen_even_and_symmetric(x in nonzero_vec()) {
        let a = oseen(&x).unwrap();
        prop_assert_eq!(a, oseen(&-x).unwrap());
        prop_assert_eq!(a, a.transpose());
    }

    #[test]
    fn homogeneity(x in nonzero_vec(), lambda in 0.01f64..100.0, g in nonzero_vec()) {
        let lx = x * lambda;
        prop_assert!(rel_err_mat(&oseen(&lx).unwrap(), &(oseen(&x).unwrap() / lambda)) <= 1e-13);
        prop_assert!(rel_err_mat(&oseen_laplacian(&lx).unwrap(), &(oseen_laplacian(&x).unwrap() / lambda.powi(3))) <= 1e-13);
        // relative to the kernel scale |g|/|x|², since x·g may cancel
        let s = stokeslet_strain(&x, &g).unwrap();
        let scaled = stokeslet_strain(&lx, &g).unwrap();
        let scale = g.norm() / (8.0 * PI * lx.norm_squared());
        prop_assert!((scaled.matrix() - s.matrix() / (lambda * lambda)).norm() <= 1e-13 * scale);
    }

    #[test]
    fn strain_is_symmetric_and_traceless(x in nonzero_vec(), g in nonzero_vec()) {
        let s = stokeslet_strain(&x, &g).unwrap();
        let m = s.matrix();
        prop_assert_eq!(*m, m.transpose());
        prop_assert!(m.trace().abs() <= 1e-14 * m.norm().max(1e-300));
    }

    #[test]
    fn traceless_stresslet_is_radial(x in nonzero_vec(), seed in 0u64..1000) {
        let mut r = rng(seed);
        let mut m = random_symmetric(&mut r);
        let t = m.trace() / 3.0;
        m -= Matrix3::identity() * t;
        let s = StrainMatrix::new(m).unwrap();
        let xh = x / x.norm();
        let expected = -xh * (3.0 / (8.0 * PI)) * xh.dot(&(m * xh)) / x.norm_squared();
        let v = stresslet_velocity(&x, &s).unwrap();
        prop_assert!((v - expected).norm() <= 1e-13 * (m.norm() / x.norm_squared()));
    }
}
