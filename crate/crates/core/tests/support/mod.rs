#![allow(dead_code)]

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit_vector(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Random point with log-uniform radius in [r_lo, r_hi].
pub fn point_in_shell(rng: &mut impl Rng, r_lo: f64, r_hi: f64) -> Vector3<f64> {
    let r = (r_lo.ln() + rng.random::<f64>() * (r_hi.ln() - r_lo.ln())).exp();
    unit_vector(rng) * r
}

pub fn random_vector(rng: &mut impl Rng, scale: f64) -> Vector3<f64> {
    Vector3::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}

pub fn random_symmetric(rng: &mut impl Rng) -> Matrix3<f64> {
    let m = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
    (m + m.transpose()) * 0.5
}

pub fn rel_err_vec(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

pub fn rel_err_mat(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Fourth-order central difference of a vector field along axis `k`.
pub fn fd_derivative(f: &dyn Fn(&Vector3<f64>) -> Vector3<f64>, x: &Vector3<f64>, k: usize, h: f64) -> Vector3<f64> {
    let mut e = Vector3::zeros();
    e[k] = h;
    (-f(&(x + 2.0 * e)) + 8.0 * f(&(x + e)) - 8.0 * f(&(x - e)) + f(&(x - 2.0 * e))) / (12.0 * h)
}

/// Jacobian J[(i,k)] = ∂_k f_i.
pub fn fd_jacobian(f: &dyn Fn(&Vector3<f64>) -> Vector3<f64>, x: &Vector3<f64>, h: f64) -> Matrix3<f64> {
    let mut j = Matrix3::zeros();
    for k in 0..3 {
        j.set_column(k, &fd_derivative(f, x, k, h));
    }
    j
}

/// Fourth-order Laplacian of a matrix field, summing second differences per axis.
pub fn fd_laplacian_mat(f: &dyn Fn(&Vector3<f64>) -> Matrix3<f64>, x: &Vector3<f64>, h: f64) -> Matrix3<f64> {
    let mut acc = Matrix3::zeros();
    for k in 0..3 {
        let mut e = Vector3::zeros();
        e[k] = h;
        acc += (-f(&(x + 2.0 * e)) + 16.0 * f(&(x + e)) - 30.0 * f(x) + 16.0 * f(&(x - e)) - f(&(x - 2.0 * e)))
            / (12.0 * h * h);
    }
    acc
}

/// Gauss-Legendre nodes and weights on [-1, 1] (Newton iteration on P_n).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// `(Φg ∗ ρ)(x)` by quadrature in spherical coordinates centered at `x`, where the
/// `r²` Jacobian cancels the Oseen singularity. `ρ` must vanish beyond `rmax` from `x`.
pub fn oseen_convolution(
    rho: impl Fn(&Vector3<f64>) -> f64,
    x: &Vector3<f64>,
    g: &Vector3<f64>,
    rmax: f64,
    nr: usize,
    nang: usize,
) -> Vector3<f64> {
    let (rn, rw) = gauss_legendre(nr);
    let (mu, mw) = gauss_legendre(nang);
    let nphi = 2 * nang;
    let mut acc = Vector3::zeros();
    for (a, wa) in rn.iter().zip(&rw) {
        let r = 0.5 * rmax * (a + 1.0);
        let wr = 0.5 * rmax * wa;
        for (c, wc) in mu.iter().zip(&mw) {
            let s = (1.0 - c * c).sqrt();
            for p in 0..nphi {
                let phi = 2.0 * std::f64::consts::PI * p as f64 / nphi as f64;
                let y = Vector3::new(s * phi.cos(), s * phi.sin(), *c);
                let dens = rho(&(x - y * r));
                if dens == 0.0 {
                    continue;
                }
                let v = (g + y * y.dot(g)) * (r / (8.0 * std::f64::consts::PI));
                acc += v * (dens * wr * wc * 2.0 * std::f64::consts::PI / nphi as f64);
            }
        }
    }
    acc
}
pub mod ot;
