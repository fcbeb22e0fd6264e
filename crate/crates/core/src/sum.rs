//! Compensated summation.

use nalgebra::{Matrix3, Vector3};

/// Neumaier's variant of Kahan summation.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Componentwise compensated sum of vectors.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct NeumaierVec([Neumaier; 3]);

impl NeumaierVec {
    #[inline]
    pub fn add(&mut self, v: &Vector3<f64>) {
        for d in 0..3 {
            self.0[d].add(v[d]);
        }
    }

    #[inline]
    pub fn value(&self) -> Vector3<f64> {
        Vector3::new(self.0[0].value(), self.0[1].value(), self.0[2].value())
    }
}

/// Compensated sum of symmetric matrices (upper triangle).
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct NeumaierSym([Neumaier; 6]);

const UPPER: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

impl NeumaierSym {
    #[inline]
    pub fn add(&mut self, m: &Matrix3<f64>) {
        for (s, &(i, j)) in self.0.iter_mut().zip(&UPPER) {
            s.add(m[(i, j)]);
        }
    }

    pub fn value(&self) -> Matrix3<f64> {
        let mut m = Matrix3::zeros();
        for (s, &(i, j)) in self.0.iter().zip(&UPPER) {
            m[(i, j)] = s.value();
            m[(j, i)] = s.value();
        }
        m
    }
}
