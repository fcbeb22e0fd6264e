use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Complex 3-D FFT over an x-fastest array.
///
/// Inputs are assumed to vanish outside the corner block `active`, and inverse outputs
/// are only needed there, which lets the first and last axis passes skip empty lines.
pub(crate) struct Fft3 {
    dims: [usize; 3],
    active: [usize; 3],
    fwd: [Arc<dyn Fft<f64>>; 3],
    inv: [Arc<dyn Fft<f64>>; 3],
}

impl Fft3 {
    #[cfg(test)]
    pub fn new(dims: [usize; 3]) -> Self {
        Self::with_active(dims, dims)
    }

    pub fn with_active(dims: [usize; 3], active: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = dims.map(|n| planner.plan_fft_forward(n));
        let inv = dims.map(|n| planner.plan_fft_inverse(n));
        let active = [0, 1, 2].map(|d| active[d].min(dims[d]));
        Self { dims, active, fwd, inv }
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        let mut scratch = self.scratch(&self.fwd);
        let [_, ay, az] = self.active;
        self.pass_x(data, &self.fwd[0], ay, az, &mut scratch);
        self.pass_y(data, &self.fwd[1], az, &mut scratch);
        self.pass_z(data, &self.fwd[2], &mut scratch);
    }

    /// Inverse transform including the 1/n normalization.
    pub fn inverse(&self, data: &mut [Complex64]) {
        let mut scratch = self.scratch(&self.inv);
        let [_, ay, az] = self.active;
        self.pass_z(data, &self.inv[2], &mut scratch);
        self.pass_y(data, &self.inv[1], az, &mut scratch);
        self.pass_x(data, &self.inv[0], ay, az, &mut scratch);
        let s = 1.0 / self.len() as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }

    fn scratch(&self, plans: &[Arc<dyn Fft<f64>>; 3]) -> Vec<Complex64> {
        let n = plans.iter().map(|p| p.get_inplace_scratch_len()).max().unwrap_or(0);
        vec![Complex64::default(); n]
    }

    fn pass_x(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>, ny: usize, nz: usize, scratch: &mut [Complex64]) {
        let [px, py, _] = self.dims;
        for k in 0..nz {
            for j in 0..ny {
                let base = px * (j + py * k);
                plan.process_with_scratch(&mut data[base..base + px], scratch);
            }
        }
    }

    fn pass_y(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>, nz: usize, scratch: &mut [Complex64]) {
        let [nx, ny, _] = self.dims;
        if ny <= 1 {
            return;
        }
        let mut b = vec![Complex64::default(); nx * ny];
        for plane in data.chunks_exact_mut(nx * ny).take(nz) {
            for j in 0..ny {
                for i in 0..nx {
                    b[i * ny + j] = plane[i + nx * j];
                }
            }
            for line in b.chunks_exact_mut(ny) {
                plan.process_with_scratch(line, scratch);
            }
            for j in 0..ny {
                for i in 0..nx {
                    plane[i + nx * j] = b[i * ny + j];
                }
            }
        }
    }

    fn pass_z(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>, scratch: &mut [Complex64]) {
        let [nx, ny, nz] = self.dims;
        if nz <= 1 {
            return;
        }
        let mut b = vec![Complex64::default(); nx * nz];
        for j in 0..ny {
            for k in 0..nz {
                let base = nx * (j + ny * k);
                for i in 0..nx {
                    b[i * nz + k] = data[base + i];
                }
            }
            for line in b.chunks_exact_mut(nz) {
                plan.process_with_scratch(line, scratch);
            }
            for k in 0..nz {
                let base = nx * (j + ny * k);
                for i in 0..nx {
                    data[base + i] = b[i * nz + k];
                }
            }
        }
    }

    /// Transforms two real arrays with one complex transform.
    pub fn forward_real_pair(&self, a: &mut Vec<Complex64>, b: Option<&mut Vec<Complex64>>) {
        match b {
            None => self.forward(a),
            Some(b) => {
                for (x, y) in a.iter_mut().zip(b.iter()) {
                    *x = Complex64::new(x.re, y.re);
                }
                self.forward(a);
                let [nx, ny, nz] = self.dims;
                let half = Complex64::new(0.5, 0.0);
                let minus_half_i = Complex64::new(0.0, -0.5);
                // (k, −k) pairs are visited once each
                for k in 0..nz {
                    let nk = (nz - k) % nz;
                    for j in 0..ny {
                        let nj = (ny - j) % ny;
                        let row = nx * (j + ny * k);
                        let nrow = nx * (nj + ny * nk);
                        for i in 0..nx {
                            let idx = row + i;
                            let nidx = nrow + (nx - i) % nx;
                            if nidx < idx {
                                continue;
                            }
                            let c = a[idx];
                            let cm = a[nidx];
                            a[idx] = (c + cm.conj()) * half;
                            b[idx] = (c - cm.conj()) * minus_half_i;
                            if nidx != idx {
                                a[nidx] = (cm + c.conj()) * half;
                                b[nidx] = (cm - c.conj()) * minus_half_i;
                            }
                        }
                    }
                }
            }
        }
    }

    /// Inverse transform of two spectra of real fields with one complex transform.
    /// On return the real parts of `a` and `b` hold the fields.
    pub fn inverse_real_pair(&self, a: &mut [Complex64], b: Option<&mut [Complex64]>) {
        match b {
            None => self.inverse(a),
            Some(b) => {
                for (x, y) in a.iter_mut().zip(b.iter()) {
                    *x += Complex64::new(-y.im, y.re);
                }
                self.inverse(a);
                for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                    *y = Complex64::new(x.im, 0.0);
                    x.im = 0.0;
                }
            }
        }
    }
}

/// Angular wavenumbers of an `n`-point periodic axis of period `period`, with the
/// Nyquist mode set to zero so that odd derivatives stay real.
pub(crate) fn wavenumbers(n: usize, period: f64) -> Vec<f64> {
    let base = 2.0 * std::f64::consts::PI / period;
    (0..n)
        .map(|m| {
            if n % 2 == 0 && m == n / 2 {
                0.0
            } else if m <= n / 2 {
                m as f64 * base
            } else {
                (m as f64 - n as f64) * base
            }
        })
        .collect()
}
