//! Square 2D FFTs built from row transforms and transposes.
//!
//! `forward` leaves the spectrum *transposed* (`[kx, ky]`) and `inverse`
//! expects that layout back, which saves two transposes per round trip.
//! Anything multiplied in spectral space must therefore be symmetric under
//! exchange of axes or be laid out as `[kx, ky]`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct Fft2 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    tmp: Vec<Complex64>,
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let len = fwd
            .get_inplace_scratch_len()
            .max(inv.get_inplace_scratch_len());
        Fft2 {
            n,
            fwd,
            inv,
            scratch: vec![Complex64::default(); len],
            tmp: vec![Complex64::default(); n * n],
        }
    }

    /// Unnormalised forward transform of row-major `[y, x]` data; output is `[kx, ky]`.
    pub fn forward(&mut self, data: &mut [Complex64]) {
        debug_assert_eq!(data.len(), self.n * self.n);
        self.fwd.process_with_scratch(data, &mut self.scratch);
        transpose(data, &mut self.tmp, self.n);
        self.fwd.process_with_scratch(&mut self.tmp, &mut self.scratch);
        data.copy_from_slice(&self.tmp);
    }

    /// Inverse of [`forward`](Self::forward), including the `1/n²` factor.
    pub fn inverse(&mut self, data: &mut [Complex64]) {
        debug_assert_eq!(data.len(), self.n * self.n);
        self.inv.process_with_scratch(data, &mut self.scratch);
        transpose(data, &mut self.tmp, self.n);
        self.inv.process_with_scratch(&mut self.tmp, &mut self.scratch);
        let scale = 1.0 / (self.n * self.n) as f64;
        for (d, t) in data.iter_mut().zip(&self.tmp) {
            *d = t * scale;
        }
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], n: usize) {
    const B: usize = 16;
    for ib in (0..n).step_by(B) {
        for jb in (0..n).step_by(B) {
            for i in ib..(ib + B).min(n) {
                for j in jb..(jb + B).min(n) {
                    dst[j * n + i] = src[i * n + j];
                }
            }
        }
    }
}
