use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Square `n x n` (or length-`n` for `dims == 1`) forward/inverse transforms.
pub(crate) struct Grid {
    pub n: usize,
    pub dims: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Grid {
    pub fn new(n: usize, dims: usize) -> Self {
        let mut planner = FftPlanner::new();
        Grid { n, dims, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dims as u32)
    }

    /// Signed frequency index of FFT slot `k`.
    pub fn signed(&self, k: usize) -> i64 {
        if k < self.n / 2 {
            k as i64
        } else {
            k as i64 - self.n as i64
        }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.apply(data, &self.fwd);
    }

    /// Unnormalized inverse.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.apply(data, &self.inv);
    }

    fn apply(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        if self.dims == 1 {
            plan.process(data);
            return;
        }
        plan.process(data); // all rows
        let mut col = vec![Complex64::default(); n];
        for c in 0..n {
            for r in 0..n {
                col[r] = data[r * n + c];
            }
            plan.process(&mut col);
            for r in 0..n {
                data[r * n + c] = col[r];
            }
        }
    }

    /// Circular convolution of real `g` with a kernel given by its transfer
    /// function `h` (one value per FFT slot).
    pub fn convolve(&self, g: &[f64], h: &[f64], out: &mut [f64]) {
        let mut buf: Vec<Complex64> = g.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        for (b, &t) in buf.iter_mut().zip(h) {
            *b *= t;
        }
        self.inverse(&mut buf);
        let norm = 1.0 / self.len() as f64;
        for (o, b) in out.iter_mut().zip(&buf) {
            *o = b.re * norm;
        }
    }
}
