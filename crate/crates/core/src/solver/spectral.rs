//! Periodic 1-D spectral helpers.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub(crate) struct Spectral {
    pub n: usize,
    /// Angular wavenumbers `2πk/L` in FFT order.
    pub k: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Spectral {
    pub fn new(n: usize, length: f64) -> Self {
        let mut planner = FftPlanner::new();
        let k = (0..n)
            .map(|j| {
                let signed = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
                2.0 * std::f64::consts::PI * signed / length
            })
            .collect();
        Self { n, k, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }

    /// Signed integer mode of FFT slot `j`.
    pub fn mode(&self, j: usize) -> i64 {
        if j <= self.n / 2 {
            j as i64
        } else {
            j as i64 - self.n as i64
        }
    }

    pub fn is_nyquist(&self, j: usize) -> bool {
        self.n.is_multiple_of(2) && j == self.n / 2
    }

    pub fn forward(&self, u: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fwd.process(&mut buf);
        buf
    }

    pub fn inverse(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        self.inv.process(&mut buf);
        let s = 1.0 / self.n as f64;
        buf.iter().map(|c| c.re * s).collect()
    }
}
