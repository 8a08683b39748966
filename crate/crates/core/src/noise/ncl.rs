//! Noncentral-limit Hermite sheet.
//!
//! A stationary Gaussian sheet `X` lives on an inner lattice of `m` points per
//! axis across the full extent, with separable correlation
//! `ρ_i(k) = r_{H_i}(k)^{1/q}` where `r_H` is the fractional Gaussian noise
//! autocovariance. Then `Cov(He_q(X_a), He_q(X_b)) = q! Π_i r_{H_i}(a_i - b_i)`, and
//! partial sums of `He_q(X)` have exactly the sheet covariance at the coarse
//! lattice points. `X` is drawn by circulant embedding: one complex FFT yields
//! two independent real fields (real and imaginary parts).

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{hermite_poly, purpose, FieldKind, FieldSample, GridSpec, SeedSpec};
use crate::error::{Error, Result};
use crate::kernels::HermiteParams;
use crate::tensor;

pub const MIN_INNER: usize = 32;
/// Largest circulant embedding, in complex points.
pub const MAX_EMBEDDING: usize = 1 << 24;

/// Autocovariance of fractional Gaussian noise at integer lag `k`.
pub fn fgn_autocovariance(k: usize, h: f64) -> f64 {
    let k = k as f64;
    let e = 2.0 * h;
    0.5 * ((k + 1.0).powf(e) - 2.0 * k.powf(e) + (k - 1.0).abs().powf(e))
}

/// Eigenvalues of the minimal circulant embedding of `ρ(0..=m)`.
pub(crate) fn embedding_eigenvalues(rho: &[f64]) -> Result<Vec<f64>> {
    let m = rho.len() - 1;
    let n = 2 * m;
    let mut row: Vec<Complex64> = (0..n)
        .map(|j| Complex64::new(if j <= m { rho[j] } else { rho[n - j] }, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut row);
    let max = row.iter().map(|c| c.re).fold(0.0, f64::max);
    row.iter()
        .enumerate()
        .map(|(i, c)| {
            if c.re >= 0.0 {
                Ok(c.re)
            } else if c.re > -1e-10 * max {
                Ok(0.0)
            } else {
                Err(Error::NotPositiveDefinite { pivot: i, value: c.re })
            }
        })
        .collect()
}

#[derive(Clone)]
pub struct NclSampler {
    grid: GridSpec,
    q: u32,
    hurst: Vec<f64>,
    m: usize,
    /// `sqrt(λ_i / (2m))` per axis.
    roots: Vec<Vec<f64>>,
    fft: Arc<dyn Fft<f64>>,
    norm: f64,
}

impl fmt::Debug for NclSampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NclSampler")
            .field("grid", &self.grid)
            .field("q", &self.q)
            .field("hurst", &self.hurst)
            .field("m", &self.m)
            .field("norm", &self.norm)
            .finish()
    }
}

impl NclSampler {
    pub fn new(params: &HermiteParams, grid: &GridSpec, m: usize) -> Result<Self> {
        grid.validate()?;
        params.ensure_valid()?;
        if params.d != grid.d {
            return Err(Error::GridMismatch("parameter and grid dimensions differ".into()));
        }
        if m < MIN_INNER {
            return Err(Error::InvalidParams(format!("inner lattice m = {m} must be >= {MIN_INNER}")));
        }
        if grid.steps().iter().any(|&n| !m.is_multiple_of(n)) {
            return Err(Error::InvalidGrid(format!(
                "inner lattice m = {m} must be a multiple of n_t = {} and n_x = {}",
                grid.n_t, grid.n_x
            )));
        }
        let ndim = grid.d + 1;
        let size = (2 * m) as f64;
        if size.powi(ndim as i32) > MAX_EMBEDDING as f64 {
            return Err(Error::Budget {
                cost: size.powi(ndim as i32),
                budget: MAX_EMBEDDING as f64,
                hint: "reduce m".into(),
            });
        }
        let q = params.q;
        let roots = params
            .hurst
            .iter()
            .map(|&h| {
                let rho: Vec<f64> = (0..=m).map(|k| fgn_autocovariance(k, h).powf(1.0 / q as f64)).collect();
                let lam = embedding_eigenvalues(&rho)?;
                Ok(lam.iter().map(|l| (l / size).sqrt()).collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        let qf: f64 = (1..=q).map(|k| k as f64).product();
        let inner_var: f64 = params.hurst.iter().map(|h| (m as f64).powf(2.0 * h)).product();
        let target: f64 = grid.extents().iter().zip(&params.hurst).map(|(t, h)| t.powf(*h)).product();
        Ok(Self {
            grid: grid.clone(),
            q,
            hurst: params.hurst.clone(),
            m,
            roots,
            fft: FftPlanner::new().plan_fft_forward(2 * m),
            norm: target / (qf * inner_var).sqrt(),
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn inner_points(&self) -> usize {
        self.m
    }

    /// The two fields carried by generator stream `stream`: real part first.
    pub fn sample_pair(&self, seed: SeedSpec, stream: u64) -> [FieldSample; 2] {
        let ndim = self.grid.d + 1;
        let n = 2 * self.m;
        let shape = vec![n; ndim];
        let total = n.pow(ndim as u32);
        let mut rng = seed.rng_on_stream(purpose::NCL, stream);
        let mut idx = vec![0; ndim];
        let mut buf: Vec<Complex64> = (0..total)
            .map(|f| {
                tensor::unravel(f, &shape, &mut idx);
                let s: f64 = idx.iter().zip(&self.roots).map(|(&i, r)| r[i]).product();
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(s * re, s * im)
            })
            .collect();
        fft_all_axes(&mut buf, &shape, self.fft.as_ref());

        let inner = vec![self.m; ndim];
        let count = self.m.pow(ndim as u32);
        let strides = tensor::strides(&shape);
        let mut re = Vec::with_capacity(count);
        let mut im = Vec::with_capacity(count);
        for f in 0..count {
            tensor::unravel(f, &inner, &mut idx);
            let pos: usize = idx.iter().zip(&strides).map(|(a, b)| a * b).sum();
            re.push(hermite_poly(self.q, buf[pos].re));
            im.push(hermite_poly(self.q, buf[pos].im));
        }
        let base = seed.offset(0);
        [
            self.finish(re, SeedSpec { stream_index: 2 * stream, ..base }),
            self.finish(im, SeedSpec { stream_index: 2 * stream + 1, ..base }),
        ]
    }

    fn finish(&self, mut y: Vec<f64>, seed: SeedSpec) -> FieldSample {
        let ndim = self.grid.d + 1;
        let inner = vec![self.m; ndim];
        for axis in 0..ndim {
            tensor::prefix_sum(&mut y, &inner, axis);
        }
        let ratio: Vec<usize> = self.grid.steps().iter().map(|n| self.m / n).collect();
        let full = self.grid.shape(FieldKind::Sheet);
        let strides = tensor::strides(&inner);
        let mut li = vec![0; ndim];
        let values = (0..full.iter().product())
            .map(|f| {
                tensor::unravel(f, &full, &mut li);
                if li.contains(&0) {
                    return 0.0;
                }
                let pos: usize = li
                    .iter()
                    .zip(&ratio)
                    .zip(&strides)
                    .map(|((&k, &r), &s)| (k * r - 1) * s)
                    .sum();
                self.norm * y[pos]
            })
            .collect();
        FieldSample {
            kind: FieldKind::Sheet,
            grid: self.grid.clone(),
            q: self.q,
            hurst: self.hurst.clone(),
            seed,
            values,
        }
    }

    /// Stream `s` is the real (even `s`) or imaginary (odd `s`) part of
    /// generator stream `s / 2`.
    pub fn sample(&self, seed: SeedSpec) -> FieldSample {
        let s = seed.stream_index;
        let [a, b] = self.sample_pair(seed, s / 2);
        if s.is_multiple_of(2) {
            a
        } else {
            b
        }
    }

    pub fn ensemble(&self, seed: SeedSpec, n: usize) -> Vec<FieldSample> {
        if n == 0 {
            return Vec::new();
        }
        let lo = seed.stream_index;
        let hi = lo + n as u64 - 1;
        let pairs: Vec<[FieldSample; 2]> = (lo / 2..=hi / 2)
            .into_par_iter()
            .map(|g| self.sample_pair(seed, g))
            .collect();
        pairs
            .into_iter()
            .flatten()
            .filter(|f| f.seed.stream_index >= lo && f.seed.stream_index <= hi)
            .collect()
    }
}

/// Unnormalized forward FFT along every axis of a row-major buffer with equal
/// axis lengths.
fn fft_all_axes(buf: &mut [Complex64], shape: &[usize], fft: &dyn Fft<f64>) {
    let n = fft.len();
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let mut line = vec![Complex64::default(); n];
    for axis in 0..shape.len() {
        debug_assert_eq!(shape[axis], n);
        let inner: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        if inner == 1 {
            fft.process_with_scratch(buf, &mut scratch);
            continue;
        }
        for o in 0..outer {
            for i in 0..inner {
                let base = o * n * inner + i;
                for (j, l) in line.iter_mut().enumerate() {
                    *l = buf[base + j * inner];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (j, l) in line.iter().enumerate() {
                    buf[base + j * inner] = *l;
                }
            }
        }
    }
}
