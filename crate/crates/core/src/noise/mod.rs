//! Grids, seeds, white noise and Hermite-sheet samplers.
//!
//! Three sheet samplers are provided:
//!
//! * [`exact`]: Gaussian sheet (`q = 1`) from per-axis Cholesky factors of the
//!   fBm covariance. Exact in law on the lattice.
//! * [`kernel`]: discretizes the kernel representation of the sheet as an
//!   order-`q` multiple integral over a truncated white-noise lattice.
//! * [`ncl`]: noncentral-limit construction from Hermite polynomials of a
//!   long-memory Gaussian sheet on a finer inner lattice.
//!
//! Both approximate samplers are normalized with the exact variance of their own
//! discrete construction at the far corner of the grid.

pub mod exact;
pub mod format;
pub mod kernel;
pub mod ncl;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::HermiteParams;
use crate::tensor;

pub use exact::ExactSampler;
pub use kernel::{KernelSampler, TruncationSpec};
pub use ncl::NclSampler;

/// Uniform space-time lattice `{k t_max / n_t} x {j L / n_x}^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub t_max: f64,
    pub n_t: usize,
    /// Spatial extent `L`, shared by every spatial axis.
    pub length: f64,
    pub n_x: usize,
    pub d: usize,
}

impl GridSpec {
    pub fn new(t_max: f64, n_t: usize, length: f64, n_x: usize, d: usize) -> Result<Self> {
        let g = Self { t_max, n_t, length, n_x, d };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::InvalidGrid(format!("t_max = {} must be > 0", self.t_max)));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::InvalidGrid(format!("L = {} must be > 0", self.length)));
        }
        if self.n_t < 1 || self.n_x < 1 {
            return Err(Error::InvalidGrid("n_t and n_x must be >= 1".into()));
        }
        if self.d < 1 {
            return Err(Error::InvalidGrid("d must be >= 1".into()));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.t_max / self.n_t as f64
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n_x as f64
    }

    /// `[t_max, L, ..., L]`
    pub fn extents(&self) -> Vec<f64> {
        let mut e = vec![self.length; self.d + 1];
        e[0] = self.t_max;
        e
    }

    /// `[n_t, n_x, ..., n_x]`
    pub fn steps(&self) -> Vec<usize> {
        let mut s = vec![self.n_x; self.d + 1];
        s[0] = self.n_t;
        s
    }

    pub fn shape(&self, kind: FieldKind) -> Vec<usize> {
        let steps = self.steps();
        match kind {
            FieldKind::Sheet => steps.iter().map(|n| n + 1).collect(),
            FieldKind::WhiteNoise => steps,
            FieldKind::Solution => {
                let mut s = steps;
                s[0] += 1;
                s
            }
        }
    }

    pub fn len(&self, kind: FieldKind) -> usize {
        self.shape(kind).iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.dt() * self.dx().powi(self.d as i32)
    }

    /// Lattice index of the point at the given fractions of the extents.
    pub fn index_of_fractions(&self, fractions: &[f64]) -> Result<Vec<usize>> {
        if fractions.len() != self.d + 1 {
            return Err(Error::InvalidGrid(format!(
                "probe has {} coordinates, grid has {}",
                fractions.len(),
                self.d + 1
            )));
        }
        fractions
            .iter()
            .zip(self.steps())
            .map(|(&f, n)| {
                let k = f * n as f64;
                let r = k.round();
                if (k - r).abs() > 1e-9 || r < 0.0 || r > n as f64 {
                    Err(Error::InvalidGrid(format!("fraction {f} is not a lattice point of {n} steps")))
                } else {
                    Ok(r as usize)
                }
            })
            .collect()
    }

    /// Grid with extents multiplied coordinate-wise; spatial factors must agree.
    pub fn scaled(&self, lambda: &[f64]) -> Result<GridSpec> {
        if lambda.len() != self.d + 1 {
            return Err(Error::InvalidGrid("scale vector must have d+1 entries".into()));
        }
        if lambda.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::InvalidGrid("scale factors must be > 0".into()));
        }
        if lambda[1..].iter().any(|&l| l != lambda[1]) {
            return Err(Error::InvalidGrid("spatial scale factors must be equal".into()));
        }
        GridSpec::new(self.t_max * lambda[0], self.n_t, self.length * lambda[1], self.n_x, self.d)
    }
}

/// Master seed plus stream index.
///
/// The generator for a given purpose is ChaCha8 keyed with bytes `0..8` =
/// `master_seed` and bytes `8..16` = purpose tag (both little-endian, rest zero),
/// positioned on stream `stream_index`. Distinct `(master_seed, stream_index, purpose)`
/// triples therefore give distinct, non-overlapping streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_index: u64,
}

pub(crate) mod purpose {
    pub const WHITE_NOISE: u64 = 1;
    pub const EXACT: u64 = 2;
    pub const KERNEL: u64 = 3;
    pub const NCL: u64 = 4;
}

impl SeedSpec {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        Self { master_seed, stream_index }
    }

    pub fn offset(&self, i: u64) -> Self {
        Self { master_seed: self.master_seed, stream_index: self.stream_index + i }
    }

    pub(crate) fn rng(&self, purpose: u64) -> ChaCha8Rng {
        self.rng_on_stream(purpose, self.stream_index)
    }

    pub(crate) fn rng_on_stream(&self, purpose: u64, stream: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.master_seed.to_le_bytes());
        key[8..16].copy_from_slice(&purpose.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(stream);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    /// Values at lattice points, shape `(n_t+1) x (n_x+1)^d`.
    Sheet,
    /// Cell increments, shape `n_t x n_x^d`.
    WhiteNoise,
    /// Periodic solution, shape `(n_t+1) x n_x^d`.
    Solution,
}

impl FieldKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FieldKind::Sheet => "sheet",
            FieldKind::WhiteNoise => "white-noise",
            FieldKind::Solution => "solution",
        }
    }
}

/// A realized field on a grid together with the seed that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub kind: FieldKind,
    pub grid: GridSpec,
    /// Chaos order of the driving noise (white noise is recorded as `q = 1`).
    pub q: u32,
    /// Hurst vector of the driving noise (white noise is recorded as all `1/2`).
    pub hurst: Vec<f64>,
    pub seed: SeedSpec,
    /// Row-major `(t, x_1, ..., x_d)` values.
    pub values: Vec<f64>,
}

impl FieldSample {
    pub fn shape(&self) -> Vec<usize> {
        self.grid.shape(self.kind)
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let shape = self.shape();
        idx.iter().zip(&shape).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn at(&self, idx: &[usize]) -> f64 {
        self.values[self.flat_index(idx)]
    }

    pub fn check(&self) -> Result<()> {
        let want = self.grid.len(self.kind);
        if self.values.len() != want {
            return Err(Error::Format(format!(
                "{} field has {} values, grid needs {}",
                self.kind.as_str(),
                self.values.len(),
                want
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("field contains non-finite values".into()));
        }
        Ok(())
    }

    pub(crate) fn expect_kind(&self, kind: FieldKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::WrongKind { expected: kind.as_str(), found: self.kind.as_str() });
        }
        Ok(())
    }

    /// Rectangular increments of a sheet over every lattice cell.
    pub fn cell_increments(&self) -> Result<Vec<f64>> {
        self.expect_kind(FieldKind::Sheet)?;
        let mut data = self.values.clone();
        let mut shape = self.shape();
        for axis in 0..shape.len() {
            let (d, s) = tensor::difference(&data, &shape, axis);
            data = d;
            shape = s;
        }
        Ok(data)
    }
}

/// Independent centered Gaussian cell increments with variance `dt * dx^d`.
pub fn sample_white_noise(grid: &GridSpec, seed: SeedSpec) -> Result<FieldSample> {
    grid.validate()?;
    let sd = grid.cell_volume().sqrt();
    let mut rng = seed.rng(purpose::WHITE_NOISE);
    let values = (0..grid.len(FieldKind::WhiteNoise))
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(FieldSample {
        kind: FieldKind::WhiteNoise,
        grid: grid.clone(),
        q: 1,
        hurst: vec![0.5; grid.d + 1],
        seed,
        values,
    })
}

/// Probabilists' Hermite polynomial `He_q(x)`.
pub fn hermite_poly(q: u32, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if q == 0 {
        return prev;
    }
    for n in 1..q {
        let next = x * cur - n as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Which construction to use for sheet samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[derive(Default)]
pub enum SamplerSpec {
    #[default]
    Exact,
    Kernel(TruncationSpec),
    Ncl {
        /// Inner lattice points per axis across the full extent.
        m: usize,
    },
}


/// A sampler with its per-grid precomputation done once.
#[derive(Debug, Clone)]
pub enum SheetSampler {
    Exact(ExactSampler),
    Kernel(KernelSampler),
    Ncl(NclSampler),
}

impl SheetSampler {
    pub fn new(params: &HermiteParams, grid: &GridSpec, spec: &SamplerSpec) -> Result<Self> {
        if params.d != grid.d {
            return Err(Error::GridMismatch(format!(
                "parameters have d = {}, grid has d = {}",
                params.d, grid.d
            )));
        }
        Ok(match spec {
            SamplerSpec::Exact => {
                if params.q != 1 {
                    return Err(Error::InvalidParams(format!(
                        "the exact sampler is Gaussian (q = 1), got q = {}",
                        params.q
                    )));
                }
                SheetSampler::Exact(ExactSampler::new(&params.hurst, grid)?)
            }
            SamplerSpec::Kernel(trunc) => SheetSampler::Kernel(KernelSampler::new(params, grid, trunc)?),
            SamplerSpec::Ncl { m } => SheetSampler::Ncl(NclSampler::new(params, grid, *m)?),
        })
    }

    pub fn grid(&self) -> &GridSpec {
        match self {
            SheetSampler::Exact(s) => s.grid(),
            SheetSampler::Kernel(s) => s.grid(),
            SheetSampler::Ncl(s) => s.grid(),
        }
    }

    pub fn sample(&self, seed: SeedSpec) -> FieldSample {
        match self {
            SheetSampler::Exact(s) => s.sample(seed),
            SheetSampler::Kernel(s) => s.sample(seed),
            SheetSampler::Ncl(s) => s.sample(seed),
        }
    }

    /// `n` samples on streams `seed.stream_index + i`, in index order.
    pub fn ensemble(&self, seed: SeedSpec, n: usize) -> Vec<FieldSample> {
        match self {
            SheetSampler::Ncl(s) => s.ensemble(seed, n),
            _ => (0..n as u64)
                .into_par_iter()
                .map(|i| self.sample(seed.offset(i)))
                .collect(),
        }
    }
}

/// One sheet sample from the given construction.
pub fn sample_sheet(
    params: &HermiteParams,
    grid: &GridSpec,
    spec: &SamplerSpec,
    seed: SeedSpec,
) -> Result<FieldSample> {
    Ok(SheetSampler::new(params, grid, spec)?.sample(seed))
}

/// Exact Gaussian fBm sheet (`q = 1`).
pub fn sample_fbm_sheet_exact(hurst: &[f64], grid: &GridSpec, seed: SeedSpec) -> Result<FieldSample> {
    Ok(ExactSampler::new(hurst, grid)?.sample(seed))
}

/// Hermite sheet from the discretized kernel representation.
pub fn sample_hermite_sheet_kernel(
    params: &HermiteParams,
    grid: &GridSpec,
    trunc: &TruncationSpec,
    seed: SeedSpec,
) -> Result<FieldSample> {
    Ok(KernelSampler::new(params, grid, trunc)?.sample(seed))
}

/// Hermite sheet from the noncentral-limit construction.
pub fn sample_hermite_sheet_ncl(
    params: &HermiteParams,
    grid: &GridSpec,
    m: usize,
    seed: SeedSpec,
) -> Result<FieldSample> {
    Ok(NclSampler::new(params, grid, m)?.sample(seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::new(1.0, 10, 1.0, 10, 1).unwrap()
    }

    #[test]
    fn hermite_examples() {
        assert_eq!(hermite_poly(1, 3.5), 3.5);
        assert_eq!(hermite_poly(2, 2.0), 3.0);
        assert_eq!(hermite_poly(3, 2.0), 2.0);
        assert_eq!(hermite_poly(4, 1.5), 1.5f64.powi(4) - 6.0 * 1.5 * 1.5 + 3.0);
    }

    #[test]
    fn white_noise_is_reproducible() {
        let a = sample_white_noise(&grid(), SeedSpec::new(7, 3)).unwrap();
        let b = sample_white_noise(&grid(), SeedSpec::new(7, 3)).unwrap();
        let c = sample_white_noise(&grid(), SeedSpec::new(7, 4)).unwrap();
        assert_eq!(a.values, b.values);
        assert_ne!(a.values, c.values);
        assert_eq!(a.values.len(), 100);
    }

    #[test]
    fn white_noise_cell_law() {
        let g = grid();
        let n = 10_000;
        let (mut s1, mut s2, mut c01) = (0.0, 0.0, 0.0);
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for i in 0..n as u64 {
            let w = sample_white_noise(&g, SeedSpec::new(11, i)).unwrap();
            xs.push(w.values[0]);
            ys.push(w.values[57]);
        }
        for (&x, &y) in xs.iter().zip(&ys) {
            s1 += x;
            s2 += x * x;
            c01 += x * y;
        }
        let nf = n as f64;
        let mean = s1 / nf;
        let var = s2 / nf - mean * mean;
        assert!(mean.abs() <= 3.0 * (0.01f64 / nf).sqrt(), "mean {mean}");
        assert!((var - 0.01).abs() <= 0.05 * 0.01, "var {var}");
        // correlation of disjoint cells, SE = 1/sqrt(n)
        let corr = c01 / nf / 0.01;
        assert!(corr.abs() <= 3.0 / nf.sqrt(), "corr {corr}");
    }

    #[test]
    fn fraction_lookup() {
        let g = GridSpec::new(2.0, 8, 1.0, 4, 1).unwrap();
        assert_eq!(g.index_of_fractions(&[0.5, 0.25]).unwrap(), vec![4, 1]);
        assert!(g.index_of_fractions(&[0.1, 0.25]).is_err());
        assert_eq!(g.shape(FieldKind::Sheet), vec![9, 5]);
        assert_eq!(g.shape(FieldKind::Solution), vec![9, 4]);
        assert_eq!(g.shape(FieldKind::WhiteNoise), vec![8, 4]);
    }

    #[test]
    fn sampler_spec_serde_shape() {
        let s: SamplerSpec = serde_json::from_str(r#"{"kind":"ncl","m":64}"#).unwrap();
        assert_eq!(s, SamplerSpec::Ncl { m: 64 });
        let s: SamplerSpec = serde_json::from_str(r#"{"kind":"kernel","cells_per_step":4}"#).unwrap();
        assert!(matches!(s, SamplerSpec::Kernel(t) if t.cells_per_step == 4));
        assert!(serde_json::from_str::<SamplerSpec>(r#"{"kind":"kernel","bogus":1}"#).is_err());
    }
}
