//! Hermite sheet from a discretized kernel representation.
//!
//! Each axis carries an `s`-lattice (the integration variable of the inner
//! integral, `cells_per_step` cells per grid step) and a `y`-lattice (the
//! white-noise cells). `G[σ][a]` is the average of `(s - y)_+^{-β}` over
//! s-cell `σ` and y-cell `a`. For one sample,
//!
//! ```text
//! x_a(σ)   = Π_i G_i[σ_i][a_i] · W_a
//! Z(t)     = c · Σ_{σ < t} |σ| · q! · e_q(x(σ))
//! ```
//!
//! where `e_q` is the elementary symmetric polynomial over y-cells. Using
//! `e_q` is the same as summing over ordered q-tuples of pairwise distinct
//! cells, so the diagonal is excluded exactly. `e_q` is assembled from power
//! sums `p_k(σ) = Σ_a x_a(σ)^k` via Newton's identities, and each power sum is a
//! separable tensor contraction.
//!
//! The y-lattice is uniform (width `h`) on `[-4h, T]` and geometric to the left
//! down to `-R`. `R` is chosen so that the relative L² kernel mass lost to the
//! truncation is below `mass_tol`. The constant `c` is set from the exact
//! variance of the discrete construction at the far corner of the grid.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta;

use super::{purpose, FieldKind, FieldSample, GridSpec, SeedSpec};
use crate::error::{Error, Result};
use crate::kernels::{kernel_exponent, HermiteParams};
use crate::quad;
use crate::tensor;

/// Largest order the kernel sampler supports.
pub const MAX_ORDER: u32 = 3;

/// Resolution and truncation of the kernel sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruncationSpec {
    /// s-cells (and uniform y-cells) per grid step on every axis.
    pub cells_per_step: usize,
    /// Tolerated relative L² kernel mass outside the y-lattice.
    pub mass_tol: f64,
    /// Growth factor of the geometric y-cells left of the uniform zone.
    pub tail_ratio: f64,
    /// Maximum multiply-adds per sample.
    pub budget: f64,
}

impl Default for TruncationSpec {
    fn default() -> Self {
        Self { cells_per_step: 8, mass_tol: 1e-3, tail_ratio: 1.25, budget: 4e8 }
    }
}

impl TruncationSpec {
    fn validate(&self) -> Result<()> {
        if self.cells_per_step < 1 {
            return Err(Error::InvalidParams("cells_per_step must be >= 1".into()));
        }
        if !(self.mass_tol > 0.0 && self.mass_tol < 1.0) {
            return Err(Error::InvalidParams("mass_tol must lie in (0, 1)".into()));
        }
        if !(self.tail_ratio > 1.0) {
            return Err(Error::InvalidParams("tail_ratio must be > 1".into()));
        }
        if !(self.budget > 0.0) {
            return Err(Error::InvalidParams("budget must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Axis {
    steps: usize,
    s_cells: usize,
    h: f64,
    /// y-cell widths, left to right.
    widths: Vec<f64>,
    /// `G^k` for k = 1..=q, each `s_cells x y_cells`.
    gpow: Vec<Vec<f64>>,
    /// Left truncation point.
    reach: f64,
}

impl Axis {
    fn y_cells(&self) -> usize {
        self.widths.len()
    }
}

#[derive(Debug, Clone)]
pub struct KernelSampler {
    grid: GridSpec,
    q: u32,
    hurst: Vec<f64>,
    cps: usize,
    axes: Vec<Axis>,
    /// Per monomial of `e_q`: coefficient and per-axis `(n+1) x (n+1)` tables of
    /// summed cell covariances.
    cov_terms: Vec<(f64, Vec<Vec<f64>>)>,
    raw_variance: f64,
    scale: f64,
    cost: f64,
}

impl KernelSampler {
    pub fn new(params: &HermiteParams, grid: &GridSpec, trunc: &TruncationSpec) -> Result<Self> {
        grid.validate()?;
        trunc.validate()?;
        params.ensure_valid()?;
        if params.d != grid.d {
            return Err(Error::GridMismatch("parameter and grid dimensions differ".into()));
        }
        if params.q > MAX_ORDER {
            return Err(Error::InvalidParams(format!(
                "kernel sampler supports q <= {MAX_ORDER}, got q = {}",
                params.q
            )));
        }
        let q = params.q;
        let ndim = grid.d + 1;
        let axis_tol = trunc.mass_tol / ndim as f64;
        let axes = grid
            .steps()
            .iter()
            .zip(grid.extents())
            .zip(&params.hurst)
            .map(|((&steps, ext), &h)| {
                let b = kernel_exponent(h, q)?;
                Ok(build_axis(ext, steps, trunc.cells_per_step, b, q, axis_tol, trunc.tail_ratio))
            })
            .collect::<Result<Vec<_>>>()?;

        let cost = contraction_cost(&axes) * q as f64;
        if cost > trunc.budget {
            return Err(Error::Budget {
                cost,
                budget: trunc.budget,
                hint: "reduce cells_per_step or the grid size, raise tail_ratio or mass_tol, \
                       or raise the budget"
                    .into(),
            });
        }

        let cov_terms = newton_monomials(q)
            .into_iter()
            .map(|(coef, powers)| {
                let tables = axes.iter().map(|ax| covariance_table(ax, &powers, trunc.cells_per_step)).collect();
                (coef, tables)
            })
            .collect();

        let mut s = Self {
            grid: grid.clone(),
            q,
            hurst: params.hurst.clone(),
            cps: trunc.cells_per_step,
            axes,
            cov_terms,
            raw_variance: 0.0,
            scale: 1.0,
            cost,
        };
        let corner = grid.steps();
        s.raw_variance = s.raw_covariance(&corner, &corner);
        let target: f64 = grid.extents().iter().zip(&params.hurst).map(|(t, h)| t.powf(2.0 * h)).product();
        if !(s.raw_variance > 0.0) {
            return Err(Error::InvalidParams("discrete kernel has zero variance".into()));
        }
        s.scale = (target / s.raw_variance).sqrt();
        Ok(s)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Multiply-adds spent per sample in the tensor contractions.
    pub fn cost_per_sample(&self) -> f64 {
        self.cost
    }

    /// Left truncation point of the y-lattice on each axis.
    pub fn truncation_reach(&self) -> Vec<f64> {
        self.axes.iter().map(|a| a.reach).collect()
    }

    /// Calibration factor applied to the discrete construction.
    pub fn normalization(&self) -> f64 {
        self.scale
    }

    fn raw_covariance(&self, a: &[usize], b: &[usize]) -> f64 {
        let qf = factorial(self.q);
        let sum: f64 = self
            .cov_terms
            .iter()
            .map(|(coef, tables)| {
                coef * tables
                    .iter()
                    .zip(&self.axes)
                    .enumerate()
                    .map(|(i, (t, ax))| t[a[i] * (ax.steps + 1) + b[i]])
                    .product::<f64>()
            })
            .sum();
        qf * qf * sum
    }

    /// Exact covariance of the normalized sampler between two lattice points.
    pub fn discrete_covariance(&self, a: &[usize], b: &[usize]) -> f64 {
        self.scale * self.scale * self.raw_covariance(a, b)
    }

    pub fn sample(&self, seed: SeedSpec) -> FieldSample {
        let mut rng = seed.rng(purpose::KERNEL);
        let y_shape: Vec<usize> = self.axes.iter().map(|a| a.y_cells()).collect();
        let sqrt_w: Vec<Vec<f64>> = self.axes.iter().map(|a| a.widths.iter().map(|w| w.sqrt()).collect()).collect();
        let n_y: usize = y_shape.iter().product();
        let mut idx = vec![0; y_shape.len()];
        let noise: Vec<f64> = (0..n_y)
            .map(|f| {
                tensor::unravel(f, &y_shape, &mut idx);
                let sd: f64 = idx.iter().zip(&sqrt_w).map(|(&i, w)| w[i]).product();
                sd * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();

        let q = self.q as usize;
        let mut sums = Vec::with_capacity(q);
        for k in 1..=q {
            let mut data: Vec<f64> = noise.iter().map(|w| w.powi(k as i32)).collect();
            let mut shape = y_shape.clone();
            for (axis, ax) in self.axes.iter().enumerate() {
                let (d, s) = tensor::mode_product(&data, &shape, axis, &ax.gpow[k - 1], ax.s_cells);
                data = d;
                shape = s;
            }
            sums.push(data);
        }
        let s_shape: Vec<usize> = self.axes.iter().map(|a| a.s_cells).collect();
        let cell_vol: f64 = self.axes.iter().map(|a| a.h).product();
        let factor = self.scale * cell_vol * factorial(self.q);
        let mut integrand = elementary_symmetric(&sums, q);
        for v in integrand.iter_mut() {
            *v *= factor;
        }
        for axis in 0..s_shape.len() {
            tensor::prefix_sum(&mut integrand, &s_shape, axis);
        }

        let full = self.grid.shape(FieldKind::Sheet);
        let s_strides = tensor::strides(&s_shape);
        let mut values = vec![0.0; full.iter().product()];
        let mut li = vec![0; full.len()];
        for (f, v) in values.iter_mut().enumerate() {
            tensor::unravel(f, &full, &mut li);
            if li.contains(&0) {
                continue;
            }
            let pos: usize = li.iter().zip(&s_strides).map(|(&k, &st)| (k * self.cps - 1) * st).sum();
            *v = integrand[pos];
        }
        FieldSample {
            kind: FieldKind::Sheet,
            grid: self.grid.clone(),
            q: self.q,
            hurst: self.hurst.clone(),
            seed,
            values,
        }
    }
}

fn factorial(q: u32) -> f64 {
    (1..=q).map(|k| k as f64).product()
}

/// `e_q` from power sums `p_1..p_q` (elementwise).
fn elementary_symmetric(p: &[Vec<f64>], q: usize) -> Vec<f64> {
    let n = p[0].len();
    let mut e = vec![vec![1.0; n]];
    for k in 1..=q {
        let mut ek = vec![0.0; n];
        for i in 1..=k {
            let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
            for ((o, a), b) in ek.iter_mut().zip(&e[k - i]).zip(&p[i - 1]) {
                *o += sign * a * b;
            }
        }
        for o in ek.iter_mut() {
            *o /= k as f64;
        }
        e.push(ek);
    }
    e.pop().unwrap()
}

/// `e_q` as a polynomial in power sums: `(coefficient, exponents of p_1..p_q)`.
fn newton_monomials(q: u32) -> Vec<(f64, Vec<u32>)> {
    match q {
        1 => vec![(1.0, vec![1])],
        2 => vec![(0.5, vec![2, 0]), (-0.5, vec![0, 1])],
        3 => vec![
            (1.0 / 6.0, vec![3, 0, 0]),
            (-0.5, vec![1, 1, 0]),
            (1.0 / 3.0, vec![0, 0, 1]),
        ],
        _ => unreachable!("order checked by the caller"),
    }
}

fn build_axis(ext: f64, steps: usize, cps: usize, b: f64, q: u32, tol: f64, ratio: f64) -> Axis {
    let s_cells = steps * cps;
    let h = ext / s_cells as f64;
    let reach = truncation_reach(ext, b, q, tol).max(8.0 * h);

    let mut edges: Vec<f64> = (0..=s_cells + 4).map(|k| (k as f64 - 4.0) * h).collect();
    *edges.last_mut().unwrap() = ext;
    let mut left = Vec::new();
    let (mut w, mut x) = (h, -4.0 * h);
    while x > -reach {
        w *= ratio;
        x -= w;
        left.push(x);
    }
    left.reverse();
    left.extend(edges);
    let edges = left;
    let widths: Vec<f64> = edges.windows(2).map(|e| e[1] - e[0]).collect();

    let rule = quad::gauss_legendre(8);
    let ny = widths.len();
    let mut g = vec![0.0; s_cells * ny];
    for sig in 0..s_cells {
        let (s0, s1) = (sig as f64 * h, (sig + 1) as f64 * h);
        for a in 0..ny {
            let (y0, y1) = (edges[a], edges[a + 1]);
            if y0 >= s1 - 1e-12 * h {
                continue;
            }
            let avg = if y1 <= s0 - 0.5 * h {
                // separated: closed form in y, Gauss-Legendre in s
                let inner = |s: f64| ((s - y0).powf(1.0 - b) - (s - y1).powf(1.0 - b)) / (1.0 - b);
                quad::integrate(inner, s0, s1, &rule) / (h * (y1 - y0))
            } else {
                let f2 = |u: f64| if u > 0.0 { u.powf(2.0 - b) / ((1.0 - b) * (2.0 - b)) } else { 0.0 };
                (f2(s1 - y0) + f2(s0 - y1) - f2(s1 - y1) - f2(s0 - y0)) / (h * (y1 - y0))
            };
            g[sig * ny + a] = avg;
        }
    }
    let gpow = (1..=q as i32).map(|k| g.iter().map(|v| v.powi(k)).collect()).collect();
    Axis { steps, s_cells, h, widths, gpow, reach }
}

/// Smallest `R` whose neglected relative kernel mass is below `tol`.
///
/// For one axis the y-integrated kernel product is `B |s - s'|^{1-2β}` with
/// `B = Beta(1-β, 2β-1)`; cutting at `-R` removes about `R^{1-2β}/(2β-1)` from it,
/// so the relative loss of the order-q mass is about
/// `q δ(R) ∫∫ C^{q-1} / ∫∫ C^q`.
pub(crate) fn truncation_reach(ext: f64, b: f64, q: u32, tol: f64) -> f64 {
    let bb = beta(1.0 - b, 2.0 * b - 1.0);
    let mass = |j: u32| {
        let g = j as f64 * (1.0 - 2.0 * b);
        bb.powi(j as i32) * 2.0 * ext.powf(g + 2.0) / ((g + 1.0) * (g + 2.0))
    };
    let delta = tol * mass(q) / (q as f64 * mass(q - 1));
    (delta * (2.0 * b - 1.0)).powf(1.0 / (1.0 - 2.0 * b))
}

fn contraction_cost(axes: &[Axis]) -> f64 {
    let mut shape: Vec<f64> = axes.iter().map(|a| a.y_cells() as f64).collect();
    let mut cost = 0.0;
    for (i, a) in axes.iter().enumerate() {
        let others: f64 = shape.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| v).product();
        cost += others * a.s_cells as f64 * a.y_cells() as f64;
        shape[i] = a.s_cells as f64;
    }
    cost
}

/// Per-axis table `T[a][b] = h² Σ_{σ < a·cps, σ' < b·cps} Π_k P_k(σ,σ')^{m_k}`
/// with `P_k(σ,σ') = Σ_y (G(σ,y) G(σ',y) w_y)^k`.
fn covariance_table(ax: &Axis, powers: &[u32], cps: usize) -> Vec<f64> {
    let (ns, ny) = (ax.s_cells, ax.y_cells());
    let mut m = vec![1.0; ns * ns];
    for (k, &pw) in powers.iter().enumerate() {
        if pw == 0 {
            continue;
        }
        let gk = &ax.gpow[k];
        let wk: Vec<f64> = ax.widths.iter().map(|w| w.powi(k as i32 + 1)).collect();
        for s in 0..ns {
            for t in 0..=s {
                let rs = &gk[s * ny..(s + 1) * ny];
                let rt = &gk[t * ny..(t + 1) * ny];
                let p: f64 = rs.iter().zip(rt).zip(&wk).map(|((a, b), w)| a * b * w).sum();
                let v = p.powi(pw as i32);
                m[s * ns + t] *= v;
                if t != s {
                    m[t * ns + s] *= v;
                }
            }
        }
    }
    let h2 = ax.h * ax.h;
    for v in m.iter_mut() {
        *v *= h2;
    }
    let shape = [ns, ns];
    tensor::prefix_sum(&mut m, &shape, 0);
    tensor::prefix_sum(&mut m, &shape, 1);
    let n = ax.steps;
    let mut table = vec![0.0; (n + 1) * (n + 1)];
    for a in 1..=n {
        for b in 1..=n {
            table[a * (n + 1) + b] = m[(a * cps - 1) * ns + b * cps - 1];
        }
    }
    table
}
