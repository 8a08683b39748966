//! Mild-form solver on a periodic 1-D domain.
//!
//! With `E_k = exp(-ν k² Δt)` and `φ_k = (1 - E_k)/(ν k²)` the exact integral of
//! the heat factor over one step, one step of the mild form reads, in Fourier
//! space,
//!
//! ```text
//! û_{n+1} = E_k (û_n + f̂_n) - i k φ_k (u_n² / 2)^
//! f_n     = σ(t_n, x, u_n) □Z_n / Δx
//! ```
//!
//! The nonlinear history integral uses the left-endpoint value of `u²/2` on
//! each panel against the exact `∂ₓG` kernel, and the stochastic convolution
//! freezes its integrand at the start of each step. Picard iteration applies
//! this recursion with the right-hand sides taken from the previous iterate, so
//! its fixed point is the trajectory that [`step_solve`] marches directly.
//!
//! Sign convention: the nonlinear term enters as `-∫∫ ∂ₓG u²/2`.

mod cole_hopf;
mod spectral;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{HermiteParams, SigmaSpec};
use crate::noise::{FieldKind, FieldSample, GridSpec, SeedSpec, SheetSampler};
use crate::stochint::StepFunction;

pub use cole_hopf::{cole_hopf_exact, ColeHopf};
use spectral::Spectral;

/// Records which sign of the nonlinear term produced an artifact.
pub const SIGN_CONVENTION: &str =
    "u(t) = G_t*u0 - int_0^t dx G_{t-s} * (u^2/2) ds + int_0^t G_{t-s} * sigma(u) dZ (mild-solution sign)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Picard,
    Step,
}

/// First Picard iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuess {
    /// `u_0(t) = G_t * u0`
    #[default]
    Heat,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub picard_tol: f64,
    pub max_iters: usize,
    pub scheme: Scheme,
    pub dealias: bool,
    pub initial_guess: InitialGuess,
    pub domain: GridSpec,
}

impl SolverConfig {
    pub fn new(domain: GridSpec) -> Self {
        Self {
            picard_tol: 1e-10,
            max_iters: 50,
            scheme: Scheme::Picard,
            dealias: true,
            initial_guess: InitialGuess::Heat,
            domain,
        }
    }

    fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        if !(self.picard_tol > 0.0) {
            return Err(Error::InvalidParams("picard_tol must be > 0".into()));
        }
        if self.max_iters < 1 {
            return Err(Error::InvalidParams("max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub field: FieldSample,
    /// Sup-norm distances between successive Picard iterates (empty for stepping).
    pub iter_distances: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

/// Checks the periodic truncation `L >= 8 sqrt(ν t_max)`.
pub fn check_domain(grid: &GridSpec, nu: f64) -> Result<()> {
    if grid.d != 1 {
        return Err(Error::UnsupportedDimension(grid.d));
    }
    let min_l = 8.0 * (nu * grid.t_max).sqrt();
    if grid.length < min_l {
        return Err(Error::InvalidGrid(format!(
            "period L = {} is below 8 sqrt(nu t_max) = {min_l}; heat-kernel wrap-around would exceed 1e-8",
            grid.length
        )));
    }
    Ok(())
}

/// `exp(ν ∂ₓ² dt) u` on the periodic domain of length `length`.
pub fn heat_semigroup_apply(u: &[f64], dt: f64, nu: f64, length: f64) -> Result<Vec<f64>> {
    if !(dt >= 0.0) {
        return Err(Error::Domain(format!("heat step needs dt >= 0, got {dt}")));
    }
    if dt == 0.0 || u.is_empty() {
        return Ok(u.to_vec());
    }
    let sp = Spectral::new(u.len(), length);
    let mut hat = sp.forward(u);
    for (c, k) in hat.iter_mut().zip(&sp.k) {
        *c *= (-nu * k * k * dt).exp();
    }
    Ok(sp.inverse(hat))
}

struct Stepper {
    sp: Spectral,
    decay: Vec<f64>,
    /// `-i k φ_k`, zero where dealiased or at Nyquist.
    flux: Vec<Complex64>,
    dx: f64,
    dt: f64,
}

impl Stepper {
    fn new(grid: &GridSpec, nu: f64, dealias: bool) -> Self {
        let sp = Spectral::new(grid.n_x, grid.length);
        let dt = grid.dt();
        let cut = grid.n_x as i64 / 3;
        let decay: Vec<f64> = sp.k.iter().map(|k| (-nu * k * k * dt).exp()).collect();
        let flux = (0..sp.n)
            .map(|j| {
                let k = sp.k[j];
                if k == 0.0 || sp.is_nyquist(j) || (dealias && sp.mode(j).abs() > cut) {
                    return Complex64::new(0.0, 0.0);
                }
                let phi = -(-nu * k * k * dt).exp_m1() / (nu * k * k);
                Complex64::new(0.0, -k * phi)
            })
            .collect();
        Self { sp, decay, flux, dx: grid.dx(), dt }
    }

    fn forcing(&self, sigma: &SigmaSpec, u: &[f64], inc: Option<&[f64]>, t: f64) -> Option<Vec<f64>> {
        let inc = inc?;
        Some(
            u.iter()
                .zip(inc)
                .enumerate()
                .map(|(j, (&v, &dz))| sigma.eval(t, j as f64 * self.dx, v) * dz / self.dx)
                .collect(),
        )
    }

    /// One step of the recursion from level value `v`, with right-hand sides
    /// evaluated at `rhs`.
    fn advance(&self, v: &[f64], rhs: &[f64], sigma: &SigmaSpec, inc: Option<&[f64]>, t: f64) -> Vec<f64> {
        let mut vh = match self.forcing(sigma, rhs, inc, t) {
            Some(f) => self.sp.forward(&v.iter().zip(&f).map(|(a, b)| a + b).collect::<Vec<_>>()),
            None => self.sp.forward(v),
        };
        let sq: Vec<f64> = rhs.iter().map(|x| 0.5 * x * x).collect();
        let nh = self.sp.forward(&sq);
        for j in 0..self.sp.n {
            vh[j] = vh[j] * self.decay[j] + self.flux[j] * nh[j];
        }
        self.sp.inverse(vh)
    }
}

/// Sheet increments per time step, or `None` when the noise term vanishes.
fn increments(sigma: &SigmaSpec, sheet: Option<&FieldSample>, grid: &GridSpec) -> Result<Option<Vec<Vec<f64>>>> {
    let Some(sheet) = sheet else {
        if sigma.is_zero() {
            return Ok(None);
        }
        return Err(Error::InvalidParams("a nonzero sigma needs a noise sheet".into()));
    };
    sheet.expect_kind(FieldKind::Sheet)?;
    if sheet.grid != *grid {
        return Err(Error::GridMismatch("sheet grid differs from the solver domain".into()));
    }
    if sigma.is_zero() {
        return Ok(None);
    }
    let inc = sheet.cell_increments()?;
    Ok(Some(inc.chunks(grid.n_x).map(|c| c.to_vec()).collect()))
}

fn check_inputs(params: &HermiteParams, sigma: &SigmaSpec, u0: &[f64], config: &SolverConfig) -> Result<()> {
    config.validate()?;
    params.ensure_valid()?;
    if params.d != 1 {
        return Err(Error::UnsupportedDimension(params.d));
    }
    check_domain(&config.domain, params.nu)?;
    sigma.validate()?;
    if u0.len() != config.domain.n_x {
        return Err(Error::GridMismatch(format!("u0 has {} points, grid has n_x = {}", u0.len(), config.domain.n_x)));
    }
    if u0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParams("u0 must be finite".into()));
    }
    Ok(())
}

fn cfl_warning(traj: &[Vec<f64>], dt: f64, dx: f64) -> Option<String> {
    let umax = traj.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let c = umax * dt / dx;
    (c > 1.0).then(|| format!("CFL number max|u| dt/dx = {c:.3} exceeds 1; the explicit nonlinear step may be unstable"))
}

fn to_field(params: &HermiteParams, grid: &GridSpec, seed: SeedSpec, traj: Vec<Vec<f64>>) -> FieldSample {
    FieldSample {
        kind: FieldKind::Solution,
        grid: grid.clone(),
        q: params.q,
        hurst: params.hurst.clone(),
        seed,
        values: traj.into_iter().flatten().collect(),
    }
}

/// Picard iteration on the whole trajectory.
pub fn picard_solve(
    params: &HermiteParams,
    sigma: &SigmaSpec,
    u0: &[f64],
    sheet: Option<&FieldSample>,
    config: &SolverConfig,
) -> Result<SolveResult> {
    check_inputs(params, sigma, u0, config)?;
    let grid = &config.domain;
    let inc = increments(sigma, sheet, grid)?;
    let st = Stepper::new(grid, params.nu, config.dealias);
    let nt = grid.n_t;

    let mut old: Vec<Vec<f64>> = match config.initial_guess {
        InitialGuess::Zero => vec![vec![0.0; grid.n_x]; nt + 1],
        InitialGuess::Heat => (0..=nt)
            .map(|n| heat_semigroup_apply(u0, n as f64 * st.dt, params.nu, grid.length))
            .collect::<Result<_>>()?,
    };
    let mut distances = Vec::new();
    let mut converged = false;
    for _ in 0..config.max_iters {
        let mut new = Vec::with_capacity(nt + 1);
        new.push(u0.to_vec());
        for n in 0..nt {
            let next = st.advance(&new[n], &old[n], sigma, inc.as_ref().map(|v| v[n].as_slice()), n as f64 * st.dt);
            new.push(next);
        }
        let dist = new
            .iter()
            .flatten()
            .zip(old.iter().flatten())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        distances.push(dist);
        old = new;
        if !dist.is_finite() {
            break;
        }
        if dist <= config.picard_tol {
            converged = true;
            break;
        }
    }
    let mut warnings = Vec::new();
    warnings.extend(cfl_warning(&old, st.dt, st.dx));
    let seed = sheet.map(|s| s.seed).unwrap_or_default();
    Ok(SolveResult {
        iterations: distances.len(),
        field: to_field(params, grid, seed, old),
        iter_distances: distances,
        converged,
        warnings,
    })
}

/// Exponential-Euler march of the same recursion.
pub fn step_solve(
    params: &HermiteParams,
    sigma: &SigmaSpec,
    u0: &[f64],
    sheet: Option<&FieldSample>,
    config: &SolverConfig,
) -> Result<SolveResult> {
    check_inputs(params, sigma, u0, config)?;
    let grid = &config.domain;
    let inc = increments(sigma, sheet, grid)?;
    let st = Stepper::new(grid, params.nu, config.dealias);
    let mut traj = Vec::with_capacity(grid.n_t + 1);
    traj.push(u0.to_vec());
    for n in 0..grid.n_t {
        let cur = &traj[n];
        let next = st.advance(cur, cur, sigma, inc.as_ref().map(|v| v[n].as_slice()), n as f64 * st.dt);
        traj.push(next);
    }
    let finite = traj.iter().flatten().all(|v| v.is_finite());
    let mut warnings = Vec::new();
    warnings.extend(cfl_warning(&traj, st.dt, st.dx));
    let seed = sheet.map(|s| s.seed).unwrap_or_default();
    Ok(SolveResult {
        field: to_field(params, grid, seed, traj),
        iter_distances: Vec::new(),
        converged: finite,
        iterations: 1,
        warnings,
    })
}

/// Dispatches on `config.scheme`.
pub fn solve(
    params: &HermiteParams,
    sigma: &SigmaSpec,
    u0: &[f64],
    sheet: Option<&FieldSample>,
    config: &SolverConfig,
) -> Result<SolveResult> {
    match config.scheme {
        Scheme::Picard => picard_solve(params, sigma, u0, sheet, config),
        Scheme::Step => step_solve(params, sigma, u0, sheet, config),
    }
}

fn history_profiles<'a>(u_history: &'a [f64], grid: &GridSpec, t_index: usize) -> Result<Vec<&'a [f64]>> {
    if grid.d != 1 {
        return Err(Error::UnsupportedDimension(grid.d));
    }
    if u_history.len() < t_index * grid.n_x {
        return Err(Error::GridMismatch(format!("history holds fewer than {t_index} time levels")));
    }
    Ok(u_history.chunks(grid.n_x).take(t_index).collect())
}

/// `-∫_0^{t_n} ∂ₓG_{t_n-s} * (u(s)²/2) ds` with the left-endpoint rule in `s`;
/// `u_history` holds levels `0..t_index` row-major.
pub fn nonlinear_increment(
    u_history: &[f64],
    t_index: usize,
    nu: f64,
    grid: &GridSpec,
    dealias: bool,
) -> Result<Vec<f64>> {
    let levels = history_profiles(u_history, grid, t_index)?;
    let st = Stepper::new(grid, nu, dealias);
    let mut acc = vec![Complex64::new(0.0, 0.0); grid.n_x];
    for (j, u) in levels.iter().enumerate() {
        let sq: Vec<f64> = u.iter().map(|x| 0.5 * x * x).collect();
        let nh = st.sp.forward(&sq);
        let lag = (t_index - j - 1) as i32;
        for m in 0..grid.n_x {
            acc[m] += st.flux[m] * nh[m] * st.decay[m].powi(lag);
        }
    }
    Ok(st.sp.inverse(acc))
}

/// `Σ_{j < t_index} G_{t_n - t_j} * (σ(u_j) □Z_j / Δx)` with frozen integrands.
pub fn stochastic_increment(
    sigma: &SigmaSpec,
    u_history: &[f64],
    sheet: &FieldSample,
    t_index: usize,
    nu: f64,
) -> Result<Vec<f64>> {
    let grid = &sheet.grid;
    let levels = history_profiles(u_history, grid, t_index)?;
    let Some(inc) = increments(sigma, Some(sheet), grid)? else {
        return Ok(vec![0.0; grid.n_x]);
    };
    let st = Stepper::new(grid, nu, false);
    let mut acc = vec![Complex64::new(0.0, 0.0); grid.n_x];
    for (j, u) in levels.iter().enumerate() {
        let f = st.forcing(sigma, u, Some(&inc[j]), j as f64 * st.dt).unwrap();
        let fh = st.sp.forward(&f);
        let lag = (t_index - j) as i32;
        for m in 0..grid.n_x {
            acc[m] += fh[m] * st.decay[m].powi(lag);
        }
    }
    Ok(st.sp.inverse(acc))
}

/// The deterministic integrand that [`stochastic_increment`] applies (with
/// `σ ≡ 1`) at lattice point `(t_index, x_index)`: cell `(n, j)` carries the
/// discrete periodic heat kernel from `x_j` to `x_index` over `t_index - n` steps,
/// divided by `Δx`. Cells at or after `t_index` are zero.
pub fn frozen_kernel_step_function(grid: &GridSpec, t_index: usize, x_index: usize, nu: f64) -> Result<StepFunction> {
    if grid.d != 1 {
        return Err(Error::UnsupportedDimension(grid.d));
    }
    if t_index > grid.n_t || x_index >= grid.n_x {
        return Err(Error::InvalidGrid("kernel evaluation point outside the grid".into()));
    }
    let mut coef = vec![0.0; grid.n_t * grid.n_x];
    let mut delta = vec![0.0; grid.n_x];
    delta[x_index] = 1.0 / grid.dx();
    for n in 0..t_index {
        // symmetric kernel: G(x_index - x_j) = (heat applied to δ_{x_index})(x_j)
        let row = heat_semigroup_apply(&delta, (t_index - n) as f64 * grid.dt(), nu, grid.length)?;
        coef[n * grid.n_x..(n + 1) * grid.n_x].copy_from_slice(&row);
    }
    StepFunction::new(grid, coef)
}

/// Solves on `n` independent sheets (streams `seed.stream_index + i`), in index order.
pub fn solve_ensemble(
    params: &HermiteParams,
    sigma: &SigmaSpec,
    u0: &[f64],
    config: &SolverConfig,
    sampler: &SheetSampler,
    seed: SeedSpec,
    n: usize,
) -> Result<Vec<SolveResult>> {
    if sampler.grid() != &config.domain {
        return Err(Error::GridMismatch("sampler grid differs from the solver domain".into()));
    }
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let sheet = sampler.sample(seed.offset(i));
            solve(params, sigma, u0, Some(&sheet), config)
        })
        .collect()
}
