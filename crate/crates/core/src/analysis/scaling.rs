//! Distributional scaling checks by two-sample KS tests at fixed probe points.

use serde::{Deserialize, Serialize};

use super::ks::{ks_two_sample, KsResult};
use crate::error::{Error, Result};
use crate::kernels::{HermiteParams, SigmaSpec};
use crate::noise::{FieldSample, GridSpec, SamplerSpec, SeedSpec, SheetSampler};
use crate::solver::{solve_ensemble, SolverConfig};

/// Probe points as fractions of `(t_max, L)`; spatial fractions repeat for d > 1.
pub const SCALING_PROBE: [[f64; 2]; 5] = [[0.25, 0.25], [0.5, 0.5], [0.75, 0.75], [0.75, 0.25], [0.25, 0.75]];

/// Family-wise level of the scaling tests, split evenly across probe points.
pub const FAMILY_LEVEL: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub lambda: Vec<f64>,
    pub exponents: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub tests: Vec<KsResult>,
    pub threshold: f64,
    pub pass: bool,
}

impl ScalingReport {
    fn assemble(lambda: Vec<f64>, exponents: Vec<f64>, points: Vec<Vec<f64>>, tests: Vec<KsResult>) -> Self {
        let threshold = FAMILY_LEVEL / tests.len() as f64;
        let pass = tests.iter().all(|t| t.p_value > threshold);
        Self { lambda, exponents, points, tests, threshold, pass }
    }

    pub fn min_p_value(&self) -> f64 {
        self.tests.iter().map(|t| t.p_value).fold(1.0, f64::min)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("point,statistic,p_value,threshold\n");
        for (p, t) in self.points.iter().zip(&self.tests) {
            let coords: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            out.push_str(&format!("{},{},{},{}\n", coords.join(" "), t.statistic, t.p_value, self.threshold));
        }
        out
    }
}

fn probe_fractions(d: usize) -> Vec<Vec<f64>> {
    SCALING_PROBE
        .iter()
        .map(|&[t, x]| std::iter::once(t).chain(std::iter::repeat_n(x, d)).collect())
        .collect()
}

fn values_at(ensemble: &[FieldSample], grid: &GridSpec, frac: &[f64], factor: f64) -> Result<Vec<f64>> {
    let idx = grid.index_of_fractions(frac)?;
    Ok(ensemble.iter().map(|f| factor * f.at(&idx)).collect())
}

/// Compares `Z(λ·)` on the scaled grid against `λ^e Z(·)` at the probe points.
///
/// `exponents` defaults to the Hurst vector (self-similarity). The two
/// ensembles use disjoint stream ranges, so they are independent.
pub fn sheet_scaling_test(
    params: &HermiteParams,
    grid: &GridSpec,
    lambda: &[f64],
    exponents: Option<&[f64]>,
    spec: &SamplerSpec,
    n: usize,
    seed: SeedSpec,
) -> Result<ScalingReport> {
    if n < 2 {
        return Err(Error::TooFew { what: "samples", needed: 2, got: n });
    }
    let e = exponents.map(<[f64]>::to_vec).unwrap_or_else(|| params.hurst.clone());
    if e.len() != grid.d + 1 {
        return Err(Error::InvalidParams("scaling exponents must have d+1 entries".into()));
    }
    let scaled = grid.scaled(lambda)?;
    let a = SheetSampler::new(params, grid, spec)?.ensemble(seed, n);
    let b = SheetSampler::new(params, &scaled, spec)?.ensemble(seed.offset(n as u64), n);
    let factor: f64 = lambda.iter().zip(&e).map(|(l, e)| l.powf(-e)).product();
    let points = probe_fractions(grid.d);
    let tests = points
        .iter()
        .map(|p| Ok(ks_two_sample(&values_at(&a, grid, p, 1.0)?, &values_at(&b, &scaled, p, factor)?)))
        .collect::<Result<_>>()?;
    Ok(ScalingReport::assemble(lambda.to_vec(), e, points, tests))
}

/// Exponents `(a, b, c)` of the solution rescaling `λ^a u(λ^b t, λ^c x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingExponents {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// Solves on the base domain and on the domain stretched by `(λ^b, λ^c)` with
/// initial data `λ^{-a} u0`, then compares `λ^a u_scaled` with `u` at the probe
/// points. Only meaningful when `σ` and the viscosity are scale-compatible;
/// otherwise the report simply records the mismatch.
#[allow(clippy::too_many_arguments)]
pub fn solution_scaling_probe(
    params: &HermiteParams,
    sigma: &SigmaSpec,
    u0: &[f64],
    exponents: ScalingExponents,
    lambda: f64,
    config: &SolverConfig,
    spec: &SamplerSpec,
    n: usize,
    seed: SeedSpec,
) -> Result<ScalingReport> {
    if n < 2 {
        return Err(Error::TooFew { what: "samples", needed: 2, got: n });
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidParams("lambda must be > 0".into()));
    }
    let grid = &config.domain;
    let ScalingExponents { a, b, c } = exponents;
    let mut lam = vec![lambda.powf(b)];
    lam.extend(std::iter::repeat_n(lambda.powf(c), grid.d));
    let scaled = grid.scaled(&lam)?;
    let mut config_b = config.clone();
    config_b.domain = scaled.clone();
    let u0_b: Vec<f64> = u0.iter().map(|v| v * lambda.powf(-a)).collect();

    let run = |cfg: &SolverConfig, init: &[f64], s: SeedSpec| -> Result<Vec<FieldSample>> {
        let sampler = SheetSampler::new(params, &cfg.domain, spec)?;
        Ok(solve_ensemble(params, sigma, init, cfg, &sampler, s, n)?
            .into_iter()
            .map(|r| r.field)
            .collect())
    };
    let ua = run(config, u0, seed)?;
    let ub = run(&config_b, &u0_b, seed.offset(n as u64))?;
    let points = probe_fractions(grid.d);
    let factor = lambda.powf(a);
    let tests = points
        .iter()
        .map(|p| Ok(ks_two_sample(&values_at(&ua, grid, p, 1.0)?, &values_at(&ub, &scaled, p, factor)?)))
        .collect::<Result<_>>()?;
    let mut e = vec![a, b];
    e.extend(std::iter::repeat_n(c, grid.d));
    Ok(ScalingReport::assemble(lam, e, points, tests))
}
