//! Ensemble statistics: pointwise moments and their growth over horizons,
//! Hölder exponent fits, and scaling tests.

mod covariance;
mod ks;
mod scaling;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::HermiteParams;
use crate::noise::{FieldKind, FieldSample, GridSpec};

pub use covariance::{covariance_check, CovariancePair, CovarianceReport, COVARIANCE_PROBE};
pub use ks::{ks_tail, ks_two_sample, KsResult};
pub use scaling::{
    sheet_scaling_test, solution_scaling_probe, ScalingExponents, ScalingReport, SCALING_PROBE,
};

/// Delete-group jackknife groups used by the Hölder fits.
pub const JACKKNIFE_GROUPS: usize = 20;

fn common_grid(ensemble: &[FieldSample]) -> Result<(&GridSpec, FieldKind)> {
    let first = ensemble.first().ok_or(Error::TooFew { what: "samples", needed: 1, got: 0 })?;
    for f in ensemble {
        if f.grid != first.grid || f.kind != first.kind {
            return Err(Error::GridMismatch("ensemble members live on different grids".into()));
        }
    }
    Ok((&first.grid, first.kind))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentField {
    pub p: f64,
    /// Per-point `E|u|^p` estimates, row-major like the fields.
    pub mean: Vec<f64>,
    /// Jackknife standard errors (for a sample mean these equal `s/√n`).
    pub se: Vec<f64>,
    pub sup: f64,
    pub sup_se: f64,
    pub sup_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub grid: GridSpec,
    pub kind: FieldKind,
    pub n: usize,
    pub moments: Vec<MomentField>,
}

impl EnsembleStats {
    pub fn moment(&self, p: f64) -> Option<&MomentField> {
        self.moments.iter().find(|m| m.p == p)
    }

    /// Largest `E|u|^p` over lattice points with `t <= horizon`, with its SE.
    pub fn sup_up_to(&self, p: f64, horizon: f64) -> Option<(f64, f64)> {
        let m = self.moment(p)?;
        let shape = self.grid.shape(self.kind);
        let per_level: usize = shape[1..].iter().product();
        let dt = self.grid.dt();
        let levels = shape[0].min(((horizon / dt) + 1e-9).floor() as usize + 1);
        let mut best = (f64::NEG_INFINITY, 0.0);
        for i in 0..levels * per_level {
            if m.mean[i] > best.0 {
                best = (m.mean[i], m.se[i]);
            }
        }
        Some(best)
    }
}

/// Pointwise `E|u|^p` with standard errors, plus the sup over the grid.
pub fn empirical_moments(ensemble: &[FieldSample], p_list: &[f64]) -> Result<EnsembleStats> {
    let (grid, kind) = common_grid(ensemble)?;
    let n = ensemble.len();
    if n < 2 {
        return Err(Error::TooFew { what: "samples", needed: 2, got: n });
    }
    let len = ensemble[0].values.len();
    let nf = n as f64;
    let moments = p_list
        .iter()
        .map(|&p| {
            let mut mean = vec![0.0; len];
            for f in ensemble {
                for (m, v) in mean.iter_mut().zip(&f.values) {
                    *m += v.abs().powf(p);
                }
            }
            mean.iter_mut().for_each(|m| *m /= nf);
            let mut ss = vec![0.0; len];
            for f in ensemble {
                for ((s, v), m) in ss.iter_mut().zip(&f.values).zip(&mean) {
                    *s += (v.abs().powf(p) - m).powi(2);
                }
            }
            let se: Vec<f64> = ss.iter().map(|s| (s / (nf - 1.0) / nf).sqrt()).collect();
            let (sup_index, &sup) = mean
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .expect("non-empty field");
            MomentField { p, sup, sup_se: se[sup_index], sup_index, mean, se }
        })
        .collect();
    Ok(EnsembleStats { grid: grid.clone(), kind, n, moments })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub p: f64,
    pub horizons: Vec<f64>,
    pub sup_moments: Vec<f64>,
    pub sup_se: Vec<f64>,
    /// Least-squares fit `log M = log_c + rate * T`.
    pub rate: f64,
    pub log_c: f64,
    /// Slopes of `log M` between consecutive horizons.
    pub slopes: Vec<f64>,
    pub super_exponential: bool,
    pub finite: bool,
    pub pass: bool,
}

/// Checks that sup-moments grow at most exponentially across horizons.
///
/// Each entry pairs a horizon `T` with statistics whose grid reaches at least
/// `T`; the sup is taken over points with `t <= T`. Growth is flagged as
/// super-exponential when a later slope of `log M` exceeds the previous one by
/// more than 3 standard errors (`SE(log M) = SE/M`).
pub fn moment_growth_check(horizons: &[(f64, &EnsembleStats)], p: f64) -> Result<GrowthReport> {
    if horizons.len() < 3 {
        return Err(Error::TooFew { what: "horizons", needed: 3, got: horizons.len() });
    }
    let mut hs = Vec::new();
    let mut ms = Vec::new();
    let mut ses = Vec::new();
    for &(t, stats) in horizons {
        let (m, se) = stats
            .sup_up_to(p, t)
            .ok_or_else(|| Error::InvalidParams(format!("moment order {p} missing from statistics")))?;
        hs.push(t);
        ms.push(m);
        ses.push(se);
    }
    if hs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParams("horizons must be strictly increasing".into()));
    }
    let finite = ms.iter().chain(&ses).all(|v| v.is_finite());
    let positive = ms.iter().all(|&m| m > 0.0);
    let (mut rate, mut log_c, mut slopes, mut flag) = (0.0, f64::NEG_INFINITY, vec![0.0; hs.len() - 1], false);
    if finite && positive {
        let logs: Vec<f64> = ms.iter().map(|m| m.ln()).collect();
        let lse: Vec<f64> = ses.iter().zip(&ms).map(|(s, m)| s / m).collect();
        let (b, a, _) = linear_fit(&hs, &logs);
        rate = b;
        log_c = a;
        slopes = (0..hs.len() - 1).map(|j| (logs[j + 1] - logs[j]) / (hs[j + 1] - hs[j])).collect();
        for j in 0..slopes.len().saturating_sub(1) {
            // slope_{j+1} - slope_j as a combination of three log-moments
            let (d0, d1) = (hs[j + 1] - hs[j], hs[j + 2] - hs[j + 1]);
            let c = [1.0 / d0, -1.0 / d1 - 1.0 / d0, 1.0 / d1];
            let var: f64 = (0..3).map(|i| (c[i] * lse[j + i]).powi(2)).sum();
            let diff = slopes[j + 1] - slopes[j];
            if diff > 3.0 * var.sqrt() + 1e-9 {
                flag = true;
            }
        }
    }
    Ok(GrowthReport {
        p,
        horizons: hs,
        sup_moments: ms,
        sup_se: ses,
        rate,
        log_c,
        slopes,
        super_exponential: flag,
        finite,
        pass: finite && !flag,
    })
}

/// Least squares `y = a + b x`; returns `(b, a, r²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let b = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (b, my - b * mx, r2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Time,
    /// Spatial axis `1..=d`.
    Space(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderFit {
    pub direction: Direction,
    pub p: f64,
    pub lags: Vec<usize>,
    /// Ensemble estimates of `E|Δu|^p` per lag.
    pub moments: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// `slope / p`
    pub exponent: f64,
    /// Delete-group jackknife standard error of the exponent.
    pub exponent_se: f64,
}

impl HolderFit {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lag,moment\n");
        for (l, m) in self.lags.iter().zip(&self.moments) {
            out.push_str(&format!("{l},{m}\n"));
        }
        out
    }
}

/// Per-sample mean of `|Δu|^p` at each lag.
fn increment_moments(f: &FieldSample, direction: Direction, p: f64, lags: &[usize]) -> Vec<f64> {
    let shape = f.shape();
    let axis = match direction {
        Direction::Time => 0,
        Direction::Space(i) => i,
    };
    let periodic = f.kind == FieldKind::Solution && axis > 0;
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    lags.iter()
        .map(|&lag| {
            let bases = if periodic { n } else { n - lag };
            let mut acc = 0.0;
            for o in 0..outer {
                for j in 0..bases {
                    let k = (j + lag) % n;
                    let a = &f.values[(o * n + j) * inner..(o * n + j + 1) * inner];
                    let b = &f.values[(o * n + k) * inner..(o * n + k + 1) * inner];
                    acc += a.iter().zip(b).map(|(x, y)| (y - x).abs().powf(p)).sum::<f64>();
                }
            }
            acc / (outer * bases * inner) as f64
        })
        .collect()
}

/// Regresses `log E|Δu|^p` on `log lag`; the exponent is `slope / p`.
pub fn estimate_holder(ensemble: &[FieldSample], direction: Direction, p: f64, lags: &[usize]) -> Result<HolderFit> {
    let (grid, kind) = common_grid(ensemble)?;
    if !(p > 0.0) {
        return Err(Error::InvalidParams("moment order p must be > 0".into()));
    }
    let mut sorted = lags.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() < 4 || sorted[0] == 0 {
        return Err(Error::TooFew { what: "distinct positive lags", needed: 4, got: sorted.len() });
    }
    let shape = grid.shape(kind);
    let (axis, step) = match direction {
        Direction::Time => (0, grid.dt()),
        Direction::Space(i) if i >= 1 && i <= grid.d => (i, grid.dx()),
        Direction::Space(i) => return Err(Error::InvalidParams(format!("no spatial axis {i}"))),
    };
    if *sorted.last().unwrap() >= shape[axis] {
        return Err(Error::InvalidParams(format!("lag exceeds the {} points of the axis", shape[axis])));
    }
    let per_sample: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        ensemble.par_iter().map(|f| increment_moments(f, direction, p, &sorted)).collect()
    };
    let logx: Vec<f64> = sorted.iter().map(|&l| (l as f64 * step).ln()).collect();
    let fit = |rows: &[&Vec<f64>]| -> Result<(Vec<f64>, f64, f64, f64)> {
        let k = rows.len() as f64;
        let m: Vec<f64> = (0..sorted.len()).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / k).collect();
        if m.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::DegenerateRegression("an increment moment is zero".into()));
        }
        let logy: Vec<f64> = m.iter().map(|v| v.ln()).collect();
        let (b, a, r2) = linear_fit(&logx, &logy);
        Ok((m, b, a, r2))
    };
    let all: Vec<&Vec<f64>> = per_sample.iter().collect();
    let (moments, slope, intercept, r2) = fit(&all)?;
    let n = per_sample.len();
    let groups = JACKKNIFE_GROUPS.min(n);
    let exponent_se = if groups >= 2 {
        let est: Vec<f64> = (0..groups)
            .map(|g| {
                let rows: Vec<&Vec<f64>> = per_sample.iter().enumerate().filter(|(i, _)| i % groups != g).map(|(_, r)| r).collect();
                fit(&rows).map(|(_, b, _, _)| b / p)
            })
            .collect::<Result<_>>()?;
        let mean = est.iter().sum::<f64>() / groups as f64;
        let g = groups as f64;
        ((g - 1.0) / g * est.iter().map(|e| (e - mean).powi(2)).sum::<f64>()).sqrt()
    } else {
        0.0
    };
    Ok(HolderFit {
        direction,
        p,
        lags: sorted,
        moments,
        slope,
        intercept,
        r2,
        exponent: slope / p,
        exponent_se,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub bound: f64,
    pub exponent: f64,
    pub exponent_se: f64,
    pub pass: bool,
}

/// Guaranteed regularity of the solution: `min(H_0 - 1/2, 1/2)` in time and
/// `min_i (H_i - 1/2)` in space.
pub fn holder_bound(direction: Direction, params: &HermiteParams) -> f64 {
    match direction {
        Direction::Time => (params.hurst[0] - 0.5).min(0.5),
        Direction::Space(_) => params.hurst[1..].iter().map(|h| h - 0.5).fold(f64::INFINITY, f64::min),
    }
}

/// One-sided test: passes when `exponent >= bound - 2 SE`.
pub fn check_against_bound(exponent: f64, se: f64, bound: f64) -> BoundCheck {
    BoundCheck { bound, exponent, exponent_se: se, pass: exponent >= bound - 2.0 * se }
}

pub fn holder_bound_check(fit: &HolderFit, params: &HermiteParams) -> BoundCheck {
    check_against_bound(fit.exponent, fit.exponent_se, holder_bound(fit.direction, params))
}
