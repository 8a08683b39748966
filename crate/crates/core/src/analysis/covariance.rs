//! Empirical sheet covariance against the closed form at fixed probe pairs.

use serde::{Deserialize, Serialize};

use super::common_grid;
use crate::error::{Error, Result};
use crate::kernels::sheet_covariance;
use crate::noise::{FieldKind, FieldSample};

/// Probe points as fractions of `(t_max, L)`; spatial fractions repeat for d > 1.
pub const COVARIANCE_PROBE: [[f64; 2]; 5] = [[1.0, 1.0], [0.5, 0.5], [1.0, 0.5], [0.25, 0.75], [0.75, 0.75]];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariancePair {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub empirical: f64,
    pub se: f64,
    pub expected: f64,
}

impl CovariancePair {
    pub fn error(&self) -> f64 {
        (self.empirical - self.expected).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub n: usize,
    pub pairs: Vec<CovariancePair>,
    pub max_abs_error: f64,
    /// Largest `|error| / SE` over the pairs.
    pub max_ratio: f64,
    /// Every pair within 3 SE.
    pub pass: bool,
}

impl CovarianceReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("a,b,empirical,se,expected\n");
        for p in &self.pairs {
            let fmt = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
            out.push_str(&format!("{},{},{},{},{}\n", fmt(&p.a), fmt(&p.b), p.empirical, p.se, p.expected));
        }
        out
    }
}

/// `E[Z(a) Z(b)]` over all ordered-free pairs of the probe set (diagonal included)
/// with the standard error of the product mean.
pub fn covariance_check(ensemble: &[FieldSample], hurst: &[f64]) -> Result<CovarianceReport> {
    let (grid, kind) = common_grid(ensemble)?;
    if kind != FieldKind::Sheet {
        return Err(Error::WrongKind { expected: "sheet", found: kind.as_str() });
    }
    let n = ensemble.len();
    if n < 2 {
        return Err(Error::TooFew { what: "samples", needed: 2, got: n });
    }
    let ext = grid.extents();
    let probes: Vec<(Vec<usize>, Vec<f64>)> = COVARIANCE_PROBE
        .iter()
        .map(|&[t, x]| {
            let frac: Vec<f64> = std::iter::once(t).chain(std::iter::repeat_n(x, grid.d)).collect();
            let coords = frac.iter().zip(&ext).map(|(f, e)| f * e).collect();
            Ok((grid.index_of_fractions(&frac)?, coords))
        })
        .collect::<Result<_>>()?;
    let mut pairs = Vec::new();
    for i in 0..probes.len() {
        for j in i..probes.len() {
            let (ia, a) = &probes[i];
            let (ib, b) = &probes[j];
            let prod: Vec<f64> = ensemble.iter().map(|f| f.at(ia) * f.at(ib)).collect();
            let nf = n as f64;
            let mean = prod.iter().sum::<f64>() / nf;
            let var = prod.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
            pairs.push(CovariancePair {
                a: a.clone(),
                b: b.clone(),
                empirical: mean,
                se: (var / nf).sqrt(),
                expected: sheet_covariance(a, b, hurst),
            });
        }
    }
    let max_abs_error = pairs.iter().map(CovariancePair::error).fold(0.0, f64::max);
    let max_ratio = pairs
        .iter()
        .map(|p| if p.se > 0.0 { p.error() / p.se } else if p.error() == 0.0 { 0.0 } else { f64::INFINITY })
        .fold(0.0, f64::max);
    Ok(CovarianceReport { n, pairs, max_abs_error, max_ratio, pass: max_ratio <= 3.0 })
}
