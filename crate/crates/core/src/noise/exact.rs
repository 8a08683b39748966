//! Exact Gaussian fBm sheet on a lattice.
//!
//! The lattice covariance is the Kronecker product of one-parameter fBm
//! covariances, so the sheet is `(L_0 ⊗ ... ⊗ L_d) ξ` with `L_i` the Cholesky
//! factor of axis `i` restricted to its nonzero points. Values on the axes are 0.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{purpose, FieldKind, FieldSample, GridSpec, SeedSpec};
use crate::error::{Error, Result};
use crate::kernels::{fbm_covariance, HermiteParams};
use crate::tensor;

/// Largest number of nonzero points on one axis.
pub const MAX_AXIS_POINTS: usize = 2048;
/// Largest number of lattice points in total.
pub const MAX_TOTAL_POINTS: usize = 1 << 22;

#[derive(Debug, Clone)]
pub struct ExactSampler {
    grid: GridSpec,
    hurst: Vec<f64>,
    /// Lower-triangular factors, row-major `n_i x n_i`.
    factors: Vec<Vec<f64>>,
}

impl ExactSampler {
    pub fn new(hurst: &[f64], grid: &GridSpec) -> Result<Self> {
        grid.validate()?;
        let params = HermiteParams { q: 1, hurst: hurst.to_vec(), d: grid.d, nu: 1.0 };
        params.ensure_valid()?;
        let steps = grid.steps();
        let total: usize = steps.iter().map(|n| n + 1).product();
        if let Some(&n) = steps.iter().find(|&&n| n > MAX_AXIS_POINTS) {
            return Err(Error::Infeasible { points: n, limit: MAX_AXIS_POINTS });
        }
        if total > MAX_TOTAL_POINTS {
            return Err(Error::Infeasible { points: total, limit: MAX_TOTAL_POINTS });
        }
        let extents = grid.extents();
        let factors = steps
            .iter()
            .zip(&extents)
            .zip(hurst)
            .map(|((&n, &ext), &h)| {
                let dx = ext / n as f64;
                let mut c = vec![0.0; n * n];
                for a in 0..n {
                    for b in 0..n {
                        c[a * n + b] = fbm_covariance((a + 1) as f64 * dx, (b + 1) as f64 * dx, h);
                    }
                }
                cholesky(&mut c, n)?;
                Ok(c)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grid: grid.clone(), hurst: hurst.to_vec(), factors })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn sample(&self, seed: SeedSpec) -> FieldSample {
        let steps = self.grid.steps();
        let mut rng = seed.rng(purpose::EXACT);
        let mut data: Vec<f64> = (0..steps.iter().product::<usize>())
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut shape = steps.clone();
        for (axis, l) in self.factors.iter().enumerate() {
            let (d, s) = tensor::mode_product(&data, &shape, axis, l, steps[axis]);
            data = d;
            shape = s;
        }
        // embed into the full lattice with zeros on the axes
        let full = self.grid.shape(FieldKind::Sheet);
        let mut values = vec![0.0; full.iter().product()];
        let fs = tensor::strides(&full);
        let mut idx = vec![0; shape.len()];
        for (f, &v) in data.iter().enumerate() {
            tensor::unravel(f, &shape, &mut idx);
            let pos: usize = idx.iter().zip(&fs).map(|(&i, &s)| (i + 1) * s).sum();
            values[pos] = v;
        }
        FieldSample {
            kind: FieldKind::Sheet,
            grid: self.grid.clone(),
            q: 1,
            hurst: self.hurst.clone(),
            seed,
            values,
        }
    }
}

/// In-place lower Cholesky factorization; the strict upper triangle is zeroed.
pub(crate) fn cholesky(a: &mut [f64], n: usize) -> Result<()> {
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if !(diag > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: j, value: diag });
        }
        let ljj = diag.sqrt();
        a[j * n + j] = ljj;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / ljj;
        }
        for k in j + 1..n {
            a[j * n + k] = 0.0;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_reproduces_matrix() {
        let n = 6;
        let mut c = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                c[a * n + b] = fbm_covariance((a + 1) as f64, (b + 1) as f64, 0.7);
            }
        }
        let orig = c.clone();
        cholesky(&mut c, n).unwrap();
        for a in 0..n {
            for b in 0..n {
                let s: f64 = (0..n).map(|k| c[a * n + k] * c[b * n + k]).sum();
                assert!((s - orig[a * n + b]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn indefinite_matrix_is_reported() {
        let mut c = vec![1.0, 2.0, 2.0, 1.0];
        assert!(matches!(cholesky(&mut c, 2), Err(Error::NotPositiveDefinite { pivot: 1, .. })));
    }

    #[test]
    fn axes_are_zero_and_limits_enforced() {
        let g = GridSpec::new(1.0, 5, 2.0, 4, 1).unwrap();
        let z = sample_exact(&g);
        for k in 0..6 {
            assert_eq!(z.at(&[k, 0]), 0.0);
        }
        for j in 0..5 {
            assert_eq!(z.at(&[0, j]), 0.0);
        }
        assert!(z.at(&[5, 4]) != 0.0);
        let big = GridSpec::new(1.0, 4096, 1.0, 2, 1).unwrap();
        assert!(matches!(ExactSampler::new(&[0.7, 0.7], &big), Err(Error::Infeasible { .. })));
        let bad = GridSpec::new(1.0, 4, 1.0, 4, 1).unwrap();
        assert!(ExactSampler::new(&[0.4, 0.7], &bad).is_err());
    }

    fn sample_exact(g: &GridSpec) -> FieldSample {
        ExactSampler::new(&[0.7, 0.7], g).unwrap().sample(SeedSpec::new(1, 0))
    }
}
