//! Reference solution of deterministic viscous Burgers on the torus.
//!
//! `u = c + v` with `c` the mean of `u0`. For mean-zero `v`,
//! `v = -2ν ∂ₓ log θ` where `θ` solves the heat equation from
//! `θ0 = exp(-V/(2ν))`, `V' = v0`. The mean is restored by the Galilean
//! shift `u(t, x) = c + v(t, x - ct)`.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::spectral::Spectral;
use crate::error::{Error, Result};

/// Fraction of `θ0` energy in the upper half of the resolved band above which a
/// resolution warning is raised.
pub const TAIL_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColeHopf {
    pub profile: Vec<f64>,
    pub tail_energy: f64,
    pub warning: Option<String>,
}

/// Evaluates the reference solution at time `t` on the points of `u0`, working
/// internally with `n_modes` Fourier modes (a multiple of `u0.len()`).
pub fn cole_hopf_exact(u0: &[f64], t: f64, nu: f64, length: f64, n_modes: usize) -> Result<ColeHopf> {
    let n = u0.len();
    if n == 0 || n_modes < n || !n_modes.is_multiple_of(n) {
        return Err(Error::InvalidGrid(format!("n_modes = {n_modes} must be a positive multiple of {n}")));
    }
    if !(t >= 0.0) || !(nu > 0.0) || !(length > 0.0) {
        return Err(Error::Domain("need t >= 0, nu > 0 and L > 0".into()));
    }
    let coarse = Spectral::new(n, length);
    let fine = Spectral::new(n_modes, length);
    let c = u0.iter().sum::<f64>() / n as f64;

    // antiderivative of the spectral interpolant of v0 on the fine grid
    let vh = coarse.forward(u0);
    let scale = n_modes as f64 / n as f64;
    let mut anti = vec![Complex64::new(0.0, 0.0); n_modes];
    for (j, &c_j) in vh.iter().enumerate().skip(1) {
        let m = coarse.mode(j);
        let mut val = c_j * scale;
        if coarse.is_nyquist(j) {
            // split the Nyquist mode across +-n/2 to keep the interpolant real
            val *= 0.5;
            let neg = (n_modes as i64 - m) as usize;
            anti[neg] += val / Complex64::new(0.0, -coarse.k[j]);
        }
        let slot = if m >= 0 { m as usize } else { (n_modes as i64 + m) as usize };
        anti[slot] += val / Complex64::new(0.0, fine.k[slot]);
    }
    let pot = fine.inverse(anti);
    let pmin = pot.iter().cloned().fold(f64::INFINITY, f64::min);
    let theta0: Vec<f64> = pot.iter().map(|p| (-(p - pmin) / (2.0 * nu)).exp()).collect();

    let mut th = fine.forward(&theta0);
    let total: f64 = th.iter().map(|z| z.norm_sqr()).sum();
    let tail: f64 = (0..n_modes)
        .filter(|&j| fine.mode(j).unsigned_abs() as usize > n_modes / 4)
        .map(|j| th[j].norm_sqr())
        .sum();
    let tail_energy = if total > 0.0 { tail / total } else { 0.0 };

    for (j, z) in th.iter_mut().enumerate() {
        let k = fine.k[j];
        *z *= (-nu * k * k * t).exp() * Complex64::new(0.0, -k * c * t).exp();
    }
    let dth: Vec<Complex64> = th
        .iter()
        .enumerate()
        .map(|(j, z)| if fine.is_nyquist(j) { Complex64::new(0.0, 0.0) } else { z * Complex64::new(0.0, fine.k[j]) })
        .collect();
    let theta = fine.inverse(th);
    let dtheta = fine.inverse(dth);
    let stride = n_modes / n;
    let profile = (0..n)
        .map(|i| c - 2.0 * nu * dtheta[i * stride] / theta[i * stride])
        .collect();
    let warning = (tail_energy > TAIL_TOLERANCE).then(|| {
        format!("Cole-Hopf resolution: tail energy {tail_energy:.2e} exceeds {TAIL_TOLERANCE:.0e}; raise n_modes")
    });
    Ok(ColeHopf { profile, tail_energy, warning })
}
