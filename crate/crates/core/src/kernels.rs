//! Closed-form kernels, the Hermite-sheet covariance, and model parameter
//! validation shared by every other module.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack applied to the strict parameter-gate inequality.
pub const GATE_SLACK: f64 = 1e-12;

/// Order, Hurst vector, dimension and viscosity of the model.
///
/// `hurst[0]` is the time Hurst index, `hurst[1..=d]` the spatial ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermiteParams {
    pub q: u32,
    pub hurst: Vec<f64>,
    pub d: usize,
    pub nu: f64,
}

impl HermiteParams {
    /// Builds parameters with `d` inferred from the Hurst vector length.
    pub fn new(q: u32, hurst: Vec<f64>, nu: f64) -> Self {
        let d = hurst.len().saturating_sub(1);
        Self { q, hurst, d, nu }
    }

    pub fn h0(&self) -> f64 {
        self.hurst[0]
    }

    /// Returns an error carrying the violation list if the parameters fail validation.
    pub fn ensure_valid(&self) -> Result<ValidationReport> {
        let report = validate_params(self);
        if report.valid {
            Ok(report)
        } else {
            Err(Error::InvalidParams(report.summary()))
        }
    }
}

/// A single failed constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "constraint", rename_all = "snake_case")]
pub enum Violation {
    OrderTooSmall { q: u32 },
    DimensionTooSmall { d: usize },
    HurstLength { expected: usize, got: usize },
    HurstOutOfRange { index: usize, value: f64 },
    NonPositiveViscosity { nu: f64 },
    ParameterGate { lhs: f64, rhs: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::OrderTooSmall { q } => write!(f, "q = {q} must be >= 1"),
            Violation::DimensionTooSmall { d } => write!(f, "d = {d} must be >= 1"),
            Violation::HurstLength { expected, got } => {
                write!(f, "Hurst vector has {got} entries, expected d+1 = {expected}")
            }
            Violation::HurstOutOfRange { index, value } => {
                write!(f, "H_{index} outside (1/2,1) (H_{index} = {value})")
            }
            Violation::NonPositiveViscosity { nu } => write!(f, "nu = {nu} must be > 0"),
            Violation::ParameterGate { lhs, rhs } => {
                write!(f, "2H_0 + sum H_i = {lhs} does not exceed d + 1 - 1/q = {rhs}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    /// `2 H_0 + sum_{i>=1} H_i`
    pub lhs: f64,
    /// `d + 1 - 1/q`
    pub rhs: f64,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn summary(&self) -> String {
        if self.valid {
            format!("valid: lhs = {} > rhs = {}", self.lhs, self.rhs)
        } else {
            let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
            parts.join("; ")
        }
    }
}

/// Checks the Hurst range, the structural constraints and the gate
/// `2H_0 + sum H_i > d + 1 - 1/q`. Never fails; invalid inputs produce `valid = false`.
pub fn validate_params(p: &HermiteParams) -> ValidationReport {
    let mut violations = Vec::new();
    if p.q < 1 {
        violations.push(Violation::OrderTooSmall { q: p.q });
    }
    if p.d < 1 {
        violations.push(Violation::DimensionTooSmall { d: p.d });
    }
    if p.hurst.len() != p.d + 1 {
        violations.push(Violation::HurstLength {
            expected: p.d + 1,
            got: p.hurst.len(),
        });
    }
    for (index, &value) in p.hurst.iter().enumerate() {
        if !(value > 0.5 && value < 1.0) {
            violations.push(Violation::HurstOutOfRange { index, value });
        }
    }
    if !(p.nu > 0.0) {
        violations.push(Violation::NonPositiveViscosity { nu: p.nu });
    }

    let lhs = match p.hurst.split_first() {
        Some((h0, rest)) => 2.0 * h0 + rest.iter().sum::<f64>(),
        None => 0.0,
    };
    let rhs = if p.q >= 1 {
        p.d as f64 + 1.0 - 1.0 / p.q as f64
    } else {
        f64::INFINITY
    };
    if !(lhs - rhs > GATE_SLACK) {
        violations.push(Violation::ParameterGate { lhs, rhs });
    }

    ValidationReport {
        valid: violations.is_empty(),
        lhs,
        rhs,
        violations,
    }
}

/// Exponent `1/2 + (1 - H)/q` of the Hermite kernel `(s - y)_+^{-exponent}`.
pub fn kernel_exponent(h: f64, q: u32) -> Result<f64> {
    if !(h > 0.5 && h < 1.0) {
        return Err(Error::Domain(format!("Hurst index {h} outside (1/2, 1)")));
    }
    if q < 1 {
        return Err(Error::Domain("order q must be >= 1".into()));
    }
    Ok(0.5 + (1.0 - h) / q as f64)
}

/// Heat kernel `(4 pi nu t)^{-d/2} exp(-|x|^2 / (4 nu t))` with `d = x.len()`.
pub fn heat_kernel(t: f64, x: &[f64], nu: f64) -> Result<f64> {
    check_heat_args(t, nu)?;
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let d = x.len() as f64;
    Ok((4.0 * PI * nu * t).powf(-d / 2.0) * (-r2 / (4.0 * nu * t)).exp())
}

/// Spatial gradient of [`heat_kernel`]: `-x / (2 nu t) * G_t(x)`.
pub fn heat_kernel_gradient(t: f64, x: &[f64], nu: f64) -> Result<Vec<f64>> {
    let g = heat_kernel(t, x, nu)?;
    Ok(x.iter().map(|&xi| -xi / (2.0 * nu * t) * g).collect())
}

fn check_heat_args(t: f64, nu: f64) -> Result<()> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("heat kernel needs t > 0, got {t}")));
    }
    if !(nu > 0.0) {
        return Err(Error::Domain(format!("heat kernel needs nu > 0, got {nu}")));
    }
    Ok(())
}

/// One-parameter fBm covariance `(t^{2H} + s^{2H} - |t - s|^{2H}) / 2`.
pub fn fbm_covariance(t: f64, s: f64, h: f64) -> f64 {
    let e = 2.0 * h;
    0.5 * (t.powf(e) + s.powf(e) - (t - s).abs().powf(e))
}

/// Covariance of the Hermite sheet at two points of `R_+^{d+1}`; the same for every order `q`.
pub fn sheet_covariance(t: &[f64], s: &[f64], hurst: &[f64]) -> f64 {
    debug_assert_eq!(t.len(), hurst.len());
    debug_assert_eq!(s.len(), hurst.len());
    t.iter()
        .zip(s)
        .zip(hurst)
        .map(|((&ti, &si), &h)| fbm_covariance(ti, si, h))
        .product()
}

/// Noise coefficient `sigma(t, x, u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SigmaSpec {
    Constant { value: f64 },
    Affine { intercept: f64, slope: f64 },
    /// Piecewise-linear in `u` through `(u, sigma)` knots, constant outside the table.
    Tabulated { knots: Vec<[f64; 2]> },
}

impl SigmaSpec {
    pub fn constant(value: f64) -> Self {
        SigmaSpec::Constant { value }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SigmaSpec::Constant { value } if !value.is_finite() => {
                Err(Error::InvalidParams("sigma constant must be finite".into()))
            }
            SigmaSpec::Affine { intercept, slope } if !(intercept.is_finite() && slope.is_finite()) => {
                Err(Error::InvalidParams("sigma coefficients must be finite".into()))
            }
            SigmaSpec::Tabulated { knots } => {
                if knots.is_empty() {
                    return Err(Error::InvalidParams("tabulated sigma needs at least one knot".into()));
                }
                if knots.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParams("tabulated sigma knots must be finite".into()));
                }
                if knots.windows(2).any(|w| w[1][0] <= w[0][0]) {
                    return Err(Error::InvalidParams(
                        "tabulated sigma knots must be strictly increasing in u".into(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, _t: f64, _x: f64, u: f64) -> f64 {
        match self {
            SigmaSpec::Constant { value } => *value,
            SigmaSpec::Affine { intercept, slope } => intercept + slope * u,
            SigmaSpec::Tabulated { knots } => {
                let first = knots[0];
                let last = knots[knots.len() - 1];
                if u <= first[0] {
                    return first[1];
                }
                if u >= last[0] {
                    return last[1];
                }
                let i = knots.partition_point(|k| k[0] <= u);
                let (a, b) = (knots[i - 1], knots[i]);
                a[1] + (b[1] - a[1]) * (u - a[0]) / (b[0] - a[0])
            }
        }
    }

    /// Lipschitz constant `L` in the state variable.
    pub fn lipschitz_bound(&self) -> f64 {
        match self {
            SigmaSpec::Constant { .. } => 0.0,
            SigmaSpec::Affine { slope, .. } => slope.abs(),
            SigmaSpec::Tabulated { knots } => knots
                .windows(2)
                .map(|w| ((w[1][1] - w[0][1]) / (w[1][0] - w[0][0])).abs())
                .fold(0.0, f64::max),
        }
    }

    /// Linear-growth constant `C_sigma` with `|sigma(u)| <= C_sigma (1 + |u|)`.
    pub fn growth_bound(&self) -> f64 {
        match self {
            SigmaSpec::Constant { value } => value.abs(),
            SigmaSpec::Affine { intercept, slope } => intercept.abs().max(slope.abs()),
            SigmaSpec::Tabulated { knots } => knots.iter().map(|k| k[1].abs()).fold(0.0, f64::max),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            SigmaSpec::Constant { value } => *value == 0.0,
            SigmaSpec::Affine { intercept, slope } => *intercept == 0.0 && *slope == 0.0,
            SigmaSpec::Tabulated { knots } => knots.iter().all(|k| k[1] == 0.0),
        }
    }

    /// Verifies the Lipschitz and growth bounds on the given `(t, x, u, v)` triples.
    pub fn check_bounds(&self, probes: &[(f64, f64, f64, f64)]) -> bool {
        let l = self.lipschitz_bound();
        let c = self.growth_bound();
        probes.iter().all(|&(t, x, u, v)| {
            let su = self.eval(t, x, u);
            let sv = self.eval(t, x, v);
            let tol = 1e-12 * (1.0 + su.abs() + sv.abs());
            (su - sv).abs() <= l * (u - v).abs() + tol && su.abs() <= c * (1.0 + u.abs()) + tol
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn validation_examples() {
        let r = validate_params(&HermiteParams::new(1, vec![0.6, 0.6], 1.0));
        assert!(r.valid);
        assert!(close(r.lhs, 1.8, 1e-15) && close(r.rhs, 1.0, 1e-15));

        let r = validate_params(&HermiteParams::new(2, vec![0.55, 0.55, 0.55], 1.0));
        assert!(!r.valid);
        assert!(close(r.lhs, 2.2, 1e-15) && close(r.rhs, 2.5, 1e-15));
        assert!(matches!(r.violations[..], [Violation::ParameterGate { .. }]));

        let r = validate_params(&HermiteParams::new(1, vec![0.4, 0.6], 1.0));
        assert!(!r.valid);
        assert!(r
            .violations
            .iter()
            .any(|v| v.to_string().starts_with("H_0 outside (1/2,1)")));
    }

    #[test]
    fn validation_never_panics_on_garbage() {
        let r = validate_params(&HermiteParams { q: 0, hurst: vec![], d: 0, nu: -1.0 });
        assert!(!r.valid);
        assert!(r.violations.len() >= 4);
        let r = validate_params(&HermiteParams::new(1, vec![f64::NAN, 0.7], 1.0));
        assert!(!r.valid);
    }

    #[test]
    fn exponent_examples() {
        assert!(close(kernel_exponent(0.75, 1).unwrap(), 0.75, 1e-15));
        assert!(close(kernel_exponent(0.70, 2).unwrap(), 0.65, 1e-15));
        assert!(close(kernel_exponent(0.90, 3).unwrap(), 0.5 + 0.1 / 3.0, 1e-15));
        assert!(kernel_exponent(0.5, 1).is_err());
        assert!(kernel_exponent(0.7, 0).is_err());
    }

    #[test]
    fn heat_kernel_examples() {
        let nu = 1.0 / (4.0 * PI);
        assert!(close(heat_kernel(1.0, &[0.0], nu).unwrap(), 1.0, 1e-15));
        assert!(heat_kernel(0.0, &[0.0], nu).is_err());
        assert_eq!(heat_kernel_gradient(1.0, &[0.0], 0.3).unwrap(), vec![0.0]);

        // unit mass by a wide Riemann sum
        let (t, nu) = (0.7, 0.2);
        let h = 1e-3;
        let mass: f64 = (-20_000..=20_000)
            .map(|k| heat_kernel(t, &[k as f64 * h], nu).unwrap() * h)
            .sum();
        assert!(close(mass, 1.0, 1e-6), "mass {mass}");
    }

    #[test]
    fn gradient_matches_central_difference() {
        let (t, x, nu) = (0.5, 0.3, 0.1);
        let eps = 1e-5;
        let fd = (heat_kernel(t, &[x + eps], nu).unwrap() - heat_kernel(t, &[x - eps], nu).unwrap())
            / (2.0 * eps);
        let g = heat_kernel_gradient(t, &[x], nu).unwrap()[0];
        assert!((g - fd).abs() <= 1e-6, "{g} vs {fd}");
    }

    #[test]
    fn gradient_l1_norm_scales_as_inverse_sqrt_time() {
        let nu = 0.3;
        let l1 = |t: f64| -> f64 {
            let h = 1e-4;
            (-100_000..=100_000)
                .map(|k| heat_kernel_gradient(t, &[k as f64 * h], nu).unwrap()[0].abs() * h)
                .sum()
        };
        let ratio = l1(0.25) / l1(1.0);
        assert!((ratio - 2.0).abs() <= 0.1, "ratio {ratio}");
    }

    #[test]
    fn heat_semigroup_by_discrete_convolution() {
        let nu = 0.25;
        let (s, t) = (0.3, 0.5);
        let h = 2e-3;
        for &x in &[0.0, 0.4, -1.1] {
            let conv: f64 = (-5000..=5000)
                .map(|k| {
                    let y = k as f64 * h;
                    heat_kernel(s, &[x - y], nu).unwrap() * heat_kernel(t, &[y], nu).unwrap() * h
                })
                .sum();
            let direct = heat_kernel(s + t, &[x], nu).unwrap();
            assert!((conv - direct).abs() <= 1e-8, "{conv} vs {direct}");
        }
    }

    #[test]
    fn covariance_examples() {
        assert!(close(sheet_covariance(&[1.0, 1.0], &[1.0, 1.0], &[0.7, 0.8]), 1.0, 1e-15));
        assert_eq!(sheet_covariance(&[0.0, 1.0], &[0.3, 2.0], &[0.7, 0.8]), 0.0);
        let c = sheet_covariance(&[1.0, 1.0], &[2.0, 2.0], &[0.75, 0.75]);
        assert!(close(c, 2.0, 1e-12), "{c}");
    }

    #[test]
    fn sigma_interpolation_and_bounds() {
        let s = SigmaSpec::Tabulated { knots: vec![[-1.0, 0.0], [0.0, 1.0], [2.0, 0.0]] };
        s.validate().unwrap();
        assert_eq!(s.eval(0.0, 0.0, -5.0), 0.0);
        assert!(close(s.eval(0.0, 0.0, -0.5), 0.5, 1e-15));
        assert!(close(s.eval(0.0, 0.0, 1.0), 0.5, 1e-15));
        assert_eq!(s.eval(0.0, 0.0, 9.0), 0.0);
        assert_eq!(s.lipschitz_bound(), 1.0);
        assert_eq!(s.growth_bound(), 1.0);
        assert!(SigmaSpec::Tabulated { knots: vec![[0.0, 1.0], [0.0, 2.0]] }.validate().is_err());
    }

    fn lattice_points() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
        (1usize..4).prop_flat_map(|n| {
            (
                prop::collection::vec(0.0f64..5.0, n),
                prop::collection::vec(0.0f64..5.0, n),
                prop::collection::vec(0.51f64..0.99, n),
            )
        })
    }

    proptest! {
        #[test]
        fn covariance_is_symmetric_with_diagonal_power((t, s, h) in lattice_points()) {
            let a = sheet_covariance(&t, &s, &h);
            let b = sheet_covariance(&s, &t, &h);
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            let diag = sheet_covariance(&t, &t, &h);
            let power: f64 = t.iter().zip(&h).map(|(ti, hi)| ti.powf(2.0 * hi)).product();
            prop_assert!((diag - power).abs() <= 1e-12 * (1.0 + power));
        }

        #[test]
        fn covariance_scaling_identity(
            (t, s, h) in lattice_points(),
            lam in prop::collection::vec(0.1f64..10.0, 3),
        ) {
            let n = t.len();
            let lt: Vec<f64> = (0..n).map(|i| lam[i] * t[i]).collect();
            let ls: Vec<f64> = (0..n).map(|i| lam[i] * s[i]).collect();
            let factor: f64 = (0..n).map(|i| lam[i].powf(2.0 * h[i])).product();
            let lhs = sheet_covariance(&lt, &ls, &h);
            let rhs = factor * sheet_covariance(&t, &s, &h);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(1e-300));
        }

        #[test]
        fn validation_is_monotone_in_hurst(
            q in 1u32..4,
            h in prop::collection::vec(0.5f64..1.0, 2..4),
            which in 0usize..4,
            bump in 0.0f64..0.3,
        ) {
            let before = validate_params(&HermiteParams::new(q, h.clone(), 1.0));
            let mut raised = h.clone();
            let i = which % raised.len();
            raised[i] = (raised[i] + bump).min(0.999_999);
            if raised[i] < h[i] { raised[i] = h[i]; }
            let after = validate_params(&HermiteParams::new(q, raised, 1.0));
            prop_assert!(!before.valid || after.valid);
            prop_assert_eq!(before.valid, before.violations.is_empty());
        }

        #[test]
        fn tabulated_sigma_respects_its_bounds(
            ys in prop::collection::vec(-3.0f64..3.0, 2..6),
            probes in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..20),
        ) {
            let knots: Vec<[f64; 2]> = ys.iter().enumerate().map(|(i, &y)| [i as f64 - 1.0, y]).collect();
            let s = SigmaSpec::Tabulated { knots };
            let triples: Vec<_> = probes.iter().map(|&(u, v)| (0.0, 0.0, u, v)).collect();
            prop_assert!(s.check_bounds(&triples));
        }
    }
}
