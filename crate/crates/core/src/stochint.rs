//! Inner product of the noise Hilbert space, discrete stochastic integrals
//! against sampled sheets, the isometry check, and the heat-kernel integral
//! `I(t)` that controls the stochastic convolution.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::kernels::{validate_params, HermiteParams};
use crate::noise::{FieldKind, FieldSample, GridSpec, SamplerSpec, SeedSpec, SheetSampler};
use crate::quad;
use crate::tensor;

/// Piecewise-constant integrand, one coefficient per lattice cell
/// (shape `n_t x n_x^d`, row-major).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    pub grid: GridSpec,
    pub coefficients: Vec<f64>,
}

impl StepFunction {
    pub fn new(grid: &GridSpec, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != grid.len(FieldKind::WhiteNoise) {
            return Err(Error::GridMismatch(format!(
                "{} coefficients for {} cells",
                coefficients.len(),
                grid.len(FieldKind::WhiteNoise)
            )));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParams("step function coefficients must be finite".into()));
        }
        Ok(Self { grid: grid.clone(), coefficients })
    }

    pub fn zeros(grid: &GridSpec) -> Self {
        Self { grid: grid.clone(), coefficients: vec![0.0; grid.len(FieldKind::WhiteNoise)] }
    }

    /// Indicator of the box `[lo, hi]`; corners must be lattice points.
    pub fn indicator(grid: &GridSpec, lo: &[f64], hi: &[f64]) -> Result<Self> {
        let ext = grid.extents();
        let frac = |v: &[f64]| -> Vec<f64> { v.iter().zip(&ext).map(|(a, e)| a / e).collect() };
        let a = grid.index_of_fractions(&frac(lo))?;
        let b = grid.index_of_fractions(&frac(hi))?;
        Ok(Self::from_cells(grid, |idx| {
            if idx.iter().zip(&a).zip(&b).all(|((&i, &l), &h)| i >= l && i < h) {
                1.0
            } else {
                0.0
            }
        }))
    }

    /// Builds coefficients from a function of the cell multi-index.
    pub fn from_cells(grid: &GridSpec, f: impl Fn(&[usize]) -> f64) -> Self {
        let shape = grid.shape(FieldKind::WhiteNoise);
        let mut idx = vec![0; shape.len()];
        let coefficients = (0..shape.iter().product())
            .map(|k| {
                tensor::unravel(k, &shape, &mut idx);
                f(&idx)
            })
            .collect();
        Self { grid: grid.clone(), coefficients }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { grid: self.grid.clone(), coefficients: self.coefficients.iter().map(|v| c * v).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HNormResult {
    pub value: f64,
    /// Rounding bound of the cell-pair summation (the per-pair weights are exact).
    pub quadrature_error_estimate: f64,
}

/// Exact integrated weight between cells `[a0, a1]` and `[b0, b1]` of one axis:
/// `H(2H-1) ∫∫ |u - v|^{2H-2} du dv`.
pub fn cell_pair_weight(a0: f64, a1: f64, b0: f64, b1: f64, h: f64) -> f64 {
    let e = 2.0 * h;
    let p = |x: f64| x.abs().powf(e);
    0.5 * (p(a1 - b0) + p(a0 - b1) - p(a1 - b1) - p(a0 - b0))
}

fn axis_weights(n: usize, step: f64, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            let (a0, a1) = (a as f64 * step, (a + 1) as f64 * step);
            let (b0, b1) = (b as f64 * step, (b + 1) as f64 * step);
            w[a * n + b] = cell_pair_weight(a0, a1, b0, b1, h);
        }
    }
    w
}

/// `⟨φ, ψ⟩_H = α_H ∬∬ φ ψ |s-r|^{2H_0-2} Π |y_i - z_i|^{2H_i-2}` with
/// `α_H = Π H_i (2H_i - 1)`, integrated exactly over every cell pair.
pub fn h_inner_product(phi: &StepFunction, psi: &StepFunction, hurst: &[f64]) -> Result<HNormResult> {
    if phi.grid != psi.grid {
        return Err(Error::GridMismatch("step functions live on different grids".into()));
    }
    let grid = &phi.grid;
    if hurst.len() != grid.d + 1 {
        return Err(Error::GridMismatch("Hurst vector length must be d+1".into()));
    }
    if hurst.iter().any(|&h| !(h > 0.5 && h < 1.0)) {
        return Err(Error::Domain("inner product needs every H_i in (1/2, 1)".into()));
    }
    let shape = grid.shape(FieldKind::WhiteNoise);
    let mut data = psi.coefficients.clone();
    let mut abs_data: Vec<f64> = psi.coefficients.iter().map(|v| v.abs()).collect();
    let steps = [grid.dt(), grid.dx()];
    for (axis, &h) in hurst.iter().enumerate() {
        let n = shape[axis];
        let w = axis_weights(n, steps[(axis > 0) as usize], h);
        data = tensor::mode_product(&data, &shape, axis, &w, n).0;
        let wa: Vec<f64> = w.iter().map(|v| v.abs()).collect();
        abs_data = tensor::mode_product(&abs_data, &shape, axis, &wa, n).0;
    }
    let value: f64 = phi.coefficients.iter().zip(&data).map(|(a, b)| a * b).sum();
    let magnitude: f64 = phi.coefficients.iter().zip(&abs_data).map(|(a, b)| a.abs() * b).sum();
    let cells = phi.coefficients.len() as f64;
    Ok(HNormResult { value, quadrature_error_estimate: 4.0 * f64::EPSILON * cells * magnitude })
}

/// `Σ_cells φ · □Z`, with `□Z` the rectangular sheet increment of each cell.
pub fn integrate_step(phi: &StepFunction, sheet: &FieldSample) -> Result<f64> {
    sheet.expect_kind(FieldKind::Sheet)?;
    if phi.grid != sheet.grid {
        return Err(Error::GridMismatch("step function and sheet grids differ".into()));
    }
    let inc = sheet.cell_increments()?;
    Ok(phi.coefficients.iter().zip(&inc).map(|(a, b)| a * b).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsometryReport {
    pub n: usize,
    pub empirical_second_moment: f64,
    pub standard_error: f64,
    pub h_norm: f64,
    /// `(empirical - h_norm) / SE`; 0 when both sides vanish identically.
    pub z_score: f64,
}

/// Isometry check on an existing ensemble of sheets.
pub fn isometry_from_samples(phi: &StepFunction, hurst: &[f64], sheets: &[FieldSample]) -> Result<IsometryReport> {
    if sheets.len() < 2 {
        return Err(Error::TooFew { what: "samples", needed: 2, got: sheets.len() });
    }
    let squares = sheets
        .par_iter()
        .map(|s| integrate_step(phi, s).map(|v| v * v))
        .collect::<Result<Vec<f64>>>()?;
    let h_norm = h_inner_product(phi, phi, hurst)?.value;
    let n = squares.len() as f64;
    let mean = squares.iter().sum::<f64>() / n;
    let var = squares.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let z_score = if se > 0.0 {
        (mean - h_norm) / se
    } else if mean == h_norm {
        0.0
    } else {
        f64::INFINITY.copysign(mean - h_norm)
    };
    Ok(IsometryReport { n: squares.len(), empirical_second_moment: mean, standard_error: se, h_norm, z_score })
}

/// Samples `n` sheets on `phi`'s grid and compares `E[(∫φ dZ)²]` with `‖φ‖²_H`.
pub fn isometry_report(
    phi: &StepFunction,
    params: &HermiteParams,
    sampler: &SamplerSpec,
    n_samples: usize,
    seed: SeedSpec,
) -> Result<IsometryReport> {
    let s = SheetSampler::new(params, &phi.grid, sampler)?;
    isometry_from_samples(phi, &params.hurst, &s.ensemble(seed, n_samples))
}

/// Five fixed integrands on `grid`: full box, off-diagonal block, centred
/// block, a signed two-block function and a smooth product profile.
/// `n_t` and `n_x` must be multiples of 4.
pub fn standard_battery(grid: &GridSpec) -> Result<Vec<(String, StepFunction)>> {
    if !grid.n_t.is_multiple_of(4) || !grid.n_x.is_multiple_of(4) {
        return Err(Error::InvalidGrid("battery needs n_t and n_x divisible by 4".into()));
    }
    let steps = grid.steps();
    let frac = move |idx: &[usize], i: usize| (idx[i] as f64 + 0.5) / steps[i] as f64;
    let in_range = |x: f64, a: f64, b: f64| x > a && x < b;
    let d = grid.d;
    let mut out = vec![("full".to_string(), StepFunction::from_cells(grid, |_| 1.0))];
    let f = frac.clone();
    out.push((
        "corner_block".into(),
        StepFunction::from_cells(grid, move |i| {
            let ok = in_range(f(i, 0), 0.0, 0.5) && (1..=d).all(|k| in_range(f(i, k), 0.5, 1.0));
            ok as u8 as f64
        }),
    ));
    let f = frac.clone();
    out.push((
        "centre_block".into(),
        StepFunction::from_cells(grid, move |i| (0..=d).all(|k| in_range(f(i, k), 0.25, 0.75)) as u8 as f64),
    ));
    let f = frac.clone();
    out.push((
        "signed_halves".into(),
        StepFunction::from_cells(grid, move |i| if f(i, 0) < 0.5 { 1.0 } else { -1.0 }),
    ));
    let f = frac;
    out.push((
        "smooth".into(),
        StepFunction::from_cells(grid, move |i| {
            (PI * f(i, 0)).sin() * (1..=d).map(|k| (PI * f(i, k)).cos() + 0.5).product::<f64>()
        }),
    ));
    Ok(out)
}

/// Quadrature controls for [`capital_i`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSpec {
    /// Gauss-Legendre nodes per panel.
    pub nodes: usize,
    /// Geometrically graded panel levels of the first pass.
    pub initial_levels: usize,
    /// Panel budget; refinement stops here.
    pub max_levels: usize,
    /// Relative change between refinements accepted as converged.
    pub rel_tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { nodes: 8, initial_levels: 4, max_levels: 512, rel_tol: 0.02 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapitalI {
    /// Last (possibly truncated) quadrature value.
    pub value: f64,
    /// Refinement reached `rel_tol`.
    pub converged: bool,
    pub levels: usize,
    /// Relative change of the last refinement.
    pub last_change: f64,
    /// The parameters fail the stochastic-convolution condition.
    pub gate_violated: bool,
    /// Set when the value should not be trusted as a finite integral.
    pub divergence_warning: bool,
}

/// `I(t) = ∫_0^t∫_0^t ∫∫ G_{t-s}(x-y) G_{t-r}(x-z) |s-r|^{2H_0-2} Π|y_i-z_i|^{2H_i-2}`.
///
/// The spatial integral is a Gaussian absolute moment per coordinate:
/// `∫∫ G_a G_b |y-z|^{2H-2} = (4ν(a+b))^{H-1} Γ(H-1/2)/√π`. With `a = u`,
/// `b = u w` the remaining time integral separates into
/// `2C ∫_0^t u^{2H_0-1+γ} du ∫_0^1 (1-w)^{2H_0-2} (1+w)^γ dw`, `γ = Σ(H_i-1)`.
/// Both factors use Gauss-Legendre panels graded geometrically toward their
/// singular endpoint; the innermost panel is dropped, so a divergent integral
/// shows up as a value that keeps growing under refinement.
pub fn capital_i(t: f64, params: &HermiteParams, quad: &QuadratureSpec) -> Result<CapitalI> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("I(t) needs t > 0, got {t}")));
    }
    if params.hurst.len() != params.d + 1 || params.hurst.iter().any(|&h| !(h > 0.5 && h < 1.0)) {
        return Err(Error::Domain("I(t) needs d+1 Hurst indices in (1/2, 1)".into()));
    }
    if !(params.nu > 0.0) {
        return Err(Error::Domain("I(t) needs nu > 0".into()));
    }
    if quad.nodes < 1 || quad.initial_levels < 1 || quad.max_levels < quad.initial_levels {
        return Err(Error::InvalidParams("inconsistent quadrature levels".into()));
    }
    let gate_violated = !validate_params(params).valid;
    let h0 = params.hurst[0];
    let space = &params.hurst[1..];
    let gam: f64 = space.iter().map(|h| h - 1.0).sum();
    let c: f64 = space
        .iter()
        .map(|&h| (4.0 * params.nu).powf(h - 1.0) * gamma(h - 0.5) / PI.sqrt())
        .product();
    let rule = quad::gauss_legendre(quad.nodes);
    let eval = |levels: usize| {
        let mut u_int = 0.0;
        let mut w_int = 0.0;
        for k in 0..levels {
            let hi = 0.5f64.powi(k as i32);
            let lo = 0.5 * hi;
            u_int += quad::integrate(|u| u.powf(2.0 * h0 - 1.0 + gam), t * lo, t * hi, &rule);
            // w in [1 - hi, 1 - lo], i.e. distance to 1 in [lo, hi]
            w_int += quad::integrate(|v| v.powf(2.0 * h0 - 2.0) * (2.0 - v).powf(gam), lo, hi, &rule);
        }
        2.0 * c * u_int * w_int
    };
    let mut levels = quad.initial_levels;
    let mut value = eval(levels);
    let mut last_change = f64::INFINITY;
    let mut converged = false;
    while levels * 2 <= quad.max_levels {
        levels *= 2;
        let next = eval(levels);
        last_change = ((next - value) / next).abs();
        value = next;
        if last_change < quad.rel_tol {
            converged = true;
            break;
        }
    }
    Ok(CapitalI {
        value,
        converged,
        levels,
        last_change,
        gate_violated,
        divergence_warning: gate_violated || !converged || !value.is_finite(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::sheet_covariance;
    use proptest::prelude::*;

    fn unit_grid(n: usize) -> GridSpec {
        GridSpec::new(1.0, n, 1.0, n, 1).unwrap()
    }

    #[test]
    fn inner_product_examples() {
        let h = [0.75, 0.75];
        let g = unit_grid(4);
        let one = StepFunction::from_cells(&g, |_| 1.0);
        let r = h_inner_product(&one, &one, &h).unwrap();
        assert!((r.value - 1.0).abs() < 1e-9);
        assert!(r.quadrature_error_estimate < 1e-12);

        let g2 = GridSpec::new(2.0, 2, 1.0, 1, 1).unwrap();
        let phi = StepFunction::indicator(&g2, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let psi = StepFunction::indicator(&g2, &[1.0, 0.0], &[2.0, 1.0]).unwrap();
        let v = h_inner_product(&phi, &psi, &h).unwrap().value;
        assert!((v - (2f64.powf(1.5) - 2.0) / 2.0).abs() < 1e-12, "{v}");
        assert_eq!(h_inner_product(&StepFunction::zeros(&g), &one, &h).unwrap().value, 0.0);

        let other = StepFunction::zeros(&unit_grid(2));
        assert!(matches!(h_inner_product(&one, &other, &h), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn indicator_norms_reproduce_covariance() {
        // ⟨1_[0,t], 1_[0,s]⟩ is the sheet covariance for any pair of lattice boxes
        let g = GridSpec::new(2.0, 8, 3.0, 6, 1).unwrap();
        let h = [0.62, 0.83];
        for (t, s) in [([1.0, 1.5], [2.0, 3.0]), ([0.5, 0.5], [1.25, 2.0])] {
            let a = StepFunction::indicator(&g, &[0.0, 0.0], &t).unwrap();
            let b = StepFunction::indicator(&g, &[0.0, 0.0], &s).unwrap();
            let v = h_inner_product(&a, &b, &h).unwrap().value;
            let want = sheet_covariance(&t, &s, &h);
            assert!((v - want).abs() < 1e-12 * want.max(1.0));
        }
    }

    #[test]
    fn integrate_step_telescopes() {
        let g = unit_grid(4);
        let z = crate::noise::sample_fbm_sheet_exact(&[0.7, 0.7], &g, SeedSpec::new(1, 2)).unwrap();
        let full = StepFunction::from_cells(&g, |_| 1.0);
        assert!((integrate_step(&full, &z).unwrap() - z.at(&[4, 4])).abs() < 1e-12);
        assert_eq!(integrate_step(&StepFunction::zeros(&g), &z).unwrap(), 0.0);
        let box_ = StepFunction::indicator(&g, &[0.0, 0.0], &[0.5, 0.75]).unwrap();
        assert!((integrate_step(&box_, &z).unwrap() - z.at(&[2, 3])).abs() < 1e-12);
    }

    #[test]
    fn isometry_of_zero_function() {
        let g = unit_grid(4);
        let p = HermiteParams::new(1, vec![0.7, 0.7], 1.0);
        let r = isometry_report(&StepFunction::zeros(&g), &p, &SamplerSpec::Exact, 10, SeedSpec::new(0, 0)).unwrap();
        assert_eq!((r.empirical_second_moment, r.h_norm, r.z_score), (0.0, 0.0, 0.0));
    }

    #[test]
    fn isometry_q1_exact_sampler() {
        let g = unit_grid(8);
        let p = HermiteParams::new(1, vec![0.7, 0.7], 1.0);
        let phi = StepFunction::from_cells(&g, |_| 1.0);
        let r = isometry_report(&phi, &p, &SamplerSpec::Exact, 10_000, SeedSpec::new(21, 0)).unwrap();
        assert!(r.z_score.abs() < 3.0, "{r:?}");
    }

    /// Independent oracle: after `1 - w = x^{1/b}` the w-integral becomes
    /// `(1/b) ∫_0^1 (2 - x^{1/b})^γ dx` with a smooth integrand; Simpson's rule.
    fn capital_i_oracle(t: f64, p: &HermiteParams) -> f64 {
        let h0 = p.hurst[0];
        let gam: f64 = p.hurst[1..].iter().map(|h| h - 1.0).sum();
        let c: f64 = p.hurst[1..]
            .iter()
            .map(|&h| (4.0 * p.nu).powf(h - 1.0) * gamma(h - 0.5) / PI.sqrt())
            .product();
        let b = 2.0 * h0 - 1.0;
        let n = 20_000;
        let f = |x: f64| (2.0 - x.powf(1.0 / b)).powf(gam);
        let hstep = 1.0 / n as f64;
        let mut s = f(0.0) + f(1.0);
        for k in 1..n {
            s += f(k as f64 * hstep) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        let w = s * hstep / 3.0 / b;
        let a = 2.0 * h0 + gam;
        2.0 * c * t.powf(a) / a * w
    }

    #[test]
    fn capital_i_matches_oracle_and_examples() {
        let p = HermiteParams::new(1, vec![0.7, 0.7], 0.5);
        let q = QuadratureSpec::default();
        let i1 = capital_i(1.0, &p, &q).unwrap();
        let want = capital_i_oracle(1.0, &p);
        assert!(i1.converged && !i1.divergence_warning);
        assert!((i1.value - want).abs() < 0.02 * want, "{} vs {want}", i1.value);
        let i_half = capital_i(0.5, &p, &q).unwrap();
        assert!(i_half.value < i1.value);
        assert!(capital_i(1e-4, &p, &q).unwrap().value <= 1e-3);
        assert!(i1.last_change < 0.02);
    }

    #[test]
    fn capital_i_straddles_the_gate() {
        let q = QuadratureSpec::default();
        let ok = HermiteParams::new(1, vec![0.65; 4], 0.5);
        let bad = HermiteParams::new(1, vec![0.56; 4], 0.5);
        let a = capital_i(1.0, &ok, &q).unwrap();
        assert!(a.converged && !a.divergence_warning, "{a:?}");
        let want = capital_i_oracle(1.0, &ok);
        assert!((a.value - want).abs() < 0.02 * want);
        let b = capital_i(1.0, &bad, &q).unwrap();
        assert!(!b.converged && b.divergence_warning && b.gate_violated, "{b:?}");
    }

    fn step_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
        (
            prop::collection::vec(-2.0f64..2.0, 16),
            prop::collection::vec(-2.0f64..2.0, 16),
            prop::collection::vec(0.51f64..0.99, 2),
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn inner_product_is_symmetric_bilinear_and_cauchy_schwarz(
            (a, b, h) in step_pair(),
            c in -3.0f64..3.0,
        ) {
            let g = unit_grid(4);
            let phi = StepFunction::new(&g, a).unwrap();
            let psi = StepFunction::new(&g, b).unwrap();
            let ab = h_inner_product(&phi, &psi, &h).unwrap().value;
            let ba = h_inner_product(&psi, &phi, &h).unwrap().value;
            let aa = h_inner_product(&phi, &phi, &h).unwrap().value;
            let bb = h_inner_product(&psi, &psi, &h).unwrap().value;
            let scale = aa.abs().max(bb.abs()).max(1e-300);
            prop_assert!((ab - ba).abs() <= 1e-12 * scale);
            prop_assert!(aa >= -1e-12 * scale);
            prop_assert!(ab * ab <= aa * bb * (1.0 + 1e-10) + 1e-300);
            let sum = StepFunction::new(&g, phi.coefficients.iter().zip(&psi.coefficients).map(|(x, y)| c * x + y).collect()).unwrap();
            let lin = h_inner_product(&sum, &phi, &h).unwrap().value;
            prop_assert!((lin - (c * aa + ba)).abs() <= 1e-12 * (c.abs() * aa.abs() + ba.abs() + 1.0) * 10.0);
        }
    }
}
