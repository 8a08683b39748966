//! Two-sample Kolmogorov-Smirnov test.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
}

/// Asymptotic KS tail `Q(λ) = 2 Σ_{j≥1} (-1)^{j-1} exp(-2 j² λ²)`.
pub fn ks_tail(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 * sum.abs().max(1e-300) {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Sup distance between empirical CDFs, with the small-sample corrected
/// asymptotic p-value (`λ = (√n_e + 0.12 + 0.11/√n_e) D`).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let (n1, n2) = (a.len(), b.len());
    if n1 == 0 || n2 == 0 {
        return KsResult { statistic: 0.0, p_value: 1.0, n1, n2 };
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n1 && j < n2 {
        let v = if x[i].total_cmp(&y[j]).is_le() { x[i] } else { y[j] };
        while i < n1 && x[i] == v {
            i += 1;
        }
        while j < n2 && y[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / n1 as f64 - j as f64 / n2 as f64).abs());
    }
    if d == 0.0 {
        return KsResult { statistic: 0.0, p_value: 1.0, n1, n2 };
    }
    let en = ((n1 * n2) as f64 / (n1 + n2) as f64).sqrt();
    let p_value = ks_tail((en + 0.12 + 0.11 / en) * d);
    KsResult { statistic: d, p_value, n1, n2 }
}
