//! Rate predictions: growth function, critical radius, achievable rates and
//! minimax lower bounds. Constants are unit by default; only the exponents
//! are meaningful.

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::sampling::VariantKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error("no critical radius: {0}")]
    NoSolution(String),
}

/// Unspecified universal constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TheoryConstants {
    pub kappa: f64,
    pub c0: f64,
    pub c1: f64,
    pub c: f64,
}

impl Default for TheoryConstants {
    fn default() -> Self {
        Self { kappa: 1.0, c0: 1.0, c1: 1.0, c: 1.0 }
    }
}

/// `G_r(t) = [Σ_j min(t², rρ²μ̂_j)]^(1/2)`.
pub fn growth_function(mu_hats: &[f64], r: usize, rho: f64, t: f64) -> f64 {
    let cap = r as f64 * rho * rho;
    let t2 = t * t;
    mu_hats.iter().map(|&mu| t2.min(cap * mu)).sum::<f64>().sqrt()
}

/// Smallest `ε > 0` with `(σ_m/√n) r^(3/2) G_r(ε) <= κ ε²`.
///
/// `G_r(ε)/ε²` is nonincreasing, so the feasible set is a half-line and is
/// located by geometric bisection on `[1e-12, ε_max]`, where `ε_max` solves the
/// saturated equation.
pub fn critical_radius(
    mu_hats: &[f64],
    r: usize,
    rho: f64,
    sigma_m: f64,
    n: usize,
    kappa: f64,
) -> Result<f64, TheoryError> {
    if sigma_m == 0.0 {
        return Ok(0.0);
    }
    if mu_hats.is_empty() || !(sigma_m > 0.0) || !(kappa > 0.0) || n == 0 {
        return Err(TheoryError::NoSolution(format!(
            "invalid inputs (m = {}, sigma_m = {sigma_m}, kappa = {kappa}, n = {n})",
            mu_hats.len()
        )));
    }
    let pre = sigma_m / (n as f64).sqrt() * (r as f64).powf(1.5);
    let holds = |eps: f64| pre * growth_function(mu_hats, r, rho, eps) <= kappa * eps * eps;

    let saturated = (r as f64 * rho * rho * mu_hats.iter().sum::<f64>()).sqrt();
    let hi_start = (pre * saturated / kappa).sqrt();
    if !hi_start.is_finite() || !holds(hi_start) {
        return Err(TheoryError::NoSolution(format!("inequality fails at saturation radius {hi_start}")));
    }
    let mut lo = 1e-12;
    let mut hi = hi_start;
    if holds(lo) {
        return Ok(lo);
    }
    for _ in 0..200 {
        if hi / lo <= 1.0 + 1e-13 {
            break;
        }
        let mid = (lo * hi).sqrt();
        if holds(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Named terms of a rate expression. `fast_term` is `+∞` when the fast rate
/// is unachievable (serialized as `null`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateTerms {
    pub estimation_term: f64,
    pub approximation_term: f64,
    #[serde(deserialize_with = "null_as_infinity")]
    pub fast_term: f64,
}

fn null_as_infinity<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePrediction {
    pub model_kind: VariantKind,
    pub alpha: f64,
    pub terms: RateTerms,
    /// Predicted log-log slope against the driving product (`mn` for time
    /// sampling, `n` for truncation).
    pub exponent: f64,
    /// `min(estimation, fast)`: the subspace rate in `ℝᵐ`.
    pub discrete: f64,
    /// `discrete + approximation`: the rate in `L²`.
    pub function: f64,
    /// For truncation lower bounds, whether `m >= (c₀n)^(1/(2α+1))`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime_ok: Option<bool>,
}

impl RatePrediction {
    fn assemble(model_kind: VariantKind, alpha: f64, terms: RateTerms, regime_ok: Option<bool>) -> Self {
        let discrete = terms.estimation_term.min(terms.fast_term);
        Self {
            model_kind,
            alpha,
            terms,
            exponent: -2.0 * alpha / (2.0 * alpha + 1.0),
            discrete,
            function: discrete + terms.approximation_term,
            regime_ok,
        }
    }
}

/// Achievable rates with unit constants (scaled by `constants.c`).
pub fn predicted_rates(
    kind: VariantKind,
    alpha: f64,
    r: usize,
    rho: f64,
    sigma0: f64,
    m: usize,
    n: usize,
    constants: &TheoryConstants,
) -> RatePrediction {
    let p = 2.0 * alpha / (2.0 * alpha + 1.0);
    let rf = r as f64;
    let c_tilde = rf.powf(3.0 + 1.0 / (2.0 * alpha)) * rho.powf(1.0 / alpha);
    let s2 = sigma0 * sigma0;
    let (mf, nf) = (m as f64, n as f64);
    let approximation_term = constants.c * mf.powf(-2.0 * alpha);
    let terms = match kind {
        VariantKind::Time => RateTerms {
            estimation_term: constants.c * (c_tilde * s2 / (mf * nf)).powf(p),
            approximation_term,
            fast_term: constants.c * rf.powi(3) * s2 / nf,
        },
        VariantKind::Truncation => RateTerms {
            estimation_term: constants.c * (c_tilde * s2 / nf).powf(p),
            approximation_term,
            fast_term: f64::INFINITY,
        },
    };
    RatePrediction::assemble(kind, alpha, terms, None)
}

/// Minimax lower-bound shapes with unit constants (scaled by `constants.c`).
pub fn minimax_lower_bounds(
    kind: VariantKind,
    alpha: f64,
    sigma0: f64,
    m: usize,
    n: usize,
    constants: &TheoryConstants,
) -> RatePrediction {
    let p = 2.0 * alpha / (2.0 * alpha + 1.0);
    let s2 = sigma0 * sigma0;
    let (mf, nf) = (m as f64, n as f64);
    let approximation_term = constants.c * mf.powf(-2.0 * alpha);
    match kind {
        VariantKind::Time => {
            let terms = RateTerms {
                estimation_term: constants.c * (s2 / (mf * nf)).powf(p),
                approximation_term,
                fast_term: constants.c * s2 / nf,
            };
            RatePrediction::assemble(kind, alpha, terms, None)
        }
        VariantKind::Truncation => {
            let terms = RateTerms {
                estimation_term: constants.c * (s2 / nf).powf(p),
                approximation_term,
                fast_term: f64::INFINITY,
            };
            let regime = mf >= (constants.c0 * nf).powf(1.0 / (2.0 * alpha + 1.0));
            RatePrediction::assemble(kind, alpha, terms, Some(regime))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn poly(m: usize, alpha: f64) -> Vec<f64> {
        (1..=m).map(|j| (j as f64).powf(-2.0 * alpha)).collect()
    }

    #[test]
    fn growth_function_values() {
        let mu = [1.0, 0.25];
        assert_eq!(growth_function(&mu, 1, 1.0, 0.0), 0.0);
        assert!((growth_function(&mu, 1, 1.0, 0.5) - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((growth_function(&mu, 2, 3.0, 1e6) - (2.0 * 9.0 * 1.25f64).sqrt()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn growth_ratio_is_nonincreasing(m in 1usize..60, alpha in 0.6f64..3.0, r in 1usize..4, rho in 0.1f64..5.0,
                                          t in 1e-4f64..10.0, f in 1.0f64..10.0) {
            let mu = poly(m, alpha);
            let (g1, g2) = (growth_function(&mu, r, rho, t), growth_function(&mu, r, rho, t * f));
            prop_assert!(g2 >= g1 * (1.0 - 1e-12));
            prop_assert!(g2 / (t * f) <= g1 / t * (1.0 + 1e-12));
        }
    }

    #[test]
    fn zero_noise_radius() {
        assert_eq!(critical_radius(&poly(10, 1.0), 1, 1.0, 0.0, 100, 1.0), Ok(0.0));
        assert!(critical_radius(&[], 1, 1.0, 1.0, 100, 1.0).is_err());
    }

    #[test]
    fn radius_tracks_closed_form() {
        let mu = poly(100_000, 1.0);
        for e in 2..=6 {
            let n = 10usize.pow(e);
            let eps = critical_radius(&mu, 1, 1.0, 1.0, n, 1.0).unwrap();
            let closed = (1.0 / n as f64).powf(2.0 / 3.0);
            let ratio = eps * eps / closed;
            assert!((0.25..=4.0).contains(&ratio), "n = {n}: ratio {ratio}");
        }
    }

    #[test]
    fn doubling_n_scales_radius() {
        let mu = poly(100_000, 1.0);
        let a = critical_radius(&mu, 1, 1.0, 1.0, 10_000, 1.0).unwrap();
        let b = critical_radius(&mu, 1, 1.0, 1.0, 20_000, 1.0).unwrap();
        let factor = (a * a) / (b * b);
        assert!((factor / 2f64.powf(2.0 / 3.0) - 1.0).abs() < 0.05, "{factor}");
    }

    #[test]
    fn radius_is_monotone() {
        let mu = poly(500, 1.0);
        let mut prev = f64::INFINITY;
        for n in [10, 100, 1000, 10_000] {
            let e = critical_radius(&mu, 2, 1.5, 0.7, n, 1.0).unwrap();
            assert!(e <= prev);
            prev = e;
        }
        let mut prev = 0.0;
        for s in [0.1, 0.5, 1.0, 4.0] {
            let e = critical_radius(&mu, 2, 1.5, s, 1000, 1.0).unwrap();
            assert!(e >= prev);
            prev = e;
        }
    }

    #[test]
    fn time_rates() {
        let c = TheoryConstants::default();
        let p = predicted_rates(VariantKind::Time, 1.0, 1, 1.0, 1.0, 10_000, 10_000, &c);
        assert!((p.terms.estimation_term - 1e-8f64.powf(2.0 / 3.0)).abs() < 1e-15);
        assert!((p.terms.estimation_term - 4.64e-6).abs() < 1e-8);
        // m >= n^(1/2α) makes the (mn) branch the active one.
        for n in [100, 1000, 10_000] {
            let m = (n as f64).sqrt().ceil() as usize;
            let p = predicted_rates(VariantKind::Time, 1.0, 1, 1.0, 1.0, m, n, &c);
            assert!(p.terms.estimation_term <= p.terms.fast_term * (1.0 + 1e-12));
            let p = predicted_rates(VariantKind::Time, 1.0, 1, 1.0, 1.0, 2 * m, n, &c);
            assert_eq!(p.discrete, p.terms.estimation_term);
        }
        assert!((p.exponent + 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn truncation_rates_ignore_m() {
        let c = TheoryConstants::default();
        let a = predicted_rates(VariantKind::Truncation, 1.0, 2, 3.0, 1.0, 10, 500, &c);
        let b = predicted_rates(VariantKind::Truncation, 1.0, 2, 3.0, 1.0, 1000, 500, &c);
        assert_eq!(a.terms.estimation_term, b.terms.estimation_term);
        assert!(a.terms.fast_term.is_infinite());
        let json = serde_json::to_value(&a).unwrap();
        assert!(json["terms"]["fast_term"].is_null());
        let back: RatePrediction = serde_json::from_value(json).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn lower_bounds() {
        let c = TheoryConstants::default();
        let t = minimax_lower_bounds(VariantKind::Time, 1.0, 1.0, 1000, 1000, &c);
        assert!((t.function - (1e-4 + 1e-6)).abs() < 1e-15);
        let a = minimax_lower_bounds(VariantKind::Truncation, 1.0, 1.0, 10, 1000, &c);
        let b = minimax_lower_bounds(VariantKind::Truncation, 1.0, 1.0, 100_000, 1000, &c);
        assert_eq!(a.terms.estimation_term, b.terms.estimation_term);
        assert_eq!(a.regime_ok, Some(true));
        assert_eq!(minimax_lower_bounds(VariantKind::Truncation, 1.0, 1.0, 5, 1000, &c).regime_ok, Some(false));
        assert!((b.function - b.terms.estimation_term) < 1e-9);
    }

    #[test]
    fn upper_and_lower_shapes_share_exponents() {
        let c = TheoryConstants::default();
        for kind in [VariantKind::Time, VariantKind::Truncation] {
            for alpha in [0.75, 1.0, 2.0] {
                let up = predicted_rates(kind, alpha, 2, 1.5, 0.8, 64, 256, &c);
                let lo = minimax_lower_bounds(kind, alpha, 0.8, 64, 256, &c);
                assert_eq!(up.exponent, lo.exponent);
                // Same power laws in (m, n): the ratio is constant along the grid.
                let up2 = predicted_rates(kind, alpha, 2, 1.5, 0.8, 128, 1024, &c);
                let lo2 = minimax_lower_bounds(kind, alpha, 0.8, 128, 1024, &c);
                let r1 = up.terms.estimation_term / lo.terms.estimation_term;
                let r2 = up2.terms.estimation_term / lo2.terms.estimation_term;
                assert!((r1 / r2 - 1.0).abs() < 1e-12);
                assert!(up.exponent > -1.0 && up.exponent < 0.0);
            }
        }
    }
}
