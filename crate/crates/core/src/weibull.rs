//! Weibull gap-time primitives in the `S(t) = exp(-λ t^γ)` parameterisation.

use statrs::function::gamma::{digamma, gamma, ln_gamma};

use crate::error::{Error, Result};

/// Rate `λ = (Γ(1 + 1/γ) e^{-η})^γ`, chosen so that the Weibull mean is `e^η`.
pub fn rate_from_eta(eta: f64, shape: f64) -> f64 {
    debug_assert!(shape > 0.0);
    (shape * (ln_gamma(1.0 + 1.0 / shape) - eta)).exp()
}

/// Mean of a Weibull with shape `γ` and rate `λ`: `λ^{-1/γ} Γ(1 + 1/γ)`.
pub fn weibull_mean(shape: f64, rate: f64) -> f64 {
    rate.powf(-1.0 / shape) * gamma(1.0 + 1.0 / shape)
}

pub fn survival(t: f64, shape: f64, rate: f64) -> f64 {
    (-rate * t.max(0.0).powf(shape)).exp()
}

/// `d/dγ` of `ln λ(η, γ)`, i.e. `ln Γ(1+1/γ) - ψ(1+1/γ)/γ - η`.
pub(crate) fn dlog_rate_dshape(eta: f64, shape: f64) -> f64 {
    let z = 1.0 + 1.0 / shape;
    ln_gamma(z) - digamma(z) / shape - eta
}

/// Remaining time `T - s` given `T > s`, by inverse transform of the
/// conditional survival `S(s + x) / S(s)`. `u` must lie in `(0, 1]`.
pub fn conditional_weibull_sample(shape: f64, rate: f64, elapsed: f64, u: f64) -> Result<f64> {
    if !(u > 0.0 && u <= 1.0) {
        return Err(Error::InvalidArgument(format!("uniform draw {u} outside (0, 1]")));
    }
    if !(shape > 0.0) || !(rate > 0.0) || !(elapsed >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "invalid conditional sample parameters (shape {shape}, rate {rate}, elapsed {elapsed})"
        )));
    }
    Ok(conditional_sample_unchecked(shape, rate, elapsed, u))
}

#[inline]
pub(crate) fn conditional_sample_unchecked(shape: f64, rate: f64, elapsed: f64, u: f64) -> f64 {
    if rate <= 0.0 {
        return f64::INFINITY;
    }
    let e = -u.ln();
    if shape == 1.0 {
        return e / rate;
    }
    let base = if elapsed > 0.0 { elapsed.powf(shape) } else { 0.0 };
    ((base + e / rate).powf(1.0 / shape) - elapsed).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_rate() {
        assert!((rate_from_eta(4.09, 1.0) - (-4.09f64).exp()).abs() < 1e-15);
        assert!((rate_from_eta(4.09, 1.0) - 0.01672).abs() < 5e-5);
    }

    #[test]
    fn shape_two_rate() {
        // Γ(1.5)^2 = π/4
        assert!((rate_from_eta(0.0, 2.0) - std::f64::consts::PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn mean_from_quadrature() {
        // E[T] = ∫ S(t) dt, integrated with composite Simpson on a substituted grid.
        for &(shape, eta) in &[(0.7, 2.0), (0.98, 4.1), (1.4, 3.5), (2.0, 0.0), (3.0, 5.5)] {
            let rate = rate_from_eta(eta, shape);
            let scale = weibull_mean(shape, rate);
            let upper = scale * 60.0;
            let n = 400_000;
            let h = upper / n as f64;
            let mut acc = survival(0.0, shape, rate) + survival(upper, shape, rate);
            for i in 1..n {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * survival(i as f64 * h, shape, rate);
            }
            let mean = acc * h / 3.0;
            assert!((mean - eta.exp()).abs() / eta.exp() < 1e-6, "shape {shape} eta {eta}: {mean}");
        }
    }

    #[test]
    fn conditional_memoryless_when_exponential() {
        for s in [0.0, 5.0, 60.0] {
            let x = conditional_weibull_sample(1.0, 0.03, s, 0.4).unwrap();
            assert!((x - (-0.4f64.ln()) / 0.03).abs() < 1e-12);
        }
    }

    #[test]
    fn conditional_hand_case() {
        // (1 + 3)^{1/2} - 1 = 1
        let x = conditional_weibull_sample(2.0, 1.0, 1.0, (-3.0f64).exp()).unwrap();
        assert!((x - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conditional_boundaries() {
        assert_eq!(conditional_weibull_sample(1.4, 0.01, 12.0, 1.0).unwrap(), 0.0);
        assert!(conditional_weibull_sample(1.4, 0.01, 12.0, 0.0).is_err());
    }

    #[test]
    fn shape_derivative_matches_difference() {
        for &(eta, shape) in &[(4.0, 0.9), (3.2, 1.4), (0.5, 2.5)] {
            let h = 1e-6;
            let num = (rate_from_eta(eta, shape + h).ln() - rate_from_eta(eta, shape - h).ln()) / (2.0 * h);
            assert!((num - dlog_rate_dshape(eta, shape)).abs() < 1e-6);
        }
    }
}
