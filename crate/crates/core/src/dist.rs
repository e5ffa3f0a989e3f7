//! Gaussian and log-normal helpers shared by the pricers, the EM densities
//! and the goodness-of-fit transforms.

use statrs::function::erf::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn norm_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal CDF via `erfc`, accurate in both tails.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Φ(z)` without cancellation.
pub fn norm_sf(z: f64) -> f64 {
    0.5 * erfc(z * FRAC_1_SQRT_2)
}

pub fn gaussian_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    if sd <= 0.0 {
        return if x == mean { f64::INFINITY } else { 0.0 };
    }
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
}

/// CDF of `LN(mu, sigma^2)` at `y`. Zero for `y <= 0`; a step for `sigma = 0`.
pub fn lognormal_cdf(y: f64, mu: f64, sigma: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    if sigma == 0.0 {
        return if y.ln() >= mu { 1.0 } else { 0.0 };
    }
    norm_cdf((y.ln() - mu) / sigma)
}

pub fn lognormal_sf(y: f64, mu: f64, sigma: f64) -> f64 {
    if y <= 0.0 {
        return 1.0;
    }
    if sigma == 0.0 {
        return if y.ln() >= mu { 0.0 } else { 1.0 };
    }
    norm_sf((y.ln() - mu) / sigma)
}

pub fn lognormal_pdf(y: f64, mu: f64, sigma: f64) -> f64 {
    if y <= 0.0 || sigma <= 0.0 {
        return 0.0;
    }
    let z = (y.ln() - mu) / sigma;
    (-0.5 * z * z).exp() / (y * sigma * (2.0 * PI).sqrt())
}

/// `E[(Y - k)^+]` for `Y ~ LN(mu, sigma^2)` and `k > 0`.
pub fn lognormal_call(k: f64, mu: f64, sigma: f64) -> f64 {
    let mean = (mu + 0.5 * sigma * sigma).exp();
    if k <= 0.0 {
        return mean - k;
    }
    if sigma == 0.0 {
        return (mean - k).max(0.0);
    }
    let d = (k.ln() - mu - sigma * sigma) / sigma;
    mean * norm_sf(d) - k * lognormal_sf(k, mu, sigma)
}

/// `E[(k - Y)^+]` for `Y ~ LN(mu, sigma^2)` and `k > 0`.
pub fn lognormal_put(k: f64, mu: f64, sigma: f64) -> f64 {
    if k <= 0.0 {
        return 0.0;
    }
    let mean = (mu + 0.5 * sigma * sigma).exp();
    if sigma == 0.0 {
        return (k - mean).max(0.0);
    }
    let d = (k.ln() - mu - sigma * sigma) / sigma;
    k * lognormal_cdf(k, mu, sigma) - mean * norm_cdf(d)
}

/// `E[(X - k)^+]` for `X ~ N(mean, sd^2)`; degenerates to the intrinsic value at `sd = 0`.
pub fn gaussian_call(mean: f64, sd: f64, k: f64) -> f64 {
    if sd <= 0.0 {
        return (mean - k).max(0.0);
    }
    let z = (k - mean) / sd;
    sd * norm_pdf(z) + (mean - k) * norm_sf(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn tails_are_complementary() {
        for &z in &[-9.0, -3.2, -0.5, 0.0, 0.7, 4.1, 8.5] {
            assert_relative_eq!(norm_cdf(z) + norm_sf(z), 1.0, epsilon = 1e-15);
        }
        assert!(norm_sf(9.0) > 0.0 && norm_sf(9.0) < 1e-18);
    }

    #[test]
    fn gaussian_call_matches_quadrature() {
        let (m, s, k) = (3.0, 2.0, 4.5);
        let n = 200_000;
        let (lo, hi) = (k, m + 12.0 * s);
        let h = (hi - lo) / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let x = lo + (i as f64 + 0.5) * h;
            acc += (x - k) * gaussian_pdf(x, m, s) * h;
        }
        assert_relative_eq!(gaussian_call(m, s, k), acc, epsilon = 1e-8);
    }

    #[test]
    fn lognormal_put_call_parity() {
        let (mu, sigma): (f64, f64) = (2.6, 0.57);
        let mean = (mu + 0.5 * sigma * sigma).exp();
        for &k in &[1.0, 10.0, 14.0, 40.0] {
            let lhs = lognormal_call(k, mu, sigma) - lognormal_put(k, mu, sigma);
            assert_relative_eq!(lhs, mean - k, epsilon = 1e-10);
        }
    }
}
