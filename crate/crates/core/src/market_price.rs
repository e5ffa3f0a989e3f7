//! The market price of risk λ(t): the drift shift applied to the base regime
//! under the pricing measure.

use serde::{Deserialize, Serialize};

use crate::error::{MrsError, Result};
use crate::quadrature;

/// λ(u) as a function of the day offset `u` from the valuation date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum MarketPriceOfRisk {
    /// λ(u) = slope·u + level.
    Affine { slope: f64, level: f64 },
    /// Piecewise-linear interpolation through `(times[i], values[i])`,
    /// held flat outside the knot range.
    Tabulated { times: Vec<f64>, values: Vec<f64> },
}

impl MarketPriceOfRisk {
    pub fn affine(slope: f64, level: f64) -> Self {
        MarketPriceOfRisk::Affine { slope, level }
    }

    pub fn zero() -> Self {
        Self::affine(0.0, 0.0)
    }

    pub fn tabulated(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(MrsError::arg(
                "tabulated λ needs matching, nonempty knot vectors",
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(MrsError::arg(
                "tabulated λ knots must be strictly increasing",
            ));
        }
        if times.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(MrsError::arg("tabulated λ knots must be finite"));
        }
        Ok(MarketPriceOfRisk::Tabulated { times, values })
    }

    /// Re-checks the invariants of a deserialised value.
    pub fn validate(&self) -> Result<()> {
        match self {
            MarketPriceOfRisk::Affine { slope, level } => {
                if !slope.is_finite() || !level.is_finite() {
                    return Err(MrsError::arg("affine λ coefficients must be finite"));
                }
                Ok(())
            }
            MarketPriceOfRisk::Tabulated { times, values } => {
                Self::tabulated(times.clone(), values.clone()).map(|_| ())
            }
        }
    }

    pub fn value(&self, u: f64) -> f64 {
        match self {
            MarketPriceOfRisk::Affine { slope, level } => slope * u + level,
            MarketPriceOfRisk::Tabulated { times, values } => {
                if u <= times[0] {
                    return values[0];
                }
                let last = times.len() - 1;
                if u >= times[last] {
                    return values[last];
                }
                let i = times.partition_point(|&t| t <= u) - 1;
                let w = (u - times[i]) / (times[i + 1] - times[i]);
                values[i] + w * (values[i + 1] - values[i])
            }
        }
    }

    /// ∫_a^b e^{-β(b-u)} λ(u) du.
    ///
    /// Closed form for the affine case; the tabulated case is integrated
    /// knot-to-knot with adaptive Gauss–Legendre to 1e-10 absolute.
    pub fn discounted_integral(&self, beta: f64, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let h = b - a;
        match self {
            MarketPriceOfRisk::Affine { slope, level } => {
                let decay = (-beta * h).exp();
                let one_minus = -(-beta * h).exp_m1();
                // ∫_0^h e^{-βτ}(slope·(b-τ) + level) dτ
                let tau_moment = (one_minus - beta * h * decay) / (beta * beta);
                (slope * b + level) * one_minus / beta - slope * tau_moment
            }
            MarketPriceOfRisk::Tabulated { times, .. } => {
                let f = |u: f64| (-beta * (b - u)).exp() * self.value(u);
                let mut cuts = vec![a];
                cuts.extend(times.iter().copied().filter(|&t| t > a && t < b));
                cuts.push(b);
                let tol = 1e-10 / (cuts.len() - 1) as f64;
                cuts.windows(2)
                    .map(|w| quadrature::adaptive(&f, w[0], w[1], tol))
                    .sum()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn affine_integral_matches_simpson() {
        let lam = MarketPriceOfRisk::affine(0.0084, -1.8387);
        let beta = 0.16;
        for &(a, b) in &[(0.0, 30.0), (5.0, 7.5), (12.0, 200.0)] {
            let oracle = simpson(|u| (-beta * (b - u)).exp() * lam.value(u), a, b, 20_000);
            assert!((lam.discounted_integral(beta, a, b) - oracle).abs() < 1e-10);
        }
    }

    #[test]
    fn tabulated_integral_matches_affine_when_linear() {
        let affine = MarketPriceOfRisk::affine(0.02, -1.0);
        let times: Vec<f64> = (0..=10).map(|i| i as f64 * 10.0).collect();
        let values = times.iter().map(|&t| affine.value(t)).collect();
        let tab = MarketPriceOfRisk::tabulated(times, values).unwrap();
        let (a, b) = (3.0, 87.0);
        assert!(
            (tab.discounted_integral(0.16, a, b) - affine.discounted_integral(0.16, a, b)).abs()
                < 1e-10
        );
    }

    #[test]
    fn tabulated_rejects_unsorted_knots() {
        assert!(MarketPriceOfRisk::tabulated(vec![1.0, 0.5], vec![0.0, 0.0]).is_err());
    }
}
