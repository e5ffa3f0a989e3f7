use super::BaseParams;
use crate::error::{MrsError, Result};
use crate::market_price::MarketPriceOfRisk;

/// Gaussian law of the base process at `t_to` given its value at `t_from`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseMoments {
    pub mean: f64,
    pub variance: f64,
}

impl BaseMoments {
    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Exact transition of the base process from `(t_from, x_from)` to `t_to`.
///
/// With `lambda` given the drift is shifted by `-λ(u)` for `u >= 0` only:
/// history before the valuation date evolves under the actual measure.
pub fn base_conditional_moments(
    base: &BaseParams,
    x_from: f64,
    t_from: f64,
    t_to: f64,
    lambda: Option<&MarketPriceOfRisk>,
) -> Result<BaseMoments> {
    if t_to < t_from {
        return Err(MrsError::arg(format!(
            "base moments: t_to {t_to} < t_from {t_from}"
        )));
    }
    if !(base.beta > 1e-12) {
        return Err(MrsError::arg("beta must exceed 1e-12"));
    }
    let h = t_to - t_from;
    let beta = base.beta;
    let decay = (-beta * h).exp();
    let mut mean = x_from * decay + base.long_run_mean() * -(-beta * h).exp_m1();
    if let Some(lam) = lambda {
        mean -= lam.discounted_integral(beta, t_from.max(0.0), t_to.max(0.0));
    }
    let variance = base.stationary_variance() * -(-2.0 * beta * h).exp_m1();
    Ok(BaseMoments { mean, variance })
}
