//! Closed-form valuation under the pricing measure `Q^λ`.
//!
//! Times are day offsets from the valuation date, which is time 0. The
//! interest rate is continuously compounded per day.

mod forward;
mod forward_option;
mod spot;

pub use forward::{forward_coefficients, forward_price, forward_price_period, ForwardCoefficients};
pub use forward_option::forward_option;
pub use spot::spot_option;

use serde::{Deserialize, Serialize};

use crate::error::{MrsError, Result};
use crate::market_price::MarketPriceOfRisk;
use crate::model::{ModelParams, RegimeHistory};
use crate::seasonal::SeasonalCurve;

/// How a delivery-period contract pays out over its window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Settlement {
    /// Paid in full at the end of the window: uniform weights.
    #[default]
    AtMaturity,
    /// Paid continuously as delivered: weights proportional to `e^{-rT}`.
    Instant,
}

impl std::str::FromStr for Settlement {
    type Err = MrsError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "at_maturity" | "maturity" => Ok(Settlement::AtMaturity),
            "instant" | "instantaneous" => Ok(Settlement::Instant),
            other => Err(MrsError::arg(format!("unknown settlement '{other}'"))),
        }
    }
}

/// Whether a delivery window is a sum over whole days or an integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discretization {
    #[default]
    Daily,
    Continuous,
}

/// Delivery window `[t1, t2]` in day offsets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeliverySpec {
    pub t1: f64,
    pub t2: f64,
    pub settlement: Settlement,
    pub discretization: Discretization,
}

impl DeliverySpec {
    pub fn new(
        t1: f64,
        t2: f64,
        settlement: Settlement,
        discretization: Discretization,
    ) -> Result<Self> {
        let spec = DeliverySpec {
            t1,
            t2,
            settlement,
            discretization,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Delivery on every day `t1..=t2`.
    pub fn daily(t1: i64, t2: i64, settlement: Settlement) -> Result<Self> {
        Self::new(t1 as f64, t2 as f64, settlement, Discretization::Daily)
    }

    pub fn continuous(t1: f64, t2: f64, settlement: Settlement) -> Result<Self> {
        Self::new(t1, t2, settlement, Discretization::Continuous)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.t1.is_finite() || !self.t2.is_finite() || self.t1 > self.t2 {
            return Err(MrsError::arg(format!(
                "delivery window [{}, {}] is not ordered",
                self.t1, self.t2
            )));
        }
        if self.t1 < 0.0 {
            return Err(MrsError::arg(
                "delivery window starts before the valuation date",
            ));
        }
        if self.discretization == Discretization::Daily
            && (self.t1.fract() != 0.0 || self.t2.fract() != 0.0)
        {
            return Err(MrsError::arg(
                "daily delivery windows need whole-day bounds",
            ));
        }
        Ok(())
    }

    /// Normalised weights of the daily nodes `t1..=t2`.
    pub fn daily_weights(&self, rate: f64) -> Result<Vec<(i64, f64)>> {
        let (a, b) = (self.t1 as i64, self.t2 as i64);
        let raw: Vec<(i64, f64)> = (a..=b)
            .map(|d| {
                let w = match self.settlement {
                    Settlement::AtMaturity => 1.0,
                    // Relative to the first day to keep the numbers near one.
                    Settlement::Instant => (-rate * (d - a) as f64).exp(),
                };
                (d, w)
            })
            .collect();
        let total: f64 = raw.iter().map(|p| p.1).sum();
        let weights: Vec<(i64, f64)> = raw.into_iter().map(|(d, w)| (d, w / total)).collect();
        check_normalised(weights.iter().map(|p| p.1).sum())?;
        Ok(weights)
    }

    /// Density of the continuous weight at `t`; uniform when `rate == 0`.
    pub(crate) fn density(&self, rate: f64, t: f64) -> f64 {
        let h = self.t2 - self.t1;
        match self.settlement {
            Settlement::Instant if rate > 0.0 => {
                rate * (-rate * (t - self.t1)).exp() / -(-rate * h).exp_m1()
            }
            _ => 1.0 / h,
        }
    }

    /// `∫_lo^hi w(T) e^{-β(T - anchor)} dT` in closed form.
    pub(crate) fn discounted_weight(
        &self,
        rate: f64,
        beta: f64,
        anchor: f64,
        lo: f64,
        hi: f64,
    ) -> f64 {
        let h = hi - lo;
        let decay = (-beta * (lo - anchor)).exp();
        match self.settlement {
            Settlement::Instant if rate > 0.0 => {
                let k = rate + beta;
                self.density(rate, lo) * decay * -(-k * h).exp_m1() / k
            }
            _ => decay * -(-beta * h).exp_m1() / beta / (self.t2 - self.t1),
        }
    }

    /// `∫_lo^hi w(T) dT`.
    pub(crate) fn weight_mass(&self, rate: f64, lo: f64, hi: f64) -> f64 {
        match self.settlement {
            Settlement::Instant if rate > 0.0 => {
                let norm = -(-rate * (self.t2 - self.t1)).exp_m1();
                ((-rate * (lo - self.t1)).exp() - (-rate * (hi - self.t1)).exp()) / norm
            }
            _ => (hi - lo) / (self.t2 - self.t1),
        }
    }
}

pub(crate) fn check_normalised(total: f64) -> Result<()> {
    if (total - 1.0).abs() > 1e-10 {
        return Err(MrsError::Internal(format!(
            "delivery weights sum to {total}"
        )));
    }
    Ok(())
}

/// Everything the pricing formulas need about the market at time 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingContext {
    pub params: ModelParams,
    pub seasonal: SeasonalCurve,
    pub lambda: MarketPriceOfRisk,
    pub history: RegimeHistory,
    /// Continuously compounded rate per day.
    pub rate: f64,
}

impl PricingContext {
    pub fn new(
        params: ModelParams,
        seasonal: SeasonalCurve,
        lambda: MarketPriceOfRisk,
        history: RegimeHistory,
        rate: f64,
    ) -> Result<Self> {
        let ctx = PricingContext {
            params,
            seasonal,
            lambda,
            history,
            rate,
        };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate >= 0.0) || !self.rate.is_finite() {
            return Err(MrsError::arg(format!(
                "interest rate must be finite and >= 0, got {}",
                self.rate
            )));
        }
        self.params.validate()?;
        self.lambda.validate()?;
        self.history.validate()
    }

    pub fn discount(&self, t: f64) -> f64 {
        (-self.rate * t).exp()
    }
}
