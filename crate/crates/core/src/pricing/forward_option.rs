use super::forward::window_coefficients;
use super::{DeliverySpec, ForwardCoefficients, PricingContext};
use crate::dist::gaussian_call;
use crate::error::{MrsError, Result};
use crate::model::{base_conditional_moments, restricted_path_prob, Regime};

/// European call expiring at `t` on the forward with delivery window `spec`.
///
/// At expiry the forward is affine in the last observed base value, whose
/// law is Gaussian. The price therefore sums Gaussian calls over the regime
/// on day `floor(t)` and the number of days since the chain last left the
/// base regime. The chain must start in the base regime.
pub fn forward_option(
    ctx: &PricingContext,
    strike: f64,
    t: f64,
    spec: &DeliverySpec,
) -> Result<f64> {
    if ctx.history.regime != Regime::Base {
        return Err(MrsError::arg(
            "options on forwards need the base regime at the valuation date",
        ));
    }
    if !(t >= 0.0) || t > spec.t1 {
        return Err(MrsError::arg(format!(
            "option maturity {t} must lie in [0, T1 = {}]",
            spec.t1
        )));
    }
    if !strike.is_finite() {
        return Err(MrsError::arg("strike must be finite"));
    }
    let p = &ctx.params;
    let x0 = ctx.history.last_base_value;
    let day = t.floor() as i64;

    let mut total_prob = 0.0;
    let mut value = 0.0;
    let mut add_term = |prob: f64, regime: Regime, anchor: f64| -> Result<()> {
        total_prob += prob;
        if prob == 0.0 {
            return Ok(());
        }
        let coeffs = window_coefficients(ctx, t, regime, anchor, spec)?;
        let m = base_conditional_moments(&p.base, x0, 0.0, anchor, Some(&ctx.lambda))?;
        value += prob * affine_call(coeffs, m.mean, m.sd(), strike)?;
        Ok(())
    };

    add_term(
        restricted_path_prob(&p.transitions, day, 0, Regime::Base)?,
        Regime::Base,
        t,
    )?;
    for k in 1..=day {
        let anchor = (day - k + 1) as f64;
        for regime in [Regime::Spike, Regime::Drop] {
            add_term(
                restricted_path_prob(&p.transitions, day, k, regime)?,
                regime,
                anchor,
            )?;
        }
    }
    if (total_prob - 1.0).abs() > 1e-10 {
        return Err(MrsError::Internal(format!(
            "forward option path probabilities sum to {total_prob}"
        )));
    }
    Ok(ctx.discount(t) * value)
}

/// `E[(A X + B - K)^+]` for `X ~ N(mean, sd^2)`.
fn affine_call(c: ForwardCoefficients, mean: f64, sd: f64, strike: f64) -> Result<f64> {
    if !(c.slope >= 0.0) {
        return Err(MrsError::Internal(format!(
            "forward slope {} is not positive",
            c.slope
        )));
    }
    if c.slope == 0.0 {
        return Ok((c.intercept - strike).max(0.0));
    }
    Ok(c.slope * gaussian_call(mean, sd, (strike - c.intercept) / c.slope))
}
