use super::{check_normalised, DeliverySpec, Discretization, PricingContext};
use crate::error::{MrsError, Result};
use crate::model::{
    base_conditional_moments, conditional_expected_spot, mat_mul, transition_between, Regime,
    RegimeHistory,
};
use crate::quadrature;

/// Forward price `f_t^T = E^λ(P_T | F_t)` given the regime history at `t`.
pub fn forward_price(
    ctx: &PricingContext,
    t: f64,
    delivery: f64,
    history: &RegimeHistory,
) -> Result<f64> {
    if !(t >= 0.0) || t > delivery {
        return Err(MrsError::arg(format!(
            "forward needs 0 <= t <= T, got t = {t}, T = {delivery}"
        )));
    }
    conditional_expected_spot(
        &ctx.params,
        &ctx.seasonal,
        history,
        t,
        delivery,
        Some(&ctx.lambda),
    )
}

/// `f_t = slope · x + intercept`, where `x` is the base value at the
/// history's anchor time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardCoefficients {
    pub slope: f64,
    pub intercept: f64,
}

/// Window-averaged forward `f_t^{[T1,T2]}` given the regime history at `t`.
pub fn forward_price_period(
    ctx: &PricingContext,
    t: f64,
    history: &RegimeHistory,
    spec: &DeliverySpec,
) -> Result<f64> {
    let c = forward_coefficients(ctx, t, history, spec)?;
    Ok(c.slope * history.last_base_value + c.intercept)
}

/// Affine dependence of the window forward on the last known base value.
pub fn forward_coefficients(
    ctx: &PricingContext,
    t: f64,
    history: &RegimeHistory,
    spec: &DeliverySpec,
) -> Result<ForwardCoefficients> {
    history.validate()?;
    window_coefficients(ctx, t, history.regime, history.anchor_time(t), spec)
}

/// Coefficients for a chain in `regime` on day `floor(t)` whose base value
/// is known at time `anchor`.
pub(crate) fn window_coefficients(
    ctx: &PricingContext,
    t: f64,
    regime: Regime,
    anchor: f64,
    spec: &DeliverySpec,
) -> Result<ForwardCoefficients> {
    spec.validate()?;
    if !(t >= 0.0) || t > spec.t1 {
        return Err(MrsError::arg(format!(
            "forward window starts at {} before t = {t}",
            spec.t1
        )));
    }
    if anchor > t {
        return Err(MrsError::Internal(format!(
            "anchor {anchor} after state time {t}"
        )));
    }
    let p = &ctx.params;
    let beta = p.base.beta;
    let (b, s, d) = (
        Regime::Base.index(),
        Regime::Spike.index(),
        Regime::Drop.index(),
    );
    let jump_mean = |row: &[f64; 3]| row[s] * p.spike.mean() + row[d] * p.drop.mean();
    // Base mean from a zero start: the affine intercept of E^λ(X_{T,b}).
    let drift = |at: f64| -> Result<f64> {
        Ok(base_conditional_moments(&p.base, 0.0, anchor, at, Some(&ctx.lambda))?.mean)
    };

    let day0 = t.floor() as i64;
    let first = spec.t1.floor() as i64;
    let last = spec.t2.floor() as i64;
    let mut probs = transition_between(&p.transitions, day0, first)?;
    let mut slope = 0.0;
    let mut intercept = 0.0;
    let mut mass = 0.0;

    let degenerate = spec.discretization == Discretization::Continuous && spec.t2 == spec.t1;
    if spec.discretization == Discretization::Daily || degenerate {
        let nodes = if degenerate {
            vec![(first, 1.0)]
        } else {
            spec.daily_weights(ctx.rate)?
        };
        let at = |day: i64| if degenerate { spec.t1 } else { day as f64 };
        for (day, w) in nodes {
            if day > first {
                probs = mat_mul(&probs, p.transitions.at(day - 1));
            }
            let row = probs[regime.index()];
            let time = at(day);
            slope += w * row[b] * (-beta * (time - anchor)).exp();
            intercept += w * (row[b] * drift(time)? + jump_mean(&row) + ctx.seasonal.g(time));
            mass += w;
        }
    } else {
        for day in first..=last {
            let lo = spec.t1.max(day as f64);
            let hi = spec.t2.min((day + 1) as f64);
            if day > first {
                probs = mat_mul(&probs, p.transitions.at(day - 1));
            }
            if hi <= lo {
                continue;
            }
            let row = probs[regime.index()];
            slope += row[b] * spec.discounted_weight(ctx.rate, beta, anchor, lo, hi);
            let integrand = |time: f64| {
                let base = drift(time).unwrap_or(f64::NAN);
                spec.density(ctx.rate, time)
                    * (row[b] * base + jump_mean(&row) + ctx.seasonal.g(time))
            };
            intercept += quadrature::gl16(&integrand, lo, hi);
            mass += spec.weight_mass(ctx.rate, lo, hi);
        }
    }
    check_normalised(mass)?;
    if !slope.is_finite() || !intercept.is_finite() {
        return Err(MrsError::Internal("non-finite forward coefficients".into()));
    }
    Ok(ForwardCoefficients { slope, intercept })
}
