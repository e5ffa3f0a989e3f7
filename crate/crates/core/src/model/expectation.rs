use super::{base_conditional_moments, transition_between, ModelParams, Regime, RegimeHistory};
use crate::error::{MrsError, Result};
use crate::market_price::MarketPriceOfRisk;
use crate::seasonal::SeasonalCurve;

/// `E(X_t | F_s)` for the stochastic component, given the regime history
/// observed at `state_time = s`. Under the pricing measure when `lambda` is
/// supplied.
///
/// The regime row is that of the history's current regime; the base
/// expectation runs from the last known base value (see
/// [`RegimeHistory::anchor_time`]).
pub fn expected_stochastic(
    params: &ModelParams,
    history: &RegimeHistory,
    state_time: f64,
    t: f64,
    lambda: Option<&MarketPriceOfRisk>,
) -> Result<f64> {
    if t < state_time {
        return Err(MrsError::arg(format!(
            "expectation at t = {t} before state time {state_time}"
        )));
    }
    history.validate()?;
    let probs = transition_between(
        &params.transitions,
        state_time.floor() as i64,
        t.floor() as i64,
    )?;
    let row = probs[history.regime.index()];
    let anchor = history.anchor_time(state_time);
    let base_mean =
        base_conditional_moments(&params.base, history.last_base_value, anchor, t, lambda)?.mean;
    Ok(row[Regime::Base.index()] * base_mean
        + row[Regime::Spike.index()] * params.spike.mean()
        + row[Regime::Drop.index()] * params.drop.mean())
}

/// `E(P_t | F_s) = E(X_t | F_s) + g_t`.
pub fn conditional_expected_spot(
    params: &ModelParams,
    seasonal: &SeasonalCurve,
    history: &RegimeHistory,
    state_time: f64,
    t: f64,
    lambda: Option<&MarketPriceOfRisk>,
) -> Result<f64> {
    Ok(expected_stochastic(params, history, state_time, t, lambda)? + seasonal.g(t))
}

/// Expected spot price at day offset `t` seen from the valuation date.
pub fn expected_spot(
    params: &ModelParams,
    seasonal: &SeasonalCurve,
    history: &RegimeHistory,
    t: f64,
    lambda: Option<&MarketPriceOfRisk>,
) -> Result<f64> {
    if t < 0.0 {
        return Err(MrsError::arg("expected_spot needs t >= 0"));
    }
    conditional_expected_spot(params, seasonal, history, 0.0, t, lambda)
}
