use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{base_conditional_moments, ModelParams, Regime, RegimeHistory};
use crate::error::{MrsError, Result};
use crate::market_price::MarketPriceOfRisk;
use crate::seasonal::SeasonalCurve;

/// One simulated trajectory on the integer day grid `0..=horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPath {
    pub times: Vec<i64>,
    pub regimes: Vec<Regime>,
    /// Observed stochastic component `X_t`.
    pub x_values: Vec<f64>,
    /// Latent base process at each integer time, observed or not.
    pub base_values: Vec<f64>,
    /// `g_t + X_t`.
    pub prices: Vec<f64>,
    pub substeps: u32,
}

/// Independent stream `stream` of the generator seeded by `seed`.
pub fn path_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn draw_regime_value<R: Rng + ?Sized>(
    params: &ModelParams,
    regime: Regime,
    base: f64,
    rng: &mut R,
) -> f64 {
    match regime {
        Regime::Base => base,
        Regime::Spike => {
            let z: f64 = rng.sample(StandardNormal);
            params.spike.shift + (params.spike.mu + params.spike.sigma * z).exp()
        }
        Regime::Drop => {
            let z: f64 = rng.sample(StandardNormal);
            params.drop.shift - (params.drop.mu + params.drop.sigma * z).exp()
        }
    }
}

pub(crate) fn next_regime<R: Rng + ?Sized>(row: &[f64; 3], rng: &mut R) -> Regime {
    let u: f64 = rng.random();
    if u < row[0] {
        Regime::Base
    } else if u < row[0] + row[1] {
        Regime::Spike
    } else {
        Regime::Drop
    }
}

/// Advance the base process from `t0` to `t1` by exact Gaussian transitions.
pub(crate) fn evolve_base<R: Rng + ?Sized>(
    params: &ModelParams,
    x: f64,
    t0: f64,
    t1: f64,
    substeps: u32,
    lambda: Option<&MarketPriceOfRisk>,
    rng: &mut R,
) -> Result<f64> {
    let mut x = x;
    let h = (t1 - t0) / substeps as f64;
    for j in 0..substeps {
        let a = t0 + j as f64 * h;
        let b = if j + 1 == substeps { t1 } else { a + h };
        let m = base_conditional_moments(&params.base, x, a, b, lambda)?;
        let z: f64 = rng.sample(StandardNormal);
        x = m.mean + m.sd() * z;
    }
    Ok(x)
}

/// Simulate regimes and prices over `horizon` days.
///
/// The regime chain moves only at integer times. The base process keeps
/// evolving while the chain sits in a spike or drop, so a return to base
/// resumes from the latent value.
#[allow(clippy::too_many_arguments)]
pub fn simulate_path(
    params: &ModelParams,
    seasonal: &SeasonalCurve,
    history: &RegimeHistory,
    horizon: u32,
    substeps: u32,
    lambda: Option<&MarketPriceOfRisk>,
    seed: u64,
) -> Result<SimulatedPath> {
    simulate_path_with(
        params,
        seasonal,
        history,
        horizon,
        substeps,
        lambda,
        &mut path_rng(seed, 0),
    )
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_path_with<R: Rng + ?Sized>(
    params: &ModelParams,
    seasonal: &SeasonalCurve,
    history: &RegimeHistory,
    horizon: u32,
    substeps: u32,
    lambda: Option<&MarketPriceOfRisk>,
    rng: &mut R,
) -> Result<SimulatedPath> {
    if horizon < 1 || substeps < 1 {
        return Err(MrsError::arg(
            "simulation needs horizon >= 1 and substeps >= 1",
        ));
    }
    history.validate()?;
    let n = horizon as usize + 1;
    let mut regimes = Vec::with_capacity(n);
    let mut x_values = Vec::with_capacity(n);
    let mut base_values = Vec::with_capacity(n);

    let anchor = history.anchor_time(0.0);
    let mut base = if anchor < 0.0 {
        evolve_base(
            params,
            history.last_base_value,
            anchor,
            0.0,
            substeps * history.lag,
            None,
            rng,
        )?
    } else {
        history.last_base_value
    };
    let mut regime = history.regime;
    regimes.push(regime);
    base_values.push(base);
    x_values.push(draw_regime_value(params, regime, base, rng));

    for day in 0..horizon as i64 {
        base = evolve_base(
            params,
            base,
            day as f64,
            (day + 1) as f64,
            substeps,
            lambda,
            rng,
        )?;
        regime = next_regime(&params.transitions.at(day)[regime.index()], rng);
        regimes.push(regime);
        base_values.push(base);
        x_values.push(draw_regime_value(params, regime, base, rng));
    }
    let times: Vec<i64> = (0..n as i64).collect();
    let prices = times
        .iter()
        .zip(&x_values)
        .map(|(&t, &x)| x + seasonal.g(t as f64))
        .collect();
    Ok(SimulatedPath {
        times,
        regimes,
        x_values,
        base_values,
        prices,
        substeps,
    })
}
