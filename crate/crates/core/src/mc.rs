//! Monte Carlo valuation under `Q^λ`, used to check the closed forms.
//!
//! Path `i` draws from stream `i` of a generator seeded by `seed`, and the
//! per-path results are summed serially in path order, so estimates do not
//! depend on the thread count.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MrsError, Result};
use crate::model::simulate::{draw_regime_value, evolve_base, next_regime};
use crate::model::{path_rng, Regime, RegimeHistory};
use crate::pricing::{
    forward_price_period, DeliverySpec, Discretization, PricingContext, Settlement,
};

pub const MIN_PATHS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl McEstimate {
    /// Whether `x` lies within `k` standard errors, with a floor for
    /// estimates whose sample variance is exactly zero.
    pub fn agrees_with(&self, x: f64, k: f64) -> bool {
        (self.value - x).abs() <= k * self.stderr + 1e-9 * (1.0 + x.abs())
    }
}

/// What the delivery leg of a forward pays on one path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Delivery {
    /// The spot price at a single time.
    Point(f64),
    Window(DeliverySpec),
}

/// How [`mc_forward_option`] values the forward at option expiry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerForward {
    /// Closed-form conditional expectation.
    Analytic,
    /// A nested simulation with this many inner paths per outer path.
    Nested(usize),
}

/// One path's state: the regime of the current day and the base value now.
struct Walker<'a> {
    ctx: &'a PricingContext,
    time: f64,
    regime: Regime,
    base: f64,
    last_base_day: i64,
    /// Base value at the end of the last base day.
    anchor_value: f64,
}

impl<'a> Walker<'a> {
    fn start(
        ctx: &'a PricingContext,
        history: &RegimeHistory,
        t0: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let anchor = history.anchor_time(t0);
        let base = if anchor < t0 {
            evolve_base(
                &ctx.params,
                history.last_base_value,
                anchor,
                t0,
                1,
                Some(&ctx.lambda),
                rng,
            )?
        } else {
            history.last_base_value
        };
        let day = t0.floor() as i64;
        Ok(Walker {
            ctx,
            time: t0,
            regime: history.regime,
            base,
            last_base_day: day - history.lag as i64,
            anchor_value: history.last_base_value,
        })
    }

    fn advance_to(&mut self, target: f64, rng: &mut ChaCha8Rng) -> Result<()> {
        while self.time < target {
            let day = self.time.floor() as i64;
            let next = target.min((day + 1) as f64);
            self.base = evolve_base(
                &self.ctx.params,
                self.base,
                self.time,
                next,
                1,
                Some(&self.ctx.lambda),
                rng,
            )?;
            self.time = next;
            if next == (day + 1) as f64 {
                if self.regime == Regime::Base {
                    self.anchor_value = self.base;
                }
                self.regime = next_regime(
                    &self.ctx.params.transitions.at(day)[self.regime.index()],
                    rng,
                );
                if self.regime == Regime::Base {
                    self.last_base_day = day + 1;
                }
            }
        }
        Ok(())
    }

    fn spot(&self, rng: &mut ChaCha8Rng) -> f64 {
        draw_regime_value(&self.ctx.params, self.regime, self.base, rng)
            + self.ctx.seasonal.g(self.time)
    }

    fn history(&self) -> Result<RegimeHistory> {
        if self.regime == Regime::Base {
            return Ok(RegimeHistory::base(self.base));
        }
        let lag = self.time.floor() as i64 - self.last_base_day;
        RegimeHistory::new(self.regime, self.anchor_value, lag as u32)
    }
}

fn estimate<F>(n_paths: usize, seed: u64, payoff: F) -> Result<McEstimate>
where
    F: Fn(&mut ChaCha8Rng) -> Result<f64> + Sync,
{
    if n_paths < MIN_PATHS {
        return Err(MrsError::arg(format!(
            "Monte Carlo needs at least {MIN_PATHS} paths, got {n_paths}"
        )));
    }
    let samples: Vec<f64> = (0..n_paths)
        .into_par_iter()
        .map(|i| payoff(&mut path_rng(seed, i as u64)))
        .collect::<Result<_>>()?;
    Ok(summarize(&samples, seed))
}

fn summarize(samples: &[f64], seed: u64) -> McEstimate {
    let n = samples.len() as f64;
    // Shifted by the first sample so a constant payoff gives exactly zero.
    let shift = samples[0];
    let d_mean = samples.iter().map(|x| x - shift).sum::<f64>() / n;
    let sq = samples
        .iter()
        .map(|x| (x - shift - d_mean).powi(2))
        .sum::<f64>();
    let mean = shift + d_mean;
    let var = sq / (n - 1.0);
    McEstimate {
        value: mean,
        stderr: (var / n).sqrt(),
        n_paths: samples.len(),
        seed,
    }
}

/// Discounted mean of `(P_T - K)^+` over simulated paths from the context's history.
pub fn mc_spot_option(
    ctx: &PricingContext,
    strike: f64,
    maturity: f64,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    if !(maturity > 0.0) {
        return Err(MrsError::arg("maturity must be > 0"));
    }
    let disc = ctx.discount(maturity);
    estimate(n_paths, seed, |rng| {
        let mut w = Walker::start(ctx, &ctx.history, 0.0, rng)?;
        w.advance_to(maturity, rng)?;
        Ok(disc * (w.spot(rng) - strike).max(0.0))
    })
}

/// Mean delivered price given the regime history at time `t`.
///
/// Daily windows average the simulated daily spots with the settlement
/// weights. Continuous windows draw one delivery time per path from the
/// weight density.
pub fn mc_forward_price(
    ctx: &PricingContext,
    t: f64,
    history: &RegimeHistory,
    delivery: Delivery,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    history.validate()?;
    let start = match delivery {
        Delivery::Point(at) => at,
        Delivery::Window(spec) => {
            spec.validate()?;
            spec.t1
        }
    };
    if !(t >= 0.0) || t > start {
        return Err(MrsError::arg(format!(
            "forward state time {t} must lie in [0, {start}]"
        )));
    }
    let weights = match delivery {
        Delivery::Window(spec) if spec.discretization == Discretization::Daily => {
            Some(spec.daily_weights(ctx.rate)?)
        }
        _ => None,
    };
    estimate(n_paths, seed, |rng| {
        let mut w = Walker::start(ctx, history, t, rng)?;
        match (delivery, &weights) {
            (Delivery::Point(at), _) => {
                w.advance_to(at, rng)?;
                Ok(w.spot(rng))
            }
            (Delivery::Window(_), Some(nodes)) => {
                let mut sum = 0.0;
                for &(day, weight) in nodes {
                    w.advance_to(day as f64, rng)?;
                    sum += weight * w.spot(rng);
                }
                Ok(sum)
            }
            (Delivery::Window(spec), None) => {
                let at = sample_delivery_time(&spec, ctx.rate, rng);
                w.advance_to(at, rng)?;
                Ok(w.spot(rng))
            }
        }
    })
}

fn sample_delivery_time(spec: &DeliverySpec, rate: f64, rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random();
    let h = spec.t2 - spec.t1;
    match spec.settlement {
        Settlement::Instant if rate > 0.0 => spec.t1 - (u * (-rate * h).exp_m1()).ln_1p() / rate,
        _ => spec.t1 + u * h,
    }
    .min(spec.t2)
}

/// Discounted mean of `(f_t - K)^+`, simulating the state at expiry `t`.
pub fn mc_forward_option(
    ctx: &PricingContext,
    strike: f64,
    t: f64,
    spec: &DeliverySpec,
    inner: InnerForward,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    if ctx.history.regime != Regime::Base {
        return Err(MrsError::arg(
            "options on forwards need the base regime at the valuation date",
        ));
    }
    spec.validate()?;
    if !(t >= 0.0) || t > spec.t1 {
        return Err(MrsError::arg(format!(
            "option maturity {t} must lie in [0, T1 = {}]",
            spec.t1
        )));
    }
    let disc = ctx.discount(t);
    estimate(n_paths, seed, |rng| {
        let mut w = Walker::start(ctx, &ctx.history, 0.0, rng)?;
        w.advance_to(t, rng)?;
        let state = w.history()?;
        let forward = match inner {
            InnerForward::Analytic => forward_price_period(ctx, t, &state, spec)?,
            InnerForward::Nested(paths) => {
                let inner_seed = rng.random::<u64>();
                nested_forward(ctx, t, &state, spec, paths, inner_seed)?
            }
        };
        Ok(disc * (forward - strike).max(0.0))
    })
}

/// Serial inner simulation: the outer loop already runs in parallel.
fn nested_forward(
    ctx: &PricingContext,
    t: f64,
    state: &RegimeHistory,
    spec: &DeliverySpec,
    paths: usize,
    seed: u64,
) -> Result<f64> {
    if paths == 0 {
        return Err(MrsError::arg(
            "nested forward needs at least one inner path",
        ));
    }
    let weights = match spec.discretization {
        Discretization::Daily => Some(spec.daily_weights(ctx.rate)?),
        Discretization::Continuous => None,
    };
    let mut total = 0.0;
    for i in 0..paths {
        let rng = &mut path_rng(seed, i as u64);
        let mut w = Walker::start(ctx, state, t, rng)?;
        total += match &weights {
            Some(nodes) => {
                let mut sum = 0.0;
                for &(day, weight) in nodes {
                    w.advance_to(day as f64, rng)?;
                    sum += weight * w.spot(rng);
                }
                sum
            }
            None => {
                let at = sample_delivery_time(spec, ctx.rate, rng);
                w.advance_to(at, rng)?;
                w.spot(rng)
            }
        };
    }
    Ok(total / paths as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_price::MarketPriceOfRisk;
    use crate::model::{identity, ModelParams, TransitionSpec};
    use crate::pricing::{forward_option, forward_price, spot_option};
    use crate::seasonal::{SeasonalCurve, SeasonalModel};
    use chrono::NaiveDate;

    fn curve() -> SeasonalCurve {
        let mut m = SeasonalModel::zero(NaiveDate::from_ymd_opt(2006, 1, 2).unwrap());
        m.trend = [
            -11.99, 0.55, -0.13, 34.03, -8.04, 0.46, 6.75, 25.37, 19.20, -3.35,
        ];
        m.weekly = [1.5, 2.0, 2.2, 2.1, 0.4, -6.0, -11.0, -9.0];
        m.curve(NaiveDate::from_ymd_opt(2011, 1, 3).unwrap())
    }

    fn ctx(params: ModelParams, history: RegimeHistory, rate: f64) -> PricingContext {
        PricingContext::new(
            params,
            curve(),
            MarketPriceOfRisk::affine(0.0084, -1.8387),
            history,
            rate,
        )
        .unwrap()
    }

    fn noise_free() -> ModelParams {
        let mut p = ModelParams::eex_reference();
        p.base.sigma = 0.0;
        p.spike.sigma = 0.0;
        p.drop.sigma = 0.0;
        p.transitions = TransitionSpec::constant(identity()).unwrap();
        p
    }

    #[test]
    fn noise_free_model_is_exact() {
        let c = ctx(noise_free(), RegimeHistory::base(37.4), 0.0001);
        let mc = mc_spot_option(&c, 40.0, 12.5, 1000, 3).unwrap();
        assert_eq!(mc.stderr, 0.0);
        assert!((mc.value - spot_option(&c, 40.0, 12.5).unwrap()).abs() < 1e-10);

        let spec = DeliverySpec::daily(20, 30, Settlement::Instant).unwrap();
        let f = mc_forward_price(&c, 0.0, &c.history, Delivery::Window(spec), 1000, 3).unwrap();
        assert!(
            (f.value - forward_price_period(&c, 0.0, &c.history, &spec).unwrap()).abs() < 1e-10
        );
        let o = mc_forward_option(&c, 30.0, 10.0, &spec, InnerForward::Analytic, 1000, 3).unwrap();
        assert!((o.value - forward_option(&c, 30.0, 10.0, &spec).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn spot_option_agrees_with_closed_form() {
        let c = ctx(
            ModelParams::eex_reference(),
            RegimeHistory::base(37.4),
            0.0002,
        );
        for (i, &(strike, t)) in [(40.0, 3.0), (55.0, 17.5), (80.0, 40.0)].iter().enumerate() {
            let mc = mc_spot_option(&c, strike, t, 40_000, 100 + i as u64).unwrap();
            let cf = spot_option(&c, strike, t).unwrap();
            assert!(mc.agrees_with(cf, 3.0), "K={strike} T={t}: {mc:?} vs {cf}");
        }
    }

    #[test]
    fn forwards_agree_with_closed_form() {
        let c = ctx(
            ModelParams::eex_reference(),
            RegimeHistory::base(37.4),
            0.0003,
        );
        let h = RegimeHistory::new(Regime::Spike, 33.0, 3).unwrap();
        let point = mc_forward_price(&c, 4.5, &h, Delivery::Point(20.25), 40_000, 7).unwrap();
        assert!(
            point.agrees_with(forward_price(&c, 4.5, 20.25, &h).unwrap(), 3.0),
            "{point:?}"
        );
        let spec = DeliverySpec::continuous(29.5, 58.0, Settlement::Instant).unwrap();
        let window = mc_forward_price(&c, 4.5, &h, Delivery::Window(spec), 40_000, 8).unwrap();
        assert!(
            window.agrees_with(forward_price_period(&c, 4.5, &h, &spec).unwrap(), 3.0),
            "{window:?}"
        );
    }

    #[test]
    fn forward_option_agrees_with_closed_form() {
        let c = ctx(ModelParams::eex_reference(), RegimeHistory::base(37.4), 0.0);
        let spec = DeliverySpec::daily(29, 56, Settlement::AtMaturity).unwrap();
        for (i, strike) in [30.0, 45.0].into_iter().enumerate() {
            let mc = mc_forward_option(
                &c,
                strike,
                24.5,
                &spec,
                InnerForward::Analytic,
                20_000,
                20 + i as u64,
            )
            .unwrap();
            let cf = forward_option(&c, strike, 24.5, &spec).unwrap();
            assert!(mc.agrees_with(cf, 3.0), "K={strike}: {mc:?} vs {cf}");
        }
    }

    #[test]
    fn nested_inner_forward_agrees() {
        let c = ctx(ModelParams::eex_reference(), RegimeHistory::base(37.4), 0.0);
        let spec = DeliverySpec::daily(12, 14, Settlement::AtMaturity).unwrap();
        let mc =
            mc_forward_option(&c, 40.0, 9.0, &spec, InnerForward::Nested(64), 4000, 5).unwrap();
        let cf = forward_option(&c, 40.0, 9.0, &spec).unwrap();
        // Finite inner samples add a convex bias of order var/inner paths.
        assert!(mc.agrees_with(cf, 3.0), "{mc:?} vs {cf}");
    }

    #[test]
    fn stderr_scales_with_path_count() {
        let c = ctx(ModelParams::eex_reference(), RegimeHistory::base(37.4), 0.0);
        let a = mc_spot_option(&c, 50.0, 20.0, 10_000, 9).unwrap();
        let b = mc_spot_option(&c, 50.0, 20.0, 20_000, 9).unwrap();
        let ratio = b.stderr / a.stderr;
        assert!(
            (ratio / std::f64::consts::FRAC_1_SQRT_2 - 1.0).abs() < 0.2,
            "{ratio}"
        );
    }

    #[test]
    fn reproducible_given_seed() {
        let c = ctx(ModelParams::eex_reference(), RegimeHistory::base(37.4), 0.0);
        let spec = DeliverySpec::daily(29, 56, Settlement::AtMaturity).unwrap();
        let a = mc_forward_option(&c, 40.0, 20.0, &spec, InnerForward::Analytic, 2000, 1).unwrap();
        let b = mc_forward_option(&c, 40.0, 20.0, &spec, InnerForward::Analytic, 2000, 1).unwrap();
        assert_eq!(a, b);
        let c2 = mc_forward_option(&c, 40.0, 20.0, &spec, InnerForward::Analytic, 2000, 2).unwrap();
        assert_ne!(a.value, c2.value);
    }

    #[test]
    fn too_few_paths_rejected() {
        let c = ctx(ModelParams::eex_reference(), RegimeHistory::base(37.4), 0.0);
        assert!(mc_spot_option(&c, 40.0, 1.0, 999, 0).is_err());
    }
}
