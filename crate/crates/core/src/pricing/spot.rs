use super::PricingContext;
use crate::dist::{gaussian_call, lognormal_call, lognormal_put};
use crate::error::{MrsError, Result};
use crate::model::{base_conditional_moments, transition_between, Regime};

/// European call on the spot price `P_T`, struck at `strike`.
///
/// The payoff splits by the regime on day `floor(T)`: a Gaussian call on the
/// base value, a shifted log-normal call for spikes and a reflected
/// log-normal put for drops.
pub fn spot_option(ctx: &PricingContext, strike: f64, maturity: f64) -> Result<f64> {
    if !(maturity > 0.0) || !maturity.is_finite() {
        return Err(MrsError::arg(format!(
            "spot option maturity must be > 0, got {maturity}"
        )));
    }
    if !strike.is_finite() {
        return Err(MrsError::arg("strike must be finite"));
    }
    let p = &ctx.params;
    let h = &ctx.history;
    let row = transition_between(&p.transitions, 0, maturity.floor() as i64)?[h.regime.index()];
    let k = strike - ctx.seasonal.g(maturity);

    let m = base_conditional_moments(
        &p.base,
        h.last_base_value,
        h.anchor_time(0.0),
        maturity,
        Some(&ctx.lambda),
    )?;
    let base = gaussian_call(m.mean, m.sd(), k);
    let spike = lognormal_call(k - p.spike.shift, p.spike.mu, p.spike.sigma);
    let drop = lognormal_put(p.drop.shift - k, p.drop.mu, p.drop.sigma);

    let value = row[Regime::Base.index()] * base
        + row[Regime::Spike.index()] * spike
        + row[Regime::Drop.index()] * drop;
    Ok(ctx.discount(maturity) * value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{gaussian_pdf, lognormal_pdf};
    use crate::market_price::MarketPriceOfRisk;
    use crate::model::{expected_spot, identity, ModelParams, RegimeHistory, TransitionSpec};
    use crate::quadrature;
    use crate::seasonal::{SeasonalCurve, SeasonalModel};
    use chrono::NaiveDate;

    fn curve() -> SeasonalCurve {
        let mut m = SeasonalModel::zero(NaiveDate::from_ymd_opt(2006, 1, 2).unwrap());
        m.trend = [
            -11.99, 0.55, -0.13, 34.03, -8.04, 0.46, 6.75, 25.37, 19.20, -3.35,
        ];
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

    #[test]
    fn base_part_matches_payoff_integral() {
        let mut p = ModelParams::eex_reference();
        p.transitions = TransitionSpec::constant(identity()).unwrap();
        let c = ctx(p.clone(), RegimeHistory::base(37.4), 0.0003);
        let t = 17.5;
        let lam = MarketPriceOfRisk::affine(0.0084, -1.8387);
        let m = base_conditional_moments(&p.base, 37.4, 0.0, t, Some(&lam)).unwrap();
        let g = c.seasonal.g(t);
        for strike in [20.0, 45.0, 60.0, 90.0] {
            let payoff = |x: f64| (x + g - strike).max(0.0) * gaussian_pdf(x, m.mean, m.sd());
            let lo = m.mean - 12.0 * m.sd();
            let hi = m.mean + 12.0 * m.sd();
            let kink = (strike - g).clamp(lo, hi);
            let oracle = quadrature::adaptive(&payoff, lo, kink, 1e-11)
                + quadrature::adaptive(&payoff, kink, hi, 1e-11);
            let got = spot_option(&c, strike, t).unwrap();
            assert!(
                (got - (-0.0003 * t).exp() * oracle).abs() < 1e-8,
                "K={strike}: {got} vs {oracle}"
            );
        }
    }

    #[test]
    fn spike_and_drop_parts_match_payoff_integrals() {
        let mut p = ModelParams::eex_reference();
        let mut m = identity();
        m[0] = [0.9, 0.05, 0.05];
        p.transitions = TransitionSpec::constant(m).unwrap();
        let t = 12.0;
        let g = curve().g(t);
        for strike in [10.0, 60.0, 75.0, 110.0] {
            let c = ctx(
                p.clone(),
                RegimeHistory::new(Regime::Spike, 30.0, 3).unwrap(),
                0.0,
            );
            let (mu, s, cs) = (p.spike.mu, p.spike.sigma, p.spike.shift);
            let f = |y: f64| (cs + y + g - strike).max(0.0) * lognormal_pdf(y, mu, s);
            let kink = (strike - g - cs).max(1e-12);
            let oracle = if strike - g - cs > 0.0 {
                quadrature::adaptive(&f, kink, 5000.0, 1e-11)
            } else {
                quadrature::adaptive(&f, 1e-12, 1.0, 1e-12)
                    + quadrature::adaptive(&f, 1.0, 5000.0, 1e-11)
            };
            assert!(
                (spot_option(&c, strike, t).unwrap() - oracle).abs() < 1e-7,
                "spike K={strike}"
            );

            let c = ctx(
                p.clone(),
                RegimeHistory::new(Regime::Drop, 30.0, 3).unwrap(),
                0.0,
            );
            let (mu, s, cd) = (p.drop.mu, p.drop.sigma, p.drop.shift);
            let f = |y: f64| (cd - y + g - strike).max(0.0) * lognormal_pdf(y, mu, s);
            let edge = cd + g - strike;
            let oracle = if edge > 0.0 {
                quadrature::adaptive(&f, 1e-12, edge.min(1.0), 1e-12)
                    + if edge > 1.0 {
                        quadrature::adaptive(&f, 1.0, edge, 1e-11)
                    } else {
                        0.0
                    }
            } else {
                0.0
            };
            assert!(
                (spot_option(&c, strike, t).unwrap() - oracle).abs() < 1e-7,
                "drop K={strike}"
            );
        }
    }

    #[test]
    fn deep_out_of_the_money_vanishes_monotonically() {
        let c = ctx(ModelParams::eex_reference(), RegimeHistory::base(37.4), 0.0);
        let mut prev = f64::INFINITY;
        for i in 0..40 {
            let v = spot_option(&c, 100.0 + 50.0 * i as f64, 30.0).unwrap();
            assert!(v <= prev + 1e-15 && v >= 0.0);
            prev = v;
        }
        assert!(prev < 1e-6);
    }

    #[test]
    fn deep_in_the_money_is_discounted_forward() {
        let c = ctx(
            ModelParams::eex_reference(),
            RegimeHistory::base(37.4),
            0.0002,
        );
        for t in [1.0, 7.5, 30.0, 120.0] {
            let strike = -2000.0;
            let fwd =
                expected_spot(&c.params, &c.seasonal, &c.history, t, Some(&c.lambda)).unwrap();
            let want = (-0.0002 * t).exp() * (fwd - strike);
            assert!((spot_option(&c, strike, t).unwrap() - want).abs() < 1e-8);
        }
    }

    #[test]
    fn nonincreasing_and_convex_in_strike() {
        for h in [
            RegimeHistory::base(37.4),
            RegimeHistory::new(Regime::Spike, 35.0, 2).unwrap(),
        ] {
            let c = ctx(ModelParams::eex_reference(), h, 0.0001);
            for t in [0.5, 3.0, 40.0] {
                let v: Vec<f64> = (0..200)
                    .map(|i| spot_option(&c, -20.0 + i as f64, t).unwrap())
                    .collect();
                for w in v.windows(3) {
                    assert!(w[1] <= w[0] + 1e-12);
                    assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-8);
                }
            }
        }
    }

    #[test]
    fn rejects_nonpositive_maturity() {
        let c = ctx(ModelParams::eex_reference(), RegimeHistory::base(37.4), 0.0);
        assert!(spot_option(&c, 40.0, 0.0).is_err());
        assert!(spot_option(&c, 40.0, -3.0).is_err());
    }
}
