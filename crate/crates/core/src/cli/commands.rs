use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use chrono::NaiveDate;

use super::config::LoadedConfig;
use super::io::*;
use super::{Cli, Command, Contract, Measure, PriceArgs, WindowArgs};
use crate::calibration::{em_calibrate, quartile_shifts};
use crate::error::{MrsError, Result};
use crate::gof::{goodness_of_fit, GofConfig};
use crate::mc::{
    mc_forward_option, mc_forward_price, mc_spot_option, Delivery, InnerForward, McEstimate,
};
use crate::model::{
    expected_spot, path_rng, simulate_path_with, stationary_distribution, ModelParams, Regime,
    RegimeHistory,
};
use crate::pricing::{
    forward_option, forward_price, forward_price_period, spot_option, DeliverySpec, PricingContext,
    Settlement,
};
use crate::risk_premium::{fit_lambda, read_quotes, risk_premium_period};
use crate::seasonal::{
    business_days_before, fit_seasonal, parse_holidays, Calendar, SeasonalCurve,
};

struct Session {
    cfg: LoadedConfig,
    out_dir: PathBuf,
    seed: u64,
}

impl Session {
    fn provenance(&self) -> Provenance {
        Provenance {
            config_hash: self.cfg.hash.clone(),
            seed: self.seed,
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn artifact<T: serde::de::DeserializeOwned>(&self, name: &str, producer: &str) -> Result<T> {
        let p = self.path(name);
        if !p.is_file() {
            return Err(MrsError::Io(format!(
                "{} not found; run `mrs {producer}` first",
                p.display()
            )));
        }
        read_json(&p)
    }
}

fn out_err(e: std::io::Error) -> MrsError {
    MrsError::Io(format!("stdout: {e}"))
}

/// Execute a parsed command line, writing the report to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let cfg = LoadedConfig::load(&cli.config)?;
    let seed = cli.seed.unwrap_or(cfg.config.seed);
    let out_dir = cfg.output_dir(cli.out.as_deref());
    let s = Session { cfg, out_dir, seed };
    let mut report = String::new();
    match &cli.command {
        Command::FitSeasonal => cmd_fit_seasonal(&s, &mut report)?,
        Command::Calibrate { replications } => cmd_calibrate(&s, *replications, &mut report)?,
        Command::FitLambda { negate_rp } => cmd_fit_lambda(&s, *negate_rp, &mut report)?,
        Command::Price(args) => cmd_price(&s, args, &mut report)?,
        Command::Simulate {
            horizon,
            paths,
            measure,
        } => cmd_simulate(&s, *horizon, *paths, *measure, &mut report)?,
    }
    out.write_all(report.as_bytes()).map_err(out_err)
}

fn holidays(s: &Session) -> Result<Calendar> {
    match &s.cfg.config.data.holidays {
        Some(p) => {
            let p = s.cfg.resolve(p);
            parse_holidays(&read_text(&p)?, &p.display().to_string())
        }
        None => Ok(Calendar::default()),
    }
}

fn cmd_fit_seasonal(s: &Session, report: &mut String) -> Result<()> {
    let prices = read_spot(&s.cfg.resolve(&s.cfg.config.data.spot))?;
    let epoch = s.cfg.config.data.epoch.unwrap_or(prices[0].0);
    let fit = fit_seasonal(&prices, holidays(s)?, epoch)?;
    let artifact = SeasonalArtifact {
        provenance: s.provenance(),
        model: fit.model.clone(),
        trend_sse: fit.trend_sse,
        first_date: prices[0].0,
        last_date: prices[prices.len() - 1].0,
    };
    write_json(&s.path(SEASONAL_FILE), &artifact)?;
    let mut csv = String::from("date,price,x\n");
    for ((d, p), x) in prices.iter().zip(&fit.deseasonalized) {
        let _ = writeln!(csv, "{d},{p},{x}");
    }
    write_text(&s.path(DESEASONALIZED_FILE), &csv)?;

    let _ = writeln!(
        report,
        "observations: {} ({} to {})",
        prices.len(),
        artifact.first_date,
        artifact.last_date
    );
    let _ = writeln!(report, "trend coefficients: {:?}", fit.model.trend);
    let _ = writeln!(
        report,
        "weekly pattern (Mon..Sun, holiday): {:?}",
        fit.model.weekly
    );
    let _ = writeln!(report, "trend SSE: {}", fit.trend_sse);
    let _ = writeln!(report, "level shift: {}", fit.model.shift);
    Ok(())
}

fn cmd_calibrate(s: &Session, replications: Option<usize>, report: &mut String) -> Result<()> {
    let series = read_deseasonalized(&s.path(DESEASONALIZED_FILE)).map_err(|e| match e {
        MrsError::Io(m) => MrsError::Io(format!("{m}; run `mrs fit-seasonal` first")),
        other => other,
    })?;
    let dates: Vec<NaiveDate> = series.iter().map(|r| r.0).collect();
    let x: Vec<f64> = series.iter().map(|r| r.2).collect();
    let em = s.cfg.config.em.em_config();
    let fit = em_calibrate(
        &x,
        quartile_shifts(&x)?,
        s.cfg.config.em.transition_period,
        &em,
    )?;

    let artifact = ModelArtifact {
        provenance: s.provenance(),
        params: fit.params.clone(),
        initial: fit.initial,
        first_date: dates[0],
        observations: x.len(),
        iterations: fit.iterations,
        converged: fit.converged,
        log_likelihood: fit.final_loglik(),
    };
    write_json(&s.path(MODEL_FILE), &artifact)?;
    write_text(&s.path(SMOOTHED_FILE), &smoothed_csv(&dates, &x, &fit))?;
    let mut trace = String::from("iteration,loglik\n");
    for (i, l) in fit.loglik_trace.iter().enumerate() {
        let _ = writeln!(trace, "{i},{l}");
    }
    write_text(&s.path(LOGLIK_FILE), &trace)?;

    let gof_cfg = GofConfig {
        replications: replications.unwrap_or(s.cfg.config.gof.replications),
        seed: s.seed,
        refit: s.cfg.config.gof.refit,
        em,
    };
    let gof = goodness_of_fit(&x, &fit.smoothed, &fit.params, fit.initial, &gof_cfg)?;
    write_json(
        &s.path(GOF_FILE),
        &GofArtifact {
            provenance: s.provenance(),
            report: gof.clone(),
        },
    )?;
    let table = gof_table(&gof);
    write_text(&s.path(GOF_TABLE_FILE), &table)?;

    let p = &fit.params;
    let _ = writeln!(
        report,
        "EM iterations: {} (converged: {})",
        fit.iterations, fit.converged
    );
    let _ = writeln!(report, "log-likelihood: {}", fit.final_loglik());
    let _ = writeln!(
        report,
        "base: alpha={} beta={} sigma^2={}",
        p.base.alpha,
        p.base.beta,
        p.base.sigma.powi(2)
    );
    let _ = writeln!(
        report,
        "spike: mu={} sigma^2={} shift={}",
        p.spike.mu,
        p.spike.sigma.powi(2),
        p.spike.shift
    );
    let _ = writeln!(
        report,
        "drop: mu={} sigma^2={} shift={}",
        p.drop.mu,
        p.drop.sigma.powi(2),
        p.drop.shift
    );
    for (k, m) in p.transitions.matrices().iter().enumerate() {
        let _ = writeln!(report, "transition matrix slot {k}: {m:?}");
    }
    let _ = writeln!(report, "\ngoodness of fit\n{table}");
    Ok(())
}

/// Model, seasonal curve and regime state at the valuation date.
struct Market {
    curve: SeasonalCurve,
    params: ModelParams,
    history: RegimeHistory,
    holidays: Calendar,
}

fn load_market(s: &Session) -> Result<Market> {
    let seasonal: SeasonalArtifact = s.artifact(SEASONAL_FILE, "fit-seasonal")?;
    let model: ModelArtifact = s.artifact(MODEL_FILE, "calibrate")?;
    let valuation = s
        .cfg
        .config
        .data
        .valuation_date
        .unwrap_or(seasonal.last_date);
    let offset = (valuation - model.first_date).num_days();
    let mut params = model.params.clone();
    params.transitions = params.transitions.rotated(offset);
    let history = match &s.cfg.config.state {
        Some(state) => state.history()?,
        None => {
            if valuation != seasonal.last_date {
                return Err(MrsError::arg(format!(
                    "valuation date {valuation} differs from the last observation {}; give a [state] section",
                    seasonal.last_date
                )));
            }
            history_from_smoothed(&read_smoothed(&s.path(SMOOTHED_FILE))?)?
        }
    };
    Ok(Market {
        curve: seasonal.model.curve(valuation),
        params,
        history,
        holidays: seasonal.model.holidays.clone(),
    })
}

/// Regime of the last observation; in a spike or drop, the anchor is the
/// last day classified as base.
fn history_from_smoothed(rows: &[SmoothedRow]) -> Result<RegimeHistory> {
    let last = rows
        .last()
        .ok_or_else(|| MrsError::arg("smoothed series is empty"))?;
    let regime = Regime::from_index(
        (0..3)
            .max_by(|&a, &b| last.probs[a].total_cmp(&last.probs[b]))
            .unwrap_or(0),
    );
    if regime == Regime::Base {
        return Ok(RegimeHistory::base(last.x));
    }
    let n = rows.len() - 1;
    let m = rows
        .iter()
        .rposition(|r| r.regime == Some(Regime::Base))
        .ok_or_else(|| MrsError::arg("no base-regime day in the calibration sample"))?;
    // The anchor sits one day after the last base day, so the observed base
    // value of day m is placed at time m - n.
    RegimeHistory::new(regime, rows[m].x, (n - m + 1) as u32)
}

fn pricing_context(s: &Session, market: &Market) -> Result<PricingContext> {
    let lambda: LambdaArtifact = s.artifact(LAMBDA_FILE, "fit-lambda")?;
    PricingContext::new(
        market.params.clone(),
        market.curve.clone(),
        lambda.lambda,
        market.history,
        s.cfg.config.pricing.rate,
    )
}

fn cmd_fit_lambda(s: &Session, negate: bool, report: &mut String) -> Result<()> {
    let market = load_market(s)?;
    let path = s
        .cfg
        .config
        .data
        .quotes
        .as_ref()
        .ok_or_else(|| MrsError::arg("data.quotes is not configured"))?;
    let quotes = read_quotes(&s.cfg.resolve(path))?;
    let fit = fit_lambda(&market.params, &market.curve, &market.history, &quotes)?;
    let artifact = LambdaArtifact {
        provenance: s.provenance(),
        valuation_date: market.curve.valuation_date,
        lambda: fit.lambda.clone(),
    };
    write_json(&s.path(LAMBDA_FILE), &artifact)?;

    let sign = if negate { -1.0 } else { 1.0 };
    let mut table = String::from("label,T1,T2,price,risk_premium,fitted,residual\n");
    let _ = writeln!(report, "lambda(t) = {} t + {}", fit.slope, fit.level);
    let _ = writeln!(
        report,
        "{:<10} {:>10} {:>12} {:>12} {:>12}",
        "quote", "price", "RP", "fitted", "residual"
    );
    for (i, q) in quotes.iter().enumerate() {
        let rp = risk_premium_period(&market.params, &market.curve, &market.history, q)?;
        let fitted = rp - fit.residuals[i];
        let _ = writeln!(
            table,
            "{},{},{},{},{},{},{}",
            q.label,
            q.t1,
            q.t2,
            q.price,
            sign * rp,
            sign * fitted,
            sign * fit.residuals[i]
        );
        let _ = writeln!(
            report,
            "{:<10} {:>10.4} {:>12.6} {:>12.6} {:>12.6}",
            q.label,
            q.price,
            sign * rp,
            sign * fitted,
            sign * fit.residuals[i]
        );
    }
    write_text(&s.path(RP_FILE), &table)?;

    // Daily premium implied by the fitted λ, over the quoted horizon.
    let horizon = quotes
        .iter()
        .map(|q| market.curve.offset_of(q.t2))
        .max()
        .unwrap_or(0);
    let mut curve = String::from("day,date,risk_premium\n");
    for t in 1..=horizon {
        let tf = t as f64;
        let actual = expected_spot(&market.params, &market.curve, &market.history, tf, None)?;
        let priced = expected_spot(
            &market.params,
            &market.curve,
            &market.history,
            tf,
            Some(&fit.lambda),
        )?;
        let _ = writeln!(
            curve,
            "{t},{},{}",
            market.curve.date_at(tf),
            sign * (actual - priced)
        );
    }
    write_text(&s.path(RP_CURVE_FILE), &curve)?;
    Ok(())
}

fn parse_time(text: &str, curve: &SeasonalCurve) -> Result<f64> {
    if let Ok(d) = NaiveDate::parse_from_str(text.trim(), "%Y-%m-%d") {
        return Ok(curve.offset_of(d) as f64);
    }
    text.trim()
        .parse::<f64>()
        .map_err(|_| MrsError::arg(format!("'{text}' is neither a day offset nor an ISO date")))
}

fn delivery_spec(w: &WindowArgs, curve: &SeasonalCurve) -> Result<DeliverySpec> {
    let (t1, t2) = (
        parse_time(&w.window_start, curve)?,
        parse_time(&w.window_end, curve)?,
    );
    let settlement: Settlement = w.settlement.parse()?;
    if w.continuous {
        DeliverySpec::continuous(t1, t2 + 1.0, settlement)
    } else {
        if t1.fract() != 0.0 || t2.fract() != 0.0 {
            return Err(MrsError::arg("daily windows need whole-day bounds"));
        }
        DeliverySpec::daily(t1 as i64, t2 as i64, settlement)
    }
}

/// `K0:K1:dK,T0:T1:dT` into strike and time axes, endpoints included.
pub(crate) fn parse_grid(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let axis = |part: &str| -> Result<Vec<f64>> {
        let v: Vec<f64> = part
            .split(':')
            .map(|x| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|_| MrsError::arg(format!("bad grid value '{x}'")))
            })
            .collect::<Result<_>>()?;
        let [lo, hi, step] = v[..] else {
            return Err(MrsError::arg(format!(
                "grid axis '{part}' must be start:end:step"
            )));
        };
        if !(step > 0.0) || hi < lo {
            return Err(MrsError::arg(format!(
                "grid axis '{part}' needs start <= end and step > 0"
            )));
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        if n > 100_000 {
            return Err(MrsError::arg("grid axis has more than 100000 points"));
        }
        Ok((0..n).map(|i| lo + i as f64 * step).collect())
    };
    let (k, t) = text
        .split_once(',')
        .ok_or_else(|| MrsError::arg("grid must be K0:K1:dK,T0:T1:dT"))?;
    Ok((axis(k)?, axis(t)?))
}

fn mc_line(report: &mut String, mc: &McEstimate, analytic: f64) {
    let verdict = if mc.agrees_with(analytic, 3.0) {
        "PASS"
    } else {
        "FAIL"
    };
    let _ = writeln!(
        report,
        "mc: value={} stderr={} paths={} seed={} diff={:.3e} {verdict} (3 stderr)",
        mc.value,
        mc.stderr,
        mc.n_paths,
        mc.seed,
        mc.value - analytic
    );
}

fn required<T: Copy>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| MrsError::arg(format!("--{name} is required unless --grid is given")))
}

fn write_grid(
    s: &Session,
    name: &str,
    header: &str,
    grid: &str,
    price: impl Fn(f64, f64) -> Result<f64>,
    report: &mut String,
) -> Result<()> {
    let (strikes, times) = parse_grid(grid)?;
    let mut csv = format!("{header}\n");
    for &t in &times {
        for &k in &strikes {
            let _ = writeln!(csv, "{k},{t},{}", price(k, t)?);
        }
    }
    let path = s.path(name);
    write_text(&path, &csv)?;
    let _ = writeln!(
        report,
        "grid: {} x {} prices written to {}",
        strikes.len(),
        times.len(),
        path.display()
    );
    Ok(())
}

fn cmd_price(s: &Session, args: &PriceArgs, report: &mut String) -> Result<()> {
    let market = load_market(s)?;
    let ctx = pricing_context(s, &market)?;
    let curve = &market.curve;
    match &args.contract {
        Contract::SpotOption { strike, maturity } => {
            if let Some(grid) = &args.grid {
                write_grid(
                    s,
                    "spot_option_grid.csv",
                    "strike,maturity,price",
                    grid,
                    |k, t| spot_option(&ctx, k, t),
                    report,
                )?;
                if strike.is_none() && maturity.is_none() {
                    return Ok(());
                }
            }
            let k = required(*strike, "strike")?;
            let t = parse_time(
                maturity
                    .as_deref()
                    .ok_or_else(|| MrsError::arg("--maturity is required"))?,
                curve,
            )?;
            let price = spot_option(&ctx, k, t)?;
            let _ = writeln!(
                report,
                "spot option K={k} T={t} ({}): {price}",
                curve.date_at(t)
            );
            if let Some(n) = args.mc {
                mc_line(report, &mc_spot_option(&ctx, k, t, n, s.seed)?, price);
            }
        }
        Contract::Forward { delivery, window } => {
            let (price, target) = match (delivery, window) {
                (Some(d), None) => {
                    let t = parse_time(d, curve)?;
                    (
                        forward_price(&ctx, 0.0, t, &ctx.history)?,
                        Delivery::Point(t),
                    )
                }
                (None, Some(w)) => {
                    let spec = delivery_spec(w, curve)?;
                    (
                        forward_price_period(&ctx, 0.0, &ctx.history, &spec)?,
                        Delivery::Window(spec),
                    )
                }
                _ => {
                    return Err(MrsError::arg(
                        "give either --delivery or --window-start/--window-end",
                    ))
                }
            };
            let _ = writeln!(report, "forward: {price}");
            if let Some(n) = args.mc {
                mc_line(
                    report,
                    &mc_forward_price(&ctx, 0.0, &ctx.history, target, n, s.seed)?,
                    price,
                );
            }
        }
        Contract::ForwardOption {
            strike,
            expiry,
            window,
            nested,
        } => {
            let spec = delivery_spec(window, curve)?;
            let t = match expiry {
                Some(e) => parse_time(e, curve)?,
                None => {
                    let start = curve.date_at(spec.t1);
                    curve.offset_of(business_days_before(start, 4, &market.holidays)) as f64
                }
            };
            if let Some(grid) = &args.grid {
                write_grid(
                    s,
                    "forward_option_grid.csv",
                    "strike,expiry,price",
                    grid,
                    |k, e| forward_option(&ctx, k, e, &spec),
                    report,
                )?;
                if strike.is_none() {
                    return Ok(());
                }
            }
            let k = required(*strike, "strike")?;
            let price = forward_option(&ctx, k, t, &spec)?;
            let _ = writeln!(
                report,
                "forward option K={k} expiry={t} ({}) window=[{}, {}]: {price}",
                curve.date_at(t),
                spec.t1,
                spec.t2
            );
            if let Some(n) = args.mc {
                let inner = nested
                    .map(InnerForward::Nested)
                    .unwrap_or(InnerForward::Analytic);
                mc_line(
                    report,
                    &mc_forward_option(&ctx, k, t, &spec, inner, n, s.seed)?,
                    price,
                );
            }
        }
    }
    Ok(())
}

fn cmd_simulate(
    s: &Session,
    horizon: u32,
    paths: usize,
    measure: Measure,
    report: &mut String,
) -> Result<()> {
    if paths == 0 {
        return Err(MrsError::arg("--paths must be at least 1"));
    }
    let market = load_market(s)?;
    let lambda = match measure {
        Measure::Actual => None,
        Measure::Pricing => Some(pricing_context(s, &market)?.lambda),
    };
    let mut csv = String::from("path,day,date,regime,price\n");
    let mut counts = [0usize; 3];
    for i in 0..paths {
        let mut rng = path_rng(s.seed, i as u64);
        let path = simulate_path_with(
            &market.params,
            &market.curve,
            &market.history,
            horizon,
            1,
            lambda.as_ref(),
            &mut rng,
        )?;
        for j in 1..path.times.len() {
            let day = path.times[j];
            let r = path.regimes[j];
            counts[r.index()] += 1;
            let _ = writeln!(
                csv,
                "{i},{day},{},{},{}",
                market.curve.date_at(day as f64),
                r.label(),
                path.prices[j]
            );
        }
    }
    let file = s.path(SIMULATION_FILE);
    write_text(&file, &csv)?;
    let total = (paths * horizon as usize) as f64;
    let _ = writeln!(
        report,
        "{} rows written to {}",
        paths * horizon as usize,
        file.display()
    );
    let stationary = match market.params.transitions.matrices() {
        [m] => Some(stationary_distribution(m)?),
        _ => None,
    };
    for r in Regime::ALL {
        let freq = counts[r.index()] as f64 / total;
        match stationary {
            Some(pi) => {
                let _ = writeln!(
                    report,
                    "{:<6} occupancy {freq:.4} (stationary {:.4})",
                    r.label(),
                    pi[r.index()]
                );
            }
            None => {
                let _ = writeln!(report, "{:<6} occupancy {freq:.4}", r.label());
            }
        }
    }
    Ok(())
}
