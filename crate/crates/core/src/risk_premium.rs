//! Risk premium of forward quotes and least-squares calibration of an
//! affine market price of risk.
//!
//! Delivery windows are averaged over whole days. Under an affine
//! λ(u) = λ₁u + λ₂ the gap between the expected spot and the λ-implied
//! forward on day `t` is `p_{·b}^{(t)} ∫_0^t λ(u) e^{-β(t-u)} du`, which is
//! linear in `(λ₁, λ₂)`, so fitting to quoted premia is an ordinary linear
//! least-squares problem.

use std::path::Path;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{MrsError, Result};
use crate::market_price::MarketPriceOfRisk;
use crate::model::{expected_spot, transition_between, ModelParams, Regime, RegimeHistory};
use crate::pricing::Settlement;
use crate::seasonal::SeasonalCurve;

/// A quoted forward with delivery on every day of `[t1, t2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardQuote {
    pub label: String,
    pub price: f64,
    pub t1: NaiveDate,
    pub t2: NaiveDate,
    #[serde(default)]
    pub settlement: Settlement,
}

impl ForwardQuote {
    pub fn new(label: impl Into<String>, price: f64, t1: NaiveDate, t2: NaiveDate) -> Result<Self> {
        let q = ForwardQuote {
            label: label.into(),
            price,
            t1,
            t2,
            settlement: Settlement::AtMaturity,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t1 > self.t2 {
            return Err(MrsError::arg(format!(
                "quote '{}': delivery start after end",
                self.label
            )));
        }
        if !self.price.is_finite() {
            return Err(MrsError::arg(format!(
                "quote '{}': price is not finite",
                self.label
            )));
        }
        Ok(())
    }

    /// Delivery days as offsets from the curve's valuation date.
    pub fn days(&self, seasonal: &SeasonalCurve) -> Result<(i64, i64)> {
        self.validate()?;
        let (a, b) = (seasonal.offset_of(self.t1), seasonal.offset_of(self.t2));
        if a < 0 {
            return Err(MrsError::arg(format!(
                "quote '{}' starts delivery before the valuation date",
                self.label
            )));
        }
        Ok((a, b))
    }
}

/// `RP(t) = E(P_t | F_0) - f_0^t` with the expectation under the actual measure.
pub fn risk_premium_point(
    params: &ModelParams,
    seasonal: &SeasonalCurve,
    history: &RegimeHistory,
    t: f64,
    forward: f64,
) -> Result<f64> {
    if !(t > 0.0) {
        return Err(MrsError::arg(format!("risk premium needs t > 0, got {t}")));
    }
    Ok(expected_spot(params, seasonal, history, t, None)? - forward)
}

/// Mean expected spot over the delivery days minus the quoted price.
pub fn risk_premium_period(
    params: &ModelParams,
    seasonal: &SeasonalCurve,
    history: &RegimeHistory,
    quote: &ForwardQuote,
) -> Result<f64> {
    let (a, b) = quote.days(seasonal)?;
    let mut sum = 0.0;
    for day in a..=b {
        sum += expected_spot(params, seasonal, history, day as f64, None)?;
    }
    Ok(sum / (b - a + 1) as f64 - quote.price)
}

/// Result of [`fit_lambda`].
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaFit {
    pub lambda: MarketPriceOfRisk,
    pub slope: f64,
    pub level: f64,
    /// Observed premium minus fitted premium, one per quote.
    pub residuals: Vec<f64>,
    /// Coefficients of `(λ₁, λ₂)` in each quote's premium.
    pub design: Vec<[f64; 2]>,
    pub premia: Vec<f64>,
}

/// Coefficients of `(λ₁, λ₂)` in the premium of delivery at time `t`.
fn premium_coefficients(params: &ModelParams, history: &RegimeHistory, t: f64) -> Result<[f64; 2]> {
    let beta = params.base.beta;
    let p_base = transition_between(&params.transitions, 0, t.floor() as i64)?
        [history.regime.index()][Regime::Base.index()];
    let slope = MarketPriceOfRisk::affine(1.0, 0.0).discounted_integral(beta, 0.0, t);
    let level = MarketPriceOfRisk::affine(0.0, 1.0).discounted_integral(beta, 0.0, t);
    Ok([p_base * slope, p_base * level])
}

/// Fit an affine λ to the premia of day-averaged forward quotes.
pub fn fit_lambda(
    params: &ModelParams,
    seasonal: &SeasonalCurve,
    history: &RegimeHistory,
    quotes: &[ForwardQuote],
) -> Result<LambdaFit> {
    if quotes.len() < 2 {
        return Err(MrsError::arg(format!(
            "fitting λ needs at least 2 quotes, got {}",
            quotes.len()
        )));
    }
    let mut design = Vec::with_capacity(quotes.len());
    let mut premia = Vec::with_capacity(quotes.len());
    for q in quotes {
        let (a, b) = q.days(seasonal)?;
        let mut row = [0.0; 2];
        for day in a..=b {
            let c = premium_coefficients(params, history, day as f64)?;
            row[0] += c[0];
            row[1] += c[1];
        }
        let n = (b - a + 1) as f64;
        design.push([row[0] / n, row[1] / n]);
        premia.push(risk_premium_period(params, seasonal, history, q)?);
    }
    solve(design, premia)
}

/// Continuous-time variant: one point forward `f_0^t` per maturity.
pub fn fit_lambda_points(
    params: &ModelParams,
    seasonal: &SeasonalCurve,
    history: &RegimeHistory,
    points: &[(f64, f64)],
) -> Result<LambdaFit> {
    if points.len() < 2 {
        return Err(MrsError::arg(format!(
            "fitting λ needs at least 2 forwards, got {}",
            points.len()
        )));
    }
    let mut design = Vec::with_capacity(points.len());
    let mut premia = Vec::with_capacity(points.len());
    for &(t, f) in points {
        design.push(premium_coefficients(params, history, t)?);
        premia.push(risk_premium_point(params, seasonal, history, t, f)?);
    }
    solve(design, premia)
}

fn solve(design: Vec<[f64; 2]>, premia: Vec<f64>) -> Result<LambdaFit> {
    let n = design.len();
    let x = DMatrix::from_fn(n, 2, |i, j| design[i][j]);
    let y = DVector::from_vec(premia.clone());
    // Scale columns so the rank test does not depend on time units.
    let norms: Vec<f64> = (0..2).map(|j| x.column(j).norm()).collect();
    if norms.iter().any(|&v| !(v > 0.0)) {
        return Err(MrsError::fit("λ design has a zero column"));
    }
    let scaled = DMatrix::from_fn(n, 2, |i, j| x[(i, j)] / norms[j]);
    let svd = scaled.svd(true, true);
    let sv = &svd.singular_values;
    if sv.min() <= 1e-10 * sv.max() {
        return Err(MrsError::fit(
            "λ design is rank deficient: delivery windows do not separate slope and level",
        ));
    }
    let beta = svd
        .solve(&y, 0.0)
        .map_err(|e| MrsError::fit(e.to_string()))?;
    let (slope, level) = (beta[0] / norms[0], beta[1] / norms[1]);
    let residuals = (0..n)
        .map(|i| premia[i] - design[i][0] * slope - design[i][1] * level)
        .collect();
    Ok(LambdaFit {
        lambda: MarketPriceOfRisk::affine(slope, level),
        slope,
        level,
        residuals,
        design,
        premia,
    })
}

#[derive(Debug, Deserialize)]
struct QuoteRow {
    label: String,
    price: f64,
    #[serde(rename = "T1", alias = "t1")]
    t1: NaiveDate,
    #[serde(rename = "T2", alias = "t2")]
    t2: NaiveDate,
    #[serde(default)]
    settlement: Option<String>,
}

/// Parse a delimited quote file with columns `label,price,T1,T2[,settlement]`.
pub fn parse_quotes(text: &str, path: &str) -> Result<Vec<ForwardQuote>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut quotes = Vec::new();
    for (i, rec) in reader.deserialize::<QuoteRow>().enumerate() {
        let line = i + 2;
        let parse_err = |message: String| MrsError::Parse {
            path: path.to_string(),
            line,
            message,
        };
        let row = rec.map_err(|e| parse_err(e.to_string()))?;
        let settlement = match row.settlement.as_deref().map(str::trim) {
            None | Some("") => Settlement::AtMaturity,
            Some(s) => s.parse().map_err(|e: MrsError| parse_err(e.to_string()))?,
        };
        let q = ForwardQuote {
            label: row.label,
            price: row.price,
            t1: row.t1,
            t2: row.t2,
            settlement,
        };
        q.validate().map_err(|e| parse_err(e.to_string()))?;
        quotes.push(q);
    }
    if quotes.is_empty() {
        return Err(MrsError::Parse {
            path: path.to_string(),
            line: 1,
            message: "no quotes".into(),
        });
    }
    Ok(quotes)
}

pub fn read_quotes(path: &Path) -> Result<Vec<ForwardQuote>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| MrsError::Io(format!("{}: {e}", path.display())))?;
    parse_quotes(&text, &path.display().to_string())
}
