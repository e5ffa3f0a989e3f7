//! Deterministic seasonal component `g_t = L_t + S_t - shift`: a sine plus
//! polynomial long-term trend in years, an average-week pattern with an
//! extra holiday slot, and a level shift.

mod calendar;
mod trend;

pub use calendar::{business_days_before, parse_holidays, Calendar};
pub use trend::{fit_long_term, trend_value, TrendFit, TREND_STARTS};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{MrsError, Result};

pub const DAYS_PER_YEAR: f64 = 365.0;
pub const HOLIDAY_SLOT: usize = 7;
pub const SLOT_NAMES: [&str; 8] = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun", "Holiday"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalModel {
    /// a1..a10 of the long-term trend.
    pub trend: [f64; 10],
    /// Mon..Sun, then the holiday slot.
    pub weekly: [f64; 8],
    pub shift: f64,
    pub epoch: NaiveDate,
    pub holidays: Calendar,
}

impl SeasonalModel {
    /// A model whose `g` is identically zero.
    pub fn zero(epoch: NaiveDate) -> Self {
        SeasonalModel {
            trend: [0.0; 10],
            weekly: [0.0; 8],
            shift: 0.0,
            epoch,
            holidays: Calendar::default(),
        }
    }

    pub fn years(&self, date: NaiveDate) -> f64 {
        (date - self.epoch).num_days() as f64 / DAYS_PER_YEAR
    }

    pub fn slot(&self, date: NaiveDate) -> usize {
        if self.holidays.contains(date) {
            HOLIDAY_SLOT
        } else {
            date.weekday().num_days_from_monday() as usize
        }
    }

    pub fn long_term(&self, date: NaiveDate) -> f64 {
        trend_value(&self.trend, self.years(date))
    }

    pub fn short_term(&self, date: NaiveDate) -> f64 {
        self.weekly[self.slot(date)]
    }

    pub fn g(&self, date: NaiveDate) -> f64 {
        self.long_term(date) + self.short_term(date) - self.shift
    }

    /// Anchor the model at a valuation date so it can be evaluated at day
    /// offsets.
    pub fn curve(&self, valuation_date: NaiveDate) -> SeasonalCurve {
        SeasonalCurve {
            model: self.clone(),
            valuation_date,
        }
    }
}

/// A seasonal model evaluated at day offsets from a valuation date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalCurve {
    pub model: SeasonalModel,
    pub valuation_date: NaiveDate,
}

impl SeasonalCurve {
    pub fn flat(valuation_date: NaiveDate) -> Self {
        SeasonalModel::zero(valuation_date).curve(valuation_date)
    }

    pub fn date_at(&self, t: f64) -> NaiveDate {
        self.valuation_date + chrono::Duration::days(t.floor() as i64)
    }

    pub fn offset_of(&self, date: NaiveDate) -> i64 {
        (date - self.valuation_date).num_days()
    }

    /// `g` at day offset `t`: the trend is evaluated at the exact fractional
    /// time, the weekly pattern by the calendar day containing `t`.
    pub fn g(&self, t: f64) -> f64 {
        let day = t.floor();
        let date = self.date_at(t);
        let years = self.model.years(date) + (t - day) / DAYS_PER_YEAR;
        trend_value(&self.model.trend, years) + self.model.short_term(date) - self.model.shift
    }
}

/// Average-week pattern: the mean of the detrended values falling in each
/// weekday slot, holidays pooled in slot 8 whatever their weekday.
pub fn fit_weekly(detrended: &[(NaiveDate, f64)], holidays: &Calendar) -> Result<[f64; 8]> {
    let mut sums = [0.0; 8];
    let mut counts = [0usize; 8];
    for &(date, v) in detrended {
        let slot = if holidays.contains(date) {
            HOLIDAY_SLOT
        } else {
            date.weekday().num_days_from_monday() as usize
        };
        sums[slot] += v;
        counts[slot] += 1;
    }
    let mut out = [0.0; 8];
    for slot in 0..8 {
        if counts[slot] == 0 {
            return Err(MrsError::fit(format!(
                "weekly pattern slot {} has no observations",
                SLOT_NAMES[slot]
            )));
        }
        out[slot] = sums[slot] / counts[slot] as f64;
    }
    Ok(out)
}

/// Remove trend and weekly pattern, then shift so the minimum of the output
/// equals the minimum of the input. Stores the shift in `model`.
pub fn deseasonalize(prices: &[(NaiveDate, f64)], model: &mut SeasonalModel) -> Vec<f64> {
    let raw: Vec<f64> = prices
        .iter()
        .map(|&(d, p)| p - model.long_term(d) - model.short_term(d))
        .collect();
    let min_in = prices.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let min_raw = raw.iter().copied().fold(f64::INFINITY, f64::min);
    model.shift = if prices.is_empty() {
        0.0
    } else {
        min_in - min_raw
    };
    raw.into_iter().map(|x| x + model.shift).collect()
}

pub fn reseasonalize(dates: &[NaiveDate], stochastic: &[f64], model: &SeasonalModel) -> Vec<f64> {
    dates
        .iter()
        .zip(stochastic)
        .map(|(&d, &x)| x + model.g(d))
        .collect()
}

/// Result of the full seasonal pipeline.
#[derive(Debug, Clone)]
pub struct SeasonalFit {
    pub model: SeasonalModel,
    pub deseasonalized: Vec<f64>,
    pub trend_sse: f64,
}

/// Trend first, then the weekly pattern on the detrended series, then the
/// level shift.
pub fn fit_seasonal(
    prices: &[(NaiveDate, f64)],
    holidays: Calendar,
    epoch: NaiveDate,
) -> Result<SeasonalFit> {
    let trend = fit_long_term(prices, epoch)?;
    let mut model = SeasonalModel {
        trend: trend.coeffs,
        weekly: [0.0; 8],
        shift: 0.0,
        epoch,
        holidays,
    };
    let detrended: Vec<(NaiveDate, f64)> = prices
        .iter()
        .map(|&(d, p)| (d, p - model.long_term(d)))
        .collect();
    model.weekly = fit_weekly(&detrended, &model.holidays)?;
    let deseasonalized = deseasonalize(prices, &mut model);
    Ok(SeasonalFit {
        model,
        deseasonalized,
        trend_sse: trend.sse,
    })
}
