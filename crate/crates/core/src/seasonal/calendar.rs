use std::collections::BTreeSet;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{MrsError, Result};

/// Holiday calendar: a set of dates.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Calendar(BTreeSet<NaiveDate>);

impl Calendar {
    pub fn from_dates<I: IntoIterator<Item = NaiveDate>>(dates: I) -> Self {
        Calendar(dates.into_iter().collect())
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.0.contains(&date)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_business_day(&self, date: NaiveDate) -> bool {
        !matches!(date.weekday(), Weekday::Sat | Weekday::Sun) && !self.contains(date)
    }
}

/// Newline-delimited ISO-8601 dates; blank lines and `#` comments skipped.
pub fn parse_holidays(text: &str, path: &str) -> Result<Calendar> {
    let mut dates = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let date = NaiveDate::parse_from_str(line, "%Y-%m-%d").map_err(|e| MrsError::Parse {
            path: path.to_string(),
            line: i + 1,
            message: format!("bad date '{line}': {e}"),
        })?;
        dates.insert(date);
    }
    Ok(Calendar(dates))
}

/// The `n`-th business day strictly before `date` (weekends and holidays
/// skipped, `date` itself never counted).
pub fn business_days_before(date: NaiveDate, n: u32, calendar: &Calendar) -> NaiveDate {
    let mut d = date;
    let mut remaining = n;
    while remaining > 0 {
        d = d.pred_opt().expect("date underflow");
        if calendar.is_business_day(d) {
            remaining -= 1;
        }
    }
    d
}
