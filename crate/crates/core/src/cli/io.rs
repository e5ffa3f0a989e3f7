use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationResult;
use crate::error::{MrsError, Result};
use crate::gof::{GofReport, ROW_LABELS};
use crate::market_price::MarketPriceOfRisk;
use crate::model::{ModelParams, Regime};
use crate::seasonal::SeasonalModel;

pub const SEASONAL_FILE: &str = "seasonal.json";
pub const DESEASONALIZED_FILE: &str = "deseasonalized.csv";
pub const MODEL_FILE: &str = "model.json";
pub const SMOOTHED_FILE: &str = "smoothed.csv";
pub const LOGLIK_FILE: &str = "loglik.csv";
pub const GOF_FILE: &str = "gof.json";
pub const GOF_TABLE_FILE: &str = "gof.txt";
pub const LAMBDA_FILE: &str = "lambda.json";
pub const RP_FILE: &str = "risk_premium.csv";
pub const RP_CURVE_FILE: &str = "risk_premium_curve.csv";
pub const SIMULATION_FILE: &str = "simulation.csv";

fn io_err(path: &Path, e: impl std::fmt::Display) -> MrsError {
    MrsError::Io(format!("{}: {e}", path.display()))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| MrsError::Internal(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| MrsError::Parse {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}

#[derive(Debug, Deserialize)]
struct SpotRow {
    date: NaiveDate,
    price: f64,
}

/// Daily spot prices: header `date,price`, consecutive calendar days.
pub fn parse_spot(text: &str, path: &str) -> Result<Vec<(NaiveDate, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| MrsError::Parse {
        path: path.into(),
        line: 1,
        message: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != ["date", "price"] {
        return Err(MrsError::Parse {
            path: path.into(),
            line: 1,
            message: "header must be 'date,price'".into(),
        });
    }
    let mut out: Vec<(NaiveDate, f64)> = Vec::new();
    for (i, rec) in reader.deserialize::<SpotRow>().enumerate() {
        let line = i + 2;
        let err = |message: String| MrsError::Parse {
            path: path.into(),
            line,
            message,
        };
        let row = rec.map_err(|e| err(e.to_string()))?;
        if !row.price.is_finite() {
            return Err(err("price is not finite".into()));
        }
        if let Some(&(prev, _)) = out.last() {
            if row.date != prev + chrono::Duration::days(1) {
                return Err(err(format!(
                    "expected {} after {prev}, found {}",
                    prev + chrono::Duration::days(1),
                    row.date
                )));
            }
        }
        out.push((row.date, row.price));
    }
    if out.is_empty() {
        return Err(MrsError::Parse {
            path: path.into(),
            line: 1,
            message: "no observations".into(),
        });
    }
    Ok(out)
}

pub fn read_spot(path: &Path) -> Result<Vec<(NaiveDate, f64)>> {
    parse_spot(&read_text(path)?, &path.display().to_string())
}

/// Provenance stamped on every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalArtifact {
    pub provenance: Provenance,
    pub model: SeasonalModel,
    pub trend_sse: f64,
    pub first_date: NaiveDate,
    pub last_date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub provenance: Provenance,
    /// Transition slots count days from `first_date`.
    pub params: ModelParams,
    pub initial: [f64; 3],
    pub first_date: NaiveDate,
    pub observations: usize,
    pub iterations: usize,
    pub converged: bool,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofArtifact {
    pub provenance: Provenance,
    pub report: GofReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaArtifact {
    pub provenance: Provenance,
    pub valuation_date: NaiveDate,
    pub lambda: MarketPriceOfRisk,
}

/// One row of the smoothed-probability file.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedRow {
    pub date: NaiveDate,
    pub x: f64,
    pub probs: [f64; 3],
    pub regime: Option<Regime>,
}

pub fn smoothed_csv(dates: &[NaiveDate], data: &[f64], fit: &CalibrationResult) -> String {
    let mut s = String::from("date,x,p_base,p_spike,p_drop,regime\n");
    for (i, d) in dates.iter().enumerate() {
        let p = fit.smoothed[i];
        let label = crate::gof::classify(&p).map(Regime::label).unwrap_or("");
        let _ = writeln!(s, "{d},{},{},{},{},{label}", data[i], p[0], p[1], p[2]);
    }
    s
}

pub fn read_smoothed(path: &Path) -> Result<Vec<SmoothedRow>> {
    let text = read_text(path)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let err = |message: String| MrsError::Parse {
            path: path.display().to_string(),
            line: i + 2,
            message,
        };
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let num =
            |j: usize| -> Result<f64> { rec[j].parse::<f64>().map_err(|e| err(e.to_string())) };
        let date = rec[0]
            .parse::<NaiveDate>()
            .map_err(|e| err(e.to_string()))?;
        let regime = if rec[5].is_empty() {
            None
        } else {
            Some(rec[5].parse()?)
        };
        rows.push(SmoothedRow {
            date,
            x: num(1)?,
            probs: [num(2)?, num(3)?, num(4)?],
            regime,
        });
    }
    Ok(rows)
}

/// Deseasonalised series as written by `fit-seasonal`.
pub fn read_deseasonalized(path: &Path) -> Result<Vec<(NaiveDate, f64, f64)>> {
    let text = read_text(path)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in reader.deserialize::<(NaiveDate, f64, f64)>().enumerate() {
        rows.push(rec.map_err(|e| MrsError::Parse {
            path: path.display().to_string(),
            line: i + 2,
            message: e.to_string(),
        })?);
    }
    if rows.is_empty() {
        return Err(MrsError::Parse {
            path: path.display().to_string(),
            line: 1,
            message: "empty series".into(),
        });
    }
    Ok(rows)
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}"))
        .unwrap_or_else(|| "n/a".into())
}

/// Fixed-width table: rows Base/Spike/Drop/Model, column groups ewedf/wedf.
pub fn gof_table(report: &GofReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<7}| {:^25} | {:^25}", "", "ewedf", "wedf");
    let _ = writeln!(
        s,
        "{:<7}| {:>8} {:>7} {:>8} | {:>8} {:>7} {:>8}",
        "", "D", "p", "n", "D", "p", "n"
    );
    for (i, label) in ROW_LABELS.iter().enumerate() {
        let (e, w) = (report.ewedf[i], report.wedf[i]);
        let _ = writeln!(
            s,
            "{label:<7}| {:>8} {:>7} {:>8.1} | {:>8} {:>7} {:>8.1}",
            fmt_opt(e.statistic, 4),
            fmt_opt(e.p_value, 3),
            e.sample_size,
            fmt_opt(w.statistic, 4),
            fmt_opt(w.p_value, 3),
            w.sample_size
        );
    }
    let _ = writeln!(
        s,
        "bootstrap replications: {}, seed: {}",
        report.replications, report.seed
    );
    s
}
