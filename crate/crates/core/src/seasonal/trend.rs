//! Least-squares fit of the long-term trend
//! `L(t) = (a1 + a2 t) sin 2π(t + a3) + (a4 + a5 t) sin 2π a6 (t + a7) + a8 + a9 t + a10 t²`
//! with `t` in years. The problem is multimodal in (a3, a6, a7), so a
//! damped Gauss–Newton solve is run from a fixed grid of starts.

use std::f64::consts::PI;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector, SMatrix, SVector};
use rayon::prelude::*;

use super::DAYS_PER_YEAR;
use crate::error::{MrsError, Result};

pub const TREND_STARTS: usize = 32;
const A6_RANGE: (f64, f64) = (0.3, 3.0);
const MAX_ITER: usize = 2000;

pub fn trend_value(a: &[f64; 10], t: f64) -> f64 {
    let yearly = (a[0] + a[1] * t) * (2.0 * PI * (t + a[2])).sin();
    let other = (a[3] + a[4] * t) * (2.0 * PI * a[5] * (t + a[6])).sin();
    yearly + other + a[7] + a[8] * t + a[9] * t * t
}

fn gradient(a: &[f64; 10], t: f64) -> [f64; 10] {
    let p1 = 2.0 * PI * (t + a[2]);
    let p2 = 2.0 * PI * a[5] * (t + a[6]);
    let (s1, c1) = p1.sin_cos();
    let (s2, c2) = p2.sin_cos();
    let amp1 = a[0] + a[1] * t;
    let amp2 = a[3] + a[4] * t;
    [
        s1,
        t * s1,
        amp1 * c1 * 2.0 * PI,
        s2,
        t * s2,
        amp2 * c2 * 2.0 * PI * (t + a[6]),
        amp2 * c2 * 2.0 * PI * a[5],
        1.0,
        t,
        t * t,
    ]
}

#[derive(Debug, Clone)]
pub struct TrendFit {
    pub coeffs: [f64; 10],
    pub sse: f64,
    /// SSE after every accepted step of the winning start.
    pub trace: Vec<f64>,
    pub start: usize,
}

fn sse(a: &[f64; 10], ts: &[f64], ys: &[f64]) -> f64 {
    ts.iter()
        .zip(ys)
        .map(|(&t, &y)| (y - trend_value(a, t)).powi(2))
        .sum()
}

/// Start grid: 16 frequencies spanning the a6 range, each with two phases.
fn starts() -> Vec<(f64, f64, f64)> {
    let n_freq = TREND_STARTS / 2;
    let mut out = Vec::with_capacity(TREND_STARTS);
    for i in 0..n_freq {
        let a6 = A6_RANGE.0 + (A6_RANGE.1 - A6_RANGE.0) * i as f64 / (n_freq - 1) as f64;
        for phase in [0.0, 0.25] {
            out.push((phase, a6, phase / a6));
        }
    }
    out
}

/// Linear coefficients for fixed (a3, a6, a7).
fn linear_init(a3: f64, a6: f64, a7: f64, ts: &[f64], ys: &[f64]) -> [f64; 10] {
    let n = ts.len();
    let mut x = DMatrix::zeros(n, 7);
    for (r, &t) in ts.iter().enumerate() {
        let s1 = (2.0 * PI * (t + a3)).sin();
        let s2 = (2.0 * PI * a6 * (t + a7)).sin();
        let row = [s1, t * s1, s2, t * s2, 1.0, t, t * t];
        for (c, v) in row.iter().enumerate() {
            x[(r, c)] = *v;
        }
    }
    let y = DVector::from_column_slice(ys);
    let sol = x
        .svd(true, true)
        .solve(&y, 1e-12)
        .unwrap_or_else(|_| DVector::zeros(7));
    [
        sol[0], sol[1], a3, sol[2], sol[3], a6, a7, sol[4], sol[5], sol[6],
    ]
}

/// Levenberg–Marquardt from one start. The SSE trace is nonincreasing
/// because only improving steps are accepted.
fn levenberg_marquardt(mut a: [f64; 10], ts: &[f64], ys: &[f64]) -> TrendFit {
    let mut cur = sse(&a, ts, ys);
    let mut trace = vec![cur];
    let mut damping = 1e-3;
    for _ in 0..MAX_ITER {
        let mut jtj = SMatrix::<f64, 10, 10>::zeros();
        let mut jtr = SVector::<f64, 10>::zeros();
        for (&t, &y) in ts.iter().zip(ys) {
            let g = SVector::<f64, 10>::from(gradient(&a, t));
            let r = y - trend_value(&a, t);
            jtj += g * g.transpose();
            jtr += g * r;
        }
        let mut accepted = false;
        while damping < 1e16 {
            let mut lhs = jtj;
            for i in 0..10 {
                lhs[(i, i)] += damping * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = lhs.lu().solve(&jtr) else {
                damping *= 10.0;
                continue;
            };
            let mut trial = a;
            for i in 0..10 {
                trial[i] += step[i];
            }
            let s = sse(&trial, ts, ys);
            if s.is_finite() && s < cur {
                let rel_step = step.norm() / (1.0 + a.iter().map(|v| v * v).sum::<f64>().sqrt());
                let gain = cur - s;
                a = trial;
                cur = s;
                trace.push(cur);
                damping = (damping / 3.0).max(1e-12);
                accepted = true;
                if rel_step < 1e-15 || gain <= 1e-16 * cur.max(f64::MIN_POSITIVE) {
                    accepted = false;
                }
                break;
            }
            damping *= 4.0;
        }
        if !accepted {
            break;
        }
    }
    TrendFit {
        coeffs: a,
        sse: cur,
        trace,
        start: 0,
    }
}

/// Fit the trend to daily prices; time is measured in years from `epoch`.
pub fn fit_long_term(prices: &[(NaiveDate, f64)], epoch: NaiveDate) -> Result<TrendFit> {
    let ts: Vec<f64> = prices
        .iter()
        .map(|(d, _)| (*d - epoch).num_days() as f64 / DAYS_PER_YEAR)
        .collect();
    let ys: Vec<f64> = prices.iter().map(|p| p.1).collect();
    let span = match (ts.first(), ts.last()) {
        (Some(a), Some(b)) => b - a,
        _ => 0.0,
    };
    if prices.len() < 2 * 365 || span < 2.0 - 1.0 / DAYS_PER_YEAR {
        return Err(MrsError::arg(format!(
            "trend fit needs at least two full years of daily data, got {} points over {:.2} years",
            prices.len(),
            span
        )));
    }
    if ys.iter().any(|v| !v.is_finite()) {
        return Err(MrsError::arg("price series contains non-finite values"));
    }
    let fits: Vec<TrendFit> = starts()
        .par_iter()
        .enumerate()
        .map(|(i, &(a3, a6, a7))| {
            let mut fit = levenberg_marquardt(linear_init(a3, a6, a7, &ts, &ys), &ts, &ys);
            fit.start = i;
            fit
        })
        .collect();
    let best = fits
        .iter()
        .filter(|f| f.sse.is_finite() && f.coeffs.iter().all(|c| c.is_finite()))
        .min_by(|x, y| {
            x.sse
                .total_cmp(&y.sse)
                .then(x.coeffs[5].total_cmp(&y.coeffs[5]))
        });
    match best {
        Some(fit) => Ok(fit.clone()),
        None => Err(MrsError::Fit {
            message: "no trend start converged".into(),
            best_objective: fits
                .iter()
                .map(|f| f.sse)
                .filter(|s| !s.is_nan())
                .reduce(f64::min),
        }),
    }
}
