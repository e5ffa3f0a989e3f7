use serde::{Deserialize, Serialize};

use super::Regime;
use crate::error::{MrsError, Result};

pub type Matrix3 = [[f64; 3]; 3];

pub fn identity() -> Matrix3 {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

pub fn mat_mul(a: &Matrix3, b: &Matrix3) -> Matrix3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Periodic transition matrices. `matrices[k mod period]` governs the step
/// from day `k` to day `k + 1`, days counted from the valuation date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionSpec {
    matrices: Vec<Matrix3>,
}

impl TransitionSpec {
    pub fn new(matrices: Vec<Matrix3>) -> Result<Self> {
        let spec = TransitionSpec { matrices };
        spec.validate()?;
        Ok(spec)
    }

    pub fn constant(m: Matrix3) -> Result<Self> {
        Self::new(vec![m])
    }

    pub fn validate(&self) -> Result<()> {
        if self.matrices.is_empty() {
            return Err(MrsError::arg("transition period must be at least 1"));
        }
        for (slot, m) in self.matrices.iter().enumerate() {
            for (i, row) in m.iter().enumerate() {
                if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                    return Err(MrsError::arg(format!(
                        "slot {slot} row {i}: entries must lie in [0, 1]"
                    )));
                }
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    return Err(MrsError::arg(format!(
                        "slot {slot} row {i} sums to {s}, not 1"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn period(&self) -> usize {
        self.matrices.len()
    }

    pub fn matrices(&self) -> &[Matrix3] {
        &self.matrices
    }

    /// Matrix for the step `day -> day + 1`.
    pub fn at(&self, day: i64) -> &Matrix3 {
        &self.matrices[day.rem_euclid(self.period() as i64) as usize]
    }

    pub fn prob(&self, day: i64, from: Regime, to: Regime) -> f64 {
        self.at(day)[from.index()][to.index()]
    }

    /// Re-index so that slot `offset` of `self` becomes slot 0. Used to move
    /// from a calibration-sample day count to a valuation-date day count.
    pub fn rotated(&self, offset: i64) -> Self {
        let p = self.period() as i64;
        let matrices = (0..p).map(|k| *self.at(k + offset)).collect();
        TransitionSpec { matrices }
    }
}

/// `P(R_to = j | R_from = i)`: the product of the step matrices for days
/// `from..to`. The identity when `from == to`.
pub fn transition_between(spec: &TransitionSpec, from: i64, to: i64) -> Result<Matrix3> {
    if from > to {
        return Err(MrsError::arg(format!(
            "transition from day {from} to earlier day {to}"
        )));
    }
    let mut acc = identity();
    for day in from..to {
        acc = mat_mul(&acc, spec.at(day));
    }
    Ok(acc)
}

/// Inclusive product `P(from) P(from+1) ... P(to)`.
pub fn n_step_probs(spec: &TransitionSpec, from_time: i64, to_time: i64) -> Result<Matrix3> {
    if from_time > to_time {
        return Err(MrsError::arg(format!(
            "n_step_probs: from_time {from_time} > to_time {to_time}"
        )));
    }
    transition_between(spec, from_time, to_time + 1)
}

/// Probability, given `R_0 = base`, that day `t_floor` is in `end`, the
/// previous `k - 1` days avoid the base regime and day `t_floor - k` is base.
///
/// `k = 0` with `end = Base` gives `P(R_{t_floor} = base | R_0 = base)`.
pub fn restricted_path_prob(
    spec: &TransitionSpec,
    t_floor: i64,
    k: i64,
    end: Regime,
) -> Result<f64> {
    let b = Regime::Base.index();
    if k == 0 {
        if end != Regime::Base {
            return Err(MrsError::arg("k = 0 requires the base regime at t_floor"));
        }
        if t_floor < 0 {
            return Err(MrsError::arg("t_floor must be nonnegative"));
        }
        return Ok(transition_between(spec, 0, t_floor)?[b][b]);
    }
    if end == Regime::Base {
        return Err(MrsError::arg("k >= 1 requires a spike or drop end regime"));
    }
    if k < 1 || k > t_floor {
        return Err(MrsError::arg(format!("lag k = {k} outside 1..={t_floor}")));
    }
    let start = t_floor - k;
    let reach_base = transition_between(spec, 0, start)?[b][b];
    // Mass on (spike, drop) after leaving base, then confined to non-base.
    let first = spec.at(start);
    let mut v = [first[b][1], first[b][2]];
    for day in start + 1..t_floor {
        let m = spec.at(day);
        v = [
            v[0] * m[1][1] + v[1] * m[2][1],
            v[0] * m[1][2] + v[1] * m[2][2],
        ];
    }
    Ok(reach_base * v[end.index() - 1])
}

/// Stationary law of a single irreducible stochastic matrix.
pub fn stationary_distribution(m: &Matrix3) -> Result<[f64; 3]> {
    // Solve π(P - I) = 0 with the last balance equation replaced by Σπ = 1.
    let a = nalgebra::Matrix3::new(
        m[0][0] - 1.0,
        m[1][0],
        m[2][0],
        m[0][1],
        m[1][1] - 1.0,
        m[2][1],
        1.0,
        1.0,
        1.0,
    );
    let rhs = nalgebra::Vector3::new(0.0, 0.0, 1.0);
    let pi = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| MrsError::arg("transition matrix has no unique stationary law"))?;
    Ok([pi[0], pi[1], pi[2]])
}
