//! EM calibration of the three-regime model on a deseasonalised series.

mod em;
mod quantile;

pub use em::{
    em_calibrate, em_calibrate_from, smooth, BaseMixture, CalibrationResult, EmConfig, Posterior,
};
pub use quantile::{quantile, quartile_shifts};
