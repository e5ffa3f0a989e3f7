//! Three-regime Markov regime-switching model for electricity spot prices.
//!
//! The crate covers the whole pipeline: seasonal decomposition
//! ([`seasonal`]), EM calibration ([`calibration`]), goodness-of-fit testing
//! ([`gof`]), risk premium and market-price-of-risk fitting
//! ([`risk_premium`]), closed-form pricing of spot options, forwards and
//! options on forwards ([`pricing`]), and an independent Monte Carlo
//! valuation used to check every closed form ([`mc`]).

// Negated comparisons are how argument checks reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod cli;
pub mod dist;
pub mod error;
pub mod gof;
pub mod market_price;
pub mod mc;
pub mod model;
pub mod pricing;
pub mod quadrature;
pub mod risk_premium;
pub mod seasonal;

pub use error::{MrsError, Result};
pub use market_price::MarketPriceOfRisk;
pub use model::{
    BaseParams, DropParams, ModelParams, Regime, RegimeHistory, SpikeParams, TransitionSpec,
};
pub use seasonal::{SeasonalCurve, SeasonalModel};
