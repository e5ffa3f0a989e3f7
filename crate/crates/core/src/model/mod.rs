//! The three-regime spot model: a mean-reverting base regime observed (or
//! latent) every day, plus i.i.d. shifted log-normal spikes and inverted
//! shifted log-normal drops, switched by a periodic Markov chain.

mod base;
mod expectation;
pub(crate) mod simulate;
mod transitions;

pub use base::{base_conditional_moments, BaseMoments};
pub use expectation::{conditional_expected_spot, expected_spot, expected_stochastic};
pub use simulate::{path_rng, simulate_path, simulate_path_with, SimulatedPath};
pub use transitions::{
    identity, mat_mul, n_step_probs, restricted_path_prob, stationary_distribution,
    transition_between, Matrix3, TransitionSpec,
};

use serde::{Deserialize, Serialize};

use crate::error::{MrsError, Result};

/// Regime label. The order base < spike < drop fixes matrix indexing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Base,
    Spike,
    Drop,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Base, Regime::Spike, Regime::Drop];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Regime {
        Regime::ALL[i]
    }

    pub fn label(self) -> &'static str {
        match self {
            Regime::Base => "base",
            Regime::Spike => "spike",
            Regime::Drop => "drop",
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = MrsError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "base" | "b" => Ok(Regime::Base),
            "spike" | "s" => Ok(Regime::Spike),
            "drop" | "d" => Ok(Regime::Drop),
            other => Err(MrsError::arg(format!("unknown regime '{other}'"))),
        }
    }
}

/// Vasicek base regime `dX = (alpha - beta X) dt + sigma dW`, per day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseParams {
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
}

impl BaseParams {
    pub fn new(alpha: f64, beta: f64, sigma: f64) -> Result<Self> {
        let p = BaseParams { alpha, beta, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 1e-12) || !self.beta.is_finite() {
            return Err(MrsError::arg(format!(
                "beta must exceed 1e-12, got {}",
                self.beta
            )));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() || !self.alpha.is_finite() {
            return Err(MrsError::arg(
                "base alpha must be finite and sigma nonnegative",
            ));
        }
        Ok(())
    }

    pub fn long_run_mean(&self) -> f64 {
        self.alpha / self.beta
    }

    pub fn stationary_variance(&self) -> f64 {
        self.sigma * self.sigma / (2.0 * self.beta)
    }
}

/// Spike values `c + LN(mu, sigma^2)`, supported on `(c, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeParams {
    pub mu: f64,
    pub sigma: f64,
    pub shift: f64,
}

/// Drop values `c - LN(mu, sigma^2)`, supported on `(-∞, c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropParams {
    pub mu: f64,
    pub sigma: f64,
    pub shift: f64,
}

impl SpikeParams {
    pub fn mean(&self) -> f64 {
        (self.mu + 0.5 * self.sigma * self.sigma).exp() + self.shift
    }
}

impl DropParams {
    pub fn mean(&self) -> f64 {
        self.shift - (self.mu + 0.5 * self.sigma * self.sigma).exp()
    }
}

/// Full parameter set of one calibrated model. Spike and drop shifts may
/// come in either order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub base: BaseParams,
    pub spike: SpikeParams,
    pub drop: DropParams,
    pub transitions: TransitionSpec,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        for (name, mu, sigma, shift) in [
            ("spike", self.spike.mu, self.spike.sigma, self.spike.shift),
            ("drop", self.drop.mu, self.drop.sigma, self.drop.shift),
        ] {
            if !mu.is_finite() || !shift.is_finite() || !(sigma >= 0.0) || !sigma.is_finite() {
                return Err(MrsError::arg(format!(
                    "{name} parameters must be finite with sigma >= 0"
                )));
            }
        }
        self.transitions.validate()
    }

    /// Unconditional mean of the stochastic component in regime `r`;
    /// for the base regime this is the long-run level.
    pub fn regime_mean(&self, r: Regime) -> f64 {
        match r {
            Regime::Base => self.base.long_run_mean(),
            Regime::Spike => self.spike.mean(),
            Regime::Drop => self.drop.mean(),
        }
    }

    /// Example parameter set: the EEX estimates with the diagonal of the
    /// transition matrix as reported and off-diagonal mass split evenly.
    /// Shifts default to values typical of the deseasonalised series.
    pub fn eex_reference() -> Self {
        let split = |d: f64| (1.0 - d) / 2.0;
        let (pbb, pss, pdd) = (0.97, 0.66, 0.40);
        ModelParams {
            base: BaseParams {
                alpha: 5.98,
                beta: 0.16,
                sigma: 39.53_f64.sqrt(),
            },
            spike: SpikeParams {
                mu: 2.89,
                sigma: 0.64_f64.sqrt(),
                shift: 30.0,
            },
            drop: DropParams {
                mu: 2.62,
                sigma: 0.33_f64.sqrt(),
                shift: 45.0,
            },
            transitions: TransitionSpec::constant([
                [pbb, split(pbb), split(pbb)],
                [split(pss), pss, split(pss)],
                [split(pdd), split(pdd), pdd],
            ])
            .expect("reference matrix is stochastic"),
        }
    }
}

/// What is known about the regime chain at an observation time.
///
/// `lag == 0` means the chain is in the base regime and `last_base_value` is
/// the current base value. Otherwise the chain is in `regime` (spike or
/// drop), the last base day lies `lag` days back and `last_base_value` is the
/// base value at the end of that day, i.e. at time `floor(t) - lag + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeHistory {
    pub regime: Regime,
    pub last_base_value: f64,
    pub lag: u32,
}

impl RegimeHistory {
    pub fn base(x: f64) -> Self {
        RegimeHistory {
            regime: Regime::Base,
            last_base_value: x,
            lag: 0,
        }
    }

    pub fn new(regime: Regime, last_base_value: f64, lag: u32) -> Result<Self> {
        let h = RegimeHistory {
            regime,
            last_base_value,
            lag,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if (self.lag == 0) != (self.regime == Regime::Base) {
            return Err(MrsError::arg(
                "history lag must be zero exactly when the regime is base",
            ));
        }
        if !self.last_base_value.is_finite() {
            return Err(MrsError::arg("last base value must be finite"));
        }
        Ok(())
    }

    /// Time at which `last_base_value` was the base process value, for a
    /// history observed at time `t`.
    pub fn anchor_time(&self, t: f64) -> f64 {
        if self.lag == 0 {
            t
        } else {
            t.floor() - self.lag as f64 + 1.0
        }
    }
}
