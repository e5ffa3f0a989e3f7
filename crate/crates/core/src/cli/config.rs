use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::EmConfig;
use crate::error::{MrsError, Result};
use crate::model::{Regime, RegimeHistory};

/// Project configuration read from a TOML file. Relative paths resolve
/// against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    pub data: DataConfig,
    #[serde(default)]
    pub em: EmSection,
    #[serde(default)]
    pub gof: GofSection,
    #[serde(default)]
    pub pricing: PricingSection,
    /// Regime state at the valuation date. Derived from the calibrated
    /// series when absent.
    #[serde(default)]
    pub state: Option<StateSection>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub spot: PathBuf,
    #[serde(default)]
    pub quotes: Option<PathBuf>,
    #[serde(default)]
    pub holidays: Option<PathBuf>,
    /// Origin of the trend's time axis; defaults to the first spot date.
    #[serde(default)]
    pub epoch: Option<NaiveDate>,
    /// Defaults to the last spot date.
    #[serde(default)]
    pub valuation_date: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmSection {
    pub tol: f64,
    pub max_iter: usize,
    pub transition_period: usize,
}

impl Default for EmSection {
    fn default() -> Self {
        let em = EmConfig::default();
        EmSection {
            tol: em.tol,
            max_iter: em.max_iter,
            transition_period: 1,
        }
    }
}

impl EmSection {
    pub fn em_config(&self) -> EmConfig {
        EmConfig {
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GofSection {
    pub replications: usize,
    pub refit: bool,
}

impl Default for GofSection {
    fn default() -> Self {
        GofSection {
            replications: 1000,
            refit: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PricingSection {
    /// Continuously compounded rate per day.
    #[serde(default)]
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSection {
    pub regime: Regime,
    /// Current base value, or the last observed one for spike/drop.
    pub x0: f64,
    #[serde(default)]
    pub lag: u32,
}

impl StateSection {
    pub fn history(&self) -> Result<RegimeHistory> {
        RegimeHistory::new(self.regime, self.x0, self.lag)
    }
}

/// A loaded configuration together with its provenance.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ProjectConfig,
    pub base_dir: PathBuf,
    /// Hex SHA-256 of the configuration file bytes.
    pub hash: String,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| MrsError::Io(format!("{}: {e}", path.display())))?;
        let config: ProjectConfig = toml::from_str(&text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start].matches('\n').count() + 1)
                .unwrap_or(1);
            MrsError::Parse {
                path: path.display().to_string(),
                line,
                message: e.message().to_string(),
            }
        })?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let loaded = LoadedConfig {
            config,
            base_dir,
            hash: hex::encode(Sha256::digest(text.as_bytes())),
        };
        loaded.check()?;
        Ok(loaded)
    }

    fn check(&self) -> Result<()> {
        let d = &self.config.data;
        for p in std::iter::once(&d.spot)
            .chain(d.quotes.iter())
            .chain(d.holidays.iter())
        {
            let full = self.resolve(p);
            if !full.is_file() {
                return Err(MrsError::Io(format!("{}: file not found", full.display())));
            }
        }
        if self.config.em.transition_period == 0 {
            return Err(MrsError::arg("em.transition_period must be at least 1"));
        }
        if !(self.config.pricing.rate >= 0.0) {
            return Err(MrsError::arg("pricing.rate must be >= 0"));
        }
        if let Some(s) = &self.config.state {
            s.history()?;
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self, override_dir: Option<&Path>) -> PathBuf {
        match override_dir {
            Some(dir) => dir.to_path_buf(),
            None => self.resolve(&self.config.output_dir),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("spot.csv"), "date,price\n").unwrap();
        let path = dir.path().join("mrs.toml");
        std::fs::write(&path, "[data]\nspot = \"spot.csv\"\n").unwrap();
        let c = LoadedConfig::load(&path).unwrap();
        assert_eq!(c.config.em.transition_period, 1);
        assert_eq!(c.config.gof.replications, 1000);
        assert_eq!(c.hash.len(), 64);
        assert_eq!(c.output_dir(None), dir.path().join("out"));
    }

    #[test]
    fn missing_files_and_bad_keys_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mrs.toml");
        std::fs::write(&path, "[data]\nspot = \"nope.csv\"\n").unwrap();
        assert!(matches!(LoadedConfig::load(&path), Err(MrsError::Io(_))));
        std::fs::write(&path, "seed = 1\n\n[data]\nspot = \"a.csv\"\nspt = 3\n").unwrap();
        match LoadedConfig::load(&path) {
            Err(MrsError::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
    }
}
