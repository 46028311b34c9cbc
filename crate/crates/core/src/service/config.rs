//! Single TOML configuration file.
//!
//! ```toml
//! [synth]            # dataset generator, used by `synth`
//! seed = 7
//! precision = 7
//! incident_rate = 1.0
//! bbox = { min_lat = 40.6, max_lat = 40.8, min_lon = -74.1, max_lon = -73.9 }
//! poi = [{ category = "investment_advisers", count = 150 }]
//! crime = { bias = -2.0, weights = { kde_investment_advisers = 1.0 } }
//! fine = { intercept = 4.5, coefficients = {} }
//!
//! [train]            # model fitting, used by `train`
//! fine_degree = 2
//! negative_ratio = 3.0
//! cv_folds = 10
//! forest = { n_trees = 100, max_depth = 12, min_leaf = 5, seed = 7 }
//!
//! [server]           # used by `serve` and `surface`
//! port = 8080
//! cell_cap = 250000
//! ```
//!
//! Every section is optional. Command-line flags override file values.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::SynthConfig;
use crate::geogrid::DEFAULT_CELL_CAP;
use crate::riskmodel::TrainParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub port: u16,
    /// Largest number of cells a single surface may contain.
    pub cell_cap: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            port: 8080,
            cell_cap: DEFAULT_CELL_CAP,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub synth: Option<SynthConfig>,
    pub train: TrainParams,
    pub server: ServerConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: String, message: String },
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let p = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: p.clone(), source })?;
        Self::from_toml(&text).map_err(|e| ConfigError::Parse {
            path: p,
            message: e.message().to_string(),
        })
    }
}
