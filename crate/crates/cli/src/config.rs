//! Scenario files.
//!
//! TOML is the primary format; a file ending in `.json` is read as JSON
//! with the same schema. Unknown keys anywhere are rejected.

use std::path::{Path, PathBuf};

use popdyn::ensemble::EnsembleSpec;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Statistics to report; empty means every statistic the model offers.
    #[serde(default)]
    pub statistics: Vec<String>,
    pub ensemble: EnsembleConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub seed: u64,
    pub reps: usize,
}

impl From<EnsembleConfig> for EnsembleSpec {
    fn from(c: EnsembleConfig) -> Self {
        EnsembleSpec::new(c.seed, c.reps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub format: DataFormat,
}

fn one() -> u64 {
    1
}

fn one_usize() -> usize {
    1
}

fn default_dt() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    Bgw {
        pmf: Vec<f64>,
        generations: usize,
        #[serde(default = "one")]
        initial: u64,
    },
    BirthDeath {
        b: f64,
        d: f64,
        #[serde(default = "one")]
        x0: u64,
        t: f64,
    },
    Csbp {
        m: f64,
        gamma: f64,
        #[serde(default)]
        c: f64,
        x0: f64,
        t: f64,
        #[serde(default = "default_dt")]
        dt: f64,
    },
    WrightFisher {
        n: u64,
        p0: f64,
    },
    WfDiffusion {
        gamma: f64,
        #[serde(default)]
        theta: f64,
        nu: [f64; 2],
        p0: f64,
        t: f64,
        #[serde(default = "default_dt")]
        dt: f64,
    },
    Kingman {
        n: usize,
        gamma: f64,
    },
    Ewens {
        n: usize,
        theta: f64,
    },
    Voter {
        #[serde(default = "one_usize")]
        dim: usize,
        side: usize,
        density: f64,
        t: f64,
    },
    ReedFrost {
        n: u64,
        lambda: f64,
        #[serde(default = "one")]
        i0: u64,
    },
}

impl ModelConfig {
    pub fn id(&self) -> &'static str {
        match self {
            ModelConfig::Bgw { .. } => "bgw",
            ModelConfig::BirthDeath { .. } => "birth-death",
            ModelConfig::Csbp { .. } => "csbp",
            ModelConfig::WrightFisher { .. } => "wright-fisher",
            ModelConfig::WfDiffusion { .. } => "wf-diffusion",
            ModelConfig::Kingman { .. } => "kingman",
            ModelConfig::Ewens { .. } => "ewens",
            ModelConfig::Voter { .. } => "voter",
            ModelConfig::ReedFrost { .. } => "reed-frost",
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        };
        parsed.map_err(|message| CliError::Config {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario configs always serialize")
    }

    pub fn ensemble(&self) -> EnsembleSpec {
        self.ensemble.into()
    }
}
