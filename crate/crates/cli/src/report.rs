use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{EnsembleConfig, ModelConfig, ScenarioConfig};

pub const SOFTWARE: &str = concat!("popdyn-cli ", env!("CARGO_PKG_VERSION"));

/// Pass band `|estimate - oracle| <= sigmas * se + slack`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub sigmas: f64,
    pub slack: f64,
}

impl Tolerance {
    pub const THREE_SE: Tolerance = Tolerance { sigmas: 3.0, slack: 0.0 };

    pub fn accepts(&self, estimate: f64, se: f64, oracle: f64) -> bool {
        (estimate - oracle).abs() <= self.sigmas * se + self.slack
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub oracle: f64,
    pub tolerance: Tolerance,
    pub z: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticRow {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<Comparison>,
}

impl StatisticRow {
    pub fn passed(&self) -> bool {
        self.comparison.as_ref().map_or(true, |c| c.pass)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub software: String,
    pub config: ScenarioConfig,
    pub replicates: usize,
    pub statistics: Vec<StatisticRow>,
    /// SHA-256 over the software, statistics, ensemble, model and statistic
    /// selection. Output settings are left out.
    pub digest: String,
    pub wall_seconds: f64,
}

#[derive(Serialize)]
struct Hashed<'a> {
    software: &'a str,
    statistic_names: &'a [String],
    ensemble: &'a EnsembleConfig,
    model: &'a ModelConfig,
    replicates: usize,
    statistics: &'a [StatisticRow],
}

impl RunReport {
    pub fn new(config: ScenarioConfig, replicates: usize, statistics: Vec<StatisticRow>, wall_seconds: f64) -> Self {
        let digest = digest_hex(&Hashed {
            software: SOFTWARE,
            statistic_names: &config.statistics,
            ensemble: &config.ensemble,
            model: &config.model,
            replicates,
            statistics: &statistics,
        });
        Self {
            software: SOFTWARE.to_string(),
            config,
            replicates,
            statistics,
            digest,
            wall_seconds,
        }
    }

    pub fn passed(&self) -> bool {
        self.statistics.iter().all(StatisticRow::passed)
    }
}

pub fn digest_hex<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("report types always serialize");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_band() {
        let t = Tolerance { sigmas: 3.0, slack: 0.01 };
        assert!(t.accepts(1.0, 0.1, 1.3 + 0.009));
        assert!(!t.accepts(1.0, 0.1, 1.32));
        assert!(Tolerance::THREE_SE.accepts(2.0, 0.0, 2.0));
    }

    #[test]
    fn digest_is_stable_hex() {
        let d = digest_hex(&[1, 2, 3]);
        assert_eq!(d.len(), 64);
        assert_eq!(d, digest_hex(&vec![1, 2, 3]));
        assert_ne!(d, digest_hex(&[1, 2, 4]));
    }
}
