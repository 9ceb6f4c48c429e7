//! Experiment configuration and JSON config loading.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("config field `{field}`: {message}")]
    Invalid {
        field: &'static str,
        message: String,
    },
}

/// Settings of one grouped-fold evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub folds: usize,
    pub rho: f64,
    pub seed: u64,
    /// Optional exploration budget: features use only the first `budget`
    /// turns of each trajectory.
    pub budget: Option<usize>,
    pub feature: FeatureConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            folds: 5,
            rho: 1.5,
            seed: 42,
            budget: None,
            feature: FeatureConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.folds < 2 {
            return Err(ConfigError::Invalid {
                field: "folds",
                message: format!("must be at least 2, got {}", self.folds),
            });
        }
        if !self.rho.is_finite() || self.rho < 0.0 {
            return Err(ConfigError::Invalid {
                field: "rho",
                message: format!("must be a non-negative number, got {}", self.rho),
            });
        }
        if self.budget == Some(0) {
            return Err(ConfigError::Invalid {
                field: "budget",
                message: "must be at least 1 when set".into(),
            });
        }
        self.feature
            .lexicon
            .check()
            .map_err(|message| ConfigError::Invalid {
                field: "feature.lexicon",
                message,
            })
    }
}

/// Load any JSON-encoded config type from a file.
pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_parse_from_empty_object() {
        let cfg: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.folds, 5);
        assert_eq!(cfg.rho, 1.5);
        cfg.validate().unwrap();
    }

    #[test]
    fn bad_fields_are_rejected_with_field_names() {
        let cfg = ExperimentConfig {
            folds: 1,
            ..Default::default()
        };
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("folds"));
        let cfg = ExperimentConfig {
            rho: -1.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig {
            budget: Some(0),
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_fields_fail_to_parse() {
        let err = serde_json::from_str::<ExperimentConfig>(r#"{"fold_count": 5}"#);
        assert!(err.is_err());
    }
}
