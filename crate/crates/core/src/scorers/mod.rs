//! Pluggable final-action risk scorers with a uniform train/score contract.
//!
//! Every scorer maps a featurized row to a risk score in `[0,1]`. The two
//! linear scorers are trained with deterministic full-batch logistic
//! gradient descent; the policy scorers (`execute_all`, `reject_all`) and
//! heuristics are stateless; `external` delegates to a spawned process over
//! the line protocol in [`external`].

pub mod external;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::{AttackFamily, AttackProfile, RiskLabel};
use crate::features::{FeatureRow, MarkerLexicon};
use external::{ExternalError, ExternalScorer};

/// One scored row: the scorer output plus the audit metadata evaluation
/// slices on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredRow {
    pub episode_id: String,
    pub group_id: String,
    pub label: RiskLabel,
    pub score: f64,
    pub benchmark_source: String,
    pub attack_family: Option<AttackFamily>,
    pub attack_profile: Option<AttackProfile>,
}

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("training rows are empty")]
    EmptyTraining,
    #[error("training rows contain a single class")]
    DegenerateTraining,
    #[error("unknown scalar feature `{0}`")]
    UnknownFeature(String),
    #[error("scorer spec invalid: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    External(#[from] ExternalError),
}

/// The scalar feature list used by `scalar_linear` unless overridden.
pub const DEFAULT_SCALAR_FEATURES: [&str; 15] = [
    "total_steps",
    "triggered_count",
    "probe_detect_count",
    "high_mismatch_count",
    "id_drift_count",
    "warning_count",
    "anomaly_density",
    "repeated_consistency_anomaly",
    "strong_signal",
    "state_risk",
    "high_impact_count",
    "bypass_count",
    "safety_count",
    "high_effect_markers",
    "param_risk",
];

/// Value of one named scalar feature; booleans map to 0/1.
pub fn scalar_feature(row: &FeatureRow, name: &str) -> Option<f64> {
    let w = &row.world;
    let p = &row.params;
    Some(match name {
        "total_steps" => f64::from(w.total_steps),
        "triggered_count" => f64::from(w.triggered_count),
        "probe_detect_count" => f64::from(w.probe_detect_count),
        "high_mismatch_count" => f64::from(w.high_mismatch_count),
        "id_drift_count" => f64::from(w.id_drift_count),
        "warning_count" => f64::from(w.warning_count),
        "anomaly_density" => w.anomaly_density,
        "repeated_consistency_anomaly" => f64::from(u8::from(w.repeated_consistency_anomaly)),
        "strong_signal" => f64::from(u8::from(w.strong_signal)),
        "state_risk" => w.state_risk,
        "high_impact_count" => f64::from(p.high_impact_count),
        "bypass_count" => f64::from(p.bypass_count),
        "safety_count" => f64::from(p.safety_count),
        "high_effect_markers" => f64::from(p.high_effect_markers),
        "param_risk" => p.param_risk,
        _ => return None,
    })
}

fn default_half() -> f64 {
    0.5
}

fn default_epochs() -> u32 {
    200
}

fn default_learning_rate() -> f64 {
    0.1
}

fn default_l2() -> f64 {
    1e-4
}

fn default_scalar_features() -> Vec<String> {
    DEFAULT_SCALAR_FEATURES
        .iter()
        .map(|s| (*s).to_owned())
        .collect()
}

fn default_timeout_ms() -> u64 {
    10_000
}

/// Scorer kind plus hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScorerSpec {
    HeuristicCombined {
        #[serde(default = "default_half")]
        alpha: f64,
        #[serde(default = "default_half")]
        beta: f64,
    },
    KeywordHeuristic {
        #[serde(default)]
        lexicon: MarkerLexicon,
    },
    ScalarLinear {
        #[serde(default = "default_epochs")]
        epochs: u32,
        #[serde(default = "default_learning_rate")]
        learning_rate: f64,
        #[serde(default = "default_l2")]
        l2: f64,
        #[serde(default = "default_scalar_features")]
        features: Vec<String>,
    },
    TokenLinear {
        #[serde(default = "default_epochs")]
        epochs: u32,
        #[serde(default = "default_learning_rate")]
        learning_rate: f64,
        #[serde(default = "default_l2")]
        l2: f64,
    },
    ExecuteAll,
    RejectAll,
    External {
        command: Vec<String>,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
}

impl ScorerSpec {
    /// Default spec for a kind named on the command line.
    pub fn by_kind(kind: &str) -> Option<ScorerSpec> {
        Some(match kind {
            "heuristic_combined" => ScorerSpec::HeuristicCombined {
                alpha: default_half(),
                beta: default_half(),
            },
            "keyword_heuristic" => ScorerSpec::KeywordHeuristic {
                lexicon: MarkerLexicon::default(),
            },
            "scalar_linear" => ScorerSpec::ScalarLinear {
                epochs: default_epochs(),
                learning_rate: default_learning_rate(),
                l2: default_l2(),
                features: default_scalar_features(),
            },
            "token_linear" => ScorerSpec::TokenLinear {
                epochs: default_epochs(),
                learning_rate: default_learning_rate(),
                l2: default_l2(),
            },
            "execute_all" => ScorerSpec::ExecuteAll,
            "reject_all" => ScorerSpec::RejectAll,
            _ => return None,
        })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ScorerSpec::HeuristicCombined { .. } => "heuristic_combined",
            ScorerSpec::KeywordHeuristic { .. } => "keyword_heuristic",
            ScorerSpec::ScalarLinear { .. } => "scalar_linear",
            ScorerSpec::TokenLinear { .. } => "token_linear",
            ScorerSpec::ExecuteAll => "execute_all",
            ScorerSpec::RejectAll => "reject_all",
            ScorerSpec::External { .. } => "external",
        }
    }

    /// Kind-specific hyperparameter validation.
    pub fn validate(&self) -> Result<(), ScoreError> {
        match self {
            ScorerSpec::HeuristicCombined { alpha, beta } => {
                if !alpha.is_finite() || !beta.is_finite() || *alpha < 0.0 || *beta < 0.0 {
                    return Err(ScoreError::InvalidSpec(
                        "alpha and beta must be non-negative".into(),
                    ));
                }
            }
            ScorerSpec::KeywordHeuristic { lexicon } => {
                lexicon.check().map_err(ScoreError::InvalidSpec)?;
            }
            ScorerSpec::ScalarLinear {
                epochs,
                learning_rate,
                l2,
                features,
            } => {
                if *epochs == 0 || *learning_rate <= 0.0 || *l2 < 0.0 {
                    return Err(ScoreError::InvalidSpec(
                        "epochs must be positive, learning_rate > 0, l2 >= 0".into(),
                    ));
                }
                if features.is_empty() {
                    return Err(ScoreError::InvalidSpec(
                        "feature list must be non-empty".into(),
                    ));
                }
            }
            ScorerSpec::TokenLinear {
                epochs,
                learning_rate,
                l2,
            } => {
                if *epochs == 0 || *learning_rate <= 0.0 || *l2 < 0.0 {
                    return Err(ScoreError::InvalidSpec(
                        "epochs must be positive, learning_rate > 0, l2 >= 0".into(),
                    ));
                }
            }
            ScorerSpec::ExecuteAll | ScorerSpec::RejectAll => {}
            ScorerSpec::External {
                command,
                timeout_ms,
            } => {
                if command.is_empty() {
                    return Err(ScoreError::InvalidSpec(
                        "external command must be non-empty".into(),
                    ));
                }
                if *timeout_ms == 0 {
                    return Err(ScoreError::InvalidSpec(
                        "timeout_ms must be positive".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// A logistic model over sparse feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LinearModel {
    fn predict(&self, features: &[(usize, f64)]) -> f64 {
        let z = self.bias
            + features
                .iter()
                .map(|&(index, value)| self.weights[index] * value)
                .sum::<f64>();
        sigmoid(z)
    }
}

/// Deterministic full-batch logistic gradient descent from zero
/// initialization. L2 applies to weights, not the bias.
fn train_logistic(
    rows: &[(Vec<(usize, f64)>, bool)],
    dim: usize,
    epochs: u32,
    learning_rate: f64,
    l2: f64,
) -> LinearModel {
    let mut model = LinearModel {
        weights: vec![0.0; dim],
        bias: 0.0,
    };
    let n = rows.len() as f64;
    for _ in 0..epochs {
        let mut weight_grad = vec![0.0; dim];
        let mut bias_grad = 0.0;
        for (features, label) in rows {
            let error = model.predict(features) - f64::from(u8::from(*label));
            for &(index, value) in features {
                weight_grad[index] += error * value;
            }
            bias_grad += error;
        }
        for (weight, grad) in model.weights.iter_mut().zip(&weight_grad) {
            *weight -= learning_rate * (grad / n + l2 * *weight);
        }
        model.bias -= learning_rate * bias_grad / n;
    }
    model
}

fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

fn token_counts(text: &str, vocabulary: &BTreeMap<String, usize>) -> Vec<(usize, f64)> {
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for token in tokenize(text) {
        if let Some(&index) = vocabulary.get(&token) {
            *counts.entry(index).or_insert(0.0) += 1.0;
        }
    }
    counts.into_iter().collect()
}

fn require_both_classes(rows: &[FeatureRow]) -> Result<(), ScoreError> {
    if rows.is_empty() {
        return Err(ScoreError::EmptyTraining);
    }
    let high = rows.iter().any(|r| r.label == RiskLabel::HighRisk);
    let low = rows.iter().any(|r| r.label == RiskLabel::LowRisk);
    if high && low {
        Ok(())
    } else {
        Err(ScoreError::DegenerateTraining)
    }
}

fn scalar_vector(row: &FeatureRow, features: &[String]) -> Result<Vec<(usize, f64)>, ScoreError> {
    features
        .iter()
        .enumerate()
        .map(|(index, name)| {
            scalar_feature(row, name)
                .map(|value| (index, value))
                .ok_or_else(|| ScoreError::UnknownFeature(name.clone()))
        })
        .collect()
}

/// A fitted scorer. Immutable and shareable; scoring is pure, except that
/// the external adapter serializes calls through its process handle.
#[derive(Debug)]
pub enum FittedScorer {
    ExecuteAll,
    RejectAll,
    HeuristicCombined {
        alpha: f64,
        beta: f64,
    },
    KeywordHeuristic {
        lexicon: MarkerLexicon,
    },
    ScalarLinear {
        features: Vec<String>,
        model: LinearModel,
    },
    TokenLinear {
        vocabulary: BTreeMap<String, usize>,
        model: LinearModel,
    },
    External {
        scorer: ExternalScorer,
    },
}

impl FittedScorer {
    /// Whether scores are a function of the numeric feature view, which is
    /// what the feature-space noise regimes perturb.
    pub fn consumes_numeric_features(&self) -> bool {
        matches!(
            self,
            FittedScorer::ExecuteAll
                | FittedScorer::RejectAll
                | FittedScorer::HeuristicCombined { .. }
                | FittedScorer::ScalarLinear { .. }
        )
    }

    /// External scoring is serialized through a process; score those rows
    /// sequentially so runs do not depend on scheduling.
    pub fn parallel_safe(&self) -> bool {
        !matches!(self, FittedScorer::External { .. })
    }

    /// Score one featurized row; always in `[0,1]` on success.
    pub fn score(&self, row: &FeatureRow) -> Result<f64, ScoreError> {
        match self {
            FittedScorer::ExecuteAll => Ok(0.0),
            FittedScorer::RejectAll => Ok(1.0),
            FittedScorer::HeuristicCombined { alpha, beta } => {
                Ok((alpha * row.world.state_risk + beta * row.params.param_risk).clamp(0.0, 1.0))
            }
            FittedScorer::KeywordHeuristic { lexicon } => {
                let hit = row
                    .params
                    .payload_tokens
                    .iter()
                    .any(|token| lexicon.bypass.iter().any(|b| token.contains(b.as_str())));
                Ok(if hit { 1.0 } else { 0.0 })
            }
            FittedScorer::ScalarLinear { features, model } => {
                Ok(model.predict(&scalar_vector(row, features)?))
            }
            FittedScorer::TokenLinear { vocabulary, model } => {
                Ok(model.predict(&token_counts(&row.observation, vocabulary)))
            }
            FittedScorer::External { scorer } => Ok(scorer.score_line(&row.observation)?),
        }
    }

    /// Score a batch, splitting successes from per-row failures (external
    /// protocol errors). Failed rows are reported, never silently defaulted.
    /// Rows are scored in parallel except through the external adapter,
    /// whose exchanges are ordered.
    pub fn score_rows(&self, rows: &[FeatureRow]) -> (Vec<ScoredRow>, Vec<ExcludedRow>) {
        use rayon::prelude::*;
        let results: Vec<Result<f64, ScoreError>> = if self.parallel_safe() {
            rows.par_iter().map(|row| self.score(row)).collect()
        } else {
            rows.iter().map(|row| self.score(row)).collect()
        };
        let mut scored = Vec::with_capacity(rows.len());
        let mut excluded = Vec::new();
        for (row, result) in rows.iter().zip(results) {
            match result {
                Ok(score) => scored.push(ScoredRow {
                    episode_id: row.episode_id.clone(),
                    group_id: row.group_id.clone(),
                    label: row.label,
                    score,
                    benchmark_source: row.benchmark_source.clone(),
                    attack_family: row.attack_family,
                    attack_profile: row.attack_profile,
                }),
                Err(error) => excluded.push(ExcludedRow {
                    episode_id: row.episode_id.clone(),
                    reason: error.to_string(),
                }),
            }
        }
        (scored, excluded)
    }
}

/// A row dropped from scoring, with the reason flagged for the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedRow {
    pub episode_id: String,
    pub reason: String,
}

/// Fit a scorer on training rows. Stateless kinds ignore the rows; trainable
/// kinds require both classes; `external` attaches the process.
pub fn train(spec: &ScorerSpec, rows: &[FeatureRow]) -> Result<FittedScorer, ScoreError> {
    spec.validate()?;
    match spec {
        ScorerSpec::ExecuteAll => Ok(FittedScorer::ExecuteAll),
        ScorerSpec::RejectAll => Ok(FittedScorer::RejectAll),
        ScorerSpec::HeuristicCombined { alpha, beta } => Ok(FittedScorer::HeuristicCombined {
            alpha: *alpha,
            beta: *beta,
        }),
        ScorerSpec::KeywordHeuristic { lexicon } => Ok(FittedScorer::KeywordHeuristic {
            lexicon: lexicon.clone(),
        }),
        ScorerSpec::ScalarLinear {
            epochs,
            learning_rate,
            l2,
            features,
        } => {
            require_both_classes(rows)?;
            let data: Vec<(Vec<(usize, f64)>, bool)> = rows
                .iter()
                .map(|row| {
                    scalar_vector(row, features).map(|v| (v, row.label == RiskLabel::HighRisk))
                })
                .collect::<Result<_, _>>()?;
            let model = train_logistic(&data, features.len(), *epochs, *learning_rate, *l2);
            Ok(FittedScorer::ScalarLinear {
                features: features.clone(),
                model,
            })
        }
        ScorerSpec::TokenLinear {
            epochs,
            learning_rate,
            l2,
        } => {
            require_both_classes(rows)?;
            // Vocabulary is built from training rows only.
            let mut vocabulary = BTreeMap::new();
            for row in rows {
                for token in tokenize(&row.observation) {
                    let next = vocabulary.len();
                    vocabulary.entry(token).or_insert(next);
                }
            }
            let data: Vec<(Vec<(usize, f64)>, bool)> = rows
                .iter()
                .map(|row| {
                    (
                        token_counts(&row.observation, &vocabulary),
                        row.label == RiskLabel::HighRisk,
                    )
                })
                .collect();
            let model = train_logistic(&data, vocabulary.len(), *epochs, *learning_rate, *l2);
            Ok(FittedScorer::TokenLinear { vocabulary, model })
        }
        ScorerSpec::External {
            command,
            timeout_ms,
        } => Ok(FittedScorer::External {
            scorer: ExternalScorer::spawn(command, *timeout_ms)?,
        }),
    }
}
