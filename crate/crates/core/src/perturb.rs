//! Inference-time feature perturbation under five noise regimes.
//!
//! Noise applies to the numeric feature view only, never to raw trajectories.
//! Integer-count slots are rounded and clamped at zero after perturbation;
//! density and risk slots are re-clipped to their valid ranges.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::RiskLabel;
use crate::features::{ActionParamFeatures, WorldModelState};
use crate::rng::{mix64, SplitRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseRegime {
    Gaussian,
    Uniform,
    TargetedMalicious,
    TargetedNormal,
    Shuffle,
}

impl NoiseRegime {
    pub const ALL: [NoiseRegime; 5] = [
        NoiseRegime::Gaussian,
        NoiseRegime::Uniform,
        NoiseRegime::TargetedMalicious,
        NoiseRegime::TargetedNormal,
        NoiseRegime::Shuffle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NoiseRegime::Gaussian => "gaussian",
            NoiseRegime::Uniform => "uniform",
            NoiseRegime::TargetedMalicious => "targeted_malicious",
            NoiseRegime::TargetedNormal => "targeted_normal",
            NoiseRegime::Shuffle => "shuffle",
        }
    }
}

/// One perturbation setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub regime: NoiseRegime,
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum PerturbError {
    #[error("sigma must be non-negative, got {0}")]
    NegativeSigma(f64),
}

/// Slot types of the numeric feature view, in fixed order.
#[derive(Clone, Copy, PartialEq, Eq)]
enum SlotKind {
    Count,
    Density,
    Unit,
}

const SLOT_KINDS: [SlotKind; 12] = [
    SlotKind::Count,   // triggered_count
    SlotKind::Count,   // probe_detect_count
    SlotKind::Count,   // high_mismatch_count
    SlotKind::Count,   // id_drift_count
    SlotKind::Count,   // warning_count
    SlotKind::Density, // anomaly_density
    SlotKind::Unit,    // state_risk
    SlotKind::Count,   // high_impact_count
    SlotKind::Count,   // bypass_count
    SlotKind::Count,   // safety_count
    SlotKind::Count,   // high_effect_markers
    SlotKind::Unit,    // param_risk
];

fn to_vector(world: &WorldModelState, params: &ActionParamFeatures) -> [f64; 12] {
    [
        f64::from(world.triggered_count),
        f64::from(world.probe_detect_count),
        f64::from(world.high_mismatch_count),
        f64::from(world.id_drift_count),
        f64::from(world.warning_count),
        world.anomaly_density,
        world.state_risk,
        f64::from(params.high_impact_count),
        f64::from(params.bypass_count),
        f64::from(params.safety_count),
        f64::from(params.high_effect_markers),
        params.param_risk,
    ]
}

fn coerce(kind: SlotKind, value: f64) -> f64 {
    match kind {
        SlotKind::Count => value.round().max(0.0),
        SlotKind::Density => value.max(0.0),
        SlotKind::Unit => value.clamp(0.0, 1.0),
    }
}

fn write_back(
    vector: [f64; 12],
    world: &WorldModelState,
    params: &ActionParamFeatures,
) -> (WorldModelState, ActionParamFeatures) {
    let count = |v: f64| v.min(f64::from(u32::MAX)) as u32;
    let world = WorldModelState {
        total_steps: world.total_steps,
        triggered_count: count(vector[0]),
        probe_detect_count: count(vector[1]),
        high_mismatch_count: count(vector[2]),
        id_drift_count: count(vector[3]),
        warning_count: count(vector[4]),
        anomaly_density: vector[5],
        repeated_consistency_anomaly: world.repeated_consistency_anomaly,
        strong_signal: world.strong_signal,
        state_risk: vector[6],
    };
    let params = ActionParamFeatures {
        tool_name: params.tool_name.clone(),
        payload_keys: params.payload_keys.clone(),
        payload_tokens: params.payload_tokens.clone(),
        high_impact_count: count(vector[7]),
        bypass_count: count(vector[8]),
        safety_count: count(vector[9]),
        high_effect_markers: count(vector[10]),
        param_risk: vector[11],
    };
    (world, params)
}

/// Stream keyed by the noise spec and the exact feature content, so a fixed
/// `(features, spec)` input always perturbs identically.
fn noise_stream(spec: &NoiseSpec, label: RiskLabel, vector: &[f64; 12]) -> SplitRng {
    let mut key = mix64(spec.seed ^ spec.sigma.to_bits());
    key = mix64(key ^ ((spec.regime as u64) << 8));
    key = mix64(key ^ u64::from(label.is_high_risk()));
    for v in vector {
        key = mix64(key ^ v.to_bits());
    }
    SplitRng::new(key)
}

/// Apply one noise regime to the numeric feature view of a row.
pub fn perturb_features(
    world: &WorldModelState,
    params: &ActionParamFeatures,
    label: RiskLabel,
    spec: &NoiseSpec,
) -> Result<(WorldModelState, ActionParamFeatures), PerturbError> {
    if spec.sigma < 0.0 {
        return Err(PerturbError::NegativeSigma(spec.sigma));
    }
    let targeted_skip = match spec.regime {
        NoiseRegime::TargetedMalicious => label == RiskLabel::LowRisk,
        NoiseRegime::TargetedNormal => label == RiskLabel::HighRisk,
        _ => false,
    };
    if spec.sigma == 0.0 || targeted_skip {
        return Ok((world.clone(), params.clone()));
    }

    let mut vector = to_vector(world, params);
    let mut rng = noise_stream(spec, label, &vector);
    match spec.regime {
        NoiseRegime::Gaussian | NoiseRegime::TargetedMalicious | NoiseRegime::TargetedNormal => {
            for (value, kind) in vector.iter_mut().zip(SLOT_KINDS) {
                *value = coerce(kind, *value + spec.sigma * rng.next_gaussian());
            }
        }
        NoiseRegime::Uniform => {
            for (value, kind) in vector.iter_mut().zip(SLOT_KINDS) {
                *value = coerce(kind, *value + spec.sigma * (2.0 * rng.next_f64() - 1.0));
            }
        }
        NoiseRegime::Shuffle => {
            let marked: Vec<usize> = (0..vector.len())
                .filter(|_| rng.chance(spec.sigma))
                .collect();
            let mut values: Vec<f64> = marked.iter().map(|&i| vector[i]).collect();
            rng.shuffle(&mut values);
            for (&slot, value) in marked.iter().zip(values) {
                vector[slot] = coerce(SLOT_KINDS[slot], value);
            }
        }
    }
    Ok(write_back(vector, world, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::{FinalAction, Parameters, Phase, ProbeResult, ToolFeedback, Turn};
    use crate::features::{
        compute_param_features, compute_world_state, FeatureConfig, MarkerLexicon,
    };

    fn sample_features() -> (WorldModelState, ActionParamFeatures) {
        let traj = vec![
            Turn {
                index: 0,
                tool_feedback: ToolFeedback {
                    phase: Phase::Normal,
                    mismatch_score: 0.6,
                    expected_object_id: "a".into(),
                    returned_object_id: "b".into(),
                    warning: Some("slow response".into()),
                },
                probe_result: ProbeResult { detected: true },
            },
            Turn {
                index: 1,
                tool_feedback: ToolFeedback {
                    phase: Phase::Normal,
                    mismatch_score: 0.1,
                    expected_object_id: "a".into(),
                    returned_object_id: "a".into(),
                    warning: None,
                },
                probe_result: ProbeResult { detected: false },
            },
        ];
        let cfg = FeatureConfig::default();
        let world = compute_world_state(&traj, None, &cfg).unwrap();
        let mut parameters = Parameters::new();
        parameters.insert("op", "export");
        parameters.insert("safe_mode", "on");
        let action = FinalAction {
            tool_name: "web_search".into(),
            parameters,
            expected_effect: "exports data".into(),
            trigger_spec: None,
        };
        let params = compute_param_features(&action, &MarkerLexicon::default());
        (world, params)
    }

    #[test]
    fn zero_sigma_is_identity_for_all_regimes() {
        let (world, params) = sample_features();
        for regime in NoiseRegime::ALL {
            let spec = NoiseSpec {
                regime,
                sigma: 0.0,
                seed: 9,
            };
            let (w, p) = perturb_features(&world, &params, RiskLabel::HighRisk, &spec).unwrap();
            assert_eq!(w, world);
            assert_eq!(p, params);
        }
    }

    #[test]
    fn targeted_regimes_skip_untargeted_rows() {
        let (world, params) = sample_features();
        let spec = NoiseSpec {
            regime: NoiseRegime::TargetedMalicious,
            sigma: 0.8,
            seed: 9,
        };
        let (w, p) = perturb_features(&world, &params, RiskLabel::LowRisk, &spec).unwrap();
        assert_eq!(w, world);
        assert_eq!(p, params);
        let spec = NoiseSpec {
            regime: NoiseRegime::TargetedNormal,
            sigma: 0.8,
            seed: 9,
        };
        let (w, _) = perturb_features(&world, &params, RiskLabel::HighRisk, &spec).unwrap();
        assert_eq!(w, world);
    }

    #[test]
    fn perturbation_is_deterministic() {
        let (world, params) = sample_features();
        for regime in NoiseRegime::ALL {
            let spec = NoiseSpec {
                regime,
                sigma: 0.5,
                seed: 123,
            };
            let a = perturb_features(&world, &params, RiskLabel::HighRisk, &spec).unwrap();
            let b = perturb_features(&world, &params, RiskLabel::HighRisk, &spec).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn counts_stay_integral_and_risks_stay_clipped() {
        let (world, params) = sample_features();
        for seed in 0..50 {
            let spec = NoiseSpec {
                regime: NoiseRegime::Gaussian,
                sigma: 2.0,
                seed,
            };
            let (w, p) = perturb_features(&world, &params, RiskLabel::HighRisk, &spec).unwrap();
            assert!((0.0..=1.0).contains(&w.state_risk));
            assert!((0.0..=1.0).contains(&p.param_risk));
            assert!(w.anomaly_density >= 0.0);
        }
    }

    #[test]
    fn full_shuffle_changes_the_vector() {
        let (world, params) = sample_features();
        let spec = NoiseSpec {
            regime: NoiseRegime::Shuffle,
            sigma: 1.0,
            seed: 4,
        };
        let (w, p) = perturb_features(&world, &params, RiskLabel::HighRisk, &spec).unwrap();
        assert!(w != world || p != params);
    }

    #[test]
    fn negative_sigma_is_rejected() {
        let (world, params) = sample_features();
        let spec = NoiseSpec {
            regime: NoiseRegime::Gaussian,
            sigma: -0.1,
            seed: 1,
        };
        assert!(perturb_features(&world, &params, RiskLabel::HighRisk, &spec).is_err());
    }
}
