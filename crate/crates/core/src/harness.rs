//! Grouped K-fold evaluation with train-fold-only threshold calibration.
//!
//! No group ever spans folds, thresholds are calibrated on training rows
//! only, and the pooled rates are recomputable from the retained per-row
//! decisions. Policy scorers (`execute_all`, `reject_all`) carry a fixed
//! decision threshold of 0.5 instead of data-driven calibration, so they
//! evaluate as the blanket-execute and blanket-reject baselines.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::episode::{validate_episode, Episode, RiskLabel};
use crate::features::{featurize_all, FeatureError, FeatureRow};
use crate::metrics::{confusion_rates, guarded_joint_of, Decision, MetricError, RateQuad};
use crate::report::{
    breakdown_rows, population_std, round2, Breakdowns, DecisionRow, EvalReport, FoldReport,
    RateView,
};
use crate::rng::stream;
use crate::scorers::{train, ExcludedRow, FittedScorer, ScoreError, ScoredRow, ScorerSpec};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("need at least {folds} groups for {folds}-fold splitting, got {groups}")]
    TooFewGroups { groups: usize, folds: usize },
    #[error("training rows contain a single class")]
    SingleClassTrain,
    #[error("test rows contain a single class")]
    SingleClassTest,
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<HarnessError>,
    },
    #[error("episode {episode_id} fails validation: {details}")]
    InvalidEpisode { episode_id: String, details: String },
    #[error("episodes contain a single class")]
    SingleClassCorpus,
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("scorer kind `{kind}` consumes raw text and is incompatible with feature-space noise")]
    IncompatibleScorer { kind: String },
    #[error("config: {0}")]
    Config(String),
}

fn at_fold(fold: usize) -> impl FnOnce(HarnessError) -> HarnessError {
    move |source| HarnessError::Fold {
        fold,
        source: Box::new(source),
    }
}

/// Assignment of every comparison group to exactly one fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub folds: usize,
    pub seed: u64,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn fold_of(&self, group_id: &str) -> usize {
        self.assignment[group_id]
    }
}

/// Deterministic grouped K-fold split: unique group ids are shuffled with
/// the seeded stream and dealt round-robin, so fold sizes differ by at most
/// one group.
pub fn grouped_kfold<'a, I>(group_ids: I, folds: usize, seed: u64) -> Result<FoldPlan, HarnessError>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut groups: Vec<&str> = group_ids.into_iter().collect();
    groups.sort_unstable();
    groups.dedup();
    if groups.len() < folds {
        return Err(HarnessError::TooFewGroups {
            groups: groups.len(),
            folds,
        });
    }
    let mut rng = stream(seed, &["grouped_kfold"]);
    rng.shuffle(&mut groups);
    let assignment = groups
        .into_iter()
        .enumerate()
        .map(|(position, group)| (group.to_owned(), position % folds))
        .collect();
    Ok(FoldPlan {
        folds,
        seed,
        assignment,
    })
}

/// Threshold calibration on training scores: candidates are the midpoints of
/// adjacent distinct sorted scores plus `{0, 1}`; the result is the smallest
/// candidate maximizing the training guarded-joint score.
pub fn calibrate_threshold(train_rows: &[ScoredRow], rho: f64) -> Result<(f64, f64), HarnessError> {
    let has_high = train_rows.iter().any(|r| r.label == RiskLabel::HighRisk);
    let has_low = train_rows.iter().any(|r| r.label == RiskLabel::LowRisk);
    if !(has_high && has_low) {
        return Err(HarnessError::SingleClassTrain);
    }

    let mut scores: Vec<f64> = train_rows.iter().map(|r| r.score).collect();
    scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
    scores.dedup();
    let mut candidates = Vec::with_capacity(scores.len() + 1);
    candidates.push(0.0);
    for pair in scores.windows(2) {
        candidates.push((pair[0] + pair[1]) / 2.0);
    }
    candidates.push(1.0);
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();

    let mut best_tau = candidates[0];
    let mut best_score = f64::NEG_INFINITY;
    for tau in candidates {
        let decisions: Vec<(RiskLabel, Decision)> = train_rows
            .iter()
            .map(|row| (row.label, decide(row.score, tau)))
            .collect();
        let rates = confusion_rates(&decisions)?;
        let joint = guarded_joint_of(&rates, rho);
        if joint > best_score {
            best_score = joint;
            best_tau = tau;
        }
    }
    Ok((best_tau, best_score))
}

/// Decision rule: reject iff the risk score reaches the threshold.
pub fn decide(score: f64, tau: f64) -> Decision {
    if score >= tau {
        Decision::Reject
    } else {
        Decision::Execute
    }
}

/// One evaluated test fold.
#[derive(Debug, Clone)]
pub struct FoldEvaluation {
    pub rates: RateQuad,
    pub guarded_joint: f64,
    pub decisions: Vec<(ScoredRow, Decision)>,
}

/// Apply a frozen threshold to a test fold.
pub fn evaluate_fold(
    test_rows: &[ScoredRow],
    tau: f64,
    rho: f64,
) -> Result<FoldEvaluation, HarnessError> {
    let decisions: Vec<(ScoredRow, Decision)> = test_rows
        .iter()
        .map(|row| (row.clone(), decide(row.score, tau)))
        .collect();
    let labeled: Vec<(RiskLabel, Decision)> =
        decisions.iter().map(|(r, d)| (r.label, *d)).collect();
    let rates = confusion_rates(&labeled).map_err(|_| HarnessError::SingleClassTest)?;
    Ok(FoldEvaluation {
        rates,
        guarded_joint: guarded_joint_of(&rates, rho),
        decisions,
    })
}

/// Per-fold state kept alive after an experiment for follow-up studies.
#[derive(Debug)]
pub struct FoldState {
    pub fold: usize,
    pub scorer: FittedScorer,
    pub tau: f64,
    pub test_indices: Vec<usize>,
}

/// A completed experiment: the serializable report plus the in-memory state
/// (featurized rows, fold plan, fitted scorers) that sweeps and robustness
/// studies reuse.
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub report: EvalReport,
    pub decisions: Vec<DecisionRow>,
    pub rows: Vec<FeatureRow>,
    pub plan: FoldPlan,
    pub fold_states: Vec<FoldState>,
}

/// Policy scorers carry a fixed decision threshold instead of data-driven
/// calibration.
fn fixed_policy_tau(spec: &ScorerSpec) -> Option<f64> {
    match spec {
        ScorerSpec::ExecuteAll | ScorerSpec::RejectAll => Some(0.5),
        _ => None,
    }
}

fn decision_row(row: &ScoredRow, fold: usize, decision: Decision) -> DecisionRow {
    DecisionRow {
        episode_id: row.episode_id.clone(),
        group_id: row.group_id.clone(),
        fold,
        label: row.label,
        score: row.score,
        decision,
        benchmark_source: row.benchmark_source.clone(),
        attack_family: row.attack_family.map(|f| f.as_str().to_owned()),
        attack_profile: row.attack_profile.map(|p| p.as_str().to_owned()),
    }
}

pub(crate) fn assemble_breakdowns(decisions: &[DecisionRow], rho: f64) -> Breakdowns {
    let none = || "none".to_owned();
    Breakdowns {
        benchmark_source: breakdown_rows(decisions, rho, false, |r| r.benchmark_source.clone()),
        attack_family: breakdown_rows(decisions, rho, false, |r| {
            r.attack_family.clone().unwrap_or_else(none)
        }),
        attack_profile: breakdown_rows(decisions, rho, true, |r| {
            r.attack_profile.clone().unwrap_or_else(none)
        }),
    }
}

/// Run the full grouped-fold experiment: per fold, fit the scorer on the
/// training rows, calibrate the threshold there, then evaluate the test fold
/// with the frozen threshold.
pub fn run_experiment(
    episodes: &[Episode],
    spec: &ScorerSpec,
    config: &ExperimentConfig,
) -> Result<ExperimentOutcome, HarnessError> {
    config
        .validate()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    spec.validate()?;
    let mut seen_ids = std::collections::BTreeSet::new();
    for episode in episodes {
        let violations = validate_episode(episode);
        if !violations.is_empty() {
            return Err(HarnessError::InvalidEpisode {
                episode_id: episode.episode_id.clone(),
                details: violations
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join("; "),
            });
        }
        if !seen_ids.insert(&episode.episode_id) {
            return Err(HarnessError::InvalidEpisode {
                episode_id: episode.episode_id.clone(),
                details: "duplicate episode_id".into(),
            });
        }
    }
    let has_high = episodes.iter().any(|e| e.label == RiskLabel::HighRisk);
    let has_low = episodes.iter().any(|e| e.label == RiskLabel::LowRisk);
    if !(has_high && has_low) {
        return Err(HarnessError::SingleClassCorpus);
    }

    let mut rows = featurize_all(episodes, config.budget, &config.feature)?;
    // Canonical row order makes the whole run invariant to input permutation
    // (training-row order would otherwise perturb gradient summation).
    rows.sort_by(|a, b| a.episode_id.cmp(&b.episode_id));
    let plan = grouped_kfold(
        rows.iter().map(|r| r.group_id.as_str()),
        config.folds,
        config.seed,
    )?;

    struct FoldOutput {
        report: FoldReport,
        state: FoldState,
        decisions: Vec<DecisionRow>,
        excluded: Vec<ExcludedRow>,
        guarded_joint: f64,
    }

    // Folds are independent: each owns its fitted scorer, and the assembly
    // below is by fold index, so execution order never shows in the output.
    let fold_results: Vec<Result<FoldOutput, HarnessError>> = (0..config.folds)
        .into_par_iter()
        .map(|fold| {
            let train_rows: Vec<FeatureRow> = rows
                .iter()
                .filter(|r| plan.fold_of(&r.group_id) != fold)
                .cloned()
                .collect();
            let test_indices: Vec<usize> = rows
                .iter()
                .enumerate()
                .filter(|(_, r)| plan.fold_of(&r.group_id) == fold)
                .map(|(i, _)| i)
                .collect();
            let test_rows: Vec<FeatureRow> =
                test_indices.iter().map(|&i| rows[i].clone()).collect();

            let scorer = train(spec, &train_rows).map_err(|e| at_fold(fold)(e.into()))?;
            let (train_scored, mut excluded) = scorer.score_rows(&train_rows);

            let (tau, train_joint) = match fixed_policy_tau(spec) {
                Some(tau) => {
                    let decisions: Vec<(RiskLabel, Decision)> = train_scored
                        .iter()
                        .map(|r| (r.label, decide(r.score, tau)))
                        .collect();
                    let joint = confusion_rates(&decisions)
                        .map(|rates| guarded_joint_of(&rates, config.rho))
                        .unwrap_or(0.0);
                    (tau, joint)
                }
                None => calibrate_threshold(&train_scored, config.rho).map_err(at_fold(fold))?,
            };

            let (test_scored, test_excluded) = scorer.score_rows(&test_rows);
            excluded.extend(test_excluded);
            let evaluation = evaluate_fold(&test_scored, tau, config.rho).map_err(at_fold(fold))?;

            let decisions = evaluation
                .decisions
                .iter()
                .map(|(row, decision)| decision_row(row, fold, *decision))
                .collect();
            Ok(FoldOutput {
                report: FoldReport {
                    fold,
                    tau,
                    train_guarded_joint: round2(train_joint),
                    n_train: train_rows.len(),
                    n_test: test_rows.len(),
                    test_rates: RateView::from_rates(&evaluation.rates),
                    guarded_joint: round2(evaluation.guarded_joint),
                },
                state: FoldState {
                    fold,
                    scorer,
                    tau,
                    test_indices,
                },
                decisions,
                excluded,
                guarded_joint: evaluation.guarded_joint,
            })
        })
        .collect();

    let mut per_fold = Vec::with_capacity(config.folds);
    let mut fold_states = Vec::with_capacity(config.folds);
    let mut all_decisions: Vec<DecisionRow> = Vec::with_capacity(rows.len());
    let mut excluded: Vec<ExcludedRow> = Vec::new();
    let mut fold_joints = Vec::with_capacity(config.folds);
    for result in fold_results {
        let output = result?;
        per_fold.push(output.report);
        fold_states.push(output.state);
        all_decisions.extend(output.decisions);
        excluded.extend(output.excluded);
        fold_joints.push(output.guarded_joint);
    }

    let labeled: Vec<(RiskLabel, Decision)> = all_decisions
        .iter()
        .map(|r| (r.label, r.decision))
        .collect();
    let pooled = confusion_rates(&labeled)?;
    let pooled_joint = guarded_joint_of(&pooled, config.rho);
    let mean = fold_joints.iter().sum::<f64>() / fold_joints.len() as f64;
    let std = population_std(&fold_joints, mean);
    let breakdowns = assemble_breakdowns(&all_decisions, config.rho);

    let report = EvalReport {
        tool_version: crate::TOOL_VERSION.to_owned(),
        scorer: spec.clone(),
        folds: config.folds,
        rho: config.rho,
        seed: config.seed,
        budget: config.budget,
        std_convention: "population".to_owned(),
        per_fold,
        pooled: RateView::from_rates(&pooled),
        pooled_guarded_joint: round2(pooled_joint),
        guarded_joint_mean: round2(mean),
        guarded_joint_std: round2(std),
        breakdowns,
        excluded_rows: excluded,
        sweeps: None,
    };

    Ok(ExperimentOutcome {
        report,
        decisions: all_decisions,
        rows,
        plan,
        fold_states,
    })
}
