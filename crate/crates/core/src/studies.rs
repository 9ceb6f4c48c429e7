//! Follow-up studies on a completed experiment: penalty-weight sweeps,
//! exploration-budget ablation, feature-noise robustness, and transfer
//! evaluation against an external episode set.

use std::path::Path;

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::episode::{Episode, RiskLabel};
use crate::harness::{decide, run_experiment, ExperimentOutcome, HarnessError};
use crate::metrics::{
    confusion_rates, fpr_threshold, guarded_joint_of, joint_per_turn, recall_at_fpr, Decision,
    MetricError,
};
use crate::perturb::{perturb_features, NoiseSpec};
use crate::report::{population_std, round2, EvalReport, RhoSweepColumn, RhoSweepTable};
use crate::scorers::{ScoredRow, ScorerSpec};

// --- penalty-weight sweep ---------------------------------------------------

/// Recompute the guarded-joint score per fold for each penalty weight.
/// Nothing is re-calibrated: the frozen per-fold rates are re-scored.
pub fn rho_sweep(report: &EvalReport, rhos: &[f64]) -> RhoSweepTable {
    let columns = rhos
        .iter()
        .map(|&rho| {
            let per_fold: Vec<f64> = report
                .per_fold
                .iter()
                .map(|fold| round2(guarded_joint_of(&fold.test_rates.rates(), rho)))
                .collect();
            let mean = per_fold.iter().sum::<f64>() / per_fold.len() as f64;
            RhoSweepColumn {
                rho,
                mean: round2(mean),
                std: round2(population_std(&per_fold, mean)),
                pooled: round2(guarded_joint_of(&report.pooled.rates(), rho)),
                per_fold,
            }
        })
        .collect();
    RhoSweepTable {
        scorer: report.scorer.kind_name().to_owned(),
        columns,
    }
}

pub fn write_rho_sweep_csv(path: &Path, table: &RhoSweepTable) -> std::io::Result<()> {
    let mut lines = Vec::new();
    let header: Vec<String> = std::iter::once("row".to_owned())
        .chain(table.columns.iter().map(|c| format!("rho_{}", c.rho)))
        .collect();
    lines.push(header.join(","));
    let folds = table.columns.first().map_or(0, |c| c.per_fold.len());
    for fold in 0..folds {
        let mut cells = vec![format!("fold_{fold}")];
        cells.extend(
            table
                .columns
                .iter()
                .map(|c| format!("{:.2}", c.per_fold[fold])),
        );
        lines.push(cells.join(","));
    }
    for (name, pick) in [
        (
            "mean",
            &(|c: &RhoSweepColumn| c.mean) as &dyn Fn(&RhoSweepColumn) -> f64,
        ),
        ("std", &|c| c.std),
        ("pooled", &|c| c.pooled),
    ] {
        let mut cells = vec![name.to_owned()];
        cells.extend(table.columns.iter().map(|c| format!("{:.2}", pick(c))));
        lines.push(cells.join(","));
    }
    std::fs::write(path, lines.join("\n") + "\n")
}

// --- exploration-budget ablation ---------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetRow {
    pub budget: usize,
    pub bmr: f64,
    pub rnr: f64,
    /// Desired-outcome average `(BMR + AcNR) / 2` of the pooled rates.
    pub joint: f64,
    pub guarded_joint: f64,
    pub guarded_joint_mean: f64,
    pub guarded_joint_std: f64,
    pub joint_per_turn: f64,
}

#[derive(Debug, Serialize)]
pub struct BudgetAblation {
    pub rows: Vec<BudgetRow>,
    pub reports: Vec<EvalReport>,
}

/// Re-run the full experiment at each exploration budget, truncating every
/// trajectory to its first `k` turns before featurization.
pub fn budget_ablation(
    episodes: &[Episode],
    spec: &ScorerSpec,
    config: &ExperimentConfig,
    budgets: &[usize],
) -> Result<BudgetAblation, HarnessError> {
    let mut rows = Vec::with_capacity(budgets.len());
    let mut reports = Vec::with_capacity(budgets.len());
    for &budget in budgets {
        let budget_config = ExperimentConfig {
            budget: Some(budget),
            ..config.clone()
        };
        let outcome = run_experiment(episodes, spec, &budget_config)?;
        let pooled = outcome.report.pooled.rates();
        // Round first so the reported joint-per-turn column divides the
        // reported joint column exactly.
        let joint = round2((pooled.bmr() + pooled.acnr()) / 2.0);
        rows.push(BudgetRow {
            budget,
            bmr: round2(pooled.bmr()),
            rnr: round2(pooled.rnr()),
            joint,
            guarded_joint: outcome.report.pooled_guarded_joint,
            guarded_joint_mean: outcome.report.guarded_joint_mean,
            guarded_joint_std: outcome.report.guarded_joint_std,
            joint_per_turn: round2(joint_per_turn(joint, budget as u32)),
        });
        reports.push(outcome.report);
    }
    Ok(BudgetAblation { rows, reports })
}

pub fn write_budget_csv(path: &Path, ablation: &BudgetAblation) -> std::io::Result<()> {
    let mut lines = vec![
        "budget,bmr,rnr,joint,guarded_joint,guarded_joint_mean,guarded_joint_std,joint_per_turn"
            .to_owned(),
    ];
    for row in &ablation.rows {
        lines.push(format!(
            "{},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2}",
            row.budget,
            row.bmr,
            row.rnr,
            row.joint,
            row.guarded_joint,
            row.guarded_joint_mean,
            row.guarded_joint_std,
            row.joint_per_turn,
        ));
    }
    std::fs::write(path, lines.join("\n") + "\n")
}

// --- feature-noise robustness -------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessRow {
    pub regime: String,
    pub sigma: f64,
    pub guarded_joint: f64,
    /// Change against the unperturbed pooled guarded-joint score.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessTable {
    pub baseline_guarded_joint: f64,
    pub rows: Vec<RobustnessRow>,
}

/// Perturb test-fold features under each noise spec and re-score with the
/// already-fitted scorers and frozen thresholds. Training rows are never
/// touched. Scorer kinds that consume raw text instead of the numeric
/// feature view are rejected.
pub fn robustness_run(
    outcome: &ExperimentOutcome,
    noise: &[NoiseSpec],
    rho: f64,
) -> Result<RobustnessTable, HarnessError> {
    for state in &outcome.fold_states {
        if !state.scorer.consumes_numeric_features() {
            return Err(HarnessError::IncompatibleScorer {
                kind: outcome.report.scorer.kind_name().to_owned(),
            });
        }
    }
    let baseline = outcome.report.pooled_guarded_joint;
    let mut rows = Vec::with_capacity(noise.len());
    for spec in noise {
        let mut decisions: Vec<(RiskLabel, Decision)> = Vec::with_capacity(outcome.rows.len());
        for state in &outcome.fold_states {
            for &index in &state.test_indices {
                let row = &outcome.rows[index];
                let (world, params) = perturb_features(&row.world, &row.params, row.label, spec)
                    .map_err(|e| HarnessError::Config(e.to_string()))?;
                let mut perturbed = row.clone();
                perturbed.world = world;
                perturbed.params = params;
                let score = state.scorer.score(&perturbed)?;
                decisions.push((row.label, decide(score, state.tau)));
            }
        }
        let rates = confusion_rates(&decisions)?;
        let guarded = round2(guarded_joint_of(&rates, rho));
        rows.push(RobustnessRow {
            regime: spec.regime.as_str().to_owned(),
            sigma: spec.sigma,
            guarded_joint: guarded,
            delta: round2(guarded - baseline),
        });
    }
    Ok(RobustnessTable {
        baseline_guarded_joint: baseline,
        rows,
    })
}

pub fn write_robustness_csv(path: &Path, table: &RobustnessTable) -> std::io::Result<()> {
    let mut lines = vec!["regime,sigma,guarded_joint,delta".to_owned()];
    for row in &table.rows {
        lines.push(format!(
            "{},{},{:.2},{:.2}",
            row.regime, row.sigma, row.guarded_joint, row.delta
        ));
    }
    std::fs::write(path, lines.join("\n") + "\n")
}

// --- transfer evaluation --------------------------------------------------------

/// How thresholds are chosen when scoring an external set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferCalibration {
    /// Freeze the threshold calibrated on the in-domain rows.
    FrozenInDomain,
    /// Recalibrate on the external rows themselves.
    Recalibrated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferReport {
    pub calibration: TransferCalibration,
    pub tau: f64,
    pub amr: f64,
    pub rnr: f64,
    pub guarded_joint: f64,
}

/// Evaluate scored external rows under either calibration mode; the report
/// is labeled with the mode so the two protocols are never conflated.
pub fn evaluate_transfer(
    in_domain: &[ScoredRow],
    external: &[ScoredRow],
    calibration: TransferCalibration,
    rho: f64,
) -> Result<TransferReport, HarnessError> {
    let (tau, _) = match calibration {
        TransferCalibration::FrozenInDomain => crate::harness::calibrate_threshold(in_domain, rho)?,
        TransferCalibration::Recalibrated => crate::harness::calibrate_threshold(external, rho)?,
    };
    let decisions: Vec<(RiskLabel, Decision)> = external
        .iter()
        .map(|row| (row.label, decide(row.score, tau)))
        .collect();
    let rates = confusion_rates(&decisions)?;
    Ok(TransferReport {
        calibration,
        tau,
        amr: round2(rates.amr()),
        rnr: round2(rates.rnr()),
        guarded_joint: round2(guarded_joint_of(&rates, rho)),
    })
}

/// Harmful recall of an external, harmful-only score set at fixed in-domain
/// false-positive budgets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecallTransferRow {
    pub budget_pct: f64,
    pub threshold: f64,
    pub recall_pct: f64,
}

pub fn recall_transfer(
    in_domain: &[(f64, RiskLabel)],
    external_scores: &[f64],
    budgets: &[f64],
) -> Result<Vec<RecallTransferRow>, MetricError> {
    budgets
        .iter()
        .map(|&budget_pct| {
            Ok(RecallTransferRow {
                budget_pct,
                threshold: fpr_threshold(in_domain, budget_pct)?,
                recall_pct: round2(recall_at_fpr(in_domain, external_scores, budget_pct)?),
            })
        })
        .collect()
}
