//! Evaluation report structures and their JSON/CSV renderings.
//!
//! Rates live as exact counts; the percentage fields are rendered to two
//! decimals at report-assembly time.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::episode::RiskLabel;
use crate::metrics::{balanced_utility, guarded_joint_of, Decision, RateQuad};
use crate::scorers::{ExcludedRow, ScorerSpec};

pub fn round2(x: f64) -> f64 {
    let r = (x * 100.0).round() / 100.0;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Confusion rates as exact counts plus two-decimal percentage renderings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateView {
    pub malicious_total: u64,
    pub malicious_accepted: u64,
    pub benign_total: u64,
    pub benign_rejected: u64,
    pub amr: f64,
    pub bmr: f64,
    pub rnr: f64,
    pub acnr: f64,
}

impl RateView {
    pub fn from_rates(rates: &RateQuad) -> Self {
        RateView {
            malicious_total: rates.malicious_total,
            malicious_accepted: rates.malicious_accepted,
            benign_total: rates.benign_total,
            benign_rejected: rates.benign_rejected,
            amr: round2(rates.amr()),
            bmr: round2(rates.bmr()),
            rnr: round2(rates.rnr()),
            acnr: round2(rates.acnr()),
        }
    }

    /// Reconstruct the exact rate quad from the stored counts.
    pub fn rates(&self) -> RateQuad {
        RateQuad::from_counts(
            self.malicious_total,
            self.malicious_accepted,
            self.benign_total,
            self.benign_rejected,
        )
        .expect("report rate counts are well-formed")
    }
}

/// One fold's calibration and evaluation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub tau: f64,
    pub train_guarded_joint: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub test_rates: RateView,
    pub guarded_joint: f64,
}

/// One slice of a breakdown table. Rates are present only when the slice
/// contains both classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRow {
    pub value: String,
    pub n_malicious: u64,
    pub n_benign: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rates: Option<RateView>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub guarded_joint: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub balanced_utility: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Breakdowns {
    pub benchmark_source: Vec<BreakdownRow>,
    pub attack_family: Vec<BreakdownRow>,
    pub attack_profile: Vec<BreakdownRow>,
}

/// Guarded-joint scores recomputed per fold at one penalty weight, with
/// thresholds (and therefore decisions and rates) frozen from the original
/// calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoSweepColumn {
    pub rho: f64,
    pub per_fold: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub pooled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoSweepTable {
    pub scorer: String,
    pub columns: Vec<RhoSweepColumn>,
}

/// Full evaluation report for one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tool_version: String,
    pub scorer: ScorerSpec,
    pub folds: usize,
    pub rho: f64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    /// Convention for the fold std: population standard deviation.
    pub std_convention: String,
    pub per_fold: Vec<FoldReport>,
    pub pooled: RateView,
    pub pooled_guarded_joint: f64,
    pub guarded_joint_mean: f64,
    pub guarded_joint_std: f64,
    pub breakdowns: Breakdowns,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded_rows: Vec<ExcludedRow>,
    /// Penalty-weight sweep, embedded when one has been run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweeps: Option<RhoSweepTable>,
}

/// One test-row decision retained for pooling, breakdowns, and audits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionRow {
    pub episode_id: String,
    pub group_id: String,
    pub fold: usize,
    pub label: RiskLabel,
    pub score: f64,
    pub decision: Decision,
    pub benchmark_source: String,
    pub attack_family: Option<String>,
    pub attack_profile: Option<String>,
}

pub(crate) fn population_std(values: &[f64], mean: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let variance =
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
    variance.sqrt()
}

/// Assemble one breakdown dimension from pooled decisions.
pub(crate) fn breakdown_rows<F>(
    decisions: &[DecisionRow],
    rho: f64,
    with_bu: bool,
    key: F,
) -> Vec<BreakdownRow>
where
    F: Fn(&DecisionRow) -> String,
{
    let mut slices: std::collections::BTreeMap<String, Vec<&DecisionRow>> = Default::default();
    for row in decisions {
        slices.entry(key(row)).or_default().push(row);
    }
    slices
        .into_iter()
        .map(|(value, rows)| {
            let n_malicious = rows
                .iter()
                .filter(|r| r.label == RiskLabel::HighRisk)
                .count() as u64;
            let n_benign = rows.len() as u64 - n_malicious;
            let labeled: Vec<(RiskLabel, Decision)> =
                rows.iter().map(|r| (r.label, r.decision)).collect();
            let rates = crate::metrics::confusion_rates(&labeled).ok();
            let guarded = rates.as_ref().map(|r| round2(guarded_joint_of(r, rho)));
            let balanced = if with_bu {
                rates
                    .as_ref()
                    .map(|r| round2(balanced_utility(r.amr(), r.rnr())))
            } else {
                None
            };
            BreakdownRow {
                value,
                n_malicious,
                n_benign,
                rates: rates.as_ref().map(RateView::from_rates),
                guarded_joint: guarded,
                balanced_utility: balanced,
            }
        })
        .collect()
}

// --- file writers ---------------------------------------------------------

fn csv_cell(value: &str) -> String {
    if value.contains([',', '"', '\n']) {
        format!("\"{}\"", value.replace('"', "\"\""))
    } else {
        value.to_owned()
    }
}

fn write_lines(path: &Path, lines: &[String]) -> std::io::Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    for line in lines {
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serialization cannot fail");
    std::fs::write(path, text + "\n")
}

fn opt(v: &Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_default()
}

pub fn write_breakdown_csv(
    path: &Path,
    rows: &[BreakdownRow],
    with_bu: bool,
) -> std::io::Result<()> {
    let mut lines = Vec::with_capacity(rows.len() + 1);
    let mut header = "value,n_malicious,n_benign,amr,bmr,rnr,acnr,guarded_joint".to_owned();
    if with_bu {
        header.push_str(",balanced_utility");
    }
    lines.push(header);
    for row in rows {
        let rates = row.rates.as_ref();
        let cell =
            |f: fn(&RateView) -> f64| rates.map(|r| format!("{:.2}", f(r))).unwrap_or_default();
        let mut line = format!(
            "{},{},{},{},{},{},{},{}",
            csv_cell(&row.value),
            row.n_malicious,
            row.n_benign,
            cell(|r| r.amr),
            cell(|r| r.bmr),
            cell(|r| r.rnr),
            cell(|r| r.acnr),
            opt(&row.guarded_joint),
        );
        if with_bu {
            line.push(',');
            line.push_str(&opt(&row.balanced_utility));
        }
        lines.push(line);
    }
    write_lines(path, &lines)
}

pub fn write_per_fold_csv(path: &Path, report: &EvalReport) -> std::io::Result<()> {
    let mut lines = vec![
        "fold,tau,train_guarded_joint,n_train,n_test,amr,bmr,rnr,acnr,guarded_joint".to_owned(),
    ];
    for fold in &report.per_fold {
        lines.push(format!(
            "{},{:.6},{:.2},{},{},{:.2},{:.2},{:.2},{:.2},{:.2}",
            fold.fold,
            fold.tau,
            fold.train_guarded_joint,
            fold.n_train,
            fold.n_test,
            fold.test_rates.amr,
            fold.test_rates.bmr,
            fold.test_rates.rnr,
            fold.test_rates.acnr,
            fold.guarded_joint,
        ));
    }
    write_lines(path, &lines)
}

pub fn write_decisions_csv(path: &Path, decisions: &[DecisionRow]) -> std::io::Result<()> {
    let mut lines = vec!["episode_id,group_id,fold,label,score,decision,benchmark_source,attack_family,attack_profile".to_owned()];
    for row in decisions {
        lines.push(format!(
            "{},{},{},{},{:.6},{},{},{},{}",
            csv_cell(&row.episode_id),
            csv_cell(&row.group_id),
            row.fold,
            row.label.as_str(),
            row.score,
            match row.decision {
                Decision::Execute => "execute",
                Decision::Reject => "reject",
            },
            csv_cell(&row.benchmark_source),
            row.attack_family.as_deref().unwrap_or(""),
            row.attack_profile.as_deref().unwrap_or(""),
        ));
    }
    write_lines(path, &lines)
}

/// Write the report JSON plus flat CSV tables next to it.
pub fn write_report_artifacts(
    dir: &Path,
    report: &EvalReport,
    decisions: &[DecisionRow],
) -> std::io::Result<()> {
    write_json(&dir.join("report.json"), report)?;
    write_per_fold_csv(&dir.join("per_fold.csv"), report)?;
    write_breakdown_csv(
        &dir.join("breakdown_benchmark_source.csv"),
        &report.breakdowns.benchmark_source,
        false,
    )?;
    write_breakdown_csv(
        &dir.join("breakdown_attack_family.csv"),
        &report.breakdowns.attack_family,
        false,
    )?;
    write_breakdown_csv(
        &dir.join("breakdown_attack_profile.csv"),
        &report.breakdowns.attack_profile,
        true,
    )?;
    write_decisions_csv(&dir.join("decisions.csv"), decisions)?;
    Ok(())
}
