//! Subcommand implementations. Every command records a manifest with the
//! resolved config, seeds, inputs, and outputs next to its artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::json;

use trustbench_core::codec::{read_episodes, write_episodes};
use trustbench_core::config::{load_json, ExperimentConfig};
use trustbench_core::episode::{validate_episode, Episode};
use trustbench_core::features::{featurize_all, FeatureConfig, FeatureRow};
use trustbench_core::generator::{generate as run_generation, GenerationConfig};
use trustbench_core::harness::{run_experiment, ExperimentOutcome};
use trustbench_core::perturb::{NoiseRegime, NoiseSpec};
use trustbench_core::report::{write_json, write_report_artifacts, BreakdownRow, EvalReport};
use trustbench_core::scorers::ScorerSpec;
use trustbench_core::studies::{
    budget_ablation, rho_sweep, robustness_run, write_budget_csv, write_rho_sweep_csv,
    write_robustness_csv,
};
use trustbench_core::TOOL_VERSION;

use crate::EvalArgs;

fn ensure_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating output dir {}", out.display()))
}

fn write_manifest(
    out: &Path,
    command: &str,
    config: serde_json::Value,
    inputs: &[&Path],
    outputs: &[&str],
) -> Result<()> {
    let manifest = json!({
        "tool_version": TOOL_VERSION,
        "command": command,
        "config": config,
        "inputs": inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "outputs": outputs,
    });
    write_json(&out.join("manifest.json"), &manifest).context("writing manifest.json")?;
    Ok(())
}

fn load_episodes(path: &Path) -> Result<Vec<Episode>> {
    let episodes = read_episodes(path).with_context(|| format!("reading {}", path.display()))?;
    if episodes.is_empty() {
        bail!("{} contains no episodes", path.display());
    }
    Ok(episodes)
}

/// Validate a corpus, reporting every violating episode.
fn validate_corpus(episodes: &[Episode]) -> Result<()> {
    let mut report = String::new();
    let mut bad = 0usize;
    for episode in episodes {
        let violations = validate_episode(episode);
        if !violations.is_empty() {
            bad += 1;
            let joined: Vec<String> = violations.iter().map(ToString::to_string).collect();
            let _ = writeln!(report, "  {}: {}", episode.episode_id, joined.join("; "));
        }
    }
    if bad > 0 {
        bail!("{bad} episode(s) failed validation:\n{report}");
    }
    Ok(())
}

pub fn generate(
    out: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
    pairs: Option<u32>,
) -> Result<()> {
    let mut config: GenerationConfig = match config {
        Some(path) => load_json(path)?,
        None => GenerationConfig::default(),
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(pairs) = pairs {
        config.pair_count = pairs;
    }
    ensure_out(out)?;
    let run = run_generation(&config)?;
    write_episodes(&out.join("episodes.jsonl"), &run.episodes)?;
    write_json(&out.join("generation_manifest.json"), &run.manifest)?;
    write_manifest(
        out,
        "generate",
        serde_json::to_value(&config)?,
        &[],
        &["episodes.jsonl", "generation_manifest.json"],
    )?;
    println!(
        "generated {} episodes ({} pairs) into {}",
        run.episodes.len(),
        config.pair_count,
        out.display()
    );
    Ok(())
}

fn feature_rows(
    episodes: &[Episode],
    budget: Option<usize>,
    cfg: &FeatureConfig,
) -> Result<Vec<FeatureRow>> {
    validate_corpus(episodes)?;
    Ok(featurize_all(episodes, budget, cfg)?)
}

pub fn featurize(
    out: &Path,
    episodes_path: &Path,
    config: Option<&Path>,
    budget: Option<usize>,
) -> Result<()> {
    let cfg: FeatureConfig = match config {
        Some(path) => load_json(path)?,
        None => FeatureConfig::default(),
    };
    cfg.lexicon
        .check()
        .map_err(|m| anyhow::anyhow!("lexicon: {m}"))?;
    let episodes = load_episodes(episodes_path)?;
    let rows = feature_rows(&episodes, budget, &cfg)?;
    ensure_out(out)?;

    // Observations keep their canonical serialized form by splicing the
    // already-serialized text into the JSONL line.
    let mut observations = String::new();
    for row in &rows {
        let id = serde_json::to_string(&row.episode_id)?;
        let _ = writeln!(
            observations,
            "{{\"episode_id\":{id},\"observation\":{}}}",
            row.observation
        );
    }
    std::fs::write(out.join("observations.jsonl"), observations)?;

    let mut sidecar = String::from(
        "episode_id,group_id,label,benchmark_source,attack_family,attack_profile,total_steps,\
         triggered_count,probe_detect_count,high_mismatch_count,id_drift_count,warning_count,\
         anomaly_density,repeated_consistency_anomaly,strong_signal,state_risk,high_impact_count,\
         bypass_count,safety_count,high_effect_markers,param_risk\n",
    );
    for row in &rows {
        let w = &row.world;
        let p = &row.params;
        let _ = writeln!(
            sidecar,
            "{},{},{},{},{},{},{},{},{},{},{},{},{:.6},{},{},{:.6},{},{},{},{},{:.6}",
            row.episode_id,
            row.group_id,
            row.label.as_str(),
            row.benchmark_source,
            row.attack_family.map(|f| f.as_str()).unwrap_or(""),
            row.attack_profile.map(|p| p.as_str()).unwrap_or(""),
            w.total_steps,
            w.triggered_count,
            w.probe_detect_count,
            w.high_mismatch_count,
            w.id_drift_count,
            w.warning_count,
            w.anomaly_density,
            u8::from(w.repeated_consistency_anomaly),
            u8::from(w.strong_signal),
            w.state_risk,
            p.high_impact_count,
            p.bypass_count,
            p.safety_count,
            p.high_effect_markers,
            p.param_risk,
        );
    }
    std::fs::write(out.join("features.csv"), sidecar)?;

    write_manifest(
        out,
        "featurize",
        json!({ "feature": cfg, "budget": budget }),
        &[episodes_path],
        &["observations.jsonl", "features.csv"],
    )?;
    println!("featurized {} episodes into {}", rows.len(), out.display());
    Ok(())
}

fn resolve_scorer(arg: &str) -> Result<ScorerSpec> {
    if let Some(spec) = ScorerSpec::by_kind(arg) {
        return Ok(spec);
    }
    let path = PathBuf::from(arg);
    if path.exists() {
        let spec: ScorerSpec = load_json(&path)?;
        spec.validate()?;
        return Ok(spec);
    }
    bail!("`{arg}` is neither a scorer kind nor a scorer-spec file");
}

fn resolve_experiment(args: &EvalArgs) -> Result<(ExperimentConfig, ScorerSpec)> {
    let mut config: ExperimentConfig = match &args.config {
        Some(path) => load_json(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(folds) = args.folds {
        config.folds = folds;
    }
    if let Some(rho) = args.rho {
        config.rho = rho;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if args.budget.is_some() {
        config.budget = args.budget;
    }
    config.validate()?;
    let scorer = resolve_scorer(&args.scorer)?;
    Ok((config, scorer))
}

fn run_eval(args: &EvalArgs) -> Result<(ExperimentConfig, ScorerSpec, ExperimentOutcome)> {
    let (config, scorer) = resolve_experiment(args)?;
    let episodes = load_episodes(&args.episodes)?;
    let outcome = run_experiment(&episodes, &scorer, &config)?;
    Ok((config, scorer, outcome))
}

fn summary_line(report: &EvalReport) -> String {
    format!(
        "{:<20} AMR {:>6.2}  BMR {:>6.2}  RNR {:>6.2}  AcNR {:>6.2}  GuardedJoint {:.1} \u{b1} {:.1} (pooled {:.1})",
        report.scorer.kind_name(),
        report.pooled.amr,
        report.pooled.bmr,
        report.pooled.rnr,
        report.pooled.acnr,
        report.guarded_joint_mean,
        report.guarded_joint_std,
        report.pooled_guarded_joint,
    )
}

pub fn evaluate(out: &Path, args: &EvalArgs) -> Result<ExperimentOutcome> {
    let (config, scorer, outcome) = run_eval(args)?;
    ensure_out(out)?;
    write_report_artifacts(out, &outcome.report, &outcome.decisions)?;
    write_manifest(
        out,
        "evaluate",
        json!({ "experiment": config, "scorer": scorer }),
        &[&args.episodes],
        &[
            "report.json",
            "per_fold.csv",
            "breakdown_benchmark_source.csv",
            "breakdown_attack_family.csv",
            "breakdown_attack_profile.csv",
            "decisions.csv",
        ],
    )?;
    println!("{}", summary_line(&outcome.report));
    if !outcome.report.excluded_rows.is_empty() {
        println!(
            "warning: {} row(s) excluded from scoring; see report.json",
            outcome.report.excluded_rows.len()
        );
    }
    Ok(outcome)
}

pub fn sweep(out: &Path, args: &EvalArgs, rhos: &[f64]) -> Result<()> {
    if rhos.is_empty() {
        bail!("--rhos must list at least one value");
    }
    let mut outcome = evaluate(out, args)?;
    let table = rho_sweep(&outcome.report, rhos);
    outcome.report.sweeps = Some(table.clone());
    write_json(&out.join("report.json"), &outcome.report)?;
    write_json(&out.join("rho_sweep.json"), &table)?;
    write_rho_sweep_csv(&out.join("rho_sweep.csv"), &table)?;
    for column in &table.columns {
        println!(
            "rho {:>4}: {:.1} \u{b1} {:.1} (pooled {:.1})",
            column.rho, column.mean, column.std, column.pooled
        );
    }
    Ok(())
}

pub fn perturb(
    out: &Path,
    args: &EvalArgs,
    noise_file: Option<&Path>,
    sigmas: &[f64],
    noise_seed: u64,
) -> Result<()> {
    let specs: Vec<NoiseSpec> = match noise_file {
        Some(path) => load_json(path)?,
        None => sigmas
            .iter()
            .flat_map(|&sigma| {
                NoiseRegime::ALL.into_iter().map(move |regime| NoiseSpec {
                    regime,
                    sigma,
                    seed: noise_seed,
                })
            })
            .collect(),
    };
    if specs.is_empty() {
        bail!("no noise specs to run");
    }
    let (config, _, outcome) = run_eval(args)?;
    ensure_out(out)?;
    write_report_artifacts(out, &outcome.report, &outcome.decisions)?;
    let table = robustness_run(&outcome, &specs, config.rho)?;
    write_json(&out.join("robustness.json"), &table)?;
    write_robustness_csv(&out.join("robustness.csv"), &table)?;
    write_manifest(
        out,
        "perturb",
        json!({ "experiment": config, "scorer": outcome.report.scorer, "noise": specs }),
        &[&args.episodes],
        &["report.json", "robustness.json", "robustness.csv"],
    )?;
    println!("baseline GuardedJoint {:.1}", table.baseline_guarded_joint);
    for row in &table.rows {
        println!(
            "{:<20} sigma {:>4}: {:>6.1} (delta {:>6.1})",
            row.regime, row.sigma, row.guarded_joint, row.delta
        );
    }
    Ok(())
}

pub fn ablate(out: &Path, args: &EvalArgs, budgets: &[usize]) -> Result<()> {
    let (config, scorer, _) = {
        let (config, scorer) = resolve_experiment(args)?;
        (config, scorer, ())
    };
    let episodes = load_episodes(&args.episodes)?;
    let ablation = budget_ablation(&episodes, &scorer, &config, budgets)?;
    ensure_out(out)?;
    write_json(&out.join("budget_ablation.json"), &ablation)?;
    write_budget_csv(&out.join("budget_ablation.csv"), &ablation)?;
    write_manifest(
        out,
        "ablate",
        json!({ "experiment": config, "scorer": scorer, "budgets": budgets }),
        &[&args.episodes],
        &["budget_ablation.json", "budget_ablation.csv"],
    )?;
    println!("budget  BMR     RNR     Joint   GuardedJoint  Joint/turn");
    for row in &ablation.rows {
        println!(
            "{:<7} {:<7.2} {:<7.2} {:<7.2} {:<13.2} {:.2}",
            row.budget, row.bmr, row.rnr, row.joint, row.guarded_joint, row.joint_per_turn
        );
    }
    Ok(())
}

fn render_breakdown(title: &str, rows: &[BreakdownRow], with_bu: bool) {
    println!("\n{title}");
    let mut header = format!(
        "  {:<28} {:>6} {:>6} {:>8} {:>8} {:>8} {:>8} {:>13}",
        "value", "n_mal", "n_ben", "AMR", "BMR", "RNR", "AcNR", "GuardedJoint"
    );
    if with_bu {
        header.push_str(&format!(" {:>16}", "BalancedUtility"));
    }
    println!("{header}");
    for row in rows {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into());
        let rates = row.rates.as_ref();
        let mut line = format!(
            "  {:<28} {:>6} {:>6} {:>8} {:>8} {:>8} {:>8} {:>13}",
            row.value,
            row.n_malicious,
            row.n_benign,
            fmt(rates.map(|r| r.amr)),
            fmt(rates.map(|r| r.bmr)),
            fmt(rates.map(|r| r.rnr)),
            fmt(rates.map(|r| r.acnr)),
            fmt(row.guarded_joint),
        );
        if with_bu {
            line.push_str(&format!(" {:>16}", fmt(row.balanced_utility)));
        }
        println!("{line}");
    }
}

pub fn report(paths: &[PathBuf], breakdowns: bool) -> Result<()> {
    if paths.is_empty() {
        bail!("--report needs at least one report.json path");
    }
    let mut reports = Vec::new();
    for path in paths {
        let report: EvalReport =
            load_json(path).with_context(|| format!("reading {}", path.display()))?;
        if report.per_fold.is_empty() {
            bail!("{} contains no folds", path.display());
        }
        reports.push(report);
    }
    println!(
        "{:<20} {:>8} {:>8} {:>8} {:>8} {:>18}",
        "scorer", "AMR", "BMR", "RNR", "AcNR", "GuardedJoint"
    );
    for report in &reports {
        println!(
            "{:<20} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>11.1} \u{b1} {:.1}",
            report.scorer.kind_name(),
            report.pooled.amr,
            report.pooled.bmr,
            report.pooled.rnr,
            report.pooled.acnr,
            report.guarded_joint_mean,
            report.guarded_joint_std,
        );
        if !report.excluded_rows.is_empty() {
            println!("  ({} row(s) excluded from scoring)", report.excluded_rows.len());
        }
    }
    if breakdowns {
        for report in &reports {
            render_breakdown(
                &format!("{} by benchmark_source", report.scorer.kind_name()),
                &report.breakdowns.benchmark_source,
                false,
            );
            render_breakdown(
                &format!("{} by attack_family", report.scorer.kind_name()),
                &report.breakdowns.attack_family,
                false,
            );
            render_breakdown(
                &format!("{} by attack_profile", report.scorer.kind_name()),
                &report.breakdowns.attack_profile,
                true,
            );
        }
    }
    Ok(())
}
