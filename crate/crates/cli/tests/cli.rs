//! End-to-end tests of the binary: pipeline wiring, determinism, manifests,
//! and error exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn trustbench(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trustbench"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_ok(output: &Output) {
    assert!(
        output.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn generate_featurize_evaluate_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    assert_ok(&trustbench(
        root,
        &["generate", "--out", "gen", "--pairs", "40", "--seed", "11"],
    ));
    assert!(root.join("gen/episodes.jsonl").exists());
    assert!(root.join("gen/manifest.json").exists());
    assert!(root.join("gen/generation_manifest.json").exists());

    assert_ok(&trustbench(
        root,
        &[
            "featurize",
            "--out",
            "feat",
            "--episodes",
            "gen/episodes.jsonl",
        ],
    ));
    let observations = std::fs::read_to_string(root.join("feat/observations.jsonl")).unwrap();
    assert_eq!(observations.lines().count(), 80);
    assert!(root.join("feat/features.csv").exists());

    assert_ok(&trustbench(
        root,
        &[
            "evaluate",
            "--out",
            "eval",
            "--episodes",
            "gen/episodes.jsonl",
            "--scorer",
            "execute_all",
        ],
    ));
    for artifact in [
        "report.json",
        "per_fold.csv",
        "decisions.csv",
        "breakdown_attack_profile.csv",
        "manifest.json",
    ] {
        assert!(root.join("eval").join(artifact).exists(), "{artifact}");
    }

    let output = trustbench(root, &["report", "--report", "eval/report.json"]);
    assert_ok(&output);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("execute_all"), "{stdout}");
    assert!(stdout.contains("100.00"), "{stdout}");
    assert!(stdout.contains("0.0 \u{b1} 0.0"), "{stdout}");

    let manifest = std::fs::read_to_string(root.join("eval/manifest.json")).unwrap();
    assert!(manifest.contains("tool_version"));
    assert!(manifest.contains("\"seed\""));
}

#[test]
fn featurize_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert_ok(&trustbench(
        root,
        &["generate", "--out", "gen", "--pairs", "15", "--seed", "5"],
    ));
    assert_ok(&trustbench(
        root,
        &[
            "featurize",
            "--out",
            "f1",
            "--episodes",
            "gen/episodes.jsonl",
        ],
    ));
    assert_ok(&trustbench(
        root,
        &[
            "featurize",
            "--out",
            "f2",
            "--episodes",
            "gen/episodes.jsonl",
        ],
    ));
    let a = std::fs::read(root.join("f1/observations.jsonl")).unwrap();
    let b = std::fs::read(root.join("f2/observations.jsonl")).unwrap();
    assert_eq!(a, b);
    let a = std::fs::read(root.join("f1/features.csv")).unwrap();
    let b = std::fs::read(root.join("f2/features.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn generation_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert_ok(&trustbench(
        root,
        &["generate", "--out", "a", "--pairs", "25", "--seed", "3"],
    ));
    assert_ok(&trustbench(
        root,
        &["generate", "--out", "b", "--pairs", "25", "--seed", "3"],
    ));
    let a = std::fs::read(root.join("a/episodes.jsonl")).unwrap();
    let b = std::fs::read(root.join("b/episodes.jsonl")).unwrap();
    assert_eq!(a, b);
    // Worker count must not change the bytes either.
    assert_ok(&trustbench(
        root,
        &[
            "generate",
            "--out",
            "c",
            "--pairs",
            "25",
            "--seed",
            "3",
            "--workers",
            "1",
        ],
    ));
    let c = std::fs::read(root.join("c/episodes.jsonl")).unwrap();
    assert_eq!(a, c);
}

#[test]
fn zero_pairs_config_fails_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::write(root.join("gen.json"), r#"{"pair_count": 0}"#).unwrap();
    let output = trustbench(root, &["generate", "--out", "gen", "--config", "gen.json"]);
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("pair_count"), "{stderr}");
}

#[test]
fn corrupt_episode_line_is_reported_with_its_number() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert_ok(&trustbench(
        root,
        &["generate", "--out", "gen", "--pairs", "5", "--seed", "2"],
    ));
    let mut text = std::fs::read_to_string(root.join("gen/episodes.jsonl")).unwrap();
    text.push_str("{\"episode_id\": broken\n");
    std::fs::write(root.join("gen/episodes.jsonl"), text).unwrap();
    let output = trustbench(
        root,
        &[
            "featurize",
            "--out",
            "feat",
            "--episodes",
            "gen/episodes.jsonl",
        ],
    );
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("line 11"), "{stderr}");
}

#[test]
fn report_on_invalid_file_is_an_error_not_an_empty_table() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::write(root.join("empty.json"), "").unwrap();
    let output = trustbench(root, &["report", "--report", "empty.json"]);
    assert!(!output.status.success());
}

#[test]
fn out_root_defaults_to_the_env_var() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let output = Command::new(env!("CARGO_BIN_EXE_trustbench"))
        .current_dir(root)
        .env("TRUSTBENCH_OUT", "from_env")
        .args(["generate", "--pairs", "4", "--seed", "9"])
        .output()
        .unwrap();
    assert_ok(&output);
    assert!(root.join("from_env/episodes.jsonl").exists());
}

#[test]
fn sweep_and_ablate_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert_ok(&trustbench(
        root,
        &["generate", "--out", "gen", "--pairs", "30", "--seed", "13"],
    ));
    assert_ok(&trustbench(
        root,
        &[
            "sweep",
            "--out",
            "sw",
            "--episodes",
            "gen/episodes.jsonl",
            "--scorer",
            "heuristic_combined",
            "--rhos",
            "0.5,1.5,3.0",
        ],
    ));
    let csv = std::fs::read_to_string(root.join("sw/rho_sweep.csv")).unwrap();
    assert!(csv.lines().next().unwrap().contains("rho_1.5"));
    assert!(csv.contains("pooled"));
    let report = std::fs::read_to_string(root.join("sw/report.json")).unwrap();
    assert!(report.contains("\"sweeps\""), "sweep table should be embedded in the report");

    assert_ok(&trustbench(
        root,
        &[
            "ablate",
            "--out",
            "ab",
            "--episodes",
            "gen/episodes.jsonl",
            "--scorer",
            "heuristic_combined",
            "--budgets",
            "1,3",
        ],
    ));
    let csv = std::fs::read_to_string(root.join("ab/budget_ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn perturb_rejects_text_scorers_and_runs_feature_scorers() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert_ok(&trustbench(
        root,
        &["generate", "--out", "gen", "--pairs", "30", "--seed", "17"],
    ));
    let output = trustbench(
        root,
        &[
            "perturb",
            "--out",
            "p1",
            "--episodes",
            "gen/episodes.jsonl",
            "--scorer",
            "token_linear",
            "--sigmas",
            "0.1",
        ],
    );
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("incompatible"));

    assert_ok(&trustbench(
        root,
        &[
            "perturb",
            "--out",
            "p2",
            "--episodes",
            "gen/episodes.jsonl",
            "--scorer",
            "scalar_linear",
            "--sigmas",
            "0,0.3",
        ],
    ));
    let csv = std::fs::read_to_string(root.join("p2/robustness.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11); // header + 5 regimes x 2 sigmas
}

#[test]
fn external_scorer_spec_files_work_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert_ok(&trustbench(
        root,
        &["generate", "--out", "gen", "--pairs", "10", "--seed", "23"],
    ));
    std::fs::write(
        root.join("external.json"),
        r#"{"kind":"external","command":["sh","-c","while read line; do echo 0.5; done"],"timeout_ms":5000}"#,
    )
    .unwrap();
    assert_ok(&trustbench(
        root,
        &[
            "evaluate",
            "--out",
            "ext",
            "--episodes",
            "gen/episodes.jsonl",
            "--scorer",
            "external.json",
        ],
    ));
    let report = std::fs::read_to_string(root.join("ext/report.json")).unwrap();
    assert!(report.contains("\"external\""));
}
