use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sil_cli::rundir::{read_diagnostics, read_final, read_metrics, RunManifest};
use sil_core::sil::METRICS_HEADER;

fn sil(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sil")).args(args).output().expect("spawn sil")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    write_named(dir, "run.json", body)
}

fn write_named(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn quick_config(out: &Path, extra: &str) -> String {
    format!(
        r#"{{
            "env": "gridworld",
            "demos": {{"count": 4, "subsample_factor": 4, "seed": 7}},
            "seed": 1,
            "out": "{}",
            "final_eval_episodes": 8,
            "sil": {{"iterations": 1, "episodes_per_iteration": 4, "eval_episodes": 4}}{extra}
        }}"#,
        out.display()
    )
}

#[test]
fn gen_expert_writes_reproducible_demos() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = |name: &str| {
        let dir = tmp.path().join(name);
        let d = dir.to_str().unwrap();
        ok(&sil(&["gen-expert", "--env", "gridworld", "--count", "2", "--subsample-factor", "4", "--seed", "5", "--out", d]));
        dir
    };
    let (a, b) = (gen("a"), gen("b"));
    let lines = fs::read_to_string(a.join("demos.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 2);
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subsample_factor"], 4);
    assert_eq!(manifest["seed"], 5);
    for f in ["demos.jsonl", "manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
}

#[test]
fn single_iteration_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    let cfg = write_config(tmp.path(), &quick_config(&run, ""));
    ok(&sil(&["train-sil", "--config", cfg.to_str().unwrap(), "--checkpoint-every", "1"]));

    let text = fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(text.lines().next(), Some(METRICS_HEADER));
    assert_eq!(read_metrics(&run.join("metrics.csv")).unwrap().len(), 1);
    let manifest: RunManifest = serde_json::from_slice(&fs::read(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.seed, 1);
    assert_eq!(manifest.schema_version, 1);
    assert_eq!(manifest.method, "sil");
    assert!(run.join("config.json").exists());
    assert_eq!(fs::read_to_string(run.join("timing.csv")).unwrap().lines().count(), 2);
    let diag = read_diagnostics(&run.join("diagnostics.csv")).unwrap();
    assert_eq!(diag.len(), 1);
    assert!(diag[0].identity_error <= 1e-9);
    for f in ["policy.bin", "policy.json", "critic.bin", "critic.json"] {
        assert!(run.join("checkpoints/iter_000001").join(f).exists(), "{f}");
    }
    assert!(run.join("checkpoints/final/value.bin").exists());
    let report = read_final(&run).unwrap();
    assert_eq!(report.sinkhorn.episodes, 8);
    assert!(report.sinkhorn.stochastic && !report.reward.stochastic);

    // Evaluating the saved policy uses the 50-episode default.
    let cfg_eval = write_named(tmp.path(), "eval.json", &quick_config(&tmp.path().join("unused"), "").replace(r#""final_eval_episodes": 8,"#, ""));
    let out = sil(&["evaluate", "--config", cfg_eval.to_str().unwrap(), "--checkpoint", run.join("checkpoints/final").to_str().unwrap()]);
    ok(&out);
    let eval: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(eval["sinkhorn"]["episodes"], 50);
    assert_eq!(eval["reward"]["episodes"], 50);

    // A finished run directory is never overwritten.
    let again = sil(&["train-sil", "--config", cfg.to_str().unwrap()]);
    assert_eq!(again.status.code(), Some(2));
}

#[test]
fn truncated_metrics_keep_complete_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("metrics.csv");
    fs::write(&path, format!("{METRICS_HEADER}\n1,0.5,,-3,0,0.01,1.2\n2,0.4,0.3,-2,0.001,0.02,1.1\n3,0.3")).unwrap();
    let rows = read_metrics(&path).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1].mean_eval_sinkhorn_fixed, Some(0.3));
}

#[test]
fn demo_count_grid_makes_sibling_runs_and_a_table() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("grid");
    let body = quick_config(&root, r#", "demo_counts": [2, 8, 32]"#).replace(r#""count": 4"#, r#""count": 32"#);
    let cfg = write_config(tmp.path(), &body);
    let out = sil(&["train-sil", "--config", cfg.to_str().unwrap()]);
    ok(&out);
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 3);
    for n in [2, 8, 32] {
        let report = read_final(&root.join(format!("demos_{n}"))).unwrap();
        assert_eq!(report.demo_count, n);
    }

    let bc_root = tmp.path().join("bc");
    let bc_cfg = write_config(tmp.path(), &body.replace(&root.display().to_string(), &bc_root.display().to_string()));
    ok(&sil(&["train-bc", "--config", bc_cfg.to_str().unwrap()]));

    let table = sil(&["compare", "--runs", root.to_str().unwrap(), bc_root.to_str().unwrap()]);
    ok(&table);
    let text = String::from_utf8(table.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("env,demo_count,sil_sinkhorn_mean"));
    assert!(lines[1].starts_with("gridworld,2,"));
    // Ablation columns are empty with a zero run count.
    assert!(lines[1].ends_with(",,,,,0"));
}

#[test]
fn ablation_uses_the_same_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("abl");
    let cfg = write_config(tmp.path(), &quick_config(&run, ""));
    ok(&sil(&["ablate", "--config", cfg.to_str().unwrap(), "--seed", "4"]));
    let rows = read_metrics(&run.join("metrics.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].critic_objective, 0.0);
    assert_eq!(read_final(&run).unwrap().method, "ablation");
}

#[test]
fn zero_epoch_bc_is_flagged() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("bc0");
    let cfg = write_config(tmp.path(), &quick_config(&run, r#", "bc": {"epochs": 0}"#));
    ok(&sil(&["train-bc", "--config", cfg.to_str().unwrap()]));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(run.join("bc.json")).unwrap()).unwrap();
    assert_eq!(summary["untrained"], true);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let typo = write_config(tmp.path(), &quick_config(&tmp.path().join("x"), r#", "sedd": 3"#));
    let out = sil(&["train-sil", "--config", typo.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!tmp.path().join("x").exists(), "no work before validation");

    let bad = write_config(tmp.path(), &quick_config(&tmp.path().join("y"), "").replace(r#""iterations": 1"#, r#""iterations": 0"#));
    assert_eq!(sil(&["train-sil", "--config", bad.to_str().unwrap()]).status.code(), Some(2));

    let tiny_eps = quick_config(&tmp.path().join("z"), "")
        .replace(r#""iterations": 1,"#, r#""iterations": 1, "sinkhorn": {"epsilon": 1e-300, "max_iterations": 10, "tolerance": 1e-6},"#);
    let numeric = write_config(tmp.path(), &tiny_eps);
    let out = sil(&["train-sil", "--config", numeric.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let missing = sil(&["train-sil", "--config", tmp.path().join("nope.json").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
}
