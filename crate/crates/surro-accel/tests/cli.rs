//! The command-line tool end to end, on small budgets.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use surro_accel::files::{read_curve, read_trajectories};
use surro_accel::runner::ExperimentReport;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_surro-accel"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let o = run(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn repo_config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name).display().to_string()
}

fn small_config(dir: &Path) -> PathBuf {
    let p = dir.join("small.json");
    fs::write(
        &p,
        r#"{
            "dqn": {"episodes": 20},
            "experiment": {"collect_replications": 6, "pretrain_surrogate_episodes": 4, "seeds": 2,
                           "surrogate": {"epochs": 3}}
        }"#,
    )
    .unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_writes_one_block_per_replication() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    ok(&["simulate", "--config", &repo_config("default.json"), "--replications", "3", "--seed", "7", "--out", s(&out)]);
    let t = read_trajectories(&out.join("trajectories.jsonl")).unwrap();
    assert_eq!(t.len(), 3);
    assert!(t.iter().all(|t| t.records.len() == 16));
    let resolved: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("resolved_config.json")).unwrap()).unwrap();
    assert_eq!(resolved["seed"], 7);
}

#[test]
fn shipped_configs_resolve_to_the_study_setup() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["default.json", "reward_change.json"] {
        let out = dir.path().join(name);
        ok(&["simulate", "--config", &repo_config(name), "--out", s(&out), "--quiet"]);
        let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("resolved_config.json")).unwrap()).unwrap();
        assert_eq!(r["contact_groups"][0]["arrival_rate_per_epoch"], 7.0);
        assert_eq!(r["contact_groups"][1]["arrival_rate_per_epoch"], 6.0);
        let sizes: Vec<u64> = r["expert_groups"].as_array().unwrap().iter().map(|g| g["size"].as_u64().unwrap()).collect();
        assert_eq!(sizes, [1, 2, 1]);
        assert_eq!(r["dqn"]["epsilon"], 0.05);
        assert_eq!(r["dqn"]["gamma"], 0.9);
        assert_eq!(r["dqn"]["replay_capacity"], 300);
        assert_eq!(r["dqn"]["target_sync_period"], 100);
        assert_eq!(r["modified_reward"]["terminal_per_task"], -50.0);
    }
}

#[test]
fn invalid_input_exits_with_status_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(
        &bad,
        r#"{"contact_groups": [
            {"arrival_rate_per_epoch": -3, "service": {"kind": "exponential", "rate": 1}, "patience": {"kind": "exponential", "rate": 1}},
            {"arrival_rate_per_epoch": 6, "service": {"kind": "exponential", "rate": 1}, "patience": {"kind": "exponential", "rate": 1}}]}"#,
    )
    .unwrap();
    let o = run(&["simulate", "--config", s(&bad), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("contact_groups[0].arrival_rate_per_epoch"));

    fs::write(&bad, r#"{"routing": [[false, false], [true, false], [false, false]]}"#).unwrap();
    let o = run(&["simulate", "--config", s(&bad), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("routing"));

    fs::write(&bad, r#"{"expert_groups": [{}]}"#).unwrap();
    let o = run(&["simulate", "--config", s(&bad), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("size"));

    assert_eq!(run(&["simulate", "--config", "/nonexistent.json"]).status.code(), Some(1));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(&["simulate", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_input_file_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["fit-surrogate", "--trajectories", "/nonexistent.jsonl", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stage_by_stage_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = |n: &str| dir.path().join(n);
    ok(&["train-direct", "--episodes", "3", "--seed", "2", "--out", s(&d("direct")), "--quiet"]);
    assert_eq!(read_curve(&d("direct/curve.csv")).unwrap().len(), 3);
    let weights = d("direct/qnet.json");
    ok(&["collect", "--weights", s(&weights), "--replications", "5", "--out", s(&d("collect")), "--quiet"]);
    let t = read_trajectories(&d("collect/trajectories.jsonl")).unwrap();
    assert_eq!(t.len(), 5);
    ok(&["fit-surrogate", "--trajectories", s(&d("collect/trajectories.jsonl")), "--out", s(&d("fit")), "--quiet"]);
    assert!(d("fit/surrogate.json").exists() && d("fit/rmse.json").exists());
    ok(&[
        "pretrain-finetune", "--surrogate", s(&d("fit/surrogate.json")), "--pretrain-episodes", "2", "--episodes", "3",
        "--out", s(&d("pf")), "--quiet",
    ]);
    let curve = read_curve(&d("pf/curve.csv")).unwrap();
    assert_eq!(curve.len(), 5);
    assert_eq!(curve.entries.last().unwrap().cumulative_sim_replications, 3);
    assert_eq!(curve.entries.last().unwrap().cumulative_surrogate_replications, 2);
    ok(&["simulate", "--weights", s(&d("pf/qnet.json")), "--out", s(&d("sim")), "--quiet"]);
}

#[test]
fn experiment_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("exp");
    ok(&["experiment", "--config", s(&cfg), "--out", s(&out), "--quiet"]);
    let report: ExperimentReport = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.seeds.len(), 2);
    assert_eq!(report.simulation_budget, 20);
    for seed in &report.seeds {
        assert_eq!(seed.files.curves.len(), 4);
        for rel in seed.files.curves.values().chain([&seed.files.trajectories, &seed.files.surrogate, &seed.files.rmse]) {
            assert!(out.join(rel).exists(), "{rel}");
        }
    }

    // re-deriving the report from the curves reproduces it
    let again = dir.path().join("again");
    ok(&["report", "--experiment", s(&out), "--out", s(&again), "--quiet"]);
    assert_eq!(fs::read(out.join("report.json")).unwrap(), fs::read(again.join("report.json")).unwrap());

    // a different criterion changes the analysis, not the runs
    let wide = dir.path().join("wide.json");
    fs::write(&wide, r#"{"experiment": {"stabilization": {"window": 2, "band_fraction": 10.0, "band_floor": 1e9}}}"#).unwrap();
    let relaxed = dir.path().join("relaxed");
    ok(&["report", "--experiment", s(&out), "--config", s(&wide), "--out", s(&relaxed), "--quiet"]);
    let r: ExperimentReport = serde_json::from_str(&fs::read_to_string(relaxed.join("report.json")).unwrap()).unwrap();
    assert!(r.seeds.iter().all(|s| s.original.direct.index == Some(0)));
}
