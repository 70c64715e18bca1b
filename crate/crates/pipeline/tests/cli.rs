use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bench_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/bench")
}

fn river(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_river"))
        .args(["--config", "config.toml"])
        .args(args)
        .current_dir(bench_dir())
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn twin_validate_exit_codes() {
    assert_eq!(
        river(&["twin", "validate", "videos/s1/twin.json"]).status.code(),
        Some(0)
    );
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"frame_count\": 2, \"metadata\": {}, \"frames\": []}").unwrap();
    let out = river(&["twin", "validate", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let missing = dir.path().join("missing.json");
    assert_eq!(
        river(&["twin", "validate", missing.to_str().unwrap()]).status.code(),
        Some(2)
    );
}

#[test]
fn usage_errors_are_nonzero() {
    assert_ne!(river(&["twin"]).status.code(), Some(0));
    assert_ne!(river(&["no-such-command"]).status.code(), Some(0));
}

#[test]
fn twin_build_matches_fixture() {
    let out = river(&["twin", "build", "videos/s2", "--mock-perception", "--ignore-fixture"]);
    assert!(out.status.success());
    let fixture = std::fs::read_to_string(bench_dir().join("videos/s2/twin.json")).unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), fixture);
}

#[test]
fn twin_diff_lists_removal() {
    let dir = tempfile::tempdir().unwrap();
    let mut twin: Value =
        serde_json::from_str(&std::fs::read_to_string(bench_dir().join("videos/s2/twin.json")).unwrap()).unwrap();
    twin["frames"][0]["instances"].as_array_mut().unwrap().remove(0);
    let edited = dir.path().join("edited.json");
    std::fs::write(&edited, twin.to_string()).unwrap();
    let out = river(&["twin", "diff", "videos/s2/twin.json", edited.to_str().unwrap()]);
    assert!(out.status.success());
    let diff = stdout_json(&out);
    assert_eq!(diff["removed"].as_array().unwrap().len(), 1);
    assert!(diff["changed"].as_array().unwrap().is_empty());
}

#[test]
fn rollout_then_reward_score() {
    let dir = tempfile::tempdir().unwrap();
    let transcript = dir.path().join("t.txt");
    let out = river(&[
        "rollout",
        "run",
        "--video",
        "videos/s1",
        "--script",
        "videos/s1/reasoner.json",
        "--out",
        transcript.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["transcript"]["complete"], true);

    let out = river(&[
        "reward",
        "score",
        "--transcript",
        transcript.to_str().unwrap(),
        "--twin",
        "videos/s1/twin.json",
    ]);
    assert!(out.status.success());
    let reward = &stdout_json(&out)["reward"];
    assert_eq!(reward["r_token"], 0.0);
    assert_eq!(reward["r_exec"], 0.0);
    assert_eq!(reward["r_dt"], 0.5);
    assert_eq!(reward["r_perf"], 0.0);
    assert_eq!(reward["total"], 0.5);

    let verdict = dir.path().join("v.json");
    std::fs::write(&verdict, r#"{"correct": false}"#).unwrap();
    let out = river(&[
        "reward",
        "score",
        "--transcript",
        transcript.to_str().unwrap(),
        "--twin",
        "videos/s1/twin.json",
        "--verdict",
        verdict.to_str().unwrap(),
    ]);
    assert_eq!(stdout_json(&out)["reward"]["total"], -0.5);
}

#[test]
fn twinql_eval_prints_value() {
    let out = river(&[
        "twinql",
        "eval",
        "--twin",
        "videos/s2/twin.json",
        "category(nearest(objects(frame=0)))",
    ]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "\"ball\"");
    let out = river(&["twinql", "eval", "--twin", "videos/s2/twin.json", "obj(9, 0)"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn train_toy_writes_log() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("log.csv");
    let out = river(&[
        "--seed",
        "17",
        "train",
        "toy",
        "--iterations",
        "50",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(stdout_json(&out)["seed"], 17);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 51);
}

#[test]
fn bench_run_and_report_render() {
    let dir = tempfile::tempdir().unwrap();
    let out = river(&[
        "bench",
        "run",
        "--manifest",
        "manifest.jsonl",
        "--mock-all",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    for f in ["report.csv", "report.txt", "samples.jsonl"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let samples = dir.path().join("samples.jsonl");
    let csv = river(&[
        "report",
        "render",
        "--samples",
        samples.to_str().unwrap(),
        "--format",
        "csv",
    ]);
    assert!(csv.status.success());
    assert_eq!(csv.stdout, std::fs::read(dir.path().join("report.csv")).unwrap());
}

#[test]
fn bench_run_without_services_reports_item_failures() {
    let dir = tempfile::tempdir().unwrap();
    let out = river(&[
        "bench",
        "run",
        "--manifest",
        "manifest.jsonl",
        "--no-editor",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let text = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(text.contains("3 errors"), "{text}");
}

#[test]
fn metrics_compute_identical_frames() {
    let out = river(&["metrics", "compute", "--original", "videos/s1", "--edited", "videos/s1"]);
    assert!(out.status.success());
    let m = stdout_json(&out);
    assert_eq!(m["ssim"], 100.0);
    assert_eq!(m["psnr"], 100.0);
}
