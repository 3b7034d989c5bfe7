use std::path::Path;
use std::process::{Command, Output};

fn quadfault(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quadfault"))
        .args(args)
        .env_remove("QUADFAULT_OUT")
        .output()
        .unwrap()
}

fn small_run(dir: &Path) -> std::path::PathBuf {
    let cfg = dir.join("small.toml");
    std::fs::write(&cfg, "variant = \"failure_teacher\"\nnum_envs = 4\ntotal_steps = 480\n").unwrap();
    let run = dir.join("run");
    let out = quadfault(&["train", "--config", cfg.to_str().unwrap(), "--seed", "3", "--out", run.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    run
}

#[test]
fn selftest_passes() {
    let out = quadfault(&["selftest"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(!text.contains("FAIL"));
}

#[test]
fn unknown_flag_is_usage_error() {
    let out = quadfault(&["eval", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn runtime_failure_is_structured() {
    let out = quadfault(&["report", "--run", "/definitely/not/here"]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"].as_str().unwrap().contains("/definitely/not/here"));
}

#[test]
fn train_report_eval_and_trace_export() {
    let dir = tempfile::tempdir().unwrap();
    let run = small_run(dir.path());

    let out = quadfault(&["report", "--run", run.to_str().unwrap()]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(run.join("report.json")).unwrap()).unwrap();
    let metrics = std::fs::read_to_string(run.join("metrics.jsonl")).unwrap();
    let last: serde_json::Value = serde_json::from_str(metrics.lines().last().unwrap()).unwrap();
    for key in ["iteration", "steps", "progress", "mean_episode_reward", "mean_episode_length", "forward_velocity", "step_reward"] {
        assert_eq!(report["training"][key], last[key], "{key}");
    }

    let ck = run.join("checkpoints").join("latest.qfck");
    let ev = dir.path().join("eval0");
    let out = quadfault(&["eval", "--checkpoint", ck.to_str().unwrap(), "--episodes", "0", "--out", ev.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let rep: serde_json::Value = serde_json::from_slice(&std::fs::read(ev.join("eval_report.json")).unwrap()).unwrap();
    assert!(rep["agents"][0]["rows"].as_array().unwrap().is_empty());

    let ev = dir.path().join("eval");
    let out = quadfault(&[
        "eval", "--checkpoint", ck.to_str().unwrap(), "--episodes", "2", "--terrain", "rough", "--fault-mode", "softlock",
        "--trace", "--out", ev.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("Rough Slope"));
    assert!(ev.join("worst_case_joints.csv").exists());
    let out = quadfault(&["trace-export", "--run", ev.to_str().unwrap(), "--episode", "1"]);
    assert!(out.status.success());
    let path = String::from_utf8_lossy(&out.stdout).trim().to_string();
    let lines = std::fs::read_to_string(path).unwrap();
    assert!(lines.lines().count() > 0);
    let first: serde_json::Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    assert_eq!(first["tick"], 1);

    let out = quadfault(&["trace-export", "--run", ev.to_str().unwrap(), "--episode", "9"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn resume_continues_in_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "variant = \"base_teacher\"\nnum_envs = 2\ntotal_steps = 240\ncheckpoint_every = 2\n").unwrap();
    let run = dir.path().join("r");
    let args = ["train", "--config", cfg.to_str().unwrap(), "--out", run.to_str().unwrap(), "--max-iterations", "2"];
    assert!(quadfault(&args).status.success());
    let ck = run.join("checkpoints").join("ckpt_000002.qfck");
    let out = quadfault(&["train", "--config", cfg.to_str().unwrap(), "--resume", ck.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = std::fs::read_to_string(run.join("metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 5);
}
