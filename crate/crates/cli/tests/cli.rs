//! End-to-end tests of the llmlink binary: artifact round trips, exit
//! codes, and determinism.

use assert_cmd::Command;
use predicates::prelude::*;

fn llmlink() -> Command {
    Command::cargo_bin("llmlink").unwrap()
}

fn write_config(dir: &std::path::Path) -> std::path::PathBuf {
    let config = llmlink_core::RunConfig::default().to_toml_string().unwrap();
    let path = dir.join("config.toml");
    std::fs::write(&path, config).unwrap();
    path
}

#[test]
fn unknown_flag_exits_1() {
    llmlink()
        .args(["train", "--nonsense"])
        .assert()
        .failure()
        .code(1);
}

#[test]
fn missing_subcommand_exits_1() {
    llmlink().assert().failure().code(1);
}

#[test]
fn help_exits_0() {
    llmlink().arg("--help").assert().success();
}

#[test]
fn missing_config_file_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    llmlink()
        .args(["train", "--config", "/nonexistent/config.toml", "--out"])
        .arg(dir.path().join("out"))
        .assert()
        .failure()
        .code(1);
}

#[test]
fn malformed_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[env]\nnum_users = \"many\"\n").unwrap();
    llmlink()
        .args(["oracle", "--config"])
        .arg(&path)
        .assert()
        .failure()
        .code(1);
}

#[test]
fn unwritable_output_directory_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    // A file occupies the output path, so the directory creation fails at
    // runtime, after setup succeeded.
    let blocked = dir.path().join("blocked");
    std::fs::write(&blocked, "file in the way").unwrap();
    llmlink()
        .args(["train", "--episodes", "1", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(blocked.join("sub"))
        .assert()
        .failure()
        .code(2);
}

#[test]
fn train_writes_complete_artifact_set() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("run");
    llmlink()
        .args(["train", "--seed", "7", "--episodes", "20", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .assert()
        .success()
        .stdout(predicate::str::contains("recent_mean_reward"));
    for artifact in ["checkpoint.txt", "train_metrics.jsonl", "config.toml", "manifest.json"] {
        assert!(out.join(artifact).exists(), "missing {artifact}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["schema"], "llmlink.run-manifest/1");
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["episodes"], 20);
}

#[test]
fn train_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    for out in ["a", "b"] {
        llmlink()
            .args(["train", "--seed", "3", "--episodes", "15", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(dir.path().join(out))
            .assert()
            .success();
    }
    for artifact in ["checkpoint.txt", "train_metrics.jsonl", "config.toml"] {
        let a = std::fs::read(dir.path().join("a").join(artifact)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(artifact)).unwrap();
        assert_eq!(a, b, "{artifact} differs between identical runs");
    }
}

#[test]
fn oracle_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let table = dir.path().join("oracle.tsv");
    llmlink()
        .args(["oracle", "--bins", "4", "--samples", "50", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&table)
        .assert()
        .success();
    let text = std::fs::read_to_string(&table).unwrap();
    assert!(text.starts_with("# llmlink policy table v1"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 4);

    let run = dir.path().join("run");
    llmlink()
        .args(["train", "--seed", "1", "--episodes", "30", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&run)
        .assert()
        .success();
    llmlink()
        .args(["eval", "--episodes", "5", "--checkpoint"])
        .arg(run.join("checkpoint.txt"))
        .arg("--config")
        .arg(&config)
        .arg("--oracle")
        .arg(&table)
        .assert()
        .success()
        .stdout(
            predicate::str::contains("mean_reward")
                .and(predicate::str::contains("violation_rate"))
                .and(predicate::str::contains("latency_improvement_vs_uncompressed"))
                .and(predicate::str::contains("power_distance_w")),
        );
}

#[test]
fn eval_rejects_corrupt_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let ckpt = dir.path().join("checkpoint.txt");
    std::fs::write(&ckpt, "not a checkpoint").unwrap();
    let table = dir.path().join("oracle.tsv");
    std::fs::write(&table, "# llmlink policy table v1\n1e-2 1e-1 2 4 8.0 0.0\n").unwrap();
    llmlink()
        .args(["eval", "--checkpoint"])
        .arg(&ckpt)
        .arg("--config")
        .arg(&config)
        .arg("--oracle")
        .arg(&table)
        .assert()
        .failure()
        .code(1);
}

#[test]
fn calibrate_reproduces_reference_fit() {
    llmlink()
        .args(["calibrate", "--timings", "../../data/reference_timings.csv"])
        .assert()
        .success()
        .stdout(
            predicate::str::contains("slm_time_per_token_s = 0.034237734571366")
                .and(predicate::str::contains("llm_time_per_token_s = 0.097028416994070"))
                .and(predicate::str::contains("llm_fixed_overhead_s = 42.25678335244"))
                .and(predicate::str::contains("output_tokens = 60")),
        );
}

#[test]
fn calibrate_rejects_underdetermined_input() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("timings.csv");
    std::fs::write(&path, "44,1.0,56.1\n44,0.25,46.9\n").unwrap();
    llmlink()
        .args(["calibrate", "--timings"])
        .arg(&path)
        .assert()
        .failure()
        .code(1);
}

#[test]
fn sweep_summarizes_each_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("sweep");
    llmlink()
        .args(["sweep", "--seeds", "3", "--episodes", "10", "--workers", "2", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .assert()
        .success()
        .stdout(predicate::str::contains("seed\trecent_mean_reward"));
    for seed in 0..3 {
        assert!(out.join(format!("seed-{seed}")).join("checkpoint.txt").exists());
    }
}
