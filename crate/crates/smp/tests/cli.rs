//! Command-line contract tests: exit codes, config validation, artifact
//! layout, seeding.

use std::path::{Path, PathBuf};
use std::process::Command;

fn smp() -> Command {
    Command::new(env!("CARGO_BIN_EXE_smp"))
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("smp-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn tiny_prior_args(dataset: &Path, out: &Path) -> Vec<String> {
    [
        "train-prior",
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "5",
        "--set",
        &format!("prior.dataset={}", dataset.display()),
        "--set",
        "prior.steps=40",
        "--set",
        "prior.batch=8",
        "--set",
        "prior.hidden=16",
        "--set",
        "prior.film_dim=8",
        "--set",
        "prior.time_embed_dim=8",
        "--set",
        "prior.style_embed_dim=4",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

#[test]
fn unknown_command_and_missing_out_are_config_errors() {
    let status = smp().arg("frobnicate").arg("--out").arg("/tmp/x").status().unwrap();
    assert_eq!(status.code(), Some(2));
    let status = smp().arg("gen-data").status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn gen_data_is_byte_identical_for_a_seed() {
    let dir = tmp_dir("gendata");
    for sub in ["a", "b"] {
        let status = smp()
            .args(["gen-data", "--out"])
            .arg(dir.join(sub))
            .args(["--seed", "11", "--set", "data.preset=walk-jog-run"])
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
    }
    let a = std::fs::read(dir.join("a/dataset.smpd")).unwrap();
    let b = std::fs::read(dir.join("b/dataset.smpd")).unwrap();
    assert_eq!(a, b);
    // Artifact layout: resolved config echo plus metrics.
    let echo = std::fs::read_to_string(dir.join("a/config.txt")).unwrap();
    assert!(echo.contains("seed = 11"));
    assert!(echo.contains("preset = walk-jog-run"));
    assert!(dir.join("a/metrics.csv").exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn walk_jog_run_preset_is_three_one_second_clips() {
    let dir = tmp_dir("wjr");
    let status = smp()
        .args(["gen-data", "--out"])
        .arg(&dir)
        .args(["--seed", "3", "--set", "data.preset=walk-jog-run"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let metrics = std::fs::read_to_string(dir.join("metrics.csv")).unwrap();
    assert!(metrics.contains("\n3,"), "expected 3 clips, got: {metrics}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn styles_preset_counts_clips() {
    let dir = tmp_dir("styles-count");
    let status = smp()
        .args(["gen-data", "--out"])
        .arg(&dir)
        .args(["--seed", "3", "--set", "data.clips_per_style=2", "--set", "data.clip_seconds=1.0"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let metrics = std::fs::read_to_string(dir.join("metrics.csv")).unwrap();
    assert!(metrics.contains("\n6,"), "expected 3 styles x 2 clips: {metrics}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn missing_dataset_path_exits_two_with_message() {
    let dir = tmp_dir("noprior");
    let output = smp().args(["train-prior", "--out"]).arg(&dir).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("dataset"), "stderr: {stderr}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tmp_dir("unknown-key");
    let output = smp()
        .args(["gen-data", "--out"])
        .arg(&dir)
        .args(["--set", "data.bogus_knob=1"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("data.bogus_knob"), "stderr: {stderr}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn smp_seed_env_var_overrides_config_seed() {
    let dir = tmp_dir("envseed");
    for (sub, env_seed) in [("a", "21"), ("b", "21"), ("c", "22")] {
        let status = smp()
            .args(["gen-data", "--out"])
            .arg(dir.join(sub))
            .args(["--set", "data.preset=walk-jog-run"])
            .env("SMP_SEED", env_seed)
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
    }
    let a = std::fs::read(dir.join("a/dataset.smpd")).unwrap();
    let b = std::fs::read(dir.join("b/dataset.smpd")).unwrap();
    let c = std::fs::read(dir.join("c/dataset.smpd")).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    let echo = std::fs::read_to_string(dir.join("a/config.txt")).unwrap();
    assert!(echo.contains("seed = 21"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn policy_training_rejects_dataset_access() {
    // The modularity contract: a policy run may receive a prior checkpoint
    // or nothing; reference data is never readable during policy training.
    let dir = tmp_dir("contract");
    let data_dir = dir.join("data");
    let status = smp()
        .args(["gen-data", "--out"])
        .arg(&data_dir)
        .args(["--seed", "5", "--set", "data.preset=single-clip"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let dataset = data_dir.join("dataset.smpd");

    let prior_dir = dir.join("prior");
    let status = smp().args(tiny_prior_args(&dataset, &prior_dir)).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let prior = prior_dir.join("prior.smpl");
    assert!(prior.exists());

    // Prior plus dataset: rejected.
    let output = smp()
        .args(["train-policy", "--out"])
        .arg(dir.join("policy"))
        .args([
            "--set",
            &format!("policy.prior={}", prior.display()),
            "--set",
            &format!("policy.dataset={}", dataset.display()),
            "--set",
            "policy.task=imitation",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("dataset"), "stderr: {stderr}");

    // Dataset without prior: also rejected.
    let output = smp()
        .args(["train-policy", "--out"])
        .arg(dir.join("policy2"))
        .args([
            "--set",
            &format!("policy.dataset={}", dataset.display()),
            "--set",
            "policy.w_prior=0",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn prior_training_and_policy_smoke_run_end_to_end() {
    let dir = tmp_dir("e2e");
    let data_dir = dir.join("data");
    assert_eq!(
        smp()
            .args(["gen-data", "--out"])
            .arg(&data_dir)
            .args(["--seed", "5", "--set", "data.preset=single-clip"])
            .status()
            .unwrap()
            .code(),
        Some(0)
    );
    let prior_dir = dir.join("prior");
    assert_eq!(
        smp().args(tiny_prior_args(&data_dir.join("dataset.smpd"), &prior_dir)).status().unwrap().code(),
        Some(0)
    );
    // Identical seeds give identical prior checkpoints.
    let prior_dir2 = dir.join("prior2");
    assert_eq!(
        smp().args(tiny_prior_args(&data_dir.join("dataset.smpd"), &prior_dir2)).status().unwrap().code(),
        Some(0)
    );
    assert_eq!(
        std::fs::read(prior_dir.join("prior.smpl")).unwrap(),
        std::fs::read(prior_dir2.join("prior.smpl")).unwrap()
    );

    // Task-only policy training (w_prior = 0) runs without any prior.
    let policy_dir = dir.join("policy");
    let status = smp()
        .args(["train-policy", "--out"])
        .arg(&policy_dir)
        .args([
            "--seed",
            "6",
            "--set",
            "policy.w_prior=0",
            "--set",
            "policy.w_g=1",
            "--set",
            "policy.iterations=2",
            "--set",
            "policy.envs=4",
            "--set",
            "policy.horizon=8",
            "--set",
            "policy.minibatch=16",
            "--set",
            "policy.hidden=16",
            "--set",
            "policy.eval_every=0",
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(policy_dir.join("policy.smpl").exists());
    assert!(policy_dir.join("trainer.smpl").exists());
    let metrics = std::fs::read_to_string(policy_dir.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("iter,env_steps,task_return,mean_r_smp,kl,clip_frac"));
    assert_eq!(metrics.lines().count(), 3);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn sample_command_dumps_windows() {
    let dir = tmp_dir("sample");
    let data_dir = dir.join("data");
    assert_eq!(
        smp()
            .args(["gen-data", "--out"])
            .arg(&data_dir)
            .args(["--seed", "5", "--set", "data.preset=single-clip"])
            .status()
            .unwrap()
            .code(),
        Some(0)
    );
    let prior_dir = dir.join("prior");
    assert_eq!(
        smp().args(tiny_prior_args(&data_dir.join("dataset.smpd"), &prior_dir)).status().unwrap().code(),
        Some(0)
    );
    let out = dir.join("samples");
    let status = smp()
        .args(["sample", "--out"])
        .arg(&out)
        .args([
            "--seed",
            "9",
            "--set",
            &format!("sample.prior={}", prior_dir.join("prior.smpl").display()),
            "--set",
            "sample.count=3",
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let csv = std::fs::read_to_string(out.join("windows.csv")).unwrap();
    // Header plus 3 windows x 10 frames.
    assert_eq!(csv.lines().count(), 31);
    std::fs::remove_dir_all(&dir).ok();
}
