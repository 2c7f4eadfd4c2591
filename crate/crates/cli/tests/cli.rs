use std::path::Path;
use std::process::{Command, Output};

fn dadapt(workdir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dadapt"))
        .arg("--workdir")
        .arg(workdir)
        .args(args)
        .env("RUST_LOG", "info")
        .output()
        .unwrap()
}

/// A manifest small enough to train in seconds.
fn tiny_manifest(dir: &Path) {
    let out = dadapt(dir, &["default-manifest"]);
    assert!(out.status.success());
    let mut m: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    m["corpus"]["mono_size"] = 1500.into();
    m["corpus"]["parallel_size"] = 200.into();
    m["model"]["hidden"] = 16.into();
    m["model"]["heads"] = 2.into();
    m["model"]["ffn_dim"] = 32.into();
    m["bottleneck"] = 4.into();
    for stage in ["pretrain", "adapters", "transfer", "full_finetune", "task_adapter", "new_language", "backtranslation"] {
        m[stage]["total_updates"] = 4.into();
        m[stage]["warmup_updates"] = 2.into();
        m[stage]["max_tokens"] = 128.into();
        m[stage]["validation_interval"] = 2.into();
    }
    m["valid_sentences"] = 4.into();
    std::fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&m).unwrap()).unwrap();
}

#[test]
fn pretrain_is_skipped_when_inputs_are_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    tiny_manifest(dir.path());
    let first = dadapt(dir.path(), &["pretrain"]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let base = dir.path().join("base.dmdl");
    let bytes = std::fs::read(&base).unwrap();
    let second = dadapt(dir.path(), &["pretrain"]);
    assert!(second.status.success());
    assert!(String::from_utf8_lossy(&second.stderr).contains("up to date"));
    let forced = dadapt(dir.path(), &["--force", "pretrain"]);
    assert!(forced.status.success());
    assert!(!String::from_utf8_lossy(&forced.stderr).contains("up to date"));
    // Same inputs, same seed: same bytes.
    assert_eq!(std::fs::read(&base).unwrap(), bytes);
}

#[test]
fn malformed_manifest_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("manifest.json"), "{\"name\": 3}").unwrap();
    let out = dadapt(dir.path(), &["gen-corpus"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.lines().filter(|l| l.starts_with("error: ")).count(), 1);
}

#[test]
fn missing_artifacts_exit_with_data_code() {
    let dir = tempfile::tempdir().unwrap();
    tiny_manifest(dir.path());
    let out = dadapt(dir.path(), &["train-adapter", "--lang", "z1"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn adding_a_stage0_language_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    tiny_manifest(dir.path());
    let out = dadapt(dir.path(), &["add-language", "--lang", "z1"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
