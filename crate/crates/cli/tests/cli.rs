use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
dims = [30, 30, 30]
source_subjects = [23, 23]
transfer_subjects = [8, 8]
min_dist = 5.0
top_k = 4
streams = 2
patch_size = 9
conv_channels = [2, 2, 4, 4, 4]
fc_units = [8, 8, 8]
head_units = [8, 8, 8]
epochs = 2
finetune_epochs = 2
sweep_streams = [1, 2]
sweep_patch_sizes = [9]

[[regions]]
center = [9.5, 14.5, 14.5]
radius = 4.0
magnitude = 0.6
kind = "intensity-shift"

[[regions]]
center = [19.5, 14.5, 14.5]
radius = 4.0
magnitude = 0.6
kind = "texture-roughening"
"#;

fn landmark(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_landmark"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("tiny.toml");
    std::fs::write(&path, TINY).unwrap();
    path
}

#[test]
fn unknown_verb_is_rejected() {
    let out = Command::new(env!("CARGO_BIN_EXE_landmark")).arg("frobnicate").output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn invalid_config_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "source_split = [0.5, 0.5, 0.5]\n").unwrap();
    let out = landmark(&["synth"], &cfg, &dir.path().join("run"));
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    std::fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let out = landmark(&["synth"], &cfg, &dir.path().join("run"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn landmarks_before_synth_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = landmark(&["landmarks"], &cfg, &dir.path().join("run"));
    assert!(!out.status.success());
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn tiny_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let run = dir.path().join("run");
    for verb in [&["synth"][..], &["landmarks"], &["patches"], &["train"], &["finetune"], &["evaluate"], &["report"]] {
        let out = landmark(verb, &cfg, &run);
        assert!(out.status.success(), "{verb:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    for file in [
        "splits.json",
        "landmarks/landmarks.csv",
        "models/source.ndnn",
        "models/transfer.ndnn",
        "report.md",
        "ledger.jsonl",
    ] {
        assert!(run.join(file).exists(), "missing {file}");
    }
    let ledger = std::fs::read_to_string(run.join("ledger.jsonl")).unwrap();
    assert_eq!(ledger.lines().count(), 7);
    assert!(!run.join(".lock").exists());
}
