use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::json;

fn kss_diag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kss-diag"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let cfg = json!({
        "seed": 3,
        "data": {
            "kind": "synthetic",
            "classes": 6,
            "attributes": 5,
            "dim": 8,
            "train_per_class": 30,
            "test_per_class": 10,
            "noise": 0.1,
            "unseen": 2
        },
        "output_dir": dir.join("out"),
        "architecture": {
            "extractor_hidden": [8],
            "feature_dim": 4,
            "recognizer_hidden": [4],
            "lift_dim": 8,
            "disc_backbone": [16, 8],
            "disc_head_hidden": [4]
        },
        "generator": { "pretrain_epochs": 2, "epochs": 2, "per_class_batch": 8 },
        "gate": { "em": { "components": 1 }, "projector": { "hidden": 8, "epochs": 2 } }
    });
    let path = dir.join("tiny.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = kss_diag(&["synth", "--config", s(&cfg), "--out", s(&out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let printed = String::from_utf8(o.stdout).unwrap();
        assert!(printed.trim().ends_with("config.json"));
    }
    for file in ["train.csv", "test.csv", "attributes.csv", "split.json"] {
        let a = fs::read(dir.path().join("a").join(file)).unwrap();
        let b = fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs");
    }
}

#[test]
fn missing_config_exits_2() {
    let o = kss_diag(&["e2e", "--config", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_loss_list_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let o = kss_diag(&["e2e", "--config", s(&cfg), "--losses", "ar,bogus"]);
    assert!(!o.status.success());
}

#[test]
fn e2e_then_mismatched_diagnose_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("run");
    let o = kss_diag(&["e2e", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let printed = String::from_utf8(o.stdout).unwrap();
    assert!(printed.starts_with("acc_s="), "{printed}");
    for file in ["discriminator.json", "generator.json", "gate.json", "predictions.csv", "report.json", "report.csv"] {
        assert!(out.join(file).exists(), "{file} missing");
    }

    // same checkpoints, different generator losses: the gate stage hash no longer matches
    let o = kss_diag(&["diagnose", "--config", s(&cfg), "--out", s(&out), "--losses", "ar,r"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));

    // a rerun of diagnose on matching settings succeeds
    let o = kss_diag(&["diagnose", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn diagnose_without_checkpoint_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let o = kss_diag(&["diagnose", "--config", s(&cfg), "--out", s(&dir.path().join("empty"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn skip_generator_runs_without_generator_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("skip");
    let o = kss_diag(&["e2e", "--config", s(&cfg), "--out", s(&out), "--skip-generator"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("gate.json").exists());
    assert!(!out.join("generator.json").exists());
}

#[test]
fn missing_donor_value_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    // attribute 2 is 1 only for the unseen class, so no seen sample can donate it
    fs::write(
        dir.path().join("attributes.csv"),
        "class,a1,a2,a3\n1,1,0,0\n2,0,0,1\n3,1,0,1\n4,1,1,0\n",
    )
    .unwrap();
    let mut train = String::new();
    let mut test = String::new();
    for class in 1..=3 {
        for i in 0..12 {
            let v = class as f64 + 0.01 * i as f64;
            train.push_str(&format!("{v},{},{},{class}\n", -v, v * 0.5));
            if i < 3 {
                test.push_str(&format!("{v},{},{},{class}\n", -v, v * 0.5));
            }
        }
    }
    test.push_str("9,9,9,4\n");
    fs::write(dir.path().join("train.csv"), train).unwrap();
    fs::write(dir.path().join("test.csv"), test).unwrap();
    let cfg = json!({
        "seed": 0,
        "data": { "kind": "files", "train": "train.csv", "test": "test.csv", "attributes": "attributes.csv" },
        "split": { "group": "custom", "seen": [1, 2, 3], "unseen": [4] },
        "output_dir": dir.path().join("out"),
        "architecture": {
            "extractor_hidden": [4],
            "feature_dim": 2,
            "recognizer_hidden": [2],
            "lift_dim": 4,
            "disc_backbone": [8],
            "disc_head_hidden": [2]
        },
        "generator": { "pretrain_epochs": 1, "epochs": 1, "per_class_batch": 4 },
        "gate": { "em": { "components": 1 }, "projector": { "hidden": 4, "epochs": 1 } }
    });
    let path = dir.path().join("donor.json");
    fs::write(&path, cfg.to_string()).unwrap();
    let o = kss_diag(&["e2e", "--config", s(&path)]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}
