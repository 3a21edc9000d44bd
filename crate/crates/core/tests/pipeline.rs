use std::fs;
use std::path::Path;

use kss_core::data::SynthConfig;
use kss_core::generator::{GeneratorArch, LossSet};
use kss_core::pipeline::{self, DataSource, PipelineConfig};
use kss_core::KssError;

fn tiny(out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        seed: 11,
        data: DataSource::Synthetic(SynthConfig {
            dim: 8,
            train_per_class: 30,
            test_per_class: 10,
            ..SynthConfig::default()
        }),
        output_dir: out.to_path_buf(),
        architecture: GeneratorArch {
            extractor_hidden: vec![8],
            feature_dim: 4,
            recognizer_hidden: vec![4],
            lift_dim: 8,
            disc_backbone: vec![16, 8],
            disc_head_hidden: vec![4],
        },
        ..PipelineConfig::default()
    };
    cfg.generator.pretrain_epochs = 2;
    cfg.generator.epochs = 2;
    cfg.generator.per_class_batch = 8;
    cfg.gate.em.components = 1;
    cfg.gate.projector.hidden = 8;
    cfg.gate.projector.epochs = 2;
    cfg
}

#[test]
fn exported_files_reproduce_the_in_memory_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(&dir.path().join("memory"));
    let direct = pipeline::cmd_e2e(&cfg).unwrap();

    let mut export = cfg.clone();
    export.output_dir = dir.path().join("files");
    let path = pipeline::cmd_synth(&export).unwrap();
    let files = PipelineConfig::load(&path).unwrap();
    assert!(matches!(files.data, DataSource::Files { .. }));
    let from_files = pipeline::cmd_e2e(&files).unwrap();

    assert_eq!(direct.acc_per_class, from_files.acc_per_class);
    assert_eq!(direct.confusion, from_files.confusion);
    assert_eq!(direct.path_counts, from_files.path_counts);
}

#[test]
fn gate_checkpoint_from_other_data_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    pipeline::cmd_e2e(&cfg).unwrap();

    let mut other = cfg.clone();
    if let DataSource::Synthetic(s) = &mut other.data {
        s.unseen = 1;
    }
    let err = pipeline::cmd_diagnose(&other).unwrap_err();
    assert!(matches!(err, KssError::HashMismatch { .. }), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn generator_stage_refuses_changed_pretraining() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    pipeline::cmd_pretrain(&cfg).unwrap();
    let mut changed = cfg.clone();
    changed.generator.pretrain_epochs = 3;
    let err = pipeline::cmd_train_generator(&changed).unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err}");
    pipeline::cmd_train_generator(&cfg).unwrap();
}

#[test]
fn unknown_checkpoint_version_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    pipeline::cmd_e2e(&cfg).unwrap();
    let path = dir.path().join("gate.json");
    let mut value: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    value["version"] = serde_json::json!(99);
    fs::write(&path, value.to_string()).unwrap();
    let err = pipeline::cmd_diagnose(&cfg).unwrap_err();
    assert!(matches!(err, KssError::Checkpoint { .. }), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn runs_are_deterministic_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let a = tiny(&dir.path().join("a"));
    let b = tiny(&dir.path().join("b"));
    pipeline::cmd_e2e(&a).unwrap();
    pipeline::cmd_e2e(&b).unwrap();
    for file in ["report.json", "predictions.csv", "gate.json"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(file)).unwrap(),
            fs::read(dir.path().join("b").join(file)).unwrap(),
            "{file}"
        );
    }
    let mut c = tiny(&dir.path().join("c"));
    c.seed = 12;
    pipeline::cmd_e2e(&c).unwrap();
    assert_ne!(
        fs::read(dir.path().join("a/gate.json")).unwrap(),
        fs::read(dir.path().join("c/gate.json")).unwrap()
    );
}

#[test]
fn pretraining_is_skipped_without_the_aid_loss() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.losses = "ar,r,g".parse::<LossSet>().unwrap();
    pipeline::cmd_e2e(&cfg).unwrap();
    assert!(dir.path().join("report.json").exists());
}
