//! End-to-end orchestration: data preparation, stage commands and
//! checkpoints.

mod config;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use config::{DataSource, PipelineConfig};

use crate::data::{
    synth_generate, zscore_apply, AttributeMatrix, ClassId, LabeledDataset, SplitSpec, SplitTag, ZScoreStats,
};
use crate::error::{KssError, Result};
use crate::eval::{build_report, export_projections, export_report, DiagnosisReport, ReportFormat};
use crate::gate::{train_gate, GateModel, GatePools};
use crate::generator::{
    generate_samples, pretrain_aid_discriminator, sub_seed, train_kss_g, AidDiscriminator, DonorPool,
    Generator, GeneratorHyperparams, GeneratorTrainingReport, LossSet, PretrainEpoch, TrainingContext,
};
use crate::nn::Matrix;

pub const CHECKPOINT_VERSION: u32 = 1;

pub const DISCRIMINATOR_FILE: &str = "discriminator.json";
pub const GENERATOR_FILE: &str = "generator.json";
pub const GATE_FILE: &str = "gate.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const REPORT_CSV_FILE: &str = "report.csv";
pub const PROJECTIONS_FILE: &str = "projections.csv";
pub const PRETRAIN_LOG_FILE: &str = "pretrain_log.csv";
pub const GENERATOR_LOG_FILE: &str = "generator_log.csv";

/// Loaded, split and normalized data of one run.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub matrix: AttributeMatrix,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub normalization: Option<ZScoreStats>,
}

pub fn prepare_data(cfg: &PipelineConfig) -> Result<PreparedData> {
    let (matrix, train, test) = match &cfg.data {
        DataSource::Synthetic(s) => {
            let d = synth_generate(s, cfg.seed)?;
            (d.matrix, d.train, d.test)
        }
        DataSource::Files { train, test, attributes } => {
            let split = cfg
                .split
                .clone()
                .ok_or_else(|| KssError::Config("file data needs a split".into()))?
                .filled()?;
            let matrix = AttributeMatrix::load_csv(attributes)?.with_split(&split)?;
            let all = LabeledDataset::load_csv(train, &matrix, SplitTag::Test)?;
            let train = all.filter_classes(&matrix.seen_ids(), SplitTag::Train, &matrix)?;
            let test = LabeledDataset::load_csv(test, &matrix, SplitTag::Test)?;
            (matrix, train, test)
        }
    };
    if train.is_empty() {
        return Err(KssError::Config("training set has no samples of seen classes".into()));
    }
    let (train, test, normalization) = if cfg.normalize {
        let stats = ZScoreStats::fit(train.samples())?;
        let train = zscore_apply(&stats, &train)?;
        let test = if test.is_empty() { test } else { zscore_apply(&stats, &test)? };
        (train, test, Some(stats))
    } else {
        (train, test, None)
    };
    Ok(PreparedData {
        matrix,
        train,
        test,
        normalization,
    })
}

fn stage_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sub_seed(seed, stream))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorCheckpoint {
    pub version: u32,
    pub matrix_hash: String,
    pub stage_hash: String,
    pub seen: Vec<ClassId>,
    pub discriminator: AidDiscriminator,
    pub log: Vec<PretrainEpoch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorCheckpoint {
    pub version: u32,
    pub matrix_hash: String,
    pub stage_hash: String,
    pub hyperparameters: GeneratorHyperparams,
    pub losses: String,
    pub generator: Generator,
    /// Aid-discriminator with the trained discrimination head.
    pub discriminator: AidDiscriminator,
    pub report: GeneratorTrainingReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateCheckpoint {
    pub version: u32,
    pub matrix_hash: String,
    pub stage_hash: String,
    pub normalization: Option<ZScoreStats>,
    pub skip_generator: bool,
    pub fake_seen_counts: BTreeMap<ClassId, usize>,
    pub fake_unseen_counts: BTreeMap<ClassId, usize>,
    pub gate: GateModel,
}

trait Checkpoint {
    fn version(&self) -> u32;
    fn matrix_hash(&self) -> &str;
    fn stage_hash(&self) -> &str;
}

macro_rules! impl_checkpoint {
    ($($t:ty),*) => {$(
        impl Checkpoint for $t {
            fn version(&self) -> u32 { self.version }
            fn matrix_hash(&self) -> &str { &self.matrix_hash }
            fn stage_hash(&self) -> &str { &self.stage_hash }
        }
    )*};
}
impl_checkpoint!(DiscriminatorCheckpoint, GeneratorCheckpoint, GateCheckpoint);

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| KssError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| KssError::io(path, e))
}

/// Reads a checkpoint and refuses it unless version, attribute-matrix hash
/// and stage hash all match the current run.
fn load_checkpoint<T: DeserializeOwned + Checkpoint>(
    path: &Path,
    matrix: &AttributeMatrix,
    stage_hash: &str,
) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| KssError::io(path, e))?;
    let ckpt: T = serde_json::from_str(&text).map_err(|e| KssError::Checkpoint {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if ckpt.version() != CHECKPOINT_VERSION {
        return Err(KssError::Checkpoint {
            path: path.to_path_buf(),
            message: format!("version {} (expected {CHECKPOINT_VERSION})", ckpt.version()),
        });
    }
    let current = matrix.content_hash();
    if ckpt.matrix_hash() != current {
        return Err(KssError::HashMismatch {
            what: "attribute matrix",
            stored: ckpt.matrix_hash().to_string(),
            current,
        });
    }
    if ckpt.stage_hash() != stage_hash {
        return Err(KssError::HashMismatch {
            what: "stage configuration",
            stored: ckpt.stage_hash().to_string(),
            current: stage_hash.to_string(),
        });
    }
    Ok(ckpt)
}

fn out_dir(cfg: &PipelineConfig) -> Result<PathBuf> {
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| KssError::io(&dir, e))?;
    Ok(dir)
}

/// Pre-trains the aid-discriminator and writes its checkpoint and log.
pub fn cmd_pretrain(cfg: &PipelineConfig) -> Result<DiscriminatorCheckpoint> {
    let data = prepare_data(cfg)?;
    let dir = out_dir(cfg)?;
    let seen = data.matrix.seen_ids();
    let mut disc = AidDiscriminator::new(
        data.train.dim(),
        seen.len(),
        data.matrix.num_attributes(),
        &cfg.architecture,
        sub_seed(cfg.seed, 10),
    )?;
    let log = if cfg.losses.ad {
        let mut rng = stage_rng(cfg.seed, 11);
        pretrain_aid_discriminator(&mut disc, &data.train, &data.matrix, &cfg.generator, &mut rng)?
    } else {
        log::warn!("aid-discriminator pre-training disabled by the loss set");
        Vec::new()
    };
    if let Some(last) = log.last() {
        log::info!("pretrain: final loss {:.5}, train accuracy {:.4}", last.loss, last.accuracy);
    }
    let mut csv = String::from("epoch,loss,class_loss,attribute_loss,accuracy\n");
    for e in &log {
        let _ = writeln!(csv, "{},{:?},{:?},{:?},{:?}", e.epoch, e.loss, e.class_loss, e.attribute_loss, e.accuracy);
    }
    write_text(&dir.join(PRETRAIN_LOG_FILE), &csv)?;
    let ckpt = DiscriminatorCheckpoint {
        version: CHECKPOINT_VERSION,
        matrix_hash: data.matrix.content_hash(),
        stage_hash: cfg.pretrain_hash(),
        seen,
        discriminator: disc,
        log,
    };
    write_json(&dir.join(DISCRIMINATOR_FILE), &ckpt)?;
    Ok(ckpt)
}

/// Trains the generator against the pre-trained aid-discriminator.
pub fn cmd_train_generator(cfg: &PipelineConfig) -> Result<GeneratorCheckpoint> {
    let data = prepare_data(cfg)?;
    let dir = out_dir(cfg)?;
    let disc_ckpt: DiscriminatorCheckpoint =
        load_checkpoint(&dir.join(DISCRIMINATOR_FILE), &data.matrix, &cfg.pretrain_hash())?;
    let mut disc = disc_ckpt.discriminator;
    let ctx = TrainingContext::new(&data.train, &data.matrix)?;
    let mut gen = Generator::new(
        data.train.dim(),
        data.matrix.num_attributes(),
        &cfg.architecture,
        sub_seed(cfg.seed, 20),
    )?;
    let weights = cfg.generator.weights(&cfg.losses);
    let mut rng = stage_rng(cfg.seed, 21);
    let report = train_kss_g(&mut gen, &mut disc, &ctx, &cfg.generator, &weights, &mut rng)?;
    if let Some(last) = report.epochs.last() {
        log::info!(
            "generator: final total {:.5} (r {:.5}, ar {:.4}, g {:.4})",
            last.losses.total,
            last.losses.r,
            last.losses.ar,
            last.losses.g
        );
    }
    let mut csv = String::from("epoch,ar,av,au,r,g,total,disc_loss\n");
    for e in &report.epochs {
        let l = &e.losses;
        let _ = writeln!(
            csv,
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            e.epoch, l.ar, l.av, l.au, l.r, l.g, l.total, e.disc_loss
        );
    }
    write_text(&dir.join(GENERATOR_LOG_FILE), &csv)?;
    let ckpt = GeneratorCheckpoint {
        version: CHECKPOINT_VERSION,
        matrix_hash: data.matrix.content_hash(),
        stage_hash: cfg.generator_hash(),
        hyperparameters: cfg.generator.clone(),
        losses: cfg.losses.to_string(),
        generator: gen,
        discriminator: disc,
        report,
    };
    write_json(&dir.join(GENERATOR_FILE), &ckpt)?;
    Ok(ckpt)
}

/// Generated pools for the gate: `N̂^u` fake unseen samples split over the
/// unseen classes and `N̂^s_j` fake samples per seen class.
pub fn generate_pools(
    gen: &Generator,
    data: &PreparedData,
    cfg: &PipelineConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(GatePools, BTreeMap<ClassId, usize>, BTreeMap<ClassId, usize>)> {
    let matrix = &data.matrix;
    let seen = matrix.seen_ids();
    let unseen = matrix.unseen_ids();
    let pool = DonorPool::new(&data.train);
    let unseen_counts: BTreeMap<ClassId, usize> = unseen
        .iter()
        .copied()
        .zip(cfg.gate.unseen_counts(data.train.len(), seen.len(), &unseen))
        .collect();
    let mut xs = Vec::new();
    let mut zs = Vec::new();
    for &u in &unseen {
        let n = unseen_counts[&u];
        xs.push(generate_samples(gen, &data.train, matrix, &pool, u, n, rng)?);
        let row = matrix.row(u).expect("unseen class in matrix");
        zs.push(Matrix::from_vec(n, row.len(), row.repeat(n))?);
    }
    let fake_unseen = if xs.is_empty() {
        None
    } else {
        let xr: Vec<&Matrix> = xs.iter().collect();
        let zr: Vec<&Matrix> = zs.iter().collect();
        Some((Matrix::vstack(&xr)?, Matrix::vstack(&zr)?))
    };
    let mut seen_counts = BTreeMap::new();
    let mut fake_seen = BTreeMap::new();
    for &j in &seen {
        let n = cfg.gate.seen_count(data.train.count_of(j));
        seen_counts.insert(j, n);
        fake_seen.insert(j, generate_samples(gen, &data.train, matrix, &pool, j, n, rng)?);
    }
    Ok((GatePools { fake_unseen, fake_seen }, seen_counts, unseen_counts))
}

/// Trains the gate, with generated pools unless the generator is skipped.
pub fn cmd_train_gate(cfg: &PipelineConfig) -> Result<GateCheckpoint> {
    let data = prepare_data(cfg)?;
    let dir = out_dir(cfg)?;
    if data.matrix.unseen_ids().is_empty() {
        log::warn!("no unseen classes configured: the gate uses fallback limits");
    }
    let (pools, seen_counts, unseen_counts) = if cfg.skip_generator {
        (GatePools::default(), BTreeMap::new(), BTreeMap::new())
    } else {
        let gen_ckpt: GeneratorCheckpoint =
            load_checkpoint(&dir.join(GENERATOR_FILE), &data.matrix, &cfg.generator_hash())?;
        let mut rng = stage_rng(cfg.seed, 31);
        generate_pools(&gen_ckpt.generator, &data, cfg, &mut rng)?
    };
    let mut rng = stage_rng(cfg.seed, 32);
    let gate = train_gate(&data.train, &data.matrix, &pools, &cfg.gate, sub_seed(cfg.seed, 30), &mut rng)?;
    let ckpt = GateCheckpoint {
        version: CHECKPOINT_VERSION,
        matrix_hash: data.matrix.content_hash(),
        stage_hash: cfg.gate_hash(),
        normalization: data.normalization.clone(),
        skip_generator: cfg.skip_generator,
        fake_seen_counts: seen_counts,
        fake_unseen_counts: unseen_counts,
        gate,
    };
    write_json(&dir.join(GATE_FILE), &ckpt)?;
    Ok(ckpt)
}

/// Diagnoses the test set and writes predictions, report and projections.
pub fn cmd_diagnose(cfg: &PipelineConfig) -> Result<DiagnosisReport> {
    let data = prepare_data(cfg)?;
    let dir = out_dir(cfg)?;
    let ckpt: GateCheckpoint = load_checkpoint(&dir.join(GATE_FILE), &data.matrix, &cfg.gate_hash())?;
    let x = &data.test;
    let diagnoses = ckpt.gate.diagnose(x.samples())?;
    let predicted: Vec<ClassId> = diagnoses.iter().map(|d| d.class).collect();
    let paths: Vec<_> = diagnoses.iter().map(|d| d.path).collect();
    let mut csv = String::from("sample_index,true_label,predicted_label,path\n");
    for (i, (t, d)) in x.labels().iter().zip(&diagnoses).enumerate() {
        let _ = writeln!(csv, "{i},{t},{},{}", d.class, d.path);
    }
    write_text(&dir.join(PREDICTIONS_FILE), &csv)?;
    let report = build_report(x.labels(), &predicted, &data.matrix, &paths, &cfg.config_hash())?;
    export_report(&report, dir.join(REPORT_JSON_FILE), ReportFormat::Json)?;
    export_report(&report, dir.join(REPORT_CSV_FILE), ReportFormat::Csv)?;
    if !x.is_empty() {
        export_projections(&ckpt.gate.ap2, x.samples(), x.labels(), dir.join(PROJECTIONS_FILE))?;
    }
    log::info!(
        "acc_s {:.4} acc_u {:.4} har {:.4} over {} samples",
        report.acc_s,
        report.acc_u,
        report.har,
        x.len()
    );
    Ok(report)
}

/// Writes the synthetic dataset of `cfg` as files plus a config that runs
/// the pipeline on them.
pub fn cmd_synth(cfg: &PipelineConfig) -> Result<PathBuf> {
    let DataSource::Synthetic(s) = &cfg.data else {
        return Err(KssError::Config("synth needs a synthetic data source".into()));
    };
    let data = synth_generate(s, cfg.seed)?;
    let dir = out_dir(cfg)?;
    data.train.write_csv(dir.join("train.csv"))?;
    data.test.write_csv(dir.join("test.csv"))?;
    data.matrix.write_csv(dir.join("attributes.csv"))?;
    write_text(&dir.join("split.json"), &(serde_json::to_string_pretty(&data.split)? + "\n"))?;
    let files = PipelineConfig {
        data: DataSource::Files {
            train: "train.csv".into(),
            test: "test.csv".into(),
            attributes: "attributes.csv".into(),
        },
        split: Some(SplitSpec::custom(
            data.split.group.clone(),
            data.split.seen.clone(),
            data.split.unseen.clone(),
        )),
        ..cfg.clone()
    };
    let path = dir.join("config.json");
    write_text(&path, &(files.to_json()? + "\n"))?;
    Ok(path)
}

/// Runs every stage in order through their checkpoints.
pub fn cmd_e2e(cfg: &PipelineConfig) -> Result<DiagnosisReport> {
    if !cfg.skip_generator {
        cmd_pretrain(cfg)?;
        cmd_train_generator(cfg)?;
    }
    cmd_train_gate(cfg)?;
    cmd_diagnose(cfg)
}

/// Applies command-line overrides.
pub fn apply_overrides(
    cfg: &mut PipelineConfig,
    seed: Option<u64>,
    out: Option<PathBuf>,
    losses: Option<LossSet>,
    skip_generator: bool,
) {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    if let Some(l) = losses {
        cfg.losses = l;
    }
    if skip_generator {
        cfg.skip_generator = true;
    }
}
