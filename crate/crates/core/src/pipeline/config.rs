use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{SplitSpec, SynthConfig};
use crate::error::{KssError, Result};
use crate::gate::GateConfig;
use crate::generator::{GeneratorArch, GeneratorHyperparams, LossSet};

/// Where samples and attributes come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    /// Headerless sample CSVs plus an attribute matrix CSV. Relative paths
    /// are resolved against the config file's directory.
    Files {
        train: PathBuf,
        test: PathBuf,
        attributes: PathBuf,
    },
    /// Data drawn by the synthetic generator from the run seed.
    Synthetic(SynthConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub data: DataSource,
    /// Required for file data; synthetic data carries its own split.
    pub split: Option<SplitSpec>,
    pub output_dir: PathBuf,
    /// Z-score with training statistics.
    pub normalize: bool,
    pub architecture: GeneratorArch,
    pub generator: GeneratorHyperparams,
    pub gate: GateConfig,
    #[serde(with = "loss_set_string")]
    pub losses: LossSet,
    /// Train the gate without generated pools.
    pub skip_generator: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            data: DataSource::Synthetic(SynthConfig::default()),
            split: None,
            output_dir: PathBuf::from("kss-out"),
            normalize: true,
            architecture: GeneratorArch::default(),
            generator: GeneratorHyperparams::default(),
            gate: GateConfig::default(),
            losses: LossSet::ALL,
            skip_generator: false,
        }
    }
}

mod loss_set_string {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::generator::LossSet;

    pub fn serialize<S: Serializer>(set: &LossSet, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&set.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<LossSet, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

impl PipelineConfig {
    /// Reads a JSON config; relative data paths become relative to the
    /// config file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| KssError::io(path, e))?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| KssError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let DataSource::Files { train, test, attributes } = &mut cfg.data {
            for p in [train, test, attributes] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.architecture.validate()?;
        self.generator.validate()?;
        if let DataSource::Files { train, test, attributes } = &self.data {
            for p in [train, test, attributes] {
                if !p.exists() {
                    return Err(KssError::Config(format!("data file {} does not exist", p.display())));
                }
            }
            if self.split.is_none() {
                return Err(KssError::Config("file data needs a \"split\" entry".into()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Hash of everything that shapes the data.
    pub fn data_hash(&self) -> String {
        hash_parts(&[&self.data, &self.split, &self.normalize, &self.seed_for_data()])
    }

    fn seed_for_data(&self) -> Option<u64> {
        matches!(self.data, DataSource::Synthetic(_)).then_some(self.seed)
    }

    /// Inputs of aid-discriminator pre-training.
    pub fn pretrain_hash(&self) -> String {
        let hp = &self.generator;
        hash_parts(&[
            &self.data_hash(),
            &self.seed,
            &self.architecture,
            &(hp.pretrain_epochs, hp.pretrain_batch, hp.learning_rate, hp.weight_decay),
            &self.losses.ad,
        ])
    }

    /// Inputs of generator training.
    pub fn generator_hash(&self) -> String {
        hash_parts(&[&self.pretrain_hash(), &self.generator, &self.losses.to_string()])
    }

    /// Inputs of gate training.
    pub fn gate_hash(&self) -> String {
        let upstream = if self.skip_generator {
            self.data_hash()
        } else {
            self.generator_hash()
        };
        hash_parts(&[&upstream, &self.seed, &self.gate, &self.skip_generator])
    }

    /// Hash of the whole config except the output directory.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        hash_parts(&[&c])
    }
}

fn hash_parts(parts: &[&dyn erased::Json]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.json().as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

mod erased {
    pub trait Json {
        fn json(&self) -> String;
    }

    impl<T: serde::Serialize> Json for T {
        fn json(&self) -> String {
            serde_json::to_string(self).expect("config values serialize")
        }
    }
}
