use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{KssError, Result};

/// Layer widths of the generator and the aid-discriminator. Input width `d`,
/// attribute count `M` and seen-class count `p` come from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorArch {
    /// Hidden widths of each extractor between `d` and `feature_dim`.
    pub extractor_hidden: Vec<usize>,
    pub feature_dim: usize,
    pub recognizer_hidden: Vec<usize>,
    /// Width of the per-attribute lift inside the reconstructor.
    pub lift_dim: usize,
    /// Backbone widths after the input; the last entry feeds all heads.
    pub disc_backbone: Vec<usize>,
    pub disc_head_hidden: Vec<usize>,
}

impl Default for GeneratorArch {
    fn default() -> Self {
        GeneratorArch {
            extractor_hidden: vec![104, 32],
            feature_dim: 16,
            recognizer_hidden: vec![32, 16],
            lift_dim: 64,
            disc_backbone: vec![256, 128, 64],
            disc_head_hidden: vec![16],
        }
    }
}

impl GeneratorArch {
    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 || self.lift_dim == 0 || self.disc_backbone.is_empty() {
            return Err(KssError::Config(
                "feature_dim, lift_dim and disc_backbone must be non-empty".into(),
            ));
        }
        let all = self
            .extractor_hidden
            .iter()
            .chain(&self.recognizer_hidden)
            .chain(&self.disc_backbone)
            .chain(&self.disc_head_hidden);
        if all.into_iter().any(|&w| w == 0) {
            return Err(KssError::Config("layer widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorHyperparams {
    pub lambda_ar: f64,
    pub lambda_av: f64,
    pub lambda_au: f64,
    pub lambda_r: f64,
    pub lambda_g: f64,
    /// Aid-discriminator pre-training epochs.
    pub pretrain_epochs: usize,
    pub pretrain_batch: usize,
    pub epochs: usize,
    /// Discrimination-head updates per generator update.
    pub disc_steps: usize,
    /// Samples drawn per seen class for each generator batch.
    pub per_class_batch: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
}

impl Default for GeneratorHyperparams {
    fn default() -> Self {
        GeneratorHyperparams {
            lambda_ar: 1.0,
            lambda_av: 0.5,
            lambda_au: 0.5,
            lambda_r: 4.0,
            lambda_g: 1.0,
            pretrain_epochs: 100,
            pretrain_batch: 256,
            epochs: 300,
            disc_steps: 2,
            per_class_batch: 256,
            learning_rate: 1e-3,
            weight_decay: 0.01,
        }
    }
}

impl GeneratorHyperparams {
    pub fn validate(&self) -> Result<()> {
        let lambdas = [
            self.lambda_ar,
            self.lambda_av,
            self.lambda_au,
            self.lambda_r,
            self.lambda_g,
        ];
        if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(KssError::Config("loss weights must be finite and ≥ 0".into()));
        }
        if self.disc_steps == 0 {
            return Err(KssError::Config("disc_steps must be ≥ 1".into()));
        }
        if self.per_class_batch == 0 || self.pretrain_batch == 0 {
            return Err(KssError::Config("batch sizes must be ≥ 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(KssError::Config("learning rate must be positive".into()));
        }
        Ok(())
    }

    /// Loss weights with components outside `losses` zeroed.
    pub fn weights(&self, losses: &LossSet) -> LossWeights {
        let pick = |on: bool, v: f64| if on { v } else { 0.0 };
        LossWeights {
            ar: pick(losses.ar, self.lambda_ar),
            av: pick(losses.av, self.lambda_av),
            au: pick(losses.au, self.lambda_au),
            r: pick(losses.r, self.lambda_r),
            g: pick(losses.g, self.lambda_g),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub ar: f64,
    pub av: f64,
    pub au: f64,
    pub r: f64,
    pub g: f64,
}

/// Which generator losses are active, plus whether the aid-discriminator is
/// pre-trained (`ad`). Parsed from lists like `ar,r,g,ad,au,av`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossSet {
    pub ar: bool,
    pub r: bool,
    pub g: bool,
    pub ad: bool,
    pub au: bool,
    pub av: bool,
}

impl LossSet {
    pub const ALL: LossSet = LossSet {
        ar: true,
        r: true,
        g: true,
        ad: true,
        au: true,
        av: true,
    };

    pub const NONE: LossSet = LossSet {
        ar: false,
        r: false,
        g: false,
        ad: false,
        au: false,
        av: false,
    };
}

impl Default for LossSet {
    fn default() -> Self {
        LossSet::ALL
    }
}

impl FromStr for LossSet {
    type Err = KssError;

    fn from_str(s: &str) -> Result<Self> {
        let mut set = LossSet::NONE;
        for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            match tok.to_ascii_lowercase().as_str() {
                "ar" => set.ar = true,
                "r" => set.r = true,
                "g" => set.g = true,
                "ad" => set.ad = true,
                "au" => set.au = true,
                "av" => set.av = true,
                "all" => set = LossSet::ALL,
                other => {
                    return Err(KssError::Config(format!(
                        "unknown loss {other:?} (expected ar, r, g, ad, au, av or all)"
                    )))
                }
            }
        }
        Ok(set)
    }
}

impl fmt::Display for LossSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [
            (self.ar, "ar"),
            (self.r, "r"),
            (self.g, "g"),
            (self.ad, "ad"),
            (self.au, "au"),
            (self.av, "av"),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, n)| *n)
        .collect();
        f.write_str(&names.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_settings() {
        let hp = GeneratorHyperparams::default();
        assert_eq!(hp.lambda_r, 4.0);
        assert_eq!(hp.lambda_ar, 1.0);
        assert_eq!(hp.lambda_g, 1.0);
        assert_eq!(hp.lambda_av, 0.5);
        assert_eq!(hp.lambda_au, 0.5);
        assert_eq!(hp.disc_steps, 2);
        assert_eq!(hp.per_class_batch, 256);
        assert_eq!(hp.pretrain_epochs, 100);
        assert_eq!(hp.epochs, 300);
        assert_eq!(hp.learning_rate, 1e-3);
    }

    #[test]
    fn loss_set_parsing() {
        let s: LossSet = "ar,r".parse().unwrap();
        assert!(s.ar && s.r && !s.g && !s.ad);
        assert_eq!(s.to_string(), "ar,r");
        assert_eq!("ar,r,g,ad,au,av".parse::<LossSet>().unwrap(), LossSet::ALL);
        assert!("ar,xx".parse::<LossSet>().is_err());
        let w = GeneratorHyperparams::default().weights(&s);
        assert_eq!((w.ar, w.r, w.g, w.au, w.av), (1.0, 4.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn negative_weight_rejected() {
        let hp = GeneratorHyperparams {
            lambda_g: -1.0,
            ..Default::default()
        };
        assert!(hp.validate().is_err());
    }
}
