//! Attribute projectors: one binary classifier per attribute mapping a
//! sample to the probability that the attribute is present.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KssError, Result};
use crate::generator::sub_seed;
use crate::nn::{paired_cross_entropy, sigmoid, Activation, AdamW, AdamWConfig, DenseStack, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectorStage {
    Ap1,
    Ap2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectorConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
}

impl Default for ProjectorConfig {
    fn default() -> Self {
        ProjectorConfig {
            hidden: 64,
            epochs: 30,
            batch: 256,
            learning_rate: 1e-3,
            weight_decay: 0.01,
        }
    }
}

/// Classifier of a single attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttributeNet {
    /// Two-logit network; `p = softmax(logits)[1]`.
    Network(DenseStack),
    /// Fixed probability, used when the training pool shows one value only.
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeProjector {
    pub stage: ProjectorStage,
    pub nets: Vec<AttributeNet>,
}

impl AttributeProjector {
    pub fn num_attributes(&self) -> usize {
        self.nets.len()
    }

    /// `n × M` attribute probabilities.
    pub fn project(&self, x: &Matrix) -> Result<Matrix> {
        let (n, m) = (x.rows(), self.nets.len());
        let mut out = Matrix::zeros(n, m);
        for (k, net) in self.nets.iter().enumerate() {
            match net {
                AttributeNet::Network(stack) => {
                    let logits = stack.forward(x)?;
                    for i in 0..n {
                        out[(i, k)] = sigmoid(logits[(i, 1)] - logits[(i, 0)]);
                    }
                }
                AttributeNet::Constant(p) => (0..n).for_each(|i| out[(i, k)] = *p),
            }
        }
        Ok(out)
    }

    /// Projections thresholded at 0.5 (strictly greater means present).
    pub fn binarize(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.project(x)?.map(|p| (p > 0.5) as u8 as f64))
    }
}

/// Trains one classifier per attribute on `(x, z)` by minimizing the mean
/// two-class cross-entropy.
pub fn train_ap<R: Rng>(
    stage: ProjectorStage,
    x: &Matrix,
    z: &Matrix,
    config: &ProjectorConfig,
    seed: u64,
    rng: &mut R,
) -> Result<AttributeProjector> {
    if x.rows() == 0 {
        return Err(KssError::EmptyBatch("train_ap"));
    }
    if z.rows() != x.rows() {
        return Err(KssError::shape("projector targets", x.rows(), z.rows()));
    }
    if config.batch == 0 || config.hidden == 0 {
        return Err(KssError::Config("projector batch and hidden width must be ≥ 1".into()));
    }
    let n = x.rows();
    let adam = AdamWConfig {
        learning_rate: config.learning_rate,
        weight_decay: config.weight_decay,
        ..Default::default()
    };
    let mut nets = Vec::with_capacity(z.cols());
    for k in 0..z.cols() {
        let column: Vec<f64> = (0..n).map(|i| z[(i, k)]).collect();
        let ones = column.iter().filter(|&&v| v == 1.0).count();
        if ones == 0 || ones == n {
            let p = if ones == n { 1.0 } else { 0.0 };
            log::warn!("{stage:?}: attribute {k} takes a single value in the training pool; using a constant predictor");
            nets.push(AttributeNet::Constant(p));
            continue;
        }
        let mut stack = DenseStack::new(
            &[x.cols(), config.hidden, 2],
            Activation::LeakyRelu,
            Activation::Identity,
            sub_seed(seed, 4000 + k as u64),
        )?;
        let mut opt = AdamW::new(adam, &stack);
        let mut order: Vec<usize> = (0..n).collect();
        for epoch in 0..config.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(config.batch) {
                let xb = x.select_rows(chunk);
                let tb = Matrix::from_vec(chunk.len(), 1, chunk.iter().map(|&i| column[i]).collect())?;
                let trace = stack.forward_trace(&xb)?;
                let (loss, grad) = paired_cross_entropy(trace.output(), &tb)?;
                if !loss.is_finite() {
                    return Err(KssError::NonFinite(format!(
                        "{stage:?} attribute {k} loss at epoch {epoch}"
                    )));
                }
                let (grads, _) = stack.backward(&trace, &grad)?;
                opt.step(&mut stack, &grads)?;
            }
        }
        nets.push(AttributeNet::Network(stack));
    }
    Ok(AttributeProjector { stage, nets })
}
