//! Networks of the generator and the aid-discriminator.

use serde::{Deserialize, Serialize};

use super::GeneratorArch;
use crate::error::{KssError, Result};
use crate::nn::{
    paired_cross_entropy, Activation, DenseStack, ForwardTrace, Matrix, StackGrads,
};

/// `n × M × d̂` block of per-attribute latent features, stored as one
/// `n × d̂` matrix per attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGroup {
    blocks: Vec<Matrix>,
}

impl FeatureGroup {
    pub fn new(blocks: Vec<Matrix>) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| KssError::Config("feature group needs at least one attribute".into()))?
            .shape();
        if let Some((k, b)) = blocks.iter().enumerate().find(|(_, b)| b.shape() != first) {
            return Err(KssError::shape(
                format!("feature block {k}"),
                format!("{first:?}"),
                format!("{:?}", b.shape()),
            ));
        }
        Ok(FeatureGroup { blocks })
    }

    pub fn zeros(n: usize, m: usize, dim: usize) -> Self {
        FeatureGroup {
            blocks: vec![Matrix::zeros(n, dim); m],
        }
    }

    /// `(n, M, d̂)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.blocks[0].rows(), self.blocks.len(), self.blocks[0].cols())
    }

    pub fn len(&self) -> usize {
        self.blocks[0].rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_attributes(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, k: usize) -> &Matrix {
        &self.blocks[k]
    }

    pub fn block_mut(&mut self, k: usize) -> &mut Matrix {
        &mut self.blocks[k]
    }

    pub fn blocks(&self) -> &[Matrix] {
        &self.blocks
    }

    /// Feature of sample `i` for attribute `k`.
    pub fn feature(&self, i: usize, k: usize) -> &[f64] {
        self.blocks[k].row(i)
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureGroup {
        FeatureGroup {
            blocks: self.blocks.iter().map(|b| b.select_rows(rows)).collect(),
        }
    }

    /// Concatenates groups along the sample axis.
    pub fn concat(parts: &[&FeatureGroup]) -> Result<FeatureGroup> {
        let m = parts
            .first()
            .ok_or_else(|| KssError::Config("concat of zero feature groups".into()))?
            .num_attributes();
        let blocks = (0..m)
            .map(|k| {
                let ps: Vec<&Matrix> = parts.iter().map(|p| &p.blocks[k]).collect();
                Matrix::vstack(&ps)
            })
            .collect::<Result<Vec<_>>>()?;
        FeatureGroup::new(blocks)
    }

    pub(crate) fn add_scaled(&mut self, other: &FeatureGroup, factor: f64) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            a.as_mut_slice()
                .iter_mut()
                .zip(b.as_slice())
                .for_each(|(x, y)| *x += factor * y);
        }
    }
}

/// `M` independent extractors `d → d̂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractorBank {
    pub extractors: Vec<DenseStack>,
}

impl ExtractorBank {
    pub fn new(input: usize, attributes: usize, arch: &GeneratorArch, seed: u64) -> Result<Self> {
        let mut dims = vec![input];
        dims.extend(&arch.extractor_hidden);
        dims.push(arch.feature_dim);
        let extractors = (0..attributes)
            .map(|k| {
                DenseStack::new(
                    &dims,
                    Activation::LeakyRelu,
                    Activation::Identity,
                    sub_seed(seed, k as u64),
                )
            })
            .collect::<Result<_>>()?;
        Ok(ExtractorBank { extractors })
    }

    pub fn num_attributes(&self) -> usize {
        self.extractors.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.extractors[0].output_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.extractors[0].input_dim()
    }

    pub fn extract(&self, batch: &Matrix) -> Result<FeatureGroup> {
        let blocks = self
            .extractors
            .iter()
            .map(|e| e.forward(batch))
            .collect::<Result<Vec<_>>>()?;
        FeatureGroup::new(blocks)
    }

    pub fn extract_traced(&self, batch: &Matrix) -> Result<(FeatureGroup, Vec<ForwardTrace>)> {
        let traces = self
            .extractors
            .iter()
            .map(|e| e.forward_trace(batch))
            .collect::<Result<Vec<_>>>()?;
        let blocks = traces.iter().map(|t| t.output().clone()).collect();
        Ok((FeatureGroup::new(blocks)?, traces))
    }

    /// Parameter gradients from feature gradients of a traced extraction.
    pub fn backward(&self, traces: &[ForwardTrace], grads: &FeatureGroup) -> Result<Vec<StackGrads>> {
        self.extractors
            .iter()
            .zip(traces)
            .zip(grads.blocks())
            .map(|((e, t), g)| e.backward(t, g).map(|(p, _)| p))
            .collect()
    }
}

/// `M` independent two-logit attribute recognizers `d̂ → 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognizerBank {
    pub recognizers: Vec<DenseStack>,
}

/// Result of [`RecognizerBank::loss`].
pub struct RecognizerLoss {
    pub loss: f64,
    pub param_grads: Vec<StackGrads>,
    pub feature_grads: FeatureGroup,
}

impl RecognizerBank {
    pub fn new(attributes: usize, arch: &GeneratorArch, seed: u64) -> Result<Self> {
        let mut dims = vec![arch.feature_dim];
        dims.extend(&arch.recognizer_hidden);
        dims.push(2);
        let recognizers = (0..attributes)
            .map(|k| {
                DenseStack::new(
                    &dims,
                    Activation::LeakyRelu,
                    Activation::Identity,
                    sub_seed(seed, 1000 + k as u64),
                )
            })
            .collect::<Result<_>>()?;
        Ok(RecognizerBank { recognizers })
    }

    /// Mean over samples and attributes of the two-class cross-entropy of
    /// each recognizer on its own feature block.
    pub fn loss(&self, features: &FeatureGroup, targets: &Matrix) -> Result<RecognizerLoss> {
        let (n, m, _) = features.shape();
        if m != self.recognizers.len() || targets.shape() != (n, m) {
            return Err(KssError::shape(
                "recognizer targets",
                format!("{n}×{}", self.recognizers.len()),
                format!("{:?} for {m} attributes", targets.shape()),
            ));
        }
        let inv_m = 1.0 / m as f64;
        let mut loss = 0.0;
        let mut param_grads = Vec::with_capacity(m);
        let mut feature_blocks = Vec::with_capacity(m);
        for (k, rec) in self.recognizers.iter().enumerate() {
            let trace = rec.forward_trace(features.block(k))?;
            let column = column(targets, k);
            let (l, mut g) = paired_cross_entropy(trace.output(), &column)?;
            loss += l * inv_m;
            g.scale(inv_m);
            let (pg, fg) = rec.backward(&trace, &g)?;
            param_grads.push(pg);
            feature_blocks.push(fg);
        }
        Ok(RecognizerLoss {
            loss,
            param_grads,
            feature_grads: FeatureGroup::new(feature_blocks)?,
        })
    }

    /// Probability that each attribute is present, `n × M`.
    pub fn predict(&self, features: &FeatureGroup) -> Result<Matrix> {
        let (n, m, _) = features.shape();
        let mut out = Matrix::zeros(n, m);
        for (k, rec) in self.recognizers.iter().enumerate() {
            let logits = rec.forward(features.block(k))?;
            for i in 0..n {
                out[(i, k)] = crate::nn::sigmoid(logits[(i, 1)] - logits[(i, 0)]);
            }
        }
        Ok(out)
    }
}

pub(crate) fn column(m: &Matrix, k: usize) -> Matrix {
    let values = (0..m.rows()).map(|i| m[(i, k)]).collect();
    Matrix::from_vec(m.rows(), 1, values).expect("sized by construction")
}

/// Maps a feature group back to sample space: a shared per-attribute lift
/// `d̂ → h`, a mixer collapsing the attribute axis `M → 1`, and an output head
/// `h → d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstructor {
    pub lift: DenseStack,
    pub mixer: DenseStack,
    pub head: DenseStack,
}

/// Cached state of a traced reconstruction.
pub struct ReconstructionTrace {
    n: usize,
    m: usize,
    lift: ForwardTrace,
    mixer: ForwardTrace,
    head: ForwardTrace,
}

impl ReconstructionTrace {
    pub fn output(&self) -> &Matrix {
        self.head.output()
    }
}

impl Reconstructor {
    pub fn new(output: usize, attributes: usize, arch: &GeneratorArch, seed: u64) -> Result<Self> {
        Ok(Reconstructor {
            lift: DenseStack::new(
                &[arch.feature_dim, arch.lift_dim],
                Activation::LeakyRelu,
                Activation::LeakyRelu,
                sub_seed(seed, 2000),
            )?,
            // Linear: the output is a weighted sum of the lifted groups.
            mixer: DenseStack::new(
                &[attributes, 1],
                Activation::Identity,
                Activation::Identity,
                sub_seed(seed, 2001),
            )?,
            head: DenseStack::new(
                &[arch.lift_dim, output],
                Activation::Identity,
                Activation::Identity,
                sub_seed(seed, 2002),
            )?,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.head.output_dim()
    }

    fn check(&self, features: &FeatureGroup) -> Result<()> {
        let (_, m, dim) = features.shape();
        if m != self.mixer.input_dim() || dim != self.lift.input_dim() {
            return Err(KssError::shape(
                "reconstructor input",
                format!("M={} d̂={}", self.mixer.input_dim(), self.lift.input_dim()),
                format!("M={m} d̂={dim}"),
            ));
        }
        Ok(())
    }

    pub fn reconstruct(&self, features: &FeatureGroup) -> Result<Matrix> {
        Ok(self.forward_traced(features)?.head.into_output())
    }

    pub fn forward_traced(&self, features: &FeatureGroup) -> Result<ReconstructionTrace> {
        self.check(features)?;
        let (n, m, _) = features.shape();
        let stacked = Matrix::vstack(&features.blocks().iter().collect::<Vec<_>>())?;
        let lift = self.lift.forward_trace(&stacked)?;
        let h = self.lift.output_dim();
        // (M·n) × h  ->  (n·h) × M
        let lifted = lift.output();
        let mut mix_in = Matrix::zeros(n * h, m);
        for k in 0..m {
            for i in 0..n {
                let src = lifted.row(k * n + i);
                for (c, &v) in src.iter().enumerate() {
                    mix_in[(i * h + c, k)] = v;
                }
            }
        }
        let mixer = self.mixer.forward_trace(&mix_in)?;
        let hidden = Matrix::from_vec(n, h, mixer.output().as_slice().to_vec())?;
        let head = self.head.forward_trace(&hidden)?;
        Ok(ReconstructionTrace {
            n,
            m,
            lift,
            mixer,
            head,
        })
    }

    /// Returns `(param grads [lift, mixer, head], feature grads)`.
    pub fn backward(
        &self,
        trace: &ReconstructionTrace,
        grad_output: &Matrix,
    ) -> Result<([StackGrads; 3], FeatureGroup)> {
        let (n, m) = (trace.n, trace.m);
        let h = self.lift.output_dim();
        let (g_head, d_hidden) = self.head.backward(&trace.head, grad_output)?;
        let d_mix_out = Matrix::from_vec(n * h, 1, d_hidden.into_vec())?;
        let (g_mixer, d_mix_in) = self.mixer.backward(&trace.mixer, &d_mix_out)?;
        let mut d_lifted = Matrix::zeros(m * n, h);
        for k in 0..m {
            for i in 0..n {
                let dst = d_lifted.row_mut(k * n + i);
                for (c, v) in dst.iter_mut().enumerate() {
                    *v = d_mix_in[(i * h + c, k)];
                }
            }
        }
        let (g_lift, d_stacked) = self.lift.backward(&trace.lift, &d_lifted)?;
        let dim = self.lift.input_dim();
        let blocks = (0..m)
            .map(|k| {
                let rows: Vec<usize> = (k * n..(k + 1) * n).collect();
                let b = d_stacked.select_rows(&rows);
                debug_assert_eq!(b.cols(), dim);
                b
            })
            .collect();
        Ok(([g_lift, g_mixer, g_head], FeatureGroup::new(blocks)?))
    }
}

/// Shared backbone with a multiclass head over the seen classes, a two-logit
/// attribute head and a sigmoid real/fake head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AidDiscriminator {
    pub backbone: DenseStack,
    pub class_head: DenseStack,
    pub attribute_head: DenseStack,
    pub disc_head: DenseStack,
}

impl AidDiscriminator {
    pub fn new(
        input: usize,
        classes: usize,
        attributes: usize,
        arch: &GeneratorArch,
        seed: u64,
    ) -> Result<Self> {
        let mut dims = vec![input];
        dims.extend(&arch.disc_backbone);
        let top = *dims.last().expect("non-empty");
        let mut disc_dims = vec![top];
        disc_dims.extend(&arch.disc_head_hidden);
        disc_dims.push(1);
        Ok(AidDiscriminator {
            backbone: DenseStack::new(
                &dims,
                Activation::LeakyRelu,
                Activation::LeakyRelu,
                sub_seed(seed, 3000),
            )?,
            class_head: DenseStack::new(
                &[top, classes],
                Activation::Identity,
                Activation::Identity,
                sub_seed(seed, 3001),
            )?,
            attribute_head: DenseStack::new(
                &[top, 2 * attributes],
                Activation::Identity,
                Activation::Identity,
                sub_seed(seed, 3002),
            )?,
            disc_head: DenseStack::new(
                &disc_dims,
                Activation::LeakyRelu,
                Activation::Sigmoid,
                sub_seed(seed, 3003),
            )?,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.class_head.output_dim()
    }

    pub fn num_attributes(&self) -> usize {
        self.attribute_head.output_dim() / 2
    }

    /// Probability that each sample is real.
    pub fn real_probability(&self, x: &Matrix) -> Result<Vec<f64>> {
        let h = self.backbone.forward(x)?;
        Ok(self.disc_head.forward(&h)?.into_vec())
    }

    pub fn class_logits(&self, x: &Matrix) -> Result<Matrix> {
        self.class_head.forward(&self.backbone.forward(x)?)
    }

    pub fn attribute_logits(&self, x: &Matrix) -> Result<Matrix> {
        self.attribute_head.forward(&self.backbone.forward(x)?)
    }
}

/// Deterministic per-network seed derived from a base seed (SplitMix64).
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
