//! Aid-discriminator pre-training, adversarial generator training and
//! sample synthesis.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::fgr::{assemble, plan_with_source, similar_category_search, BlockSource, DonorPool, FgrLayout, ReorganizationPlan};
use super::losses::{attribute_variance_loss, discriminator_objective, generator_adversarial_grad};
use super::{AidDiscriminator, ExtractorBank, FeatureGroup, GeneratorArch, GeneratorHyperparams, LossWeights, RecognizerBank, Reconstructor};
use crate::data::{sample_balanced_batch, AttributeMatrix, BalancedBatch, ClassId, ClassIndex, LabeledDataset};
use crate::error::{KssError, Result};
use crate::nn::{mse, paired_cross_entropy, softmax_cross_entropy, AdamW, AdamWConfig, DenseStack, ForwardTrace, Matrix, StackGrads, PROB_CLAMP};

/// Trainable generator parameters `Θ_g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub extractors: ExtractorBank,
    pub recognizers: RecognizerBank,
    pub reconstructor: Reconstructor,
}

impl Generator {
    pub fn new(input: usize, attributes: usize, arch: &GeneratorArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        Ok(Generator {
            extractors: ExtractorBank::new(input, attributes, arch, seed)?,
            recognizers: RecognizerBank::new(attributes, arch, seed)?,
            reconstructor: Reconstructor::new(input, attributes, arch, seed)?,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.extractors.input_dim()
    }

    pub fn num_attributes(&self) -> usize {
        self.extractors.num_attributes()
    }

    /// Extractors, then recognizers, then lift, mixer and head.
    pub fn stacks(&self) -> Vec<&DenseStack> {
        let r = &self.reconstructor;
        self.extractors
            .extractors
            .iter()
            .chain(&self.recognizers.recognizers)
            .chain([&r.lift, &r.mixer, &r.head])
            .collect()
    }

    /// Same order as [`Generator::stacks`].
    pub fn stacks_mut(&mut self) -> Vec<&mut DenseStack> {
        let r = &mut self.reconstructor;
        self.extractors
            .extractors
            .iter_mut()
            .chain(&mut self.recognizers.recognizers)
            .chain([&mut r.lift, &mut r.mixer, &mut r.head])
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.stacks().iter().all(|s| s.is_finite())
    }
}

/// Parameter gradients in [`Generator::stacks`] order.
#[derive(Debug, Clone)]
pub struct GeneratorGrads {
    pub stacks: Vec<StackGrads>,
}

/// Component losses of one generator objective evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ar: f64,
    pub av: f64,
    pub au: f64,
    pub r: f64,
    pub g: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn weighted_total(&self, w: &LossWeights) -> f64 {
        w.ar * self.ar + w.av * self.av + w.au * self.au + w.r * self.r + w.g * self.g
    }

    fn is_finite(&self) -> bool {
        [self.ar, self.av, self.au, self.r, self.g, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// One FGR target inside a balanced batch.
#[derive(Debug, Clone, PartialEq)]
pub struct FakeBlock {
    /// Index of the target class among the seen classes (class-head label).
    pub label: usize,
    /// Batch block holding the source class samples.
    pub source_block: usize,
    pub plan: ReorganizationPlan,
}

/// Everything random about one generator or discriminator step.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorStepPlan {
    pub batch: BalancedBatch,
    pub fakes: Vec<FakeBlock>,
}

/// Seen-class context shared by all steps of a training run.
#[derive(Debug, Clone)]
pub struct TrainingContext<'a> {
    pub train: &'a LabeledDataset,
    pub matrix: &'a AttributeMatrix,
    pub seen: Vec<ClassId>,
    pub index: ClassIndex,
    pub pool: DonorPool,
    /// Most similar other seen class of every seen class.
    pub similar: Vec<ClassId>,
}

impl<'a> TrainingContext<'a> {
    pub fn new(train: &'a LabeledDataset, matrix: &'a AttributeMatrix) -> Result<Self> {
        let seen = matrix.seen_ids();
        if seen.len() < 2 {
            return Err(KssError::Config(
                "generator training needs at least two seen classes".into(),
            ));
        }
        let index = ClassIndex::new(train, &seen)?;
        let similar = seen
            .iter()
            .map(|&j| {
                let others: Vec<ClassId> = seen.iter().copied().filter(|&c| c != j).collect();
                similar_category_search(matrix.row(j).expect("seen class in matrix"), &others, matrix)
            })
            .collect::<Result<_>>()?;
        Ok(TrainingContext {
            train,
            matrix,
            seen,
            index,
            pool: DonorPool::new(train),
            similar,
        })
    }

    pub fn label_of(&self, class: ClassId) -> Option<usize> {
        self.seen.iter().position(|&c| c == class)
    }

    /// Draws a balanced batch and, for every seen class, its FGR plan.
    pub fn plan_step<R: Rng>(&self, per_class: usize, rng: &mut R) -> Result<GeneratorStepPlan> {
        let batch = sample_balanced_batch(&self.index, per_class, rng);
        let mut fakes = Vec::with_capacity(self.seen.len());
        for (label, (&j, &m)) in self.seen.iter().zip(&self.similar).enumerate() {
            let source_block = batch
                .classes
                .iter()
                .position(|&c| c == m)
                .expect("batch covers all seen classes");
            let diff = super::fgr::differing_attributes(
                self.matrix.row(j).expect("seen"),
                self.matrix.row(m).expect("seen"),
            );
            let plan = plan_with_source(j, m, diff, per_class, self.matrix, &self.pool, rng)?;
            fakes.push(FakeBlock {
                label,
                source_block,
                plan,
            });
        }
        Ok(GeneratorStepPlan { batch, fakes })
    }

    fn fake_layout(&self, plan: &GeneratorStepPlan, m: usize) -> FgrLayout {
        let plans: Vec<ReorganizationPlan> = plan.fakes.iter().map(|f| f.plan.clone()).collect();
        let sources: Vec<Vec<usize>> = plan
            .fakes
            .iter()
            .map(|f| plan.batch.block(f.source_block).collect())
            .collect();
        FgrLayout::build(&plans, &sources, m)
    }

    fn fake_targets(&self, plan: &GeneratorStepPlan) -> (Vec<usize>, Matrix) {
        let mut labels = Vec::new();
        let mut rows = Vec::new();
        for f in &plan.fakes {
            let a = self.matrix.row(f.plan.target).expect("target in matrix");
            for _ in 0..f.plan.donors.len() {
                labels.push(f.label);
                rows.push(a.to_vec());
            }
        }
        let m = self.matrix.num_attributes();
        let values = rows.into_iter().flatten().collect();
        (labels.clone(), Matrix::from_vec(labels.len(), m, values).expect("sized"))
    }

    /// Fake seen samples of one step, forward only.
    pub fn fake_batch(&self, gen: &Generator, plan: &GeneratorStepPlan) -> Result<Matrix> {
        let x = self.train.samples().select_rows(&plan.batch.indices);
        let g = gen.extractors.extract(&x)?;
        let layout = self.fake_layout(plan, gen.num_attributes());
        let donors = layout.extract_donors(&gen.extractors, self.train)?;
        gen.reconstructor.reconstruct(&assemble(&g, &donors, &layout.rows)?)
    }
}

/// Evaluates `L_KSS-G` on one step plan and, if asked, its gradient w.r.t.
/// `Θ_g`. The aid-discriminator is treated as constant.
pub fn generator_objective(
    gen: &Generator,
    disc: &AidDiscriminator,
    ctx: &TrainingContext<'_>,
    plan: &GeneratorStepPlan,
    weights: &LossWeights,
    want_grads: bool,
) -> Result<(LossBreakdown, Option<GeneratorGrads>)> {
    let m = gen.num_attributes();
    let x = ctx.train.samples().select_rows(&plan.batch.indices);
    let z = ctx.train.attributes().select_rows(&plan.batch.indices);
    let (g, real_traces) = gen.extractors.extract_traced(&x)?;
    let mut out = LossBreakdown::default();

    // real-sample losses
    let ar = gen.recognizers.loss(&g, &z)?;
    out.ar = ar.loss;
    let (av, av_grads) = attribute_variance_loss(&g, &z)?;
    out.av = av;
    let rec_real = gen.reconstructor.forward_traced(&g)?;
    let (r, mut r_grad) = mse(rec_real.output(), &x)?;
    out.r = r;

    // fake seen samples through FGR
    let layout = ctx.fake_layout(plan, m);
    let donor_traces: Vec<Option<ForwardTrace>> = layout
        .donor_samples
        .iter()
        .enumerate()
        .map(|(k, idx)| {
            if idx.is_empty() {
                Ok(None)
            } else {
                gen.extractors.extractors[k]
                    .forward_trace(&ctx.train.samples().select_rows(idx))
                    .map(Some)
            }
        })
        .collect::<Result<_>>()?;
    let donor_features: Vec<Option<Matrix>> = donor_traces
        .iter()
        .map(|t| t.as_ref().map(|t| t.output().clone()))
        .collect();
    let g_fake = assemble(&g, &donor_features, &layout.rows)?;
    let rec_fake = gen.reconstructor.forward_traced(&g_fake)?;
    let x_fake = rec_fake.output();
    let (labels, z_fake) = ctx.fake_targets(plan);

    let h_trace = disc.backbone.forward_trace(x_fake)?;
    let d_trace = disc.disc_head.forward_trace(h_trace.output())?;
    let probs = d_trace.output().as_slice();
    out.g = probs
        .iter()
        .map(|&p| (1.0 - p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)).ln())
        .sum::<f64>()
        / probs.len() as f64;
    let c_trace = disc.class_head.forward_trace(h_trace.output())?;
    let (lc, mut gc) = softmax_cross_entropy(c_trace.output(), &labels)?;
    let a_trace = disc.attribute_head.forward_trace(h_trace.output())?;
    let (la, mut ga) = paired_cross_entropy(a_trace.output(), &z_fake)?;
    out.au = lc + la;
    out.total = out.weighted_total(weights);

    if !out.is_finite() {
        return Err(KssError::NonFinite(format!("generator loss components {out:?}")));
    }
    if !want_grads {
        return Ok((out, None));
    }

    // back through the frozen aid-discriminator into x̃
    let mut g_adv = generator_adversarial_grad(probs);
    g_adv.scale(weights.g);
    let mut dh = disc.disc_head.backward_input(&d_trace, &g_adv)?;
    gc.scale(weights.au);
    ga.scale(weights.au);
    dh.add_assign(&disc.class_head.backward_input(&c_trace, &gc)?)?;
    dh.add_assign(&disc.attribute_head.backward_input(&a_trace, &ga)?)?;
    let dx_fake = disc.backbone.backward_input(&h_trace, &dh)?;
    let (rec_fake_grads, dg_fake) = gen.reconstructor.backward(&rec_fake, &dx_fake)?;

    // real reconstruction
    r_grad.scale(weights.r);
    let (rec_real_grads, dg_rec) = gen.reconstructor.backward(&rec_real, &r_grad)?;

    // feature gradients on G and on donor features
    let (n, _, dim) = g.shape();
    let mut dg = FeatureGroup::zeros(n, m, dim);
    dg.add_scaled(&ar.feature_grads, weights.ar);
    dg.add_scaled(&av_grads, weights.av);
    dg.add_scaled(&dg_rec, 1.0);
    let mut d_donor: Vec<Option<Matrix>> = donor_features
        .iter()
        .map(|f| f.as_ref().map(|f| Matrix::zeros(f.rows(), f.cols())))
        .collect();
    for (i, row) in layout.rows.iter().enumerate() {
        for (k, src) in row.iter().enumerate() {
            let grad = dg_fake.feature(i, k);
            let dst = match *src {
                BlockSource::Source(r) => dg.block_mut(k).row_mut(r),
                BlockSource::Donor(r) => d_donor[k].as_mut().expect("donor present").row_mut(r),
            };
            dst.iter_mut().zip(grad).for_each(|(d, g)| *d += g);
        }
    }

    let mut stacks = gen.extractors.backward(&real_traces, &dg)?;
    for (k, (trace, grad)) in donor_traces.iter().zip(&d_donor).enumerate() {
        if let (Some(t), Some(gd)) = (trace, grad) {
            let (pg, _) = gen.extractors.extractors[k].backward(t, gd)?;
            stacks[k].accumulate(&pg);
        }
    }
    for mut pg in ar.param_grads {
        pg.scale(weights.ar);
        stacks.push(pg);
    }
    for (mut a, b) in rec_real_grads.into_iter().zip(rec_fake_grads) {
        a.accumulate(&b);
        stacks.push(a);
    }
    Ok((out, Some(GeneratorGrads { stacks })))
}

/// Per-epoch means of the pre-training loss and training accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub class_loss: f64,
    pub attribute_loss: f64,
    pub accuracy: f64,
}

/// `L_AD` over a batch and gradients for backbone, class head and attribute
/// head (in that order).
pub fn aid_discriminator_objective(
    disc: &AidDiscriminator,
    x: &Matrix,
    labels: &[usize],
    attributes: &Matrix,
) -> Result<(f64, f64, [StackGrads; 3], usize)> {
    let h = disc.backbone.forward_trace(x)?;
    let c = disc.class_head.forward_trace(h.output())?;
    let a = disc.attribute_head.forward_trace(h.output())?;
    let (lc, gc) = softmax_cross_entropy(c.output(), labels)?;
    let (la, ga) = paired_cross_entropy(a.output(), attributes)?;
    let (g_class, mut dh) = disc.class_head.backward(&c, &gc)?;
    let (g_attr, dh_a) = disc.attribute_head.backward(&a, &ga)?;
    dh.add_assign(&dh_a)?;
    let (g_backbone, _) = disc.backbone.backward(&h, &dh)?;
    let correct = c
        .output()
        .row_iter()
        .zip(labels)
        .filter(|(row, &y)| argmax(row) == y)
        .count();
    Ok((lc, la, [g_backbone, g_class, g_attr], correct))
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Trains backbone, class head and attribute head on seen data; the
/// discrimination head is left untouched.
pub fn pretrain_aid_discriminator<R: Rng>(
    disc: &mut AidDiscriminator,
    train: &LabeledDataset,
    matrix: &AttributeMatrix,
    hp: &GeneratorHyperparams,
    rng: &mut R,
) -> Result<Vec<PretrainEpoch>> {
    hp.validate()?;
    if train.is_empty() {
        return Err(KssError::EmptyBatch("pretrain_aid_discriminator"));
    }
    let seen = matrix.seen_ids();
    if disc.num_classes() != seen.len() {
        return Err(KssError::shape("class head", seen.len(), disc.num_classes()));
    }
    let labels: Vec<usize> = train
        .labels()
        .iter()
        .map(|c| {
            seen.iter()
                .position(|s| s == c)
                .ok_or_else(|| KssError::Config(format!("training label {c} is not a seen class")))
        })
        .collect::<Result<_>>()?;
    let cfg = adamw(hp);
    let mut opts = [
        AdamW::new(cfg, &disc.backbone),
        AdamW::new(cfg, &disc.class_head),
        AdamW::new(cfg, &disc.attribute_head),
    ];
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::with_capacity(hp.pretrain_epochs);
    for epoch in 0..hp.pretrain_epochs {
        order.shuffle(rng);
        let (mut lc_sum, mut la_sum, mut correct) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(hp.pretrain_batch) {
            let x = train.samples().select_rows(chunk);
            let z = train.attributes().select_rows(chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let (lc, la, grads, ok) = aid_discriminator_objective(disc, &x, &y, &z)?;
            if !(lc + la).is_finite() {
                return Err(KssError::NonFinite(format!(
                    "aid-discriminator pre-training loss at epoch {epoch}"
                )));
            }
            let w = chunk.len() as f64;
            lc_sum += lc * w;
            la_sum += la * w;
            correct += ok;
            let [gb, gc, ga] = grads;
            opts[0].step(&mut disc.backbone, &gb)?;
            opts[1].step(&mut disc.class_head, &gc)?;
            opts[2].step(&mut disc.attribute_head, &ga)?;
        }
        let n = train.len() as f64;
        let entry = PretrainEpoch {
            epoch,
            loss: (lc_sum + la_sum) / n,
            class_loss: lc_sum / n,
            attribute_loss: la_sum / n,
            accuracy: correct as f64 / n,
        };
        log::debug!("pretrain epoch {epoch}: loss {:.5} acc {:.4}", entry.loss, entry.accuracy);
        log.push(entry);
    }
    Ok(log)
}

fn adamw(hp: &GeneratorHyperparams) -> AdamWConfig {
    AdamWConfig {
        learning_rate: hp.learning_rate,
        weight_decay: hp.weight_decay,
        ..Default::default()
    }
}

/// Per-epoch means of the generator loss components and `L_D`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorEpoch {
    pub epoch: usize,
    pub losses: LossBreakdown,
    pub disc_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorTrainingReport {
    pub epochs: Vec<GeneratorEpoch>,
    pub disc_updates: usize,
    pub gen_updates: usize,
    pub batches_per_epoch: usize,
}

/// Batches per epoch: training-set size over the balanced batch size, at
/// least one.
pub fn batches_per_epoch(train_len: usize, per_class: usize, classes: usize) -> usize {
    let b = per_class * classes;
    train_len.div_ceil(b).max(1)
}

/// Adversarial training of `Θ_g` and the discrimination head. The backbone,
/// class head and attribute head are never modified.
pub fn train_kss_g<R: Rng>(
    gen: &mut Generator,
    disc: &mut AidDiscriminator,
    ctx: &TrainingContext<'_>,
    hp: &GeneratorHyperparams,
    weights: &LossWeights,
    rng: &mut R,
) -> Result<GeneratorTrainingReport> {
    hp.validate()?;
    let cfg = adamw(hp);
    let mut gen_opts: Vec<AdamW> = gen.stacks().into_iter().map(|s| AdamW::new(cfg, s)).collect();
    let mut disc_opt = AdamW::new(cfg, &disc.disc_head);
    let nb = batches_per_epoch(ctx.train.len(), hp.per_class_batch, ctx.seen.len());
    let mut report = GeneratorTrainingReport {
        epochs: Vec::with_capacity(hp.epochs),
        disc_updates: 0,
        gen_updates: 0,
        batches_per_epoch: nb,
    };
    for epoch in 0..hp.epochs {
        let mut sum = LossBreakdown::default();
        let mut disc_sum = 0.0;
        for _ in 0..nb {
            for _ in 0..hp.disc_steps {
                let plan = ctx.plan_step(hp.per_class_batch, rng)?;
                let real = ctx.train.samples().select_rows(&plan.batch.indices);
                let fake = ctx.fake_batch(gen, &plan)?;
                let (ld, grads) = discriminator_objective(disc, &real, &fake)?;
                if !ld.is_finite() {
                    return Err(KssError::NonFinite(format!("discriminator loss at epoch {epoch}")));
                }
                disc_opt.step(&mut disc.disc_head, &grads)?;
                disc_sum += ld;
                report.disc_updates += 1;
            }
            let plan = ctx.plan_step(hp.per_class_batch, rng)?;
            let (losses, grads) = generator_objective(gen, disc, ctx, &plan, weights, true)
                .map_err(|e| match e {
                    KssError::NonFinite(msg) => KssError::NonFinite(format!("epoch {epoch}: {msg}")),
                    other => other,
                })?;
            let grads = grads.expect("requested");
            for ((opt, stack), g) in gen_opts.iter_mut().zip(gen.stacks_mut()).zip(&grads.stacks) {
                opt.step(stack, g)?;
            }
            report.gen_updates += 1;
            sum.ar += losses.ar;
            sum.av += losses.av;
            sum.au += losses.au;
            sum.r += losses.r;
            sum.g += losses.g;
            sum.total += losses.total;
        }
        let inv = 1.0 / nb as f64;
        let losses = LossBreakdown {
            ar: sum.ar * inv,
            av: sum.av * inv,
            au: sum.au * inv,
            r: sum.r * inv,
            g: sum.g * inv,
            total: sum.total * inv,
        };
        let entry = GeneratorEpoch {
            epoch,
            losses,
            disc_loss: disc_sum / (nb * hp.disc_steps) as f64,
        };
        log::debug!(
            "generator epoch {epoch}: total {:.5} ar {:.4} av {:.4} au {:.4} r {:.5} g {:.4} d {:.4}",
            losses.total,
            losses.ar,
            losses.av,
            losses.au,
            losses.r,
            losses.g,
            entry.disc_loss
        );
        report.epochs.push(entry);
    }
    Ok(report)
}

/// Generates `count` fake samples of `target` (seen or unseen): source
/// samples of the most similar other seen class are reorganized toward
/// `a_target` and reconstructed.
pub fn generate_samples<R: Rng>(
    gen: &Generator,
    train: &LabeledDataset,
    matrix: &AttributeMatrix,
    pool: &DonorPool,
    target: ClassId,
    count: usize,
    rng: &mut R,
) -> Result<Matrix> {
    if count == 0 {
        return Ok(Matrix::zeros(0, gen.input_dim()));
    }
    let target_row = matrix
        .row(target)
        .ok_or_else(|| KssError::Config(format!("class {target} not in the attribute matrix")))?;
    let candidates: Vec<ClassId> = matrix.seen_ids().into_iter().filter(|&c| c != target).collect();
    let source_class = similar_category_search(target_row, &candidates, matrix)?;
    let members = train.indices_of(source_class);
    if members.is_empty() {
        return Err(KssError::EmptyBatch("generate_samples: source class has no training samples"));
    }
    let sources: Vec<usize> = if count <= members.len() {
        members.choose_multiple(rng, count).copied().collect()
    } else {
        (0..count).map(|_| members[rng.random_range(0..members.len())]).collect()
    };
    let diff = super::fgr::differing_attributes(target_row, matrix.row(source_class).expect("seen"));
    let plan = plan_with_source(target, source_class, diff, count, matrix, pool, rng)?;
    let layout = FgrLayout::build(
        std::slice::from_ref(&plan),
        &[(0..count).collect()],
        gen.num_attributes(),
    );
    let g = gen.extractors.extract(&train.samples().select_rows(&sources))?;
    let donors = layout.extract_donors(&gen.extractors, train)?;
    gen.reconstructor.reconstruct(&assemble(&g, &donors, &layout.rows)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SynthConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_arch() -> GeneratorArch {
        GeneratorArch {
            extractor_hidden: vec![8],
            feature_dim: 4,
            recognizer_hidden: vec![4],
            lift_dim: 6,
            disc_backbone: vec![8, 6],
            disc_head_hidden: vec![4],
        }
    }

    fn tiny_data() -> crate::data::SyntheticData {
        let cfg = SynthConfig {
            classes: 5,
            attributes: 4,
            dim: 6,
            train_per_class: 12,
            test_per_class: 4,
            noise: 0.1,
            unseen: 1,
            compositional: true,
        };
        synth_generate(&cfg, 3).unwrap()
    }

    #[test]
    fn stack_order_matches() {
        let gen = Generator::new(6, 4, &tiny_arch(), 1).unwrap();
        assert_eq!(gen.stacks().len(), 4 + 4 + 3);
    }

    #[test]
    fn loss_total_is_weighted_sum() {
        let data = tiny_data();
        let ctx = TrainingContext::new(&data.train, &data.matrix).unwrap();
        let gen = Generator::new(6, 4, &tiny_arch(), 1).unwrap();
        let disc = AidDiscriminator::new(6, ctx.seen.len(), 4, &tiny_arch(), 2).unwrap();
        let plan = ctx.plan_step(3, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let w = GeneratorHyperparams::default().weights(&super::super::LossSet::ALL);
        let (l, grads) = generator_objective(&gen, &disc, &ctx, &plan, &w, true).unwrap();
        let expect = l.ar + 0.5 * l.av + 0.5 * l.au + 4.0 * l.r + l.g;
        assert!((l.total - expect).abs() < 1e-9);
        assert_eq!(grads.unwrap().stacks.len(), gen.stacks().len());
    }

    #[test]
    fn training_keeps_pretrained_heads_and_counts_updates() {
        let data = tiny_data();
        let ctx = TrainingContext::new(&data.train, &data.matrix).unwrap();
        let mut gen = Generator::new(6, 4, &tiny_arch(), 1).unwrap();
        let mut disc = AidDiscriminator::new(6, ctx.seen.len(), 4, &tiny_arch(), 2).unwrap();
        let hp = GeneratorHyperparams {
            epochs: 2,
            per_class_batch: 4,
            pretrain_epochs: 2,
            pretrain_batch: 16,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        pretrain_aid_discriminator(&mut disc, &data.train, &data.matrix, &hp, &mut rng).unwrap();
        let before = disc.clone();
        let w = hp.weights(&super::super::LossSet::ALL);
        let report = train_kss_g(&mut gen, &mut disc, &ctx, &hp, &w, &mut rng).unwrap();
        assert_eq!(before.backbone, disc.backbone);
        assert_eq!(before.class_head, disc.class_head);
        assert_eq!(before.attribute_head, disc.attribute_head);
        assert_ne!(before.disc_head, disc.disc_head);
        assert_eq!(report.disc_updates, hp.disc_steps * report.gen_updates);
        assert_eq!(report.gen_updates, 2 * report.batches_per_epoch);
    }

    #[test]
    fn generation_shapes() {
        let data = tiny_data();
        let gen = Generator::new(6, 4, &tiny_arch(), 1).unwrap();
        let pool = DonorPool::new(&data.train);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let unseen = data.matrix.unseen_ids()[0];
        let x = generate_samples(&gen, &data.train, &data.matrix, &pool, unseen, 30, &mut rng).unwrap();
        assert_eq!(x.shape(), (30, 6));
        assert!(x.is_finite());
        let empty = generate_samples(&gen, &data.train, &data.matrix, &pool, unseen, 0, &mut rng).unwrap();
        assert_eq!(empty.shape(), (0, 6));
    }

    #[test]
    fn single_seen_class_rejected() {
        let data = tiny_data();
        let only = data.matrix.seen_ids()[0];
        let split = crate::data::SplitSpec::custom(
            "one",
            vec![only],
            data.matrix.class_ids().iter().copied().filter(|&c| c != only).collect(),
        );
        let m = data.matrix.clone().with_split(&split).unwrap();
        let train = data.train.filter_classes(&[only], crate::data::SplitTag::Train, &m).unwrap();
        assert!(TrainingContext::new(&train, &m).is_err());
    }
}
