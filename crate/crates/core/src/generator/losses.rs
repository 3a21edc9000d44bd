//! Attribute-consistency and adversarial losses.

use super::{AidDiscriminator, FeatureGroup};
use crate::error::{KssError, Result};
use crate::nn::{binary_target, Matrix, StackGrads, PROB_CLAMP};

/// Within-batch variance penalty: for every attribute `k`, features of
/// samples with `z_k = 1` and with `z_k = 0` are grouped separately and the
/// per-dimension population variances of both groups are summed over all
/// attributes and dimensions, then divided by `d̂`. Empty groups contribute 0.
///
/// Returns the loss and its gradient w.r.t. `features`.
pub fn attribute_variance_loss(features: &FeatureGroup, targets: &Matrix) -> Result<(f64, FeatureGroup)> {
    let (n, m, dim) = features.shape();
    if targets.shape() != (n, m) {
        return Err(KssError::shape(
            "attribute variance targets",
            format!("{n}×{m}"),
            format!("{:?}", targets.shape()),
        ));
    }
    let inv_dim = 1.0 / dim as f64;
    let mut loss = 0.0;
    let mut grads = FeatureGroup::zeros(n, m, dim);
    for k in 0..m {
        let block = features.block(k);
        let mut groups: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        for i in 0..n {
            groups[binary_target(targets[(i, k)])?].push(i);
        }
        let grad_block = grads.block_mut(k);
        for members in groups.iter().filter(|g| !g.is_empty()) {
            let count = members.len() as f64;
            let mut mean = vec![0.0; dim];
            for &i in members {
                mean.iter_mut().zip(block.row(i)).for_each(|(m, v)| *m += v);
            }
            mean.iter_mut().for_each(|m| *m /= count);
            for &i in members {
                let g = grad_block.row_mut(i);
                for ((gd, &v), &mu) in g.iter_mut().zip(block.row(i)).zip(&mean) {
                    let dev = v - mu;
                    loss += dev * dev / count * inv_dim;
                    *gd = 2.0 * dev / count * inv_dim;
                }
            }
        }
    }
    Ok((loss, grads))
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// `(L_D, L_G)` from discriminator outputs on real and fake batches:
/// `L_D = −E[log D(x)] − E[log(1 − D(x̃))]`, `L_G = E[log(1 − D(x̃))]`.
pub fn adversarial_losses(real: &[f64], fake: &[f64]) -> Result<(f64, f64)> {
    if real.is_empty() || fake.is_empty() {
        return Err(KssError::EmptyBatch("adversarial_losses"));
    }
    let mean = |v: &[f64], f: &dyn Fn(f64) -> f64| v.iter().map(|&p| f(clamp_prob(p))).sum::<f64>() / v.len() as f64;
    let log_real = mean(real, &|p| p.ln());
    let log_fake = mean(fake, &|p| (1.0 - p).ln());
    Ok((-log_real - log_fake, log_fake))
}

/// Gradient of `E[log(1 − D)]` w.r.t. each fake output (zero where clamped).
pub(crate) fn generator_adversarial_grad(fake: &[f64]) -> Matrix {
    let n = fake.len() as f64;
    let g = fake
        .iter()
        .map(|&p| {
            if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
                0.0
            } else {
                -1.0 / ((1.0 - p) * n)
            }
        })
        .collect();
    Matrix::from_vec(fake.len(), 1, g).expect("sized by construction")
}

/// `(L_D, L_G)` of the discriminator on the given batches.
pub fn discriminator_losses(disc: &AidDiscriminator, real: &Matrix, fake: &Matrix) -> Result<(f64, f64)> {
    adversarial_losses(&disc.real_probability(real)?, &disc.real_probability(fake)?)
}

/// `L_D` and its gradient w.r.t. the discrimination head only.
pub fn discriminator_objective(
    disc: &AidDiscriminator,
    real: &Matrix,
    fake: &Matrix,
) -> Result<(f64, StackGrads)> {
    if real.rows() == 0 || fake.rows() == 0 {
        return Err(KssError::EmptyBatch("discriminator_objective"));
    }
    let mut total = None;
    let mut loss = 0.0;
    for (batch, is_real) in [(real, true), (fake, false)] {
        let h = disc.backbone.forward(batch)?;
        let trace = disc.disc_head.forward_trace(&h)?;
        let n = batch.rows() as f64;
        let out = trace.output().as_slice();
        let mut grad = Matrix::zeros(batch.rows(), 1);
        for (i, &p) in out.iter().enumerate() {
            let c = clamp_prob(p);
            let clamped = c != p;
            if is_real {
                loss -= c.ln() / n;
                grad[(i, 0)] = if clamped { 0.0 } else { -1.0 / (p * n) };
            } else {
                loss -= (1.0 - c).ln() / n;
                grad[(i, 0)] = if clamped { 0.0 } else { 1.0 / ((1.0 - p) * n) };
            }
        }
        let (g, _) = disc.disc_head.backward(&trace, &grad)?;
        match total.as_mut() {
            None => total = Some(g),
            Some(t) => StackGrads::accumulate(t, &g),
        }
    }
    Ok((loss, total.expect("two passes")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_value_group_has_unit_variance() {
        // one attribute, feature dim 1, both samples in the z=1 group
        let g = FeatureGroup::new(vec![Matrix::from_rows(&[[1.0], [3.0]]).unwrap()]).unwrap();
        let t = Matrix::from_rows(&[[1.0], [1.0]]).unwrap();
        let (l, _) = attribute_variance_loss(&g, &t).unwrap();
        assert_eq!(l, 1.0);
    }

    #[test]
    fn identical_features_have_zero_variance() {
        let g = FeatureGroup::new(vec![Matrix::filled(4, 3, 0.7); 2]).unwrap();
        let t = Matrix::from_rows(&[[1.0, 0.0], [0.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap();
        let (l, grads) = attribute_variance_loss(&g, &t).unwrap();
        assert_eq!(l, 0.0);
        assert!(grads.blocks().iter().all(|b| b.as_slice().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn uninformative_discriminator() {
        let (ld, lg) = adversarial_losses(&[0.5; 3], &[0.5; 5]).unwrap();
        assert!((ld - 2.0 * 2f64.ln()).abs() < 1e-15);
        assert!((lg + 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn perfect_discriminator_near_zero() {
        let (ld, _) = adversarial_losses(&[1.0 - 1e-7], &[1e-7]).unwrap();
        assert!(ld < 1e-6);
        let (ld, lg) = adversarial_losses(&[1.0], &[0.0]).unwrap();
        assert!(ld.is_finite() && lg.is_finite());
    }

    #[test]
    fn four_sample_hand_computation() {
        let real = [0.9, 0.6];
        let fake = [0.2, 0.7];
        let (ld, lg) = adversarial_losses(&real, &fake).unwrap();
        let expected_ld = -(0.9f64.ln() + 0.6f64.ln()) / 2.0 - (0.8f64.ln() + 0.3f64.ln()) / 2.0;
        let expected_lg = (0.8f64.ln() + 0.3f64.ln()) / 2.0;
        assert!((ld - expected_ld).abs() < 1e-12);
        assert!((lg - expected_lg).abs() < 1e-12);
    }
}
