//! Loss functions returning the batch-mean loss and its gradient with respect
//! to the network output.

use super::{DenseStack, Matrix, StackGrads};
use crate::error::{KssError, Result};

/// Clamp applied to probabilities before taking logarithms.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Multiclass softmax cross-entropy over all output columns.
    SoftmaxXent,
    /// Two logits per attribute, softmax cross-entropy averaged over attributes.
    PairedXent,
    /// Mean squared error averaged over every output entry.
    Mse,
}

#[derive(Debug, Clone)]
pub enum Targets<'a> {
    Classes(&'a [usize]),
    /// `n × M` entries in {0, 1}.
    Binary(&'a Matrix),
    Values(&'a Matrix),
}

/// Row-wise softmax.
pub fn softmax(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        softmax_in_place(out.row_mut(i));
    }
    out
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}

/// `log Σ exp(v)` computed stably.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn softmax_cross_entropy(logits: &Matrix, targets: &[usize]) -> Result<(f64, Matrix)> {
    let n = logits.rows();
    if n == 0 {
        return Err(KssError::EmptyBatch("softmax_cross_entropy"));
    }
    if targets.len() != n {
        return Err(KssError::shape("softmax targets", n, targets.len()));
    }
    let classes = logits.cols();
    let mut grad = Matrix::zeros(n, classes);
    let mut loss = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        if t >= classes {
            return Err(KssError::shape(
                "softmax target index",
                format!("< {classes}"),
                t,
            ));
        }
        let row = logits.row(i);
        loss += log_sum_exp(row) - row[t];
        let g = grad.row_mut(i);
        g.copy_from_slice(row);
        softmax_in_place(g);
        g[t] -= 1.0;
    }
    let inv = 1.0 / n as f64;
    grad.scale(inv);
    Ok((loss * inv, grad))
}

/// Per-attribute two-logit cross-entropy. Logit columns `2k, 2k+1` score
/// attribute `k` being absent / present.
pub fn paired_cross_entropy(logits: &Matrix, targets: &Matrix) -> Result<(f64, Matrix)> {
    let n = logits.rows();
    if n == 0 {
        return Err(KssError::EmptyBatch("paired_cross_entropy"));
    }
    let m = targets.cols();
    if targets.rows() != n || logits.cols() != 2 * m {
        return Err(KssError::shape(
            "paired cross-entropy",
            format!("logits {n}×{}", 2 * m),
            format!("logits {:?}, targets {:?}", logits.shape(), targets.shape()),
        ));
    }
    let mut grad = Matrix::zeros(n, 2 * m);
    let mut loss = 0.0;
    let scale = 1.0 / (n * m) as f64;
    for i in 0..n {
        let row = logits.row(i);
        for k in 0..m {
            let t = binary_target(targets[(i, k)])?;
            let pair = [row[2 * k], row[2 * k + 1]];
            loss += log_sum_exp(&pair) - pair[t];
            let mut p = pair;
            softmax_in_place(&mut p);
            p[t] -= 1.0;
            grad[(i, 2 * k)] = p[0] * scale;
            grad[(i, 2 * k + 1)] = p[1] * scale;
        }
    }
    Ok((loss * scale, grad))
}

pub(crate) fn binary_target(v: f64) -> Result<usize> {
    if v == 0.0 {
        Ok(0)
    } else if v == 1.0 {
        Ok(1)
    } else {
        Err(KssError::Config(format!("attribute target {v} is not 0 or 1")))
    }
}

pub fn mse(prediction: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    if prediction.shape() != target.shape() {
        return Err(KssError::shape(
            "mse",
            format!("{:?}", target.shape()),
            format!("{:?}", prediction.shape()),
        ));
    }
    if prediction.rows() == 0 {
        return Err(KssError::EmptyBatch("mse"));
    }
    let count = prediction.as_slice().len() as f64;
    let mut grad = Matrix::zeros(prediction.rows(), prediction.cols());
    let mut loss = 0.0;
    for ((g, p), t) in grad
        .as_mut_slice()
        .iter_mut()
        .zip(prediction.as_slice())
        .zip(target.as_slice())
    {
        let diff = p - t;
        loss += diff * diff;
        *g = 2.0 * diff / count;
    }
    Ok((loss / count, grad))
}

/// Loss of the network output against `targets`, with gradients of that loss
/// w.r.t. every parameter of `net`.
pub fn loss_and_grads(
    net: &DenseStack,
    batch: &Matrix,
    targets: Targets<'_>,
    kind: LossKind,
) -> Result<(f64, StackGrads)> {
    if batch.rows() == 0 {
        return Err(KssError::EmptyBatch("loss_and_grads"));
    }
    let trace = net.forward_trace(batch)?;
    let out = trace.output();
    if !out.is_finite() {
        return Err(KssError::NonFinite("network output".into()));
    }
    let (loss, grad) = match (kind, targets) {
        (LossKind::SoftmaxXent, Targets::Classes(t)) => softmax_cross_entropy(out, t)?,
        (LossKind::PairedXent, Targets::Binary(t)) => paired_cross_entropy(out, t)?,
        (LossKind::Mse, Targets::Values(t)) => mse(out, t)?,
        (kind, _) => {
            return Err(KssError::Config(format!(
                "targets do not match loss kind {kind:?}"
            )))
        }
    };
    let (grads, _) = net.backward(&trace, &grad)?;
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln2() {
        let logits = Matrix::from_rows(&[[0.3, 0.3]]).unwrap();
        let (loss, _) = softmax_cross_entropy(&logits, &[0]).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn perfect_prediction_has_zero_mse_and_gradient() {
        let x = Matrix::from_rows(&[[1.0, -2.0], [0.5, 3.0]]).unwrap();
        let (loss, grad) = mse(&x, &x).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn mse_constant_offset() {
        let zeros = Matrix::zeros(3, 4);
        let ones = Matrix::filled(3, 4, 1.0);
        assert_eq!(mse(&ones, &zeros).unwrap().0, 1.0);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let logits = Matrix::from_rows(&[[1000.0, -3.0, 2.0], [0.0, 0.0, 0.0]]).unwrap();
        let p = softmax(&logits);
        for r in p.row_iter() {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn paired_rejects_non_binary_target() {
        let logits = Matrix::zeros(1, 2);
        let t = Matrix::from_rows(&[[0.5]]).unwrap();
        assert!(paired_cross_entropy(&logits, &t).is_err());
    }

    #[test]
    fn empty_batch_is_an_error() {
        let net = DenseStack::new(&[2, 2], super::super::Activation::Identity, super::super::Activation::Identity, 0).unwrap();
        let err = loss_and_grads(&net, &Matrix::zeros(0, 2), Targets::Classes(&[]), LossKind::SoftmaxXent);
        assert!(matches!(err, Err(KssError::EmptyBatch(_))));
    }
}
