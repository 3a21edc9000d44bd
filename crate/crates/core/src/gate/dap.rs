//! Direct attribute prediction over the unseen classes with Gaussian naive
//! Bayes attribute posteriors.

use serde::{Deserialize, Serialize};

use crate::data::ClassId;
use crate::error::{KssError, Result};
use crate::nn::{binary_target, log_sum_exp, Matrix};

/// Relative variance smoothing: `var += VAR_SMOOTHING · max feature variance`.
pub const VAR_SMOOTHING: f64 = 1e-9;
const VAR_FLOOR: f64 = 1e-12;

/// Per-dimension Gaussian of the samples sharing one attribute value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueGaussian {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl ValueGaussian {
    fn log_density(&self, x: &[f64]) -> f64 {
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        x.iter()
            .zip(&self.mean)
            .zip(&self.var)
            .map(|((x, m), v)| -0.5 * (ln_2pi + v.ln() + (x - m) * (x - m) / v))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DapModel {
    /// `[value 0, value 1]` Gaussians per attribute.
    pub gaussians: Vec<[ValueGaussian; 2]>,
    /// Smoothed `p(a_k = 1)`.
    pub priors: Vec<f64>,
    pub classes: Vec<ClassId>,
    /// `q × M` attribute rows of `classes`.
    pub rows: Matrix,
}

fn stats(x: &Matrix, members: &[usize], smoothing: f64) -> ValueGaussian {
    let d = x.cols();
    let n = members.len() as f64;
    let mut mean = vec![0.0; d];
    for &i in members {
        mean.iter_mut().zip(x.row(i)).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for &i in members {
        var.iter_mut()
            .zip(x.row(i))
            .zip(&mean)
            .for_each(|((s, v), m)| *s += (v - m) * (v - m));
    }
    var.iter_mut().for_each(|s| *s = (*s / n + smoothing).max(VAR_FLOOR));
    ValueGaussian { mean, var }
}

/// Fits the attribute models on `(x, z)` and stores the class rows to rank.
pub fn dap_train(x: &Matrix, z: &Matrix, classes: &[ClassId], rows: &Matrix) -> Result<DapModel> {
    if classes.is_empty() {
        return Err(KssError::NoUnseenClasses);
    }
    if x.rows() == 0 {
        return Err(KssError::EmptyBatch("dap_train"));
    }
    if z.rows() != x.rows() || rows.shape() != (classes.len(), z.cols()) {
        return Err(KssError::shape(
            "dap inputs",
            format!("{}×{} rows, {} attributes", classes.len(), z.cols(), z.cols()),
            format!("{:?} rows, targets {:?}", rows.shape(), z.shape()),
        ));
    }
    let all: Vec<usize> = (0..x.rows()).collect();
    let max_var = stats(x, &all, 0.0).var.into_iter().fold(0.0, f64::max);
    let smoothing = VAR_SMOOTHING * max_var;
    let pooled = stats(x, &all, smoothing);
    let mut gaussians = Vec::with_capacity(z.cols());
    let mut priors = Vec::with_capacity(z.cols());
    for k in 0..z.cols() {
        let mut groups: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        for i in 0..x.rows() {
            groups[binary_target(z[(i, k)])?].push(i);
        }
        let fit = |g: &[usize]| {
            if g.is_empty() {
                log::warn!("DAP attribute {k}: one value has no samples; using pooled statistics");
                pooled.clone()
            } else {
                stats(x, g, smoothing)
            }
        };
        priors.push((groups[1].len() as f64 + 1.0) / (x.rows() as f64 + 2.0));
        gaussians.push([fit(&groups[0]), fit(&groups[1])]);
    }
    Ok(DapModel {
        gaussians,
        priors,
        classes: classes.to_vec(),
        rows: rows.clone(),
    })
}

impl DapModel {
    /// `n × M` log posteriors `[log p(a_k = 0 | x), log p(a_k = 1 | x)]`
    /// packed as `(n, 2M)` with columns `2k`, `2k + 1`.
    pub fn log_posteriors(&self, x: &Matrix) -> Result<Matrix> {
        let m = self.gaussians.len();
        let d = self.gaussians[0][0].mean.len();
        if x.cols() != d {
            return Err(KssError::shape("dap input", d, x.cols()));
        }
        let mut out = Matrix::zeros(x.rows(), 2 * m);
        for (i, row) in x.row_iter().enumerate() {
            for (k, [g0, g1]) in self.gaussians.iter().enumerate() {
                let l0 = g0.log_density(row) + (1.0 - self.priors[k]).ln();
                let l1 = g1.log_density(row) + self.priors[k].ln();
                let norm = log_sum_exp(&[l0, l1]);
                out[(i, 2 * k)] = l0 - norm;
                out[(i, 2 * k + 1)] = l1 - norm;
            }
        }
        Ok(out)
    }

    /// `n × q` class scores `Σ_k log p(a_k = a^u_k | x) − log p(a_k = a^u_k)`.
    pub fn scores(&self, x: &Matrix) -> Result<Matrix> {
        let post = self.log_posteriors(x)?;
        let q = self.classes.len();
        let m = self.gaussians.len();
        let mut out = Matrix::zeros(x.rows(), q);
        for i in 0..x.rows() {
            for u in 0..q {
                let mut s = 0.0;
                for k in 0..m {
                    let v = self.rows[(u, k)];
                    let prior = if v == 1.0 { self.priors[k] } else { 1.0 - self.priors[k] };
                    s += post[(i, 2 * k + v as usize)] - prior.ln();
                }
                out[(i, u)] = s;
            }
        }
        Ok(out)
    }

    /// Highest-scoring class per sample; ties go to the smallest class id.
    pub fn classify(&self, x: &Matrix) -> Result<Vec<ClassId>> {
        let scores = self.scores(x)?;
        Ok(scores
            .row_iter()
            .map(|row| {
                let mut best = 0;
                for u in 1..row.len() {
                    if row[u] > row[best] || (row[u] == row[best] && self.classes[u] < self.classes[best]) {
                        best = u;
                    }
                }
                self.classes[best]
            })
            .collect())
    }
}

pub fn dap_classify(model: &DapModel, x: &Matrix) -> Result<Vec<ClassId>> {
    model.classify(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Matrix, Matrix) {
        let x = Matrix::from_rows(&[[0.0, 0.1], [0.2, -0.1], [3.0, 2.9], [3.1, 3.2], [0.1, 3.0], [-0.1, 3.1]]).unwrap();
        let z = Matrix::from_rows(&[[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0], [0.0, 1.0], [0.0, 1.0]]).unwrap();
        (x, z)
    }

    #[test]
    fn single_unseen_class_always_wins() {
        let (x, z) = toy();
        let rows = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let dap = dap_train(&x, &z, &[ClassId(9)], &rows).unwrap();
        assert!(dap.classify(&x).unwrap().iter().all(|&c| c == ClassId(9)));
    }

    #[test]
    fn no_unseen_classes() {
        let (x, z) = toy();
        assert!(matches!(
            dap_train(&x, &z, &[], &Matrix::zeros(0, 2)),
            Err(KssError::NoUnseenClasses)
        ));
    }

    #[test]
    fn laplace_priors() {
        let (x, z) = toy();
        let dap = dap_train(&x, &z, &[ClassId(1)], &Matrix::from_rows(&[[1.0, 1.0]]).unwrap()).unwrap();
        assert_eq!(dap.priors, vec![3.0 / 8.0, 5.0 / 8.0]);
    }

    #[test]
    fn ties_go_to_smallest_id() {
        let (x, z) = toy();
        let rows = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        let dap = DapModel {
            rows,
            classes: vec![ClassId(7), ClassId(4)],
            ..dap_train(&x, &z, &[ClassId(1)], &Matrix::from_rows(&[[1.0, 1.0]]).unwrap()).unwrap()
        };
        assert_eq!(dap.classify(&x).unwrap()[0], ClassId(4));
    }
}
