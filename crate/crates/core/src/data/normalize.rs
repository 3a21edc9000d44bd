//! Per-feature z-score normalization fitted on the training split.

use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::error::{KssError, Result};
use crate::nn::Matrix;

/// Lower bound on the standard deviation of constant features.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScoreStats {
    pub mean: Vec<f64>,
    /// Population standard deviation, floored at [`STD_FLOOR`].
    pub std: Vec<f64>,
}

impl ZScoreStats {
    pub fn fit(samples: &Matrix) -> Result<Self> {
        if samples.rows() == 0 {
            return Err(KssError::EmptyBatch("z-score fit"));
        }
        let mean = samples.column_means();
        let n = samples.rows() as f64;
        let mut var = vec![0.0; samples.cols()];
        for r in samples.row_iter() {
            for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var.iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect();
        Ok(ZScoreStats { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, samples: &Matrix) -> Result<Matrix> {
        if samples.rows() == 0 {
            return Ok(Matrix::zeros(0, self.dim()));
        }
        if samples.cols() != self.dim() {
            return Err(KssError::shape("z-score transform", self.dim(), samples.cols()));
        }
        let mut out = samples.clone();
        for i in 0..out.rows() {
            for ((x, m), s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.std) {
                *x = (*x - m) / s;
            }
        }
        Ok(out)
    }
}

pub fn zscore_fit(train: &LabeledDataset) -> Result<ZScoreStats> {
    ZScoreStats::fit(train.samples())
}

pub fn zscore_apply(stats: &ZScoreStats, dataset: &LabeledDataset) -> Result<LabeledDataset> {
    let mut out = dataset.clone();
    *out.samples_mut() = stats.transform(dataset.samples())?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_value_column() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0]]).unwrap();
        let s = ZScoreStats::fit(&x).unwrap();
        assert_eq!(s.mean, vec![2.0]);
        assert!((s.std[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let t = s.transform(&x).unwrap();
        let expected = 1.0 / (2.0f64 / 3.0).sqrt();
        assert!((t[(0, 0)] + expected).abs() < 1e-12);
        assert_eq!(t[(1, 0)], 0.0);
        assert!((t[(2, 0)] - 1.224744871391589).abs() < 1e-12);
    }

    #[test]
    fn constant_column_is_floored() {
        let x = Matrix::from_rows(&[[5.0], [5.0]]).unwrap();
        let s = ZScoreStats::fit(&x).unwrap();
        assert_eq!(s.std, vec![STD_FLOOR]);
        assert_eq!(s.transform(&x).unwrap().as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn empty_input_keeps_width() {
        let s = ZScoreStats {
            mean: vec![0.0; 4],
            std: vec![1.0; 4],
        };
        assert_eq!(s.transform(&Matrix::zeros(0, 0)).unwrap().shape(), (0, 4));
    }
}
