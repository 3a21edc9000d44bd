//! AdamW with decoupled weight decay.

use serde::{Deserialize, Serialize};

use super::{DenseStack, Matrix, StackGrads};
use crate::error::{KssError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
struct Moments {
    weight: Matrix,
    bias: Vec<f64>,
}

/// Optimizer state for one [`DenseStack`].
#[derive(Debug, Clone)]
pub struct AdamW {
    config: AdamWConfig,
    step: u64,
    first: Vec<Moments>,
    second: Vec<Moments>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, params: &DenseStack) -> Self {
        let zeros = || {
            params
                .layers
                .iter()
                .map(|l| Moments {
                    weight: Matrix::zeros(l.weight.rows(), l.weight.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect::<Vec<_>>()
        };
        AdamW {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &AdamWConfig {
        &self.config
    }

    pub fn step(&mut self, params: &mut DenseStack, grads: &StackGrads) -> Result<()> {
        self.check_shapes(params, grads)?;
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);
        let decay = 1.0 - c.learning_rate * c.weight_decay;

        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *p = *p * decay - c.learning_rate * m_hat / (v_hat.sqrt() + c.eps);
            }
        };

        for (k, layer) in params.layers.iter_mut().enumerate() {
            let g = &grads.layers[k];
            let (m, v) = (&mut self.first[k], &mut self.second[k]);
            update(
                layer.weight.as_mut_slice(),
                g.weight.as_slice(),
                m.weight.as_mut_slice(),
                v.weight.as_mut_slice(),
            );
            update(&mut layer.bias, &g.bias, &mut m.bias, &mut v.bias);
        }
        if !params.is_finite() {
            return Err(KssError::NonFinite(format!(
                "parameters after optimizer step {}",
                self.step
            )));
        }
        Ok(())
    }

    fn check_shapes(&self, params: &DenseStack, grads: &StackGrads) -> Result<()> {
        if params.layers.len() != grads.layers.len() || params.layers.len() != self.first.len() {
            return Err(KssError::shape(
                "AdamW layer count",
                self.first.len(),
                format!("params {}, grads {}", params.layers.len(), grads.layers.len()),
            ));
        }
        for (k, (p, g)) in params.layers.iter().zip(&grads.layers).enumerate() {
            if p.weight.shape() != g.weight.shape()
                || p.bias.len() != g.bias.len()
                || p.weight.shape() != self.first[k].weight.shape()
            {
                return Err(KssError::shape(
                    format!("AdamW layer {k}"),
                    format!("{:?}", p.weight.shape()),
                    format!("{:?}", g.weight.shape()),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Dense};

    fn vector_params(w: &[f64]) -> DenseStack {
        let layer = Dense {
            weight: Matrix::from_vec(1, w.len(), w.to_vec()).unwrap(),
            bias: vec![0.0],
            activation: Activation::Identity,
        };
        DenseStack::from_layers(vec![layer], 0).unwrap()
    }

    fn grads_for(params: &DenseStack, g: &[f64]) -> StackGrads {
        let mut grads = StackGrads::zeros_like(params);
        grads.layers[0].weight.as_mut_slice().copy_from_slice(g);
        grads
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut p = vector_params(&[0.5, -1.0, 2.0]);
        let before = p.clone();
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut opt = AdamW::new(cfg, &p);
        let g = grads_for(&p, &[0.0, 0.0, 0.0]);
        opt.step(&mut p, &g).unwrap();
        assert_eq!(p, before);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate_against_sign() {
        let mut p = vector_params(&[0.0, 0.0, 0.0]);
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut opt = AdamW::new(cfg, &p);
        let g = grads_for(&p, &[3.0, -0.2, 1e-3]);
        opt.step(&mut p, &g).unwrap();
        let w = p.layers[0].weight.as_slice();
        assert!((w[0] + 1e-3).abs() < 1e-9);
        assert!((w[1] - 1e-3).abs() < 1e-9);
        assert!((w[2] + 1e-3).abs() < 1e-7);
    }

    #[test]
    fn converges_on_quadratic() {
        let target = [1.5, -0.7, 0.3, 2.0];
        let mut p = vector_params(&[0.0; 4]);
        let cfg = AdamWConfig {
            learning_rate: 0.05,
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut opt = AdamW::new(cfg, &p);
        for step in 1..=200u64 {
            let w = p.layers[0].weight.as_slice().to_vec();
            let g: Vec<f64> = w.iter().zip(&target).map(|(w, t)| 2.0 * (w - t)).collect();
            let grads = grads_for(&p, &g);
            opt.step(&mut p, &grads).unwrap();
            assert_eq!(opt.step_count(), step);
        }
        for (w, t) in p.layers[0].weight.as_slice().iter().zip(&target) {
            assert!((w - t).abs() < 1e-2, "{w} vs {t}");
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = vector_params(&[0.0; 3]);
        let other = vector_params(&[0.0; 4]);
        let mut opt = AdamW::new(AdamWConfig::default(), &p);
        let g = StackGrads::zeros_like(&other);
        assert!(opt.step(&mut p, &g).is_err());
        assert_eq!(opt.step_count(), 0);
    }
}
