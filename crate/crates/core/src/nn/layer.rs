//! Dense layers and layer stacks with cached forward passes for reverse-mode
//! gradients.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{KssError, Result};

/// Negative-side slope of the leaky ReLU.
pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    LeakyRelu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu => {
                if x >= 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation `x` and the output `y`.
    #[inline]
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::LeakyRelu => {
                if x >= 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One affine map followed by an element-wise activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out × in`, row-major.
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng>(input: usize, output: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        let values = (0..input * output)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Dense {
            weight: Matrix::from_vec(output, input, values).expect("sized by construction"),
            bias: vec![0.0; output],
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    /// Returns `(pre_activation, output)`.
    fn forward_parts(&self, input: &Matrix) -> Result<(Matrix, Matrix)> {
        let mut pre = input.matmul_t(&self.weight)?;
        for i in 0..pre.rows() {
            for (v, b) in pre.row_mut(i).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        let act = self.activation;
        let out = pre.map(|x| act.apply(x));
        Ok((pre, out))
    }
}

/// Parameter gradients of a single layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Gradients mirroring a [`DenseStack`] layer by layer.
#[derive(Debug, Clone, PartialEq)]
pub struct StackGrads {
    pub layers: Vec<DenseGrads>,
}

impl StackGrads {
    pub fn zeros_like(stack: &DenseStack) -> Self {
        StackGrads {
            layers: stack
                .layers
                .iter()
                .map(|l| DenseGrads {
                    weight: Matrix::zeros(l.weight.rows(), l.weight.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn accumulate(&mut self, other: &StackGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight
                .as_mut_slice()
                .iter_mut()
                .zip(b.weight.as_slice())
                .for_each(|(x, y)| *x += y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weight.scale(factor);
            l.bias.iter_mut().for_each(|b| *b *= factor);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weight.as_slice().iter().chain(&l.bias))
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Cached activations from [`DenseStack::forward_trace`].
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Input of every layer; `inputs[0]` is the batch.
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
    output: Matrix,
}

impl ForwardTrace {
    pub fn output(&self) -> &Matrix {
        &self.output
    }

    pub fn into_output(self) -> Matrix {
        self.output
    }
}

/// A feed-forward chain of [`Dense`] layers.
///
/// Serializes as a versioned [`StackRecord`]; deserialization re-validates
/// the layer chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "StackRecord", try_from = "StackRecord")]
pub struct DenseStack {
    pub layers: Vec<Dense>,
    pub seed: u64,
}

impl DenseStack {
    /// Builds a stack through `dims` (`dims[0]` is the input width). Hidden
    /// layers use `hidden`, the last layer uses `output`.
    pub fn new(dims: &[usize], hidden: Activation, output: Activation, seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(KssError::Config(format!(
                "layer dims must have at least two positive entries, got {dims:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let act = if k == last { output } else { hidden };
                Dense::init(w[0], w[1], act, &mut rng)
            })
            .collect();
        Ok(DenseStack { layers, seed })
    }

    pub fn from_layers(layers: Vec<Dense>, seed: u64) -> Result<Self> {
        if layers.is_empty() {
            return Err(KssError::Config("stack needs at least one layer".into()));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(KssError::shape(
                    format!("layer {}", k + 1),
                    pair[0].output_dim(),
                    pair[1].input_dim(),
                ));
            }
        }
        for (k, l) in layers.iter().enumerate() {
            if l.bias.len() != l.output_dim() {
                return Err(KssError::shape(
                    format!("layer {k} bias"),
                    l.output_dim(),
                    l.bias.len(),
                ));
            }
        }
        Ok(DenseStack { layers, seed })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.as_slice().len() + l.bias.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    fn check_input(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.input_dim() {
            return Err(KssError::shape(
                "layer 0 input",
                self.input_dim(),
                batch.cols(),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, batch: &Matrix) -> Result<Matrix> {
        self.check_input(batch)?;
        let mut x = batch.clone();
        for layer in &self.layers {
            x = layer.forward_parts(&x)?.1;
        }
        Ok(x)
    }

    pub fn forward_trace(&self, batch: &Matrix) -> Result<ForwardTrace> {
        self.check_input(batch)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut x = batch.clone();
        for layer in &self.layers {
            let (z, y) = layer.forward_parts(&x)?;
            inputs.push(x);
            pre.push(z);
            x = y;
        }
        Ok(ForwardTrace {
            inputs,
            pre,
            output: x,
        })
    }

    /// Back-propagates `grad_output` (gradient of a scalar w.r.t. the traced
    /// output) and returns parameter gradients plus the input gradient.
    pub fn backward(&self, trace: &ForwardTrace, grad_output: &Matrix) -> Result<(StackGrads, Matrix)> {
        self.backward_impl(trace, grad_output, true)
            .map(|(g, x)| (g.expect("requested"), x))
    }

    /// Input gradient only, for frozen networks.
    pub fn backward_input(&self, trace: &ForwardTrace, grad_output: &Matrix) -> Result<Matrix> {
        self.backward_impl(trace, grad_output, false).map(|(_, x)| x)
    }

    fn backward_impl(
        &self,
        trace: &ForwardTrace,
        grad_output: &Matrix,
        want_params: bool,
    ) -> Result<(Option<StackGrads>, Matrix)> {
        if grad_output.shape() != trace.output.shape() {
            return Err(KssError::shape(
                "backward output gradient",
                format!("{:?}", trace.output.shape()),
                format!("{:?}", grad_output.shape()),
            ));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = grad_output.clone();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let pre = &trace.pre[k];
            let out = if k + 1 < self.layers.len() {
                &trace.inputs[k + 1]
            } else {
                &trace.output
            };
            // dL/dz = dL/dy ⊙ f'(z)
            let mut delta = upstream;
            for ((g, &z), &y) in delta
                .as_mut_slice()
                .iter_mut()
                .zip(pre.as_slice())
                .zip(out.as_slice())
            {
                *g *= layer.activation.derivative(z, y);
            }
            if !delta.is_finite() {
                return Err(KssError::NonFinite(format!("backward through layer {k}")));
            }
            if want_params {
                let weight = delta.t_matmul(&trace.inputs[k])?;
                let mut bias = vec![0.0; layer.output_dim()];
                for r in delta.row_iter() {
                    bias.iter_mut().zip(r).for_each(|(b, v)| *b += v);
                }
                grads.push(DenseGrads { weight, bias });
            }
            upstream = delta.matmul(&layer.weight)?;
        }
        grads.reverse();
        let grads = want_params.then_some(StackGrads { layers: grads });
        Ok((grads, upstream))
    }
}

pub const STACK_RECORD_VERSION: u32 = 1;

/// Flat on-disk form of a [`DenseStack`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StackRecord {
    pub version: u32,
    pub seed: u64,
    pub layers: Vec<LayerRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerRecord {
    #[serde(rename = "in")]
    pub input: usize,
    #[serde(rename = "out")]
    pub output: usize,
    pub activation: Activation,
    /// Row-major `out × in`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl From<DenseStack> for StackRecord {
    fn from(stack: DenseStack) -> Self {
        StackRecord {
            version: STACK_RECORD_VERSION,
            seed: stack.seed,
            layers: stack
                .layers
                .into_iter()
                .map(|l| LayerRecord {
                    input: l.input_dim(),
                    output: l.output_dim(),
                    activation: l.activation,
                    weights: l.weight.into_vec(),
                    biases: l.bias,
                })
                .collect(),
        }
    }
}

impl TryFrom<StackRecord> for DenseStack {
    type Error = KssError;

    fn try_from(record: StackRecord) -> Result<Self> {
        if record.version != STACK_RECORD_VERSION {
            return Err(KssError::Config(format!(
                "unsupported layer record version {}",
                record.version
            )));
        }
        let layers = record
            .layers
            .into_iter()
            .map(|l| {
                Ok(Dense {
                    weight: Matrix::from_vec(l.output, l.input, l.weights)?,
                    bias: l.biases,
                    activation: l.activation,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        DenseStack::from_layers(layers, record.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_layer_passes_input_through() {
        let layer = Dense {
            weight: Matrix::identity(3),
            bias: vec![0.0; 3],
            activation: Activation::Identity,
        };
        let net = DenseStack::from_layers(vec![layer], 0).unwrap();
        let x = Matrix::from_rows(&[[1.5, -2.0, 0.25]]).unwrap();
        assert_eq!(net.forward(&x).unwrap(), x);
    }

    #[test]
    fn leaky_relu_negative_side() {
        assert_eq!(Activation::LeakyRelu.apply(-1.0), -0.01);
        assert_eq!(Activation::LeakyRelu.apply(2.0), 2.0);
    }

    #[test]
    fn two_layer_matches_hand_arithmetic() {
        let l1 = Dense {
            weight: Matrix::from_rows(&[[0.5, -1.0], [2.0, 0.25]]).unwrap(),
            bias: vec![0.1, -0.2],
            activation: Activation::LeakyRelu,
        };
        let l2 = Dense {
            weight: Matrix::from_rows(&[[1.0, -3.0], [0.5, 0.5]]).unwrap(),
            bias: vec![0.0, 1.0],
            activation: Activation::Identity,
        };
        let net = DenseStack::from_layers(vec![l1, l2], 0).unwrap();
        let x = Matrix::from_rows(&[[1.0, 2.0], [-1.0, 0.5]]).unwrap();
        let y = net.forward(&x).unwrap();
        // row 0: h = [0.5-2+0.1, 2+0.5-0.2] = [-1.4, 2.3] -> leaky [-0.014, 2.3]
        //        y = [-0.014 - 6.9, -0.007 + 1.15 + 1]
        // row 1: h = [-0.5-0.5+0.1, -2+0.125-0.2] = [-0.9, -2.075] -> [-0.009, -0.02075]
        //        y = [-0.009 + 0.06225, -0.0045 - 0.010375 + 1]
        let expected = [
            -0.014 - 6.9,
            -0.007 + 1.15 + 1.0,
            -0.009 + 0.06225,
            -0.0045 - 0.010375 + 1.0,
        ];
        for (a, b) in y.as_slice().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn wrong_input_width_names_layer() {
        let net = DenseStack::new(&[3, 4, 2], Activation::LeakyRelu, Activation::Identity, 1).unwrap();
        let err = net.forward(&Matrix::zeros(2, 5)).unwrap_err();
        assert!(err.to_string().contains("layer 0"), "{err}");
    }

    #[test]
    fn mismatched_chain_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = Dense::init(3, 4, Activation::Identity, &mut rng);
        let b = Dense::init(5, 2, Activation::Identity, &mut rng);
        assert!(DenseStack::from_layers(vec![a, b], 0).is_err());
    }

    #[test]
    fn stack_equals_composition_of_layers() {
        let net = DenseStack::new(&[4, 6, 5, 3], Activation::LeakyRelu, Activation::Sigmoid, 9).unwrap();
        let x = Matrix::from_rows(&[[0.1, -0.3, 2.0, 0.7], [1.0, 1.0, -1.0, 0.0]]).unwrap();
        let mut h = x.clone();
        for l in &net.layers {
            let single = DenseStack::from_layers(vec![l.clone()], 0).unwrap();
            h = single.forward(&h).unwrap();
        }
        assert_eq!(net.forward(&x).unwrap(), h);
    }

    #[test]
    fn json_record_round_trips_bit_exact() {
        let net = DenseStack::new(&[3, 5, 2], Activation::LeakyRelu, Activation::Sigmoid, 17).unwrap();
        let json = serde_json::to_string(&net).unwrap();
        assert!(json.contains("\"version\":1"));
        let back: DenseStack = serde_json::from_str(&json).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn record_with_broken_chain_is_rejected() {
        let net = DenseStack::new(&[3, 5, 2], Activation::LeakyRelu, Activation::Sigmoid, 17).unwrap();
        let mut record = StackRecord::from(net);
        record.layers[1].input = 4;
        record.layers[1].weights.truncate(8);
        assert!(DenseStack::try_from(record).is_err());
    }

    #[test]
    fn same_seed_same_init() {
        let a = DenseStack::new(&[5, 7, 2], Activation::LeakyRelu, Activation::Identity, 42).unwrap();
        let b = DenseStack::new(&[5, 7, 2], Activation::LeakyRelu, Activation::Identity, 42).unwrap();
        let c = DenseStack::new(&[5, 7, 2], Activation::LeakyRelu, Activation::Identity, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let limit = (6.0f64 / 12.0).sqrt();
        assert!(a.layers[0].weight.as_slice().iter().all(|w| w.abs() <= limit));
        assert!(a.layers.iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
    }
}
