//! Minimal dense-network kernel: matrices, layer stacks with reverse-mode
//! gradients, losses and AdamW.

mod layer;
mod loss;
mod matrix;
mod optim;

pub use layer::{
    sigmoid, Activation, Dense, DenseGrads, DenseStack, ForwardTrace, LayerRecord, StackGrads,
    StackRecord, LEAKY_SLOPE, STACK_RECORD_VERSION,
};
pub use loss::{
    log_sum_exp, loss_and_grads, mse, paired_cross_entropy, softmax, softmax_cross_entropy,
    LossKind, Targets, PROB_CLAMP,
};
pub(crate) use loss::binary_target;
pub use matrix::Matrix;
pub use optim::{AdamW, AdamWConfig};
