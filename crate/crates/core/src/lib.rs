//! Generalized zero-shot fault diagnosis by knowledge space sharing.
//!
//! A generator recombines per-attribute latent features of seen fault classes
//! to synthesize samples of classes that were never observed, and a gate
//! models every seen class in the attribute-probability ("knowledge") space
//! with a Gaussian mixture and a control limit so that test samples outside
//! all seen classes are routed to a zero-shot attribute classifier.
//!
//! Modules, bottom-up:
//!
//! - [`nn`]: dense layers, reverse-mode gradients, losses, AdamW.
//! - [`data`]: attribute matrices, datasets, z-scoring, splits, batch
//!   sampling and a synthetic data oracle.
//! - [`generator`]: extractor bank, attribute recognizers, feature group
//!   reorganization, reconstructor and the aid-discriminator.
//! - [`gate`]: attribute projectors, per-class mixtures, control limits,
//!   coarse/fine classification and the DAP fallback.
//! - [`eval`]: accuracies, harmonic mean and report export.
//! - [`pipeline`]: configuration, checkpoints and the command implementations
//!   behind the `kss-diag` binary.
//!
//! See the crate's `examples/` directory for one runnable program per
//! capability.

pub mod data;
pub mod error;
pub mod eval;
pub mod gate;
pub mod generator;
pub mod nn;
pub mod pipeline;

pub use error::{KssError, Result};
