//! Dataset and knowledge ingestion.

mod attributes;
mod dataset;
mod normalize;
mod sampling;
mod split;
mod synth;

pub use attributes::{AttributeMatrix, ClassId};
pub use dataset::{Denoiser, LabeledDataset, PassThrough, SplitTag};
pub use normalize::{zscore_apply, zscore_fit, ZScoreStats, STD_FLOOR};
pub use sampling::{sample_balanced_batch, BalancedBatch, ClassIndex};
pub use split::{make_split, SplitSpec, TEP_CLASS_COUNT};
pub use synth::{synth_generate, SynthConfig, SyntheticData};
