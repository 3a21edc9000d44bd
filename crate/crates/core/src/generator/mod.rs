//! Knowledge-guided sample generator and its aid-discriminator.

mod config;
mod fgr;
mod losses;
mod networks;
mod train;

pub use config::{GeneratorArch, GeneratorHyperparams, LossSet, LossWeights};
pub use fgr::{
    assemble, differing_attributes, feature_group_reorganize, l1_distance, plan_reorganization,
    similar_category_search, BlockSource, DonorPool, FgrLayout, ReorganizationPlan,
};
pub use losses::{adversarial_losses, attribute_variance_loss, discriminator_losses, discriminator_objective};
pub use networks::{
    sub_seed, AidDiscriminator, ExtractorBank, FeatureGroup, ReconstructionTrace, RecognizerBank,
    RecognizerLoss, Reconstructor,
};
pub use train::{
    aid_discriminator_objective, batches_per_epoch, generate_samples, generator_objective,
    pretrain_aid_discriminator, train_kss_g, FakeBlock, Generator, GeneratorEpoch, GeneratorGrads,
    GeneratorStepPlan, GeneratorTrainingReport, LossBreakdown, PretrainEpoch, TrainingContext,
};
