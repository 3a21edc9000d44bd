//! Knowledge-space gate separating seen from unseen faults.

mod dap;
mod gmm;
mod model;
mod projector;

pub use dap::{dap_classify, dap_train, DapModel, ValueGaussian, VAR_SMOOTHING};
pub use gmm::{gmm_fit_em, gmm_nll, EmConfig, Gmm};
pub use model::{
    coarse_classify, control_limit, nearest_seen, train_gate, Diagnosis, DiagnosisPath, GateConfig,
    GateModel, GatePools, SeenClassModel,
};
pub use projector::{train_ap, AttributeNet, AttributeProjector, ProjectorConfig, ProjectorStage};
