//! The network mapping sample values on `Ω` to basis coefficients, and its
//! training.

pub mod adam;
pub mod loss;
pub mod mlp;
pub mod model;
pub mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{loss_core, loss_ext_monotone, total_loss, LossWeights, MonotonePenalty};
pub use mlp::{Activation, Cache, LayerDef, LayerSpec, Mlp};
pub use model::{LayerRecord, ModelFile, SCHEMA_VERSION};
pub use train::{
    gradcheck, gradcheck_random, predict_coefficients, predict_extrapolation, probe_points, train, train_from,
    ExtProbe, GradcheckReport, LrSchedule, TrainConfig, TrainLog, TrainSetup,
};
