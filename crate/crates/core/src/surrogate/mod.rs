//! Feedforward network from parameters to reduced POD coefficients:
//! forward and reverse passes, ADAM, training with early stopping,
//! persistence and random hyperparameter search.

mod adam;
mod mlp;
mod search;
mod train;

pub use adam::{adam_step, AdamState};
pub use mlp::{relative_loss, Activation, Layer, MlpModel, ModelHeader, Normalizer};
pub use search::{random_search, SearchOutcome, SearchSpace, Trial};
pub use train::{train, Dataset, StopReason, TrainConfig, TrainHistory};
