//! Permutation sampling, losses, closed-form distillation targets and the
//! training loop.

mod config;
pub mod estimators;
pub mod loss;
mod permutation;
mod trainer;

pub use config::{LossVariant, TrainConfig};
pub use loss::{
    combined_loss, distill_direct_loss, distill_positional_loss, marginal_loss, value_loss,
    LossTerms, LossWeights, Teacher,
};
pub use permutation::{sample_permutation, seeded_permutation, Lineage, Permutation};
pub use trainer::{
    continue_training, initial_bias, train, train_with, EpochRecord, History, TrainOptions,
    TrainOutcome,
};
