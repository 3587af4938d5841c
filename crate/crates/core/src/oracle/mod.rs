//! Ground-truth Shapley values of a value function: exhaustive and
//! Monte-Carlo permutation averages, KernelSHAP, and axiom checks.

mod kernel;
mod rmse;
mod shapley;
mod value;

pub use kernel::{kernel_shap, kernel_weight, KernelShapResult};
pub use rmse::{attribution_rmse, RmseReport, SampleComparison};
pub use shapley::{
    shapley_exhaustive, shapley_montecarlo, shapley_tabulated, verify_axioms, AxiomCheck,
    AxiomReport, OracleResult, MAX_AXIOM_FEATURES, MAX_EXHAUSTIVE_FEATURES,
};
pub use value::{
    BackgroundValue, NativeValue, Provenance, TabularGame, ValueFunction, MAX_TABLE_FEATURES,
};
