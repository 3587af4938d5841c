//! The self-attributing network.
//!
//! Three parts share one feature embedder:
//!
//! * the marginal-contribution module maps a feature and the set of features
//!   that joined before it to a scalar contribution `Δ`. Summing `Δ` along a
//!   join order gives an order-dependent prediction `f_c`;
//! * the Shapley module maps a feature subset to a matrix of positional
//!   attributions `φ[i][k]` (feature `i` joining at position `k`). Its
//!   attention carries no position information, so the matrix rows follow the
//!   listing order of the input and nothing else;
//! * the prediction is `f(x_S) = φ₀ + Σ_i φ_i` with `φ_i` the row mean of the
//!   positional matrix over the `|S|` valid positions.
//!
//! Training (see [`crate::training`]) distills the Shapley module towards the
//! marginal contributions, which makes `φ_i` the Shapley value of `f` itself.

mod config;
mod embed;
mod layers;
mod sasanet;

pub use config::{ArchConfig, AttentionConfig, Link, NullContext};
pub use sasanet::{AttributionResult, SasanetModel, SeqBatch, TrainForward};
