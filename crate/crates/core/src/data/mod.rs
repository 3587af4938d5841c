//! Tabular data: feature schema, samples, CSV I/O, subset views and synthetic
//! tasks whose Shapley values are known.

mod dataset;
mod schema;
mod shift;
mod subset;
mod synth;

pub use dataset::{load_csv, load_csv_with_schema, Dataset, Sample, Split};
pub use schema::{FeatureKind, FeatureSchema, FeatureSpec, Task};
pub use shift::{shift_distribution, shift_with_bias};
pub use subset::{mask_to_size, SubsetView};
pub use synth::{synth_binary_classification, synth_linear_regression, BinaryTask, LinearTask};
