//! Metrics, fidelity experiments (feature masking and adding), subset-size
//! evaluation, timing, and report files.

mod experiments;
pub mod metrics;
mod report;

pub use experiments::{
    adding_experiment, masking_experiment, predict_subsets, subset_size_eval, timing, CurveOptions,
    CurveReport, CurveRow, RankKey, Ranker, SizeRow, TimingReport, TimingRow,
};
pub use metrics::{metrics, MetricSuite};
pub use report::{
    emit_report, sample_svg, summary_svg, AttributionTable, ExperimentReport, MetricEntry,
};
