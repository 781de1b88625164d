//! Evaluation and reproduction harness.

mod compare;
mod heatmap;
mod report;
mod reproduce;
pub mod stats;

pub use compare::{
    compare, evaluate_entry, CompareOptions, ComparisonReport, Metric, PairwiseDelta, PolicyEntry,
    PolicySummary, COMPARE_SEED_BASE,
};
pub use heatmap::{export_heatmap, parse_history, time_axis, HeatmapFormat, PolicyHeatmap};
pub use report::{render_report, HeatmapSummary, RankingCheck, SeedScore};
pub use reproduce::{bundle_paths, reproduce, Manifest, ReproduceOptions, Reproduction};
pub use stats::Interval;
