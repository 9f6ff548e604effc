//! Region metrics, flow statistics, perturbed starts, vote maps and the
//! cross-validation harness.

mod crossval;
mod flowstats;
mod metrics;
mod perturb;
mod report;
mod votemap;


pub use crossval::{
    crossval, evaluate_case, evaluate_model, mask_boundary, partition, run_seed, Aggregate, Case, CaseModel,
    CrossvalConfig, CrossvalReport, FoldReport, RunRecord,
};
pub use flowstats::{
    angle_error, angle_stats, signed_length_error, AngleErrorStats, LengthHistogram, ANGLE_THRESHOLDS,
    LENGTH_HISTOGRAM_RANGE,
};
pub use metrics::{confusion, metrics, summarize, ConfusionCounts, Metric, MetricSummary, MetricsReport};
pub use perturb::{perturb_init, perturbation_amplitude, MAX_PERTURBATION, PERTURBATION_FRACTION};
pub use report::{angle_table, metrics_table};
pub use votemap::{cardinal_angles, vote_map, VoteMap};
