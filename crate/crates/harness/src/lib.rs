//! Trial orchestration for online experiment design on the simulated NV
//! lab: the pipelined design loop, paired heuristic comparisons with
//! per-trial resume, learning-curve statistics and risk-estimator heatmaps.

pub mod comparison;
pub mod config;
pub mod heatmap;
pub mod record;
pub mod stats;
pub mod trial;

pub use comparison::{run_comparison, ComparisonSummary};
pub use config::{LabMode, RunConfig};
pub use heatmap::{risk_heatmap, HeatmapConfig};
pub use record::{load_records, StepRecord, TrialRecord, TrialStatus};
pub use stats::{experiment_histogram, learning_curve_stats};
pub use trial::{run_trial, run_trial_with};
