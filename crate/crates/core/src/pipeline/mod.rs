//! Orchestration: Sobol sampling, snapshot generation and persistence,
//! POD fitting, surrogate training and evaluation, prediction and timing.

mod config;
mod fom;
mod sobol;
mod stages;
mod store;

pub use config::{
    EvalConfig, EvalWeighting, FieldRegion, Layout, NetworkConfig, PipelineConfig, SampleCounts, SearchConfig,
    TorqueConfig,
};
pub use fom::{machine_torque, reference_weighting, torque_radius, Extraction, FullOrder};
pub use sobol::{sobol_sample, star_discrepancy_1d, Sobol, MAX_DIM};
pub use stages::{
    bench, evaluate_predictor, measure_timing, predict, run_all, run_evaluation, run_pod, run_training,
    training_snapshots, ErrorStats, EvalReport, Prediction, RunArtifacts, SampleEval, SplitReport, Timing,
    TrainingOutcome,
};
pub use store::{
    generate_snapshots, generate_snapshots_for, split_samples, Manifest, Outcome, SampleRecord, SnapshotStore, Split,
    MANIFEST, MAX_FAILURE_RATE,
};
