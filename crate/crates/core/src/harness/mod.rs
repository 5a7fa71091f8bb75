//! Convergence experiments: finite networks of increasing size compared
//! against the limit law through moments, per-time KS tests and window test
//! functions, under weight-averaged, fixed-weight and single-path regimes.

mod plan;
mod report;
mod run;

pub use plan::{
    BoundTestFunction, ErgodicPlan, ExceedancePlan, Experiment, ExperimentPlan, Metric, TestFunction,
};
pub use report::{
    distance_report, Check, DistanceRecord, DistanceReport, ErgodicRecord, ExceedanceRecord, KsResult,
    LimitValue, MetricSummary,
};
pub use run::{
    clt_envelope, compare_quenched_to_averaged, exceedance_fractions, quenched_weight_seed,
    run_averaged_convergence, run_ergodic_path, run_plan, run_quenched_convergence,
    shift_mean_and_stderr, trial_seed, SLOPE_RANGE,
};
