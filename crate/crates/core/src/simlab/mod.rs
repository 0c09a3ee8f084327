//! Simulation laboratory: synthetic scenarios, replicated studies, scoring
//! metrics, and numerical experiments on the smoothing-scale asymptotics.

pub mod dgp;
pub mod metrics;
pub mod sensitivity;
pub mod study;
pub mod theory;

pub use dgp::{
    base_direction, generate_dgp, true_baseline_coefficients, true_direction, BaselineKind,
    DgpSpec, DgpTruth, NOISE_COLUMNS,
};
pub use metrics::{angular_error, misclassification};
pub use sensitivity::{action_sensitivity, tau_sensitivity, ActionGridCell, TauSensitivityRow};
pub use study::{
    run_replicate, run_study, LongRow, ParamSummary, ReplicateFailure, ReplicateRecord,
    StudyAggregates, StudyConfig, StudyResult,
};
pub use theory::{
    fit_log_slope, gate_error_exact, gate_error_gaussian, margin_decay_gaussian,
    pseudo_true_exponent, pseudo_true_path, schedule_feasibility, GateErrorEstimate, MarginDecay,
    PseudoTruePoint, ScheduleFlags, MARGIN_TAU_GRID, PSEUDO_TRUE_BUDGET, PSEUDO_TRUE_MC_SIZE,
    PSEUDO_TRUE_TAU_GRID,
};
