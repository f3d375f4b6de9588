//! Flexible policy iteration: a least-squares policy-iteration controller
//! with prioritized experience replay, supplemental-value shaping and
//! weighted least-squares value approximation, together with a surrogate
//! four-phase prosthetic-knee gait plant and a linear-quadratic reference
//! plant for oracle-checked runs.

pub mod approximator;
pub mod engine;
pub mod error;
pub mod plant;
pub mod replay;
pub mod types;

pub use approximator::{
    check_rank_condition, eval_phi, eval_q, min_q_over_action, solve_weighted_ls, BasisPhi,
    BasisSigma, PolicyApprox, QApprox, RankStatus, RegressionSystem,
};
pub use engine::{
    augmented_stage_cost, check_error_bound, check_monotonicity, derive_seed, evaluate_policy,
    extract_supplemental, improve_policy, probe_grid, run_fpi, ErrorBoundProbe, FpiController,
    FpiOutcome, FpiSetup, IterationDiagnostics, SupplementalValue,
};
pub use error::FpiError;
pub use plant::{
    apply_impedance_update, generate_variance_trace, run_trial, torque, trace_from_csv,
    trace_to_csv, FailureKind, GaitPlant, LinearQuadraticPlant, NoiseModel, PhaseModel, Plant,
    SamplingMode, SurrogateGaitPlant, TrialProtocol, TrialResult, TrialSetup, NUM_PHASES,
};
pub use replay::{
    iteration_weights, prepare_iteration_data, rank_based_weights, td_error, ReplayBuffer,
};
pub use types::{
    stage_cost, Action, BatchSizeMode, CostMatrices, DataMode, FpiConfig, GaitSample,
    ImpedanceSetting, State,
};
