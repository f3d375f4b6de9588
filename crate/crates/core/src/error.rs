//! Error type shared across the library.

use nalgebra::DVector;
use std::fmt;

/// Errors raised by configuration validation, policy evaluation and the
/// tuning loop.
#[derive(Debug, Clone)]
pub enum FpiError {
    /// Invalid configuration; the message names the offending field.
    Config(String),
    /// The regression design matrix stayed rank deficient for several
    /// consecutive iterations, so the critic weights are not identifiable.
    RankDeficiencyPersistent { iterations: usize, rank: usize, required: usize },
    /// The critic is not convex in the action at the given state, so the
    /// analytic minimizer does not exist.
    NonConvexInAction { state: DVector<f64> },
    /// Actor gradient descent diverged; carries the last stable gain matrix.
    ActorDivergence { last_stable_gains: Box<nalgebra::DMatrix<f64>> },
    /// A state left the configured safety box during learning.
    SafetyBreach { cycle: usize, state: DVector<f64> },
    /// Not enough samples to run a policy evaluation.
    InsufficientData { have: usize, need: usize },
    /// The Bellman residual exceeded the configured abort bound.
    BellmanResidual { residual: f64, bound: f64 },
    /// A computation produced a non-finite value.
    NonFinite(&'static str),
}

impl fmt::Display for FpiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FpiError::Config(msg) => write!(f, "invalid configuration: {msg}"),
            FpiError::RankDeficiencyPersistent { iterations, rank, required } => write!(
                f,
                "design matrix rank {rank} < {required} for {iterations} consecutive iterations"
            ),
            FpiError::NonConvexInAction { state } => {
                write!(f, "critic is not convex in the action at state {}", state.transpose())
            }
            FpiError::ActorDivergence { .. } => {
                write!(f, "actor gradient descent diverged; last stable gains retained")
            }
            FpiError::SafetyBreach { cycle, state } => {
                write!(f, "state {} left the safety box at cycle {cycle}", state.transpose())
            }
            FpiError::InsufficientData { have, need } => {
                write!(f, "need {need} samples for policy evaluation, have {have}")
            }
            FpiError::BellmanResidual { residual, bound } => {
                write!(f, "Bellman residual {residual:.3e} exceeds abort bound {bound:.3e}")
            }
            FpiError::NonFinite(what) => write!(f, "non-finite value in {what}"),
        }
    }
}

impl std::error::Error for FpiError {}
