//! Core domain value types shared by all modules.
//!
//! All types here are immutable values and safe to copy between threads.
//! Angles are in degrees and durations in seconds by convention; stiffness
//! and damping are treated as dimensionless reals.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::FpiError;

/// Per-phase tracking error: peak knee-angle error (degrees) and phase
/// duration error (seconds).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct State {
    pub peak_error: f64,
    pub duration_error: f64,
}

impl State {
    pub fn new(peak_error: f64, duration_error: f64) -> Self {
        debug_assert!(peak_error.is_finite() && duration_error.is_finite());
        Self { peak_error, duration_error }
    }

    pub fn zero() -> Self {
        Self { peak_error: 0.0, duration_error: 0.0 }
    }

    pub fn to_vector(self) -> DVector<f64> {
        DVector::from_vec(vec![self.peak_error, self.duration_error])
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        assert_eq!(v.len(), 2, "gait state is two dimensional");
        Self::new(v[0], v[1])
    }
}

/// Per-cycle increments applied to one phase's impedance parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Action {
    pub d_stiffness: f64,
    pub d_damping: f64,
    pub d_equilibrium: f64,
}

impl Action {
    pub fn new(d_stiffness: f64, d_damping: f64, d_equilibrium: f64) -> Self {
        debug_assert!(
            d_stiffness.is_finite() && d_damping.is_finite() && d_equilibrium.is_finite()
        );
        Self { d_stiffness, d_damping, d_equilibrium }
    }

    pub fn zero() -> Self {
        Self { d_stiffness: 0.0, d_damping: 0.0, d_equilibrium: 0.0 }
    }

    pub fn to_vector(self) -> DVector<f64> {
        DVector::from_vec(vec![self.d_stiffness, self.d_damping, self.d_equilibrium])
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        assert_eq!(v.len(), 3, "gait action is three dimensional");
        Self::new(v[0], v[1], v[2])
    }
}

/// One phase's impedance parameter triple: stiffness, damping and
/// equilibrium angle (degrees). Stiffness and damping are non-negative.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpedanceSetting {
    pub stiffness: f64,
    pub damping: f64,
    pub equilibrium_angle: f64,
}

impl ImpedanceSetting {
    pub fn new(stiffness: f64, damping: f64, equilibrium_angle: f64) -> Result<Self, FpiError> {
        if !(stiffness.is_finite() && damping.is_finite() && equilibrium_angle.is_finite()) {
            return Err(FpiError::Config("impedance setting must be finite".into()));
        }
        if stiffness < 0.0 || damping < 0.0 {
            return Err(FpiError::Config(
                "impedance stiffness and damping must be non-negative".into(),
            ));
        }
        Ok(Self { stiffness, damping, equilibrium_angle })
    }

    pub fn to_vector(self) -> DVector<f64> {
        DVector::from_vec(vec![self.stiffness, self.damping, self.equilibrium_angle])
    }
}

/// Quadratic stage-cost matrices, validated positive definite on
/// construction.
#[derive(Clone, Debug)]
pub struct CostMatrices {
    r_x: DMatrix<f64>,
    r_u: DMatrix<f64>,
}

impl CostMatrices {
    pub fn new(r_x: DMatrix<f64>, r_u: DMatrix<f64>) -> Result<Self, FpiError> {
        check_positive_definite(&r_x, "r_x")?;
        check_positive_definite(&r_u, "r_u")?;
        Ok(Self { r_x, r_u })
    }

    /// The robotic-knee defaults: `R_x = diag(1, 1)`, `R_u = diag(0.1, 0.2, 0.1)`.
    pub fn knee_default() -> Self {
        Self {
            r_x: DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0])),
            r_u: DMatrix::from_diagonal(&DVector::from_vec(vec![0.1, 0.2, 0.1])),
        }
    }

    pub fn state_weight(&self) -> &DMatrix<f64> {
        &self.r_x
    }

    pub fn action_weight(&self) -> &DMatrix<f64> {
        &self.r_u
    }

    pub fn state_dim(&self) -> usize {
        self.r_x.nrows()
    }

    pub fn action_dim(&self) -> usize {
        self.r_u.nrows()
    }

    /// Instantaneous cost `xᵀ R_x x + uᵀ R_u u`. Non-negative, and zero
    /// exactly when both the state and the action are zero.
    pub fn evaluate(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        assert_eq!(x.len(), self.r_x.nrows(), "state dimension mismatch");
        assert_eq!(u.len(), self.r_u.nrows(), "action dimension mismatch");
        (x.transpose() * &self.r_x * x)[(0, 0)] + (u.transpose() * &self.r_u * u)[(0, 0)]
    }
}

fn check_positive_definite(m: &DMatrix<f64>, name: &str) -> Result<(), FpiError> {
    if m.nrows() != m.ncols() {
        return Err(FpiError::Config(format!("{name} must be square")));
    }
    let asymmetry = (m - m.transpose()).amax();
    if asymmetry > 1e-12 * (1.0 + m.amax()) {
        return Err(FpiError::Config(format!("{name} must be symmetric")));
    }
    if Cholesky::new(m.clone()).is_none() {
        return Err(FpiError::Config(format!("{name} must be positive definite")));
    }
    Ok(())
}

/// Quadratic stage cost of one gait transition.
pub fn stage_cost(state: &State, action: &Action, cost: &CostMatrices) -> f64 {
    cost.evaluate(&state.to_vector(), &action.to_vector())
}

/// One recorded transition `(x_k, u_k, x_{k+1})` together with its stage
/// cost and the per-iteration prioritization caches.
///
/// States and actions are stored as plain vectors so the same buffer and
/// solver code paths serve both the 2-state/3-action gait channels and the
/// generic-dimension linear-quadratic test plants.
#[derive(Clone, Debug)]
pub struct GaitSample {
    pub state: DVector<f64>,
    pub action: DVector<f64>,
    pub next_state: DVector<f64>,
    /// Raw stage cost of the transition, before any supplemental shaping.
    pub stage_cost: f64,
    /// TD error under the most recent prioritization pass.
    pub td_error: Option<f64>,
    /// Rank assigned by the most recent prioritization pass (1 = largest
    /// absolute TD error).
    pub rank: Option<usize>,
    /// Normalized replay weight in `[0, 1]`.
    pub weight: f64,
    /// Index of the policy iteration that generated this sample; batch mode
    /// selects only same-policy samples.
    pub policy_tag: u32,
}

impl GaitSample {
    pub fn new(
        state: DVector<f64>,
        action: DVector<f64>,
        next_state: DVector<f64>,
        stage_cost: f64,
    ) -> Self {
        debug_assert!(stage_cost >= 0.0 && stage_cost.is_finite());
        Self {
            state,
            action,
            next_state,
            stage_cost,
            td_error: None,
            rank: None,
            weight: 1.0,
            policy_tag: 0,
        }
    }

    pub fn with_policy_tag(mut self, tag: u32) -> Self {
        self.policy_tag = tag;
        self
    }

    /// Convenience constructor from the typed gait-channel values.
    pub fn from_gait(state: State, action: Action, next_state: State, stage_cost: f64) -> Self {
        Self::new(state.to_vector(), action.to_vector(), next_state.to_vector(), stage_cost)
    }
}

/// Batch-size handling (Setting 1): fixed, or grown whenever a new policy
/// fails to lower the stage cost.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchSizeMode {
    Fixed,
    Adaptive,
}

/// Data collection mode (Setting 2): fresh same-policy batches, or one new
/// sample per cycle replayed together with the whole buffer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataMode {
    Batch,
    Incremental,
}

/// All tuning-loop knobs: the four setting toggles plus hyperparameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FpiConfig {
    /// Setting 1; only meaningful in batch mode.
    pub batch_size_mode: BatchSizeMode,
    /// Setting 2.
    pub data_mode: DataMode,
    /// Setting 3: rank-based replay weights when true, unit weights when false.
    pub prioritization: bool,
    /// Setting 4: decaying supplemental-value shaping when true.
    pub supplemental: bool,
    /// Initial batch size `N_b`; also the warmup length in incremental mode.
    pub n_b_initial: usize,
    /// Batch growth step in adaptive mode.
    pub n_b_increment: usize,
    /// Memory buffer capacity `N`.
    pub buffer_max: usize,
    /// Base of the supplemental coefficient schedule `α_i = alpha_base^i`.
    pub alpha_base: f64,
    /// Gaussian exploration noise, as a fraction of the per-component
    /// action magnitude scale.
    pub exploration_noise_fraction: f64,
    /// Actor gradient-descent learning rate `l`.
    pub learning_rate: f64,
    /// Cap on actor gradient-descent steps per policy update.
    pub actor_inner_iters: usize,
    /// Termination tolerance `ε` on the critic weight change, also used as
    /// the actor gradient tolerance.
    pub convergence_tol: f64,
    /// Cap on policy iterations.
    pub i_max: usize,
    pub rng_seed: u64,
    /// Relative singular-value cutoff for the pseudoinverse and the rank
    /// check.
    #[serde(default = "default_rank_tol")]
    pub rank_tol: f64,
    /// Optional stronger spectral truncation for the least-squares solve;
    /// defaults to `rank_tol`. Raising it trades fidelity on weakly
    /// excited basis directions for bounded critics.
    #[serde(default)]
    pub solver_truncation: Option<f64>,
    /// Abort the run when the Bellman residual exceeds this bound.
    #[serde(default)]
    pub bellman_residual_abort: Option<f64>,
}

fn default_rank_tol() -> f64 {
    1e-10
}

impl FpiConfig {
    /// Validate against the basis dimension `L`.
    pub fn validate(&self, basis_len: usize) -> Result<(), FpiError> {
        if self.n_b_initial < basis_len {
            return Err(FpiError::Config(format!(
                "fpi.n_b_initial = {} must be at least the basis dimension L = {basis_len}",
                self.n_b_initial
            )));
        }
        if self.buffer_max < self.n_b_initial {
            return Err(FpiError::Config(format!(
                "fpi.buffer_max = {} must be at least fpi.n_b_initial = {}",
                self.buffer_max, self.n_b_initial
            )));
        }
        if self.n_b_increment == 0 {
            return Err(FpiError::Config("fpi.n_b_increment must be positive".into()));
        }
        if !(self.alpha_base > 0.0 && self.alpha_base < 1.0) {
            return Err(FpiError::Config(format!(
                "fpi.alpha_base = {} must lie in (0, 1)",
                self.alpha_base
            )));
        }
        if self.exploration_noise_fraction < 0.0 {
            return Err(FpiError::Config(
                "fpi.exploration_noise_fraction must be non-negative".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate < 1.0) {
            return Err(FpiError::Config(format!(
                "fpi.learning_rate = {} must lie in (0, 1)",
                self.learning_rate
            )));
        }
        if self.actor_inner_iters == 0 {
            return Err(FpiError::Config("fpi.actor_inner_iters must be positive".into()));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(FpiError::Config("fpi.convergence_tol must be positive".into()));
        }
        if self.i_max == 0 {
            return Err(FpiError::Config("fpi.i_max must be positive".into()));
        }
        if !(self.rank_tol > 0.0) {
            return Err(FpiError::Config("fpi.rank_tol must be positive".into()));
        }
        if let Some(tol) = self.solver_truncation {
            if !(tol > 0.0) {
                return Err(FpiError::Config("fpi.solver_truncation must be positive".into()));
            }
        }
        if self.data_mode == DataMode::Incremental && self.batch_size_mode == BatchSizeMode::Adaptive
        {
            return Err(FpiError::Config(
                "fpi.batch_size_mode = adaptive requires fpi.data_mode = batch".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    fn knee_cost() -> CostMatrices {
        CostMatrices::knee_default()
    }

    #[test]
    fn stage_cost_zero_at_origin() {
        let c = knee_cost();
        assert_eq!(stage_cost(&State::zero(), &Action::zero(), &c), 0.0);
    }

    #[test]
    fn stage_cost_unit_state() {
        let c = knee_cost();
        let v = stage_cost(&State::new(1.0, 1.0), &Action::zero(), &c);
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn stage_cost_unit_action() {
        let c = knee_cost();
        let v = stage_cost(&State::zero(), &Action::new(1.0, 1.0, 1.0), &c);
        assert!((v - 0.4).abs() < 1e-12);
    }

    #[test]
    fn stage_cost_even_symmetry() {
        let c = knee_cost();
        let x = State::new(0.7, -1.3);
        let u = Action::new(0.2, -0.5, 1.1);
        let neg_x = State::new(-0.7, 1.3);
        let neg_u = Action::new(-0.2, 0.5, -1.1);
        let a = stage_cost(&x, &u, &c);
        let b = stage_cost(&neg_x, &neg_u, &c);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn cost_matrices_reject_indefinite() {
        let r_x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let r_u = DMatrix::identity(3, 3);
        assert!(CostMatrices::new(r_x, r_u).is_err());
    }

    #[test]
    fn cost_matrices_reject_asymmetric() {
        let r_x = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let r_u = DMatrix::identity(3, 3);
        assert!(CostMatrices::new(r_x, r_u).is_err());
    }

    #[test]
    fn impedance_rejects_negative_stiffness() {
        assert!(ImpedanceSetting::new(-0.1, 0.0, 0.0).is_err());
        assert!(ImpedanceSetting::new(1.0, 0.1, -20.0).is_ok());
    }

    #[test]
    fn config_rejects_adaptive_incremental() {
        let mut cfg = test_config();
        cfg.data_mode = DataMode::Incremental;
        cfg.batch_size_mode = BatchSizeMode::Adaptive;
        assert!(cfg.validate(15).is_err());
    }

    #[test]
    fn config_rejects_small_batch() {
        let mut cfg = test_config();
        cfg.n_b_initial = 10;
        assert!(cfg.validate(15).is_err());
        assert!(cfg.validate(10).is_ok());
    }

    pub(crate) fn test_config() -> FpiConfig {
        FpiConfig {
            batch_size_mode: BatchSizeMode::Fixed,
            data_mode: DataMode::Batch,
            prioritization: false,
            supplemental: false,
            n_b_initial: 20,
            n_b_increment: 5,
            buffer_max: 100,
            alpha_base: 0.9,
            exploration_noise_fraction: 0.01,
            learning_rate: 0.2,
            actor_inner_iters: 400,
            convergence_tol: 1e-6,
            i_max: 50,
            rng_seed: 7,
            rank_tol: 1e-10,
            solver_truncation: None,
            bellman_residual_abort: None,
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn stage_cost_strictly_positive_off_origin(
                px in -8.0f64..8.0,
                dx in -0.25f64..0.25,
                a in -0.5f64..0.5,
                b in -0.5f64..0.5,
                c in -0.5f64..0.5,
            ) {
                let cost = CostMatrices::knee_default();
                let v = stage_cost(&State::new(px, dx), &Action::new(a, b, c), &cost);
                prop_assert!(v >= 0.0);
                let magnitude = px.abs() + dx.abs() + a.abs() + b.abs() + c.abs();
                if magnitude > 1e-9 {
                    prop_assert!(v > 0.0);
                }
            }
        }
    }
}
