//! The flexible policy iteration loop: data preparation under the four
//! setting toggles, weighted least-squares policy evaluation with optional
//! supplemental-value shaping, gradient-descent policy improvement,
//! adaptive batch sizing, termination, and empirical property checks on
//! the recorded iteration trace.

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

use crate::approximator::{
    eval_q, min_q_over_action_lenient, solve_weighted_ls_truncated, BasisPhi, PolicyApprox,
    QApprox, RankStatus, RegressionSystem,
};
use crate::error::FpiError;
use crate::plant::Plant;
use crate::replay::{iteration_weights, prepare_iteration_data, td_error, ReplayBuffer};
use crate::types::{BatchSizeMode, CostMatrices, DataMode, FpiConfig, GaitSample};

/// Number of consecutive rank-deficient policy evaluations tolerated
/// before the run aborts.
const RANK_DEFICIENCY_ABORT_STREAK: usize = 3;

/// Derive an independent RNG stream seed from a base seed and stream tags,
/// so phases, trials and sweep cells never share randomness.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut state = base ^ 0x9e37_79b9_7f4a_7c15;
    for &tag in tags {
        state = splitmix64(state ^ splitmix64(tag.wrapping_add(0x1234_5678_9abc_def0)));
    }
    splitmix64(state)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A state-value extracted from a previously converged critic, used to
/// shape early learning: `𝒱(x) = clamp₀(min_u Q_f(x, u) − min_u Q_f(0, u))`
/// applied with the decaying coefficient `α_i = alpha_base^i`.
#[derive(Clone, Debug)]
pub struct SupplementalValue {
    source: QApprox,
    alpha_base: f64,
    value_at_zero: f64,
}

impl SupplementalValue {
    pub fn new(source: QApprox, alpha_base: f64) -> Result<Self, FpiError> {
        if !(alpha_base > 0.0 && alpha_base < 1.0) {
            return Err(FpiError::Config(format!(
                "supplemental alpha_base = {alpha_base} must lie in (0, 1)"
            )));
        }
        let zero = DVector::zeros(source.basis.state_dim());
        let value_at_zero = min_q_over_action_lenient(&source, &zero).unwrap_or(0.0);
        Ok(Self { source, alpha_base, value_at_zero })
    }

    pub fn alpha_base(&self) -> f64 {
        self.alpha_base
    }

    /// Coefficient schedule `α_i = alpha_base^i`, strictly decreasing to
    /// zero.
    pub fn alpha(&self, iteration: usize) -> f64 {
        self.alpha_base.powi(iteration as i32)
    }

    /// `𝒱(x) ≥ 0` everywhere with `𝒱(0) = 0`. A critic that is unbounded
    /// below in the action contributes nothing after clamping.
    pub fn evaluate(&self, x: &DVector<f64>) -> f64 {
        match min_q_over_action_lenient(&self.source, x) {
            Some(v) => (v - self.value_at_zero).max(0.0),
            None => 0.0,
        }
    }

    pub fn source(&self) -> &QApprox {
        &self.source
    }
}

/// Extract a supplemental value from the final critic of a terminated run.
pub fn extract_supplemental(q_final: &QApprox, alpha_base: f64) -> Result<SupplementalValue, FpiError> {
    SupplementalValue::new(q_final.clone(), alpha_base)
}

/// Shaped stage cost for iteration `i`: `Ǔ + α_i 𝒱(x_k)` when a
/// supplemental value is active, the raw stage cost otherwise.
pub fn augmented_stage_cost(
    sample: &GaitSample,
    supp: Option<&SupplementalValue>,
    iteration: usize,
) -> f64 {
    match supp {
        Some(supp) => sample.stage_cost + supp.alpha(iteration) * supp.evaluate(&sample.state),
        None => sample.stage_cost,
    }
}

/// Per-iteration record: critic weights, convergence and conditioning
/// diagnostics, and the value function sampled on the fixed probe grid.
#[derive(Clone, Debug)]
pub struct IterationDiagnostics {
    pub iteration: usize,
    pub critic: QApprox,
    /// `‖W^{(i)} − W^{(i−1)}‖∞`.
    pub weight_delta: f64,
    /// `‖X W − Y‖₂` of the solved regression system.
    pub bellman_residual: f64,
    pub rank_status: RankStatus,
    /// `V^{(i)}(x) = Q̂^{(i)}(x, h^{(i)}(x))` on the probe grid.
    pub value_on_probe_grid: DVector<f64>,
    /// `max over the grid of V^{(i)} − V^{(i−1)}`; zero for the first
    /// iteration.
    pub monotonicity_violation: f64,
    /// Gains of the policy `h^{(i)}` evaluated at this iteration.
    pub policy_gains: DMatrix<f64>,
    /// Mean raw stage cost over the iteration's samples.
    pub mean_stage_cost: f64,
    /// The actor update diverged and the policy was kept at the last
    /// stable gains.
    pub actor_diverged: bool,
}

/// Result of a policy evaluation step.
#[derive(Clone, Debug)]
pub struct PolicyEvaluation {
    pub critic: QApprox,
    pub rank_status: RankStatus,
    pub bellman_residual: f64,
}

/// Solve the weighted least-squares form of the approximate Bellman
/// equation for the critic weights.
pub fn evaluate_policy(
    system: &RegressionSystem,
    basis: &BasisPhi,
    config: &FpiConfig,
) -> Result<PolicyEvaluation, FpiError> {
    // `solver_truncation` is relative to the design-matrix spectrum; the
    // pseudoinverse acts on the normal matrix, whose singular values are
    // the squares of the design ones.
    let truncation = config.solver_truncation.unwrap_or(config.rank_tol).powi(2);
    let (weights, rank_status) =
        solve_weighted_ls_truncated(system, config.rank_tol, truncation.max(1e-15));
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(FpiError::NonFinite("critic weights"));
    }
    let residual = (&system.design * &weights - &system.targets).norm();
    if let Some(bound) = config.bellman_residual_abort {
        if residual > bound {
            return Err(FpiError::BellmanResidual { residual, bound });
        }
    }
    Ok(PolicyEvaluation {
        critic: QApprox::new(weights, basis.clone()),
        rank_status,
        bellman_residual: residual,
    })
}

/// Gradient-descent policy improvement: `𝒦 ← 𝒦 − l · ∂Q̂(x, 𝒦ᵀσ(x))/∂𝒦`
/// averaged over the probe states, for at most `actor_inner_iters` steps or
/// until the gradient ∞-norm falls below the convergence tolerance.
pub fn improve_policy(
    q: &QApprox,
    probe_states: &[DVector<f64>],
    config: &FpiConfig,
    warm_start: &PolicyApprox,
) -> Result<PolicyApprox, FpiError> {
    assert!(!probe_states.is_empty(), "actor update needs at least one probe state");
    let mut gains = warm_start.gains.clone();
    let sigma = &warm_start.basis;
    let m = q.basis.action_dim();
    assert_eq!(warm_start.action_dim(), m, "actor and critic action dimensions must match");

    let sigmas: Vec<DVector<f64>> = probe_states.iter().map(|x| sigma.eval(x)).collect();
    let inv_count = 1.0 / probe_states.len() as f64;
    let mut initial_norm = None;
    let mut best_norm = f64::INFINITY;
    let mut best_gains = gains.clone();

    for _ in 0..config.actor_inner_iters {
        let mut grad = DMatrix::zeros(gains.nrows(), m);
        for (x, s) in probe_states.iter().zip(sigmas.iter()) {
            let u = gains.transpose() * s;
            // ∂Q̂/∂𝒦 = σ(x) (∂Q̂/∂u)ᵀ for u = 𝒦ᵀσ(x).
            let dq_du = q.basis.grad_action(x, &u).transpose() * &q.weights;
            grad += s * dq_du.transpose();
        }
        grad *= inv_count;
        let norm = grad.amax();
        if !norm.is_finite() {
            return Err(FpiError::NonFinite("actor gradient"));
        }
        let start = *initial_norm.get_or_insert(norm);
        if norm < best_norm {
            best_norm = norm;
            best_gains = gains.clone();
        }
        if norm < config.convergence_tol {
            break;
        }
        if norm > 10.0 * start && start > 0.0 {
            return Err(FpiError::ActorDivergence { last_stable_gains: Box::new(best_gains) });
        }
        gains -= config.learning_rate * &grad;
    }
    PolicyApprox::new(gains, sigma.clone())
}

/// Everything a tuning run needs besides the plant: the setting knobs, the
/// cost, the bases, the initial admissible policy and an optional
/// supplemental value.
#[derive(Clone, Debug)]
pub struct FpiSetup {
    pub config: FpiConfig,
    pub cost: CostMatrices,
    pub phi: BasisPhi,
    pub initial_policy: PolicyApprox,
    pub supplemental: Option<SupplementalValue>,
    /// Per-component action magnitudes; exploration noise is Gaussian with
    /// standard deviation `exploration_noise_fraction ×` this scale.
    pub exploration_base: DVector<f64>,
}

/// Outcome of a tuning run: the final actor and critic plus the full
/// iteration trace and the probe grid the diagnostics were sampled on.
#[derive(Clone, Debug)]
pub struct FpiOutcome {
    pub policy: PolicyApprox,
    pub critic: QApprox,
    pub trace: Vec<IterationDiagnostics>,
    pub probe_states: Vec<DVector<f64>>,
    pub cycles: usize,
    pub converged: bool,
}

/// Stepwise policy-iteration controller for one control channel.
///
/// `action` produces the exploration-noised control for the current state;
/// `record` stores the observed transition and runs a policy iteration
/// whenever the active data mode has accumulated enough samples. A gait
/// trial drives four of these, one per phase; `run_fpi` drives a single one
/// against a vector plant.
pub struct FpiController {
    config: FpiConfig,
    cost: CostMatrices,
    phi: BasisPhi,
    supplemental: Option<SupplementalValue>,
    buffer: ReplayBuffer,
    critic: QApprox,
    actor: PolicyApprox,
    iteration: usize,
    n_b: usize,
    fresh_count: usize,
    rng: StdRng,
    noise_std: DVector<f64>,
    probe_states: Vec<DVector<f64>>,
    trace: Vec<IterationDiagnostics>,
    rank_deficient_streak: usize,
    converged: bool,
    last_batch_mean_cost: Option<f64>,
    pending_policy_test: bool,
    cycles: usize,
}

impl FpiController {
    pub fn new(
        setup: &FpiSetup,
        state_box: &[(f64, f64)],
        seed: u64,
    ) -> Result<Self, FpiError> {
        let config = setup.config.clone();
        config.validate(setup.phi.len())?;
        let n = setup.phi.state_dim();
        let m = setup.phi.action_dim();
        if setup.cost.state_dim() != n || setup.cost.action_dim() != m {
            return Err(FpiError::Config(
                "cost matrix dimensions must match the basis dimensions".into(),
            ));
        }
        if setup.initial_policy.basis.state_dim() != n
            || setup.initial_policy.action_dim() != m
        {
            return Err(FpiError::Config(
                "initial policy dimensions must match the basis dimensions".into(),
            ));
        }
        if state_box.len() != n {
            return Err(FpiError::Config("state box dimension must match the state".into()));
        }
        if setup.exploration_base.len() != m {
            return Err(FpiError::Config(
                "exploration base must have one magnitude per action component".into(),
            ));
        }
        if config.supplemental && setup.supplemental.is_none() {
            return Err(FpiError::Config(
                "supplemental setting is on but no supplemental value was provided".into(),
            ));
        }
        let supplemental = if config.supplemental { setup.supplemental.clone() } else { None };
        if let Some(supp) = &supplemental {
            if supp.source().basis.state_dim() != n {
                return Err(FpiError::Config(
                    "supplemental value state dimension must match the basis".into(),
                ));
            }
        }
        let noise_std = DVector::from_fn(m, |i, _| {
            config.exploration_noise_fraction * setup.exploration_base[i].abs()
        });
        let n_b = config.n_b_initial;
        Ok(Self {
            buffer: ReplayBuffer::new(config.buffer_max),
            critic: QApprox::zeros(setup.phi.clone()),
            actor: setup.initial_policy.clone(),
            iteration: 0,
            n_b,
            fresh_count: 0,
            rng: StdRng::seed_from_u64(seed),
            noise_std,
            probe_states: probe_grid(state_box),
            trace: Vec::new(),
            rank_deficient_streak: 0,
            converged: false,
            last_batch_mean_cost: None,
            pending_policy_test: false,
            cycles: 0,
            cost: setup.cost.clone(),
            phi: setup.phi.clone(),
            supplemental,
            config,
        })
    }

    /// Exploration-noised control for the current state.
    pub fn action(&mut self, state: &DVector<f64>) -> DVector<f64> {
        let mut u = self.actor.act(state);
        for i in 0..u.len() {
            if self.noise_std[i] > 0.0 {
                let normal = Normal::new(0.0, self.noise_std[i]).expect("finite noise std");
                u[i] += normal.sample(&mut self.rng);
            }
        }
        u
    }

    /// Store one observed transition; run a policy iteration when the data
    /// mode has enough samples. Returns true when an iteration ran.
    pub fn record(
        &mut self,
        state: &DVector<f64>,
        action: &DVector<f64>,
        next_state: &DVector<f64>,
    ) -> Result<bool, FpiError> {
        self.cycles += 1;
        let stage_cost = self.cost.evaluate(state, action);
        let sample = GaitSample::new(state.clone(), action.clone(), next_state.clone(), stage_cost)
            .with_policy_tag(self.iteration as u32);
        self.buffer.push(sample);
        if self.finished() {
            return Ok(false);
        }

        match self.config.data_mode {
            DataMode::Batch => {
                if self.pending_policy_test {
                    // Adaptive batch sizing: the first cycle under a new
                    // policy doubles as its test cycle. Grow the batch when
                    // the new policy failed to lower the stage cost.
                    self.pending_policy_test = false;
                    if let Some(previous_mean) = self.last_batch_mean_cost {
                        if stage_cost >= previous_mean {
                            self.n_b =
                                (self.n_b + self.config.n_b_increment).min(self.config.buffer_max);
                        }
                    }
                }
                self.fresh_count += 1;
                if self.fresh_count >= self.n_b {
                    self.run_iteration()?;
                    self.fresh_count = 0;
                    if self.config.batch_size_mode == BatchSizeMode::Adaptive {
                        self.pending_policy_test = true;
                    }
                    return Ok(true);
                }
                Ok(false)
            }
            DataMode::Incremental => {
                if self.buffer.len() >= self.config.n_b_initial {
                    self.run_iteration()?;
                    return Ok(true);
                }
                Ok(false)
            }
        }
    }

    fn run_iteration(&mut self) -> Result<(), FpiError> {
        let indices =
            prepare_iteration_data(&self.buffer, &self.config, self.iteration, self.n_b)?;
        let count = indices.len();

        let mut targets = DVector::zeros(count);
        let mut td = vec![0.0; count];
        let mut mean_stage_cost = 0.0;
        for (row, &idx) in indices.iter().enumerate() {
            let sample = self.buffer.get(idx);
            let shaped =
                augmented_stage_cost(sample, self.supplemental.as_ref(), self.iteration);
            targets[row] = shaped;
            mean_stage_cost += sample.stage_cost;
            if self.config.prioritization && self.iteration > 0 {
                td[row] = td_error(sample, &self.critic, &self.actor, shaped);
            }
        }
        mean_stage_cost /= count.max(1) as f64;

        let weights =
            DVector::from_vec(iteration_weights(&self.config, self.iteration, &td));

        // Design rows re-evaluate stored next-states under the current
        // policy, which is what makes replaying off-policy samples valid.
        let l = self.phi.len();
        let mut design = DMatrix::zeros(count, l);
        for (row, &idx) in indices.iter().enumerate() {
            let sample = self.buffer.get(idx);
            let next_action = self.actor.act(&sample.next_state);
            let phi_row = self.phi.eval(&sample.state, &sample.action)
                - self.phi.eval(&sample.next_state, &next_action);
            design.set_row(row, &phi_row.transpose());
        }

        let system = RegressionSystem::new(design, targets, weights)?;
        let evaluation = evaluate_policy(&system, &self.phi, &self.config)?;
        match evaluation.rank_status {
            RankStatus::Satisfied => self.rank_deficient_streak = 0,
            RankStatus::Deficient { rank } => {
                self.rank_deficient_streak += 1;
                if self.rank_deficient_streak >= RANK_DEFICIENCY_ABORT_STREAK {
                    return Err(FpiError::RankDeficiencyPersistent {
                        iterations: self.rank_deficient_streak,
                        rank,
                        required: l,
                    });
                }
            }
        }

        // Cache the per-sample prioritization data for inspection/export.
        if self.config.prioritization && self.iteration > 0 && count == self.buffer.len() {
            self.buffer.assign_priorities(&td);
        }

        let weight_delta = (&evaluation.critic.weights - &self.critic.weights).amax();
        if !weight_delta.is_finite() {
            return Err(FpiError::NonFinite("critic weight delta"));
        }

        // V^{(i)} pairs the fresh critic with the policy it evaluated.
        let value_grid = DVector::from_fn(self.probe_states.len(), |g, _| {
            let x = &self.probe_states[g];
            eval_q(&evaluation.critic, x, &self.actor.act(x))
        });
        let monotonicity_violation = match self.trace.last() {
            Some(prev) => (&value_grid - &prev.value_on_probe_grid).max(),
            None => 0.0,
        };

        let evaluated_gains = self.actor.gains.clone();
        self.critic = evaluation.critic.clone();
        // The actor gradient averages over the iteration's sample states:
        // the critic is only trusted where data exists, so unobserved
        // state directions leave the gains untouched.
        let actor_probes: Vec<DVector<f64>> =
            indices.iter().map(|&idx| self.buffer.get(idx).state.clone()).collect();
        // A diverging actor update keeps the last stable gains, which is
        // what the divergence signal carries them for.
        let mut actor_diverged = false;
        match improve_policy(&self.critic, &actor_probes, &self.config, &self.actor) {
            Ok(actor) => self.actor = actor,
            Err(FpiError::ActorDivergence { last_stable_gains }) => {
                actor_diverged = true;
                self.actor = PolicyApprox::new(*last_stable_gains, self.actor.basis.clone())?;
            }
            Err(other) => return Err(other),
        }

        self.trace.push(IterationDiagnostics {
            iteration: self.iteration,
            critic: evaluation.critic,
            weight_delta,
            bellman_residual: evaluation.bellman_residual,
            rank_status: evaluation.rank_status,
            value_on_probe_grid: value_grid,
            monotonicity_violation,
            policy_gains: evaluated_gains,
            mean_stage_cost,
            actor_diverged,
        });

        self.iteration += 1;
        self.last_batch_mean_cost = Some(mean_stage_cost);
        self.converged = weight_delta < self.config.convergence_tol;
        Ok(())
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn iterations(&self) -> usize {
        self.iteration
    }

    pub fn finished(&self) -> bool {
        self.converged || self.iteration >= self.config.i_max
    }

    pub fn actor(&self) -> &PolicyApprox {
        &self.actor
    }

    pub fn critic(&self) -> &QApprox {
        &self.critic
    }

    pub fn trace(&self) -> &[IterationDiagnostics] {
        &self.trace
    }

    pub fn probe_states(&self) -> &[DVector<f64>] {
        &self.probe_states
    }

    pub fn cycles(&self) -> usize {
        self.cycles
    }

    /// Current batch size; grows in adaptive mode.
    pub fn current_batch_size(&self) -> usize {
        self.n_b
    }

    pub fn into_outcome(self) -> FpiOutcome {
        FpiOutcome {
            policy: self.actor,
            critic: self.critic,
            trace: self.trace,
            probe_states: self.probe_states,
            cycles: self.cycles,
            converged: self.converged,
        }
    }
}

/// Uniform probe lattice over the state box, about one hundred points. A
/// two-dimensional state gets the full 10×10 grid.
pub fn probe_grid(state_box: &[(f64, f64)]) -> Vec<DVector<f64>> {
    let n = state_box.len();
    let per_dim = match n {
        1 => 100,
        2 => 10,
        3 => 5,
        _ => 3,
    };
    let mut points = Vec::new();
    let mut index = vec![0usize; n];
    loop {
        let point = DVector::from_fn(n, |d, _| {
            let (lo, hi) = state_box[d];
            lo + (hi - lo) * (index[d] as f64 + 0.5) / per_dim as f64
        });
        points.push(point);
        let mut d = 0;
        loop {
            index[d] += 1;
            if index[d] < per_dim {
                break;
            }
            index[d] = 0;
            d += 1;
            if d == n {
                return points;
            }
        }
    }
}

/// Run the policy-iteration loop against a single-channel plant until the
/// critic weights stop changing or the iteration cap is reached. All
/// randomness derives from the configured seed.
pub fn run_fpi<P: Plant>(plant: &mut P, setup: &FpiSetup) -> Result<FpiOutcome, FpiError> {
    let seed = setup.config.rng_seed;
    let state_box = plant.state_box();
    let mut controller = FpiController::new(setup, &state_box, derive_seed(seed, &[1]))?;
    let mut plant_rng = StdRng::seed_from_u64(derive_seed(seed, &[2]));
    let mut state = plant.reset(&mut plant_rng);

    while !controller.finished() {
        let action = controller.action(&state);
        let next_state = plant.step(&action, &mut plant_rng);
        for (d, (lo, hi)) in state_box.iter().enumerate() {
            if next_state[d] < *lo || next_state[d] > *hi {
                return Err(FpiError::SafetyBreach {
                    cycle: controller.cycles() + 1,
                    state: next_state,
                });
            }
        }
        controller.record(&state, &action, &next_state)?;
        state = plant.state();
    }
    Ok(controller.into_outcome())
}

/// Report from checking the value-function monotonicity of a trace.
#[derive(Clone, Debug)]
pub struct MonotonicityReport {
    pub passed: bool,
    pub max_violation: f64,
}

/// Verify `V^{(i+1)}(x) ≤ V^{(i)}(x) + tol` on the probe grid across the
/// whole trace. Exact in the noise-free, well-excited regime; a diagnostic
/// elsewhere.
pub fn check_monotonicity(trace: &[IterationDiagnostics], tol: f64) -> MonotonicityReport {
    assert!(trace.len() >= 2, "monotonicity check needs at least two iterations");
    let max_violation = trace
        .iter()
        .skip(1)
        .map(|d| d.monotonicity_violation)
        .fold(f64::NEG_INFINITY, f64::max);
    MonotonicityReport { passed: max_violation <= tol, max_violation }
}

/// Constants of the iterative error-bound check; construction enforces
/// `η < (γ+1)/γ`, without which the asymptotic bound is not finite.
#[derive(Clone, Copy, Debug)]
pub struct ErrorBoundProbe {
    xi: f64,
    eta: f64,
    gamma: f64,
    beta: f64,
}

impl ErrorBoundProbe {
    pub fn new(xi: f64, eta: f64, gamma: f64, beta: f64) -> Result<Self, FpiError> {
        if !(xi > 0.0 && xi <= 1.0) {
            return Err(FpiError::Config(format!("xi = {xi} must lie in (0, 1]")));
        }
        if eta < 1.0 {
            return Err(FpiError::Config(format!("eta = {eta} must be at least 1")));
        }
        if !(gamma > 0.0) {
            return Err(FpiError::Config(format!("gamma = {gamma} must be positive")));
        }
        if beta < 1.0 {
            return Err(FpiError::Config(format!("beta = {beta} must be at least 1")));
        }
        if eta >= (gamma + 1.0) / gamma {
            return Err(FpiError::Config(format!(
                "eta = {eta} must be below (gamma+1)/gamma = {}",
                (gamma + 1.0) / gamma
            )));
        }
        Ok(Self { xi, eta, gamma, beta })
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Upper-bound multiplier at iteration `i`:
    /// `ηβ(ηγ/(1+γ))^i + (1 − (ηγ/(1+γ))^i) · η/(1+γ−ηγ)`.
    pub fn upper_multiplier(&self, iteration: usize) -> f64 {
        let rho = (self.eta * self.gamma / (1.0 + self.gamma)).powi(iteration as i32);
        self.eta * self.beta * rho
            + (1.0 - rho) * self.eta / (1.0 + self.gamma - self.eta * self.gamma)
    }
}

/// Report from the iterative error-bound check.
#[derive(Clone, Debug)]
pub struct ErrorBoundReport {
    pub passed: bool,
    pub worst_lower_margin: f64,
    pub worst_upper_margin: f64,
}

/// Check `ξ Q* ≤ Q̂^{(i)} ≤ P_i Q*` at every recorded iteration over probe
/// state-action pairs built from the grid. `q_star` comes from an
/// independent oracle.
pub fn check_error_bound(
    trace: &[IterationDiagnostics],
    probe_states: &[DVector<f64>],
    probe: &ErrorBoundProbe,
    q_star: &QApprox,
    tol: f64,
) -> ErrorBoundReport {
    let pairs = probe_pairs(probe_states, q_star.basis.action_dim());
    let mut worst_lower = f64::INFINITY;
    let mut worst_upper = f64::INFINITY;
    for diag in trace {
        let p_i = probe.upper_multiplier(diag.iteration);
        for (x, u) in &pairs {
            let q_opt = eval_q(q_star, x, u);
            if q_opt <= 1e-9 {
                continue;
            }
            let q_hat = eval_q(&diag.critic, x, u);
            worst_lower = worst_lower.min(q_hat - probe.xi * q_opt);
            worst_upper = worst_upper.min(p_i * q_opt - q_hat);
        }
    }
    ErrorBoundReport {
        passed: worst_lower >= -tol && worst_upper >= -tol,
        worst_lower_margin: worst_lower,
        worst_upper_margin: worst_upper,
    }
}

/// Probe state-action pairs: every grid state combined with small
/// fixed action offsets.
pub fn probe_pairs(
    probe_states: &[DVector<f64>],
    action_dim: usize,
) -> Vec<(DVector<f64>, DVector<f64>)> {
    let mut actions = Vec::new();
    for a in 0..action_dim {
        for sign in [-0.5, 0.5] {
            let mut u = DVector::zeros(action_dim);
            u[a] = sign;
            actions.push(u);
        }
    }
    actions.push(DVector::zeros(action_dim));
    let mut pairs = Vec::with_capacity(probe_states.len() * actions.len());
    for x in probe_states {
        for u in &actions {
            pairs.push((x.clone(), u.clone()));
        }
    }
    pairs
}
