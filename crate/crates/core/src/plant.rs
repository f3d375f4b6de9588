//! Plant interfaces and implementations: a surrogate four-phase
//! human-prosthesis gait model, a linear-quadratic reference plant for
//! oracle tests, noise injectors, and the trial success/failure protocol.

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::approximator::{BasisPhi, BasisSigma, PolicyApprox};
use crate::engine::{derive_seed, FpiController, FpiSetup, IterationDiagnostics, SupplementalValue};
use crate::error::FpiError;
use crate::types::{Action, CostMatrices, FpiConfig, ImpedanceSetting, State};

pub const NUM_PHASES: usize = 4;

/// Single-channel plant as seen by the policy-iteration loop: a vector
/// state, a vector action, and a step map. Deterministic given the seed
/// and the inputs.
pub trait Plant {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Box the diagnostics probe grid spans; leaving it during learning is
    /// a safety breach.
    fn state_box(&self) -> Vec<(f64, f64)>;
    fn reset(&mut self, rng: &mut StdRng) -> DVector<f64>;
    /// Apply an action, returning the measured next state of the completed
    /// transition.
    fn step(&mut self, action: &DVector<f64>, rng: &mut StdRng) -> DVector<f64>;
    /// The measured state the next action will be computed from.
    fn state(&self) -> DVector<f64>;
}

/// How a linear-quadratic plant produces successive sample states.
#[derive(Clone, Debug)]
pub enum SamplingMode {
    /// Follow the closed-loop trajectory.
    Rollout,
    /// After each transition, restart from a uniformly drawn state so the
    /// regression stays well excited no matter how contractive the policy
    /// gets.
    RandomRestart { draw_box: Vec<(f64, f64)> },
}

/// Linear plant `x⁺ = A x + B u` with quadratic stage cost, used for
/// oracle-checked runs.
#[derive(Clone, Debug)]
pub struct LinearQuadraticPlant {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    state_box: Vec<(f64, f64)>,
    init_state: DVector<f64>,
    sampling: SamplingMode,
    /// Multiplicative uniform measurement noise fraction; zero for exact
    /// runs.
    sensor_noise_fraction: f64,
    current_true: DVector<f64>,
    current_measured: DVector<f64>,
}

impl LinearQuadraticPlant {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        state_box: Vec<(f64, f64)>,
        init_state: DVector<f64>,
        sampling: SamplingMode,
    ) -> Result<Self, FpiError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(FpiError::Config("plant.a must be square".into()));
        }
        if b.nrows() != n {
            return Err(FpiError::Config("plant.b must have one row per state".into()));
        }
        if state_box.len() != n || init_state.len() != n {
            return Err(FpiError::Config("plant dimensions are inconsistent".into()));
        }
        if let SamplingMode::RandomRestart { draw_box } = &sampling {
            if draw_box.len() != n {
                return Err(FpiError::Config("plant draw box dimension mismatch".into()));
            }
        }
        Ok(Self {
            current_true: init_state.clone(),
            current_measured: init_state.clone(),
            a,
            b,
            state_box,
            init_state,
            sampling,
            sensor_noise_fraction: 0.0,
        })
    }

    pub fn with_sensor_noise(mut self, fraction: f64) -> Self {
        self.sensor_noise_fraction = fraction;
        self
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    fn measure(&self, x: &DVector<f64>, rng: &mut StdRng) -> DVector<f64> {
        if self.sensor_noise_fraction > 0.0 {
            DVector::from_fn(x.len(), |i, _| {
                x[i] * (1.0 + self.sensor_noise_fraction * (rng.random::<f64>() * 2.0 - 1.0))
            })
        } else {
            x.clone()
        }
    }
}

impl Plant for LinearQuadraticPlant {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn action_dim(&self) -> usize {
        self.b.ncols()
    }

    fn state_box(&self) -> Vec<(f64, f64)> {
        self.state_box.clone()
    }

    fn reset(&mut self, rng: &mut StdRng) -> DVector<f64> {
        self.current_true = self.init_state.clone();
        self.current_measured = self.measure(&self.init_state, rng);
        self.current_measured.clone()
    }

    fn step(&mut self, action: &DVector<f64>, rng: &mut StdRng) -> DVector<f64> {
        let next_true = &self.a * &self.current_true + &self.b * action;
        let next_measured = self.measure(&next_true, rng);
        match &self.sampling {
            SamplingMode::Rollout => {
                self.current_true = next_true;
                self.current_measured = next_measured.clone();
            }
            SamplingMode::RandomRestart { draw_box } => {
                let fresh = DVector::from_fn(draw_box.len(), |i, _| {
                    let (lo, hi) = draw_box[i];
                    lo + (hi - lo) * rng.random::<f64>()
                });
                self.current_measured = self.measure(&fresh, rng);
                self.current_true = fresh;
            }
        }
        next_measured
    }

    fn state(&self) -> DVector<f64> {
        self.current_measured.clone()
    }
}

/// Knee joint torque under the impedance control law
/// `T = K (θ − θe) + B ω`.
pub fn torque(impedance: &ImpedanceSetting, angle: f64, velocity: f64) -> f64 {
    impedance.stiffness * (angle - impedance.equilibrium_angle) + impedance.damping * velocity
}

/// Componentwise impedance update `I ← I + u`, clamping stiffness and
/// damping at zero. Returns the new setting and whether a clamp occurred.
pub fn apply_impedance_update(
    current: &ImpedanceSetting,
    action: &Action,
) -> (ImpedanceSetting, bool) {
    let stiffness = current.stiffness + action.d_stiffness;
    let damping = current.damping + action.d_damping;
    let clamped = stiffness < 0.0 || damping < 0.0;
    (
        ImpedanceSetting {
            stiffness: stiffness.max(0.0),
            damping: damping.max(0.0),
            equilibrium_angle: current.equilibrium_angle + action.d_equilibrium,
        },
        clamped,
    )
}

/// Per-cycle noise model of the surrogate plant. Uniform kinds are
/// relative: each component is scaled by `1 + fraction · U(−1, 1)`.
/// Recorded traces add per-cycle offsets to the measured states and replay
/// identically.
#[derive(Clone, Debug, Default)]
pub enum NoiseModel {
    #[default]
    None,
    UniformActuator { fraction: f64 },
    UniformSensor { fraction: f64 },
    RecordedTrace { offsets: Vec<[(f64, f64); NUM_PHASES]> },
}

/// One phase of the surrogate gait model: the impedance setting that
/// reproduces the target profile exactly, and the local sensitivity of the
/// (peak error, duration error) pair to impedance offsets.
#[derive(Clone, Debug)]
pub struct PhaseModel {
    pub target_peak: f64,
    pub target_duration: f64,
    pub optimal_impedance: ImpedanceSetting,
    /// 2×3, full row rank.
    pub sensitivity: DMatrix<f64>,
}

impl PhaseModel {
    pub fn validate(&self, rank_tol: f64) -> Result<(), FpiError> {
        if self.sensitivity.nrows() != 2 || self.sensitivity.ncols() != 3 {
            return Err(FpiError::Config("phase sensitivity must be 2×3".into()));
        }
        let svd = self.sensitivity.clone().svd(false, false);
        let smax = svd.singular_values.max();
        if smax <= 0.0 || svd.singular_values.min() <= rank_tol * smax {
            return Err(FpiError::Config("phase sensitivity must have full row rank".into()));
        }
        Ok(())
    }
}

/// Surrogate four-phase gait plant. Each phase responds to its impedance
/// offset `ΔI = I − I*` through a full-row-rank sensitivity with an
/// optional signed-quadratic warp, a fraction of the previous phase's
/// state bleeds into the next phase, and noise perturbs the executed
/// offsets or the measured states. The zero state is reached exactly at
/// `I = I*` with zero noise.
#[derive(Clone, Debug)]
pub struct SurrogateGaitPlant {
    phases: [PhaseModel; NUM_PHASES],
    curvature_coeff: f64,
    cross_phase_coupling: f64,
    noise: NoiseModel,
    impedance_box: [(f64, f64); 3],
    true_states: [DVector<f64>; NUM_PHASES],
    cycle: usize,
}

impl SurrogateGaitPlant {
    pub fn new(
        phases: [PhaseModel; NUM_PHASES],
        curvature_coeff: f64,
        cross_phase_coupling: f64,
        noise: NoiseModel,
        impedance_box: [(f64, f64); 3],
    ) -> Result<Self, FpiError> {
        for phase in &phases {
            phase.validate(1e-10)?;
        }
        if curvature_coeff < 0.0 {
            return Err(FpiError::Config("plant.curvature_coeff must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&cross_phase_coupling) {
            return Err(FpiError::Config("plant.cross_phase_coupling must lie in [0, 1)".into()));
        }
        for (lo, hi) in &impedance_box {
            if lo >= hi {
                return Err(FpiError::Config("plant.impedance_box bounds must be ordered".into()));
            }
        }
        for phase in &phases {
            let i = phase.optimal_impedance.to_vector();
            for (c, (lo, hi)) in impedance_box.iter().enumerate() {
                if i[c] < *lo || i[c] > *hi {
                    return Err(FpiError::Config(
                        "plant optimal impedance must sit inside the impedance box".into(),
                    ));
                }
            }
        }
        Ok(Self {
            phases,
            curvature_coeff,
            cross_phase_coupling,
            noise,
            impedance_box,
            true_states: std::array::from_fn(|_| DVector::zeros(2)),
            cycle: 0,
        })
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn set_noise(&mut self, noise: NoiseModel) {
        self.noise = noise;
    }

    pub fn phases(&self) -> &[PhaseModel; NUM_PHASES] {
        &self.phases
    }

    /// Noise-free response of one phase to an impedance setting, ignoring
    /// coupling. Useful for inspecting the stage-cost landscape.
    pub fn phase_response(&self, phase: usize, impedance: &ImpedanceSetting) -> State {
        let delta = impedance.to_vector() - self.phases[phase].optimal_impedance.to_vector();
        let r = self.response(phase, &delta, None);
        State::new(r[0], r[1])
    }

    fn response(
        &self,
        phase: usize,
        delta: &DVector<f64>,
        coupled: Option<&DVector<f64>>,
    ) -> DVector<f64> {
        let warped = DVector::from_fn(3, |i, _| {
            delta[i] + self.curvature_coeff * delta[i] * delta[i].abs()
        });
        let mut r = &self.phases[phase].sensitivity * warped;
        if let Some(prev) = coupled {
            r += self.cross_phase_coupling * prev;
        }
        r
    }

    fn observe(&mut self, impedance: &[ImpedanceSetting; NUM_PHASES], rng: &mut StdRng) -> [State; NUM_PHASES] {
        let mut measured = std::array::from_fn(|_| State::zero());
        // The gait is cyclic: the first phase is coupled to the last
        // phase's state from the previous cycle.
        let mut previous: Option<DVector<f64>> = Some(self.true_states[NUM_PHASES - 1].clone());
        for m in 0..NUM_PHASES {
            let mut delta =
                impedance[m].to_vector() - self.phases[m].optimal_impedance.to_vector();
            if let NoiseModel::UniformActuator { fraction } = &self.noise {
                for i in 0..3 {
                    delta[i] *= 1.0 + fraction * (rng.random::<f64>() * 2.0 - 1.0);
                }
            }
            let truth = self.response(m, &delta, previous.as_ref());
            let mut obs = truth.clone();
            match &self.noise {
                NoiseModel::UniformSensor { fraction } => {
                    for i in 0..2 {
                        obs[i] *= 1.0 + fraction * (rng.random::<f64>() * 2.0 - 1.0);
                    }
                }
                NoiseModel::RecordedTrace { offsets } if !offsets.is_empty() => {
                    let row = &offsets[self.cycle % offsets.len()];
                    obs[0] += row[m].0;
                    obs[1] += row[m].1;
                }
                _ => {}
            }
            self.true_states[m] = truth.clone();
            previous = Some(truth);
            measured[m] = State::new(obs[0], obs[1]);
        }
        measured
    }
}

/// Per-phase gait interface: apply one impedance setting per phase for a
/// full gait cycle and observe the per-phase tracking errors.
pub trait GaitPlant {
    fn reset(
        &mut self,
        initial: &[ImpedanceSetting; NUM_PHASES],
        rng: &mut StdRng,
    ) -> [State; NUM_PHASES];
    fn gait_step(
        &mut self,
        impedance: &[ImpedanceSetting; NUM_PHASES],
        rng: &mut StdRng,
    ) -> [State; NUM_PHASES];
    fn impedance_box(&self) -> [(f64, f64); 3];
}

impl GaitPlant for SurrogateGaitPlant {
    fn reset(
        &mut self,
        initial: &[ImpedanceSetting; NUM_PHASES],
        rng: &mut StdRng,
    ) -> [State; NUM_PHASES] {
        self.cycle = 0;
        self.true_states = std::array::from_fn(|_| DVector::zeros(2));
        self.observe(initial, rng)
    }

    fn gait_step(
        &mut self,
        impedance: &[ImpedanceSetting; NUM_PHASES],
        rng: &mut StdRng,
    ) -> [State; NUM_PHASES] {
        self.cycle += 1;
        self.observe(impedance, rng)
    }

    fn impedance_box(&self) -> [(f64, f64); 3] {
        self.impedance_box
    }
}

/// Trial success and safety thresholds.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TrialProtocol {
    /// Safety bound on the peak error magnitude (degrees).
    pub peak_upper: f64,
    /// Success bound on the peak error magnitude (degrees).
    pub peak_lower: f64,
    /// Safety bound on the duration error magnitude (seconds).
    pub duration_upper: f64,
    /// Success bound on the duration error magnitude (seconds).
    pub duration_lower: f64,
    /// Consecutive in-bound cycles required for success.
    pub success_streak: usize,
    /// Cycle budget before the trial fails.
    pub max_cycles: usize,
}

impl TrialProtocol {
    pub fn validate(&self) -> Result<(), FpiError> {
        if !(self.peak_lower > 0.0 && self.peak_lower < self.peak_upper) {
            return Err(FpiError::Config(
                "protocol.peak_lower must satisfy 0 < peak_lower < peak_upper".into(),
            ));
        }
        if !(self.duration_lower > 0.0 && self.duration_lower < self.duration_upper) {
            return Err(FpiError::Config(
                "protocol.duration_lower must satisfy 0 < duration_lower < duration_upper".into(),
            ));
        }
        if self.success_streak == 0 {
            return Err(FpiError::Config("protocol.success_streak must be positive".into()));
        }
        if self.max_cycles < self.success_streak {
            return Err(FpiError::Config(
                "protocol.max_cycles must be at least protocol.success_streak".into(),
            ));
        }
        Ok(())
    }

    pub fn state_box(&self) -> Vec<(f64, f64)> {
        vec![
            (-self.peak_upper, self.peak_upper),
            (-self.duration_upper, self.duration_upper),
        ]
    }

    fn within_success(&self, s: &State) -> bool {
        s.peak_error.abs() < self.peak_lower && s.duration_error.abs() < self.duration_lower
    }

    fn within_safety(&self, s: &State) -> bool {
        s.peak_error.abs() <= self.peak_upper && s.duration_error.abs() <= self.duration_upper
    }
}

/// Why a trial ended without success.
#[derive(Clone, Debug, PartialEq)]
pub enum FailureKind {
    SafetyBreach { cycle: usize, phase: usize },
    CycleLimit,
    Engine(String),
}

/// Outcome of one tuning trial.
#[derive(Clone, Debug)]
pub struct TrialResult {
    pub success: bool,
    pub cycles_used: usize,
    pub rmse_before: f64,
    pub rmse_after: f64,
    pub final_impedance: [ImpedanceSetting; NUM_PHASES],
    pub clamp_events: usize,
    pub failure: Option<FailureKind>,
    pub iterations_per_phase: [usize; NUM_PHASES],
    /// Final critic of each phase controller, the source for supplemental
    /// values in follow-up trials.
    pub final_critics: [crate::approximator::QApprox; NUM_PHASES],
    /// Per-phase iteration diagnostics.
    pub phase_traces: Vec<Vec<IterationDiagnostics>>,
}

/// Everything a trial needs besides the plant and the starting impedance.
#[derive(Clone, Debug)]
pub struct TrialSetup {
    pub fpi: FpiConfig,
    pub cost: CostMatrices,
    pub protocol: TrialProtocol,
    /// Initial actor gains per phase, rows indexing the scaled state basis.
    pub initial_gains: [DMatrix<f64>; NUM_PHASES],
    pub supplemental: Option<[SupplementalValue; NUM_PHASES]>,
    /// Per-component impedance magnitude scale for exploration noise; the
    /// noise standard deviation is `exploration_noise_fraction ×` this.
    /// Anchoring it to the configured impedance scale keeps every action
    /// component excited even when a trial starts with a component near
    /// zero.
    pub exploration_base: DVector<f64>,
}

/// Root-mean-square peak error over the four phases, in degrees.
pub fn peak_rmse(states: &[State; NUM_PHASES]) -> f64 {
    let sum: f64 = states.iter().map(|s| s.peak_error * s.peak_error).sum();
    (sum / NUM_PHASES as f64).sqrt()
}

/// Run one tuning trial: four per-phase policy-iteration controllers in
/// the loop with the gait plant, until the errors stay inside the success
/// bounds for `success_streak` consecutive cycles, the safety bounds are
/// breached, or the cycle budget runs out. Trial failures are data, not
/// errors.
pub fn run_trial<P: GaitPlant>(
    plant: &mut P,
    setup: &TrialSetup,
    initial_impedance: &[ImpedanceSetting; NUM_PHASES],
    seed: u64,
) -> Result<TrialResult, FpiError> {
    setup.protocol.validate()?;
    let imp_box = plant.impedance_box();
    for imp in initial_impedance {
        let v = imp.to_vector();
        for (c, (lo, hi)) in imp_box.iter().enumerate() {
            if v[c] < *lo || v[c] > *hi {
                return Err(FpiError::Config(format!(
                    "initial impedance component {c} = {} outside the impedance box [{lo}, {hi}]",
                    v[c]
                )));
            }
        }
    }

    let state_box = setup.protocol.state_box();
    let sigma = BasisSigma::scaled(DVector::from_vec(vec![
        setup.protocol.peak_upper,
        setup.protocol.duration_upper,
    ]))?;
    let mut controllers: Vec<FpiController> = Vec::with_capacity(NUM_PHASES);
    for m in 0..NUM_PHASES {
        let phase_setup = FpiSetup {
            config: setup.fpi.clone(),
            cost: setup.cost.clone(),
            phi: BasisPhi::KneePoly15,
            initial_policy: PolicyApprox::new(setup.initial_gains[m].clone(), sigma.clone())?,
            supplemental: setup.supplemental.as_ref().map(|s| s[m].clone()),
            exploration_base: setup.exploration_base.clone(),
        };
        controllers.push(FpiController::new(
            &phase_setup,
            &state_box,
            derive_seed(seed, &[10, m as u64]),
        )?);
    }

    let mut plant_rng = StdRng::seed_from_u64(derive_seed(seed, &[5]));
    let mut impedance = *initial_impedance;
    let mut states = plant.reset(initial_impedance, &mut plant_rng);
    let rmse_before = peak_rmse(&states);
    let mut clamp_events = 0usize;
    let mut streak = 0usize;
    let mut outcome: Option<(bool, usize, Option<FailureKind>)> = None;

    for cycle in 1..=setup.protocol.max_cycles {
        let mut actions = [Action::zero(); NUM_PHASES];
        for m in 0..NUM_PHASES {
            let u = controllers[m].action(&states[m].to_vector());
            actions[m] = Action::from_vector(&u);
        }
        for m in 0..NUM_PHASES {
            let (mut updated, clamped) = apply_impedance_update(&impedance[m], &actions[m]);
            if clamped {
                clamp_events += 1;
            }
            // The device also limits the settings to its configured box.
            let v = updated.to_vector();
            for (c, (lo, hi)) in imp_box.iter().enumerate() {
                let bounded = v[c].clamp(*lo, *hi);
                if bounded != v[c] {
                    clamp_events += 1;
                    match c {
                        0 => updated.stiffness = bounded,
                        1 => updated.damping = bounded,
                        _ => updated.equilibrium_angle = bounded,
                    }
                }
            }
            impedance[m] = updated;
        }

        let next_states = plant.gait_step(&impedance, &mut plant_rng);

        let mut engine_failure = None;
        for m in 0..NUM_PHASES {
            if let Err(err) = controllers[m].record(
                &states[m].to_vector(),
                &actions[m].to_vector(),
                &next_states[m].to_vector(),
            ) {
                engine_failure = Some(err.to_string());
                break;
            }
        }
        states = next_states;

        if let Some(msg) = engine_failure {
            outcome = Some((false, cycle, Some(FailureKind::Engine(msg))));
            break;
        }
        if let Some(phase) = (0..NUM_PHASES).find(|&m| !setup.protocol.within_safety(&states[m])) {
            outcome = Some((false, cycle, Some(FailureKind::SafetyBreach { cycle, phase })));
            break;
        }
        if (0..NUM_PHASES).all(|m| setup.protocol.within_success(&states[m])) {
            streak += 1;
            if streak >= setup.protocol.success_streak {
                outcome = Some((true, cycle, None));
                break;
            }
        } else {
            streak = 0;
        }
    }

    let (success, cycles_used, failure) =
        outcome.unwrap_or((false, setup.protocol.max_cycles, Some(FailureKind::CycleLimit)));
    let iterations_per_phase = std::array::from_fn(|m| controllers[m].iterations());
    let final_critics = std::array::from_fn(|m| controllers[m].critic().clone());
    let phase_traces = controllers.iter().map(|c| c.trace().to_vec()).collect();
    Ok(TrialResult {
        success,
        cycles_used,
        rmse_before,
        rmse_after: peak_rmse(&states),
        final_impedance: impedance,
        clamp_events,
        failure,
        iterations_per_phase,
        final_critics,
        phase_traces,
    })
}

/// Synthesize a gait-to-gait variance trace: one smoothed random walk per
/// phase, mimicking recorded human stride variability.
pub fn generate_variance_trace(
    cycles: usize,
    peak_sd: f64,
    duration_sd: f64,
    seed: u64,
) -> Vec<[(f64, f64); NUM_PHASES]> {
    use rand_distr::{Distribution, Normal};
    let mut rng = StdRng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let smoothing = 0.9;
    let mut state = [(0.0f64, 0.0f64); NUM_PHASES];
    let mut out = Vec::with_capacity(cycles);
    for _ in 0..cycles {
        let mut row = [(0.0, 0.0); NUM_PHASES];
        for m in 0..NUM_PHASES {
            let (p, d) = state[m];
            let p_next = smoothing * p + peak_sd * normal.sample(&mut rng);
            let d_next = smoothing * d + duration_sd * normal.sample(&mut rng);
            state[m] = (p_next, d_next);
            row[m] = (p_next, d_next);
        }
        out.push(row);
    }
    out
}

pub const TRACE_CSV_HEADER: &str = "cycle,phase,dpeak_offset,dduration_offset";

/// Serialize a variance trace to its CSV form, one row per (cycle, phase).
pub fn trace_to_csv(trace: &[[(f64, f64); NUM_PHASES]]) -> String {
    let mut out = String::from(TRACE_CSV_HEADER);
    out.push('\n');
    for (cycle, row) in trace.iter().enumerate() {
        for (m, (dp, dd)) in row.iter().enumerate() {
            // Shortest round-trip representation so replays are exact.
            out.push_str(&format!("{cycle},{},{dp:e},{dd:e}\n", m + 1));
        }
    }
    out
}

/// Parse a recorded variance trace CSV. Every cycle must carry all four
/// phases.
pub fn trace_from_csv(text: &str) -> Result<Vec<[(f64, f64); NUM_PHASES]>, FpiError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| FpiError::Config("empty trace file".into()))?;
    if header.trim() != TRACE_CSV_HEADER {
        return Err(FpiError::Config(format!(
            "trace header must be `{TRACE_CSV_HEADER}`, got `{header}`"
        )));
    }
    let mut rows: Vec<[Option<(f64, f64)>; NUM_PHASES]> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(FpiError::Config(format!(
                "trace line {} must have 4 fields",
                lineno + 2
            )));
        }
        let parse = |s: &str, what: &str| {
            s.trim().parse::<f64>().map_err(|_| {
                FpiError::Config(format!("trace line {}: bad {what} `{s}`", lineno + 2))
            })
        };
        let cycle = fields[0]
            .trim()
            .parse::<usize>()
            .map_err(|_| FpiError::Config(format!("trace line {}: bad cycle", lineno + 2)))?;
        let phase = fields[1]
            .trim()
            .parse::<usize>()
            .map_err(|_| FpiError::Config(format!("trace line {}: bad phase", lineno + 2)))?;
        if !(1..=NUM_PHASES).contains(&phase) {
            return Err(FpiError::Config(format!(
                "trace line {}: phase must be 1..=4",
                lineno + 2
            )));
        }
        let dp = parse(fields[2], "dpeak_offset")?;
        let dd = parse(fields[3], "dduration_offset")?;
        if rows.len() <= cycle {
            rows.resize_with(cycle + 1, || [None; NUM_PHASES]);
        }
        rows[cycle][phase - 1] = Some((dp, dd));
    }
    rows.into_iter()
        .enumerate()
        .map(|(cycle, row)| {
            let mut full = [(0.0, 0.0); NUM_PHASES];
            for (m, entry) in row.into_iter().enumerate() {
                full[m] = entry.ok_or_else(|| {
                    FpiError::Config(format!("trace cycle {cycle} is missing phase {}", m + 1))
                })?;
            }
            Ok(full)
        })
        .collect()
}
