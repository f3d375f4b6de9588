//! Built-in linear-quadratic instances shared by the verification suites
//! and the acceptance tests, plus conversions between quadratic forms and
//! critic weight vectors.

use fpi_core::{
    run_fpi, BasisPhi, BasisSigma, CostMatrices, FpiConfig, FpiOutcome, FpiSetup,
    LinearQuadraticPlant, PolicyApprox, QApprox, SamplingMode, SupplementalValue,
};
use nalgebra::{DMatrix, DVector};

use crate::riccati::{policy_value_matrix, q_factor, riccati_oracle, RiccatiSolution};

/// A linear-quadratic benchmark instance with everything needed to run the
/// tuner on it and to check the outcome against the Riccati oracle.
#[derive(Clone, Debug)]
pub struct LqInstance {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub state_box: Vec<(f64, f64)>,
    pub draw_box: Vec<(f64, f64)>,
    pub init_state: DVector<f64>,
    /// Initial actor gains (state dim × input dim) over the identity actor
    /// basis; must be stabilizing.
    pub initial_gains: DMatrix<f64>,
    pub fpi: FpiConfig,
}

impl LqInstance {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn action_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn basis(&self) -> BasisPhi {
        BasisPhi::Quadratic { state_dim: self.state_dim(), action_dim: self.action_dim() }
    }

    pub fn plant(&self) -> LinearQuadraticPlant {
        LinearQuadraticPlant::new(
            self.a.clone(),
            self.b.clone(),
            self.state_box.clone(),
            self.init_state.clone(),
            SamplingMode::RandomRestart { draw_box: self.draw_box.clone() },
        )
        .expect("built-in instance is well formed")
    }

    pub fn setup(&self, supplemental: Option<SupplementalValue>) -> FpiSetup {
        FpiSetup {
            config: self.fpi.clone(),
            cost: CostMatrices::new(self.q.clone(), self.r.clone())
                .expect("built-in cost matrices are positive definite"),
            phi: self.basis(),
            initial_policy: PolicyApprox::new(
                self.initial_gains.clone(),
                BasisSigma::identity(self.state_dim()),
            )
            .expect("built-in initial gains are well formed"),
            supplemental,
            exploration_base: DVector::from_element(self.action_dim(), 1.0),
        }
    }

    /// Run the tuner on this instance.
    pub fn run(&self) -> Result<FpiOutcome, fpi_core::FpiError> {
        let mut plant = self.plant();
        run_fpi(&mut plant, &self.setup(None))
    }

    pub fn oracle(&self) -> RiccatiSolution {
        riccati_oracle(&self.a, &self.b, &self.q, &self.r, 1e-14, 100_000)
            .expect("built-in instance is stabilizable")
    }

    /// The optimal Q-function as a critic over this instance's basis.
    pub fn optimal_critic(&self) -> QApprox {
        let oracle = self.oracle();
        let g = q_factor(&self.a, &self.b, &self.q, &self.r, &oracle.cost_matrix);
        critic_from_quadratic_form(&g, self.state_dim(), self.action_dim())
    }

    /// Exact Q-function of the linear policy `u = K̄ x` as a critic.
    pub fn policy_critic(&self, k_bar: &DMatrix<f64>) -> QApprox {
        let p = policy_value_matrix(&self.a, &self.b, &self.q, &self.r, k_bar, 1e-14, 1_000_000)
            .expect("policy value iteration converges for stabilizing gains");
        let g = q_factor(&self.a, &self.b, &self.q, &self.r, &p);
        critic_from_quadratic_form(&g, self.state_dim(), self.action_dim())
    }
}

/// Weights of the quadratic form `zᵀGz` over the degree-two monomial
/// basis: `w(i,i) = G_ii` and `w(i,j) = 2 G_ij` for `i < j`.
pub fn critic_from_quadratic_form(g: &DMatrix<f64>, state_dim: usize, action_dim: usize) -> QApprox {
    let d = state_dim + action_dim;
    assert_eq!(g.nrows(), d);
    assert_eq!(g.ncols(), d);
    let mut weights = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for j in i..d {
            weights.push(if i == j { g[(i, i)] } else { g[(i, j)] + g[(j, i)] });
        }
    }
    QApprox::new(DVector::from_vec(weights), BasisPhi::Quadratic { state_dim, action_dim })
}

/// The scalar instance: `x⁺ = x + u`, cost `x² + u²`, batch mode with
/// fixed batches of 40 and initial gain −0.5.
pub fn scalar_instance() -> LqInstance {
    LqInstance {
        a: DMatrix::from_element(1, 1, 1.0),
        b: DMatrix::from_element(1, 1, 1.0),
        q: DMatrix::identity(1, 1),
        r: DMatrix::identity(1, 1),
        state_box: vec![(-6.0, 6.0)],
        draw_box: vec![(-4.0, 4.0)],
        init_state: DVector::from_element(1, 2.0),
        initial_gains: DMatrix::from_element(1, 1, -0.5),
        fpi: lq_config(40, 30, 11),
    }
}

/// The shipped controllable two-state pair with `Q = I`, `R = I`.
pub fn two_state_instance() -> LqInstance {
    LqInstance {
        a: DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]),
        b: DMatrix::from_row_slice(2, 1, &[0.0, 0.1]),
        q: DMatrix::identity(2, 2),
        r: DMatrix::identity(1, 1),
        state_box: vec![(-6.0, 6.0), (-6.0, 6.0)],
        draw_box: vec![(-4.0, 4.0), (-4.0, 4.0)],
        init_state: DVector::from_vec(vec![3.0, -2.0]),
        // u = −x1 − 2 x2 places both closed-loop eigenvalues at 0.9.
        initial_gains: DMatrix::from_row_slice(2, 1, &[-1.0, -2.0]),
        fpi: lq_config(40, 25, 13),
    }
}

fn lq_config(n_b: usize, i_max: usize, rng_seed: u64) -> FpiConfig {
    FpiConfig {
        batch_size_mode: fpi_core::BatchSizeMode::Fixed,
        data_mode: fpi_core::DataMode::Batch,
        prioritization: false,
        supplemental: false,
        n_b_initial: n_b,
        n_b_increment: 5,
        buffer_max: 100,
        alpha_base: 0.9,
        exploration_noise_fraction: 0.25,
        learning_rate: 0.015,
        actor_inner_iters: 4000,
        convergence_tol: 1e-9,
        i_max,
        rng_seed,
        rank_tol: 1e-10,
        solver_truncation: None,
        bellman_residual_abort: None,
    }
}

/// Measure the error-bound constants of a finished run against the exact
/// per-policy values: `γ` from the optimal value of successor states, `ξ`
/// and `η` from the recorded critics, and `β` from the initial policy.
pub fn measure_error_bound_constants(
    instance: &LqInstance,
    outcome: &FpiOutcome,
) -> (f64, f64, f64, f64) {
    let oracle = instance.oracle();
    let q_star = instance.optimal_critic();
    let pairs = fpi_core::engine::probe_pairs(&outcome.probe_states, instance.action_dim());
    let v_star = |x: &DVector<f64>| (x.transpose() * &oracle.cost_matrix * x)[(0, 0)];
    let stage = |x: &DVector<f64>, u: &DVector<f64>| {
        (x.transpose() * &instance.q * x)[(0, 0)] + (u.transpose() * &instance.r * u)[(0, 0)]
    };

    let mut gamma = 0.0f64;
    for (x, u) in &pairs {
        let cost = stage(x, u);
        if cost <= 1e-9 {
            continue;
        }
        let next = &instance.a * x + &instance.b * u;
        gamma = gamma.max(v_star(&next) / cost);
    }

    let mut xi = 1.0f64;
    let mut eta = 1.0f64;
    let mut beta = 1.0f64;
    for (i, diag) in outcome.trace.iter().enumerate() {
        // Trace gains use the identity actor basis on these instances.
        let k_bar = diag.policy_gains.transpose();
        let exact = instance.policy_critic(&k_bar);
        let prev = (i > 0).then(|| &outcome.trace[i - 1]);
        for (x, u) in &pairs {
            let exact_q = exact.eval(x, u);
            if exact_q <= 1e-9 {
                continue;
            }
            let approx_q = diag.critic.eval(x, u);
            xi = xi.min(approx_q / exact_q);
            let backup = match prev {
                Some(prev_diag) => {
                    let next = &instance.a * x + &instance.b * u;
                    let next_action = diag.policy_gains.transpose() * &next;
                    stage(x, u) + prev_diag.critic.eval(&next, &next_action)
                }
                None => exact_q,
            };
            if backup > 1e-9 {
                eta = eta.max(approx_q / backup);
            }
            if i == 0 {
                let star = q_star.eval(x, u);
                if star > 1e-9 {
                    beta = beta.max(exact_q / star);
                }
            }
        }
    }
    (xi.max(1e-6), eta, gamma, beta)
}
