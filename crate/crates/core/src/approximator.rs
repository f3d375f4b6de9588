//! Basis functions, critic evaluation, weighted least-squares policy
//! evaluation, and analytic minimization of the critic over actions.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::FpiError;

/// State-action basis `φ(x, u)` for the critic. Every built-in variant is a
/// polynomial of action degree at most two whose monomials all contain a
/// state or action factor, so `φ(0, 0) = 0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BasisPhi {
    /// The 15-monomial basis over a 2-dim state and 3-dim action, in the
    /// order `[x1², x1x2, x1u1, x1u2, x1u3, x2², x2u1, x2u2, x2u3, u1², u2²,
    /// u3², x1²x2, x1²u1, x1²u2]`.
    KneePoly15,
    /// All degree-two monomials `z_i z_j` (i ≤ j) of the stacked vector
    /// `z = (x, u)`. Exactly representable quadratic Q-functions make this
    /// the basis for linear-quadratic oracle checks.
    Quadratic { state_dim: usize, action_dim: usize },
}

impl BasisPhi {
    pub fn len(&self) -> usize {
        match self {
            BasisPhi::KneePoly15 => 15,
            BasisPhi::Quadratic { state_dim, action_dim } => {
                let d = state_dim + action_dim;
                d * (d + 1) / 2
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state_dim(&self) -> usize {
        match self {
            BasisPhi::KneePoly15 => 2,
            BasisPhi::Quadratic { state_dim, .. } => *state_dim,
        }
    }

    pub fn action_dim(&self) -> usize {
        match self {
            BasisPhi::KneePoly15 => 3,
            BasisPhi::Quadratic { action_dim, .. } => *action_dim,
        }
    }

    pub fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.state_dim(), "basis state dimension mismatch");
        assert_eq!(u.len(), self.action_dim(), "basis action dimension mismatch");
        match self {
            BasisPhi::KneePoly15 => DVector::from_vec(vec![
                x[0] * x[0],
                x[0] * x[1],
                x[0] * u[0],
                x[0] * u[1],
                x[0] * u[2],
                x[1] * x[1],
                x[1] * u[0],
                x[1] * u[1],
                x[1] * u[2],
                u[0] * u[0],
                u[1] * u[1],
                u[2] * u[2],
                x[0] * x[0] * x[1],
                x[0] * x[0] * u[0],
                x[0] * x[0] * u[1],
            ]),
            BasisPhi::Quadratic { state_dim, action_dim } => {
                let d = state_dim + action_dim;
                let z = |i: usize| if i < *state_dim { x[i] } else { u[i - state_dim] };
                let mut out = Vec::with_capacity(self.len());
                for i in 0..d {
                    for j in i..d {
                        out.push(z(i) * z(j));
                    }
                }
                DVector::from_vec(out)
            }
        }
    }

    /// Partial derivatives of every basis function with respect to the
    /// action components, as an `L × m` matrix.
    pub fn grad_action(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        assert_eq!(x.len(), self.state_dim(), "basis state dimension mismatch");
        assert_eq!(u.len(), self.action_dim(), "basis action dimension mismatch");
        match self {
            BasisPhi::KneePoly15 => {
                let mut g = DMatrix::zeros(15, 3);
                g[(2, 0)] = x[0];
                g[(3, 1)] = x[0];
                g[(4, 2)] = x[0];
                g[(6, 0)] = x[1];
                g[(7, 1)] = x[1];
                g[(8, 2)] = x[1];
                g[(9, 0)] = 2.0 * u[0];
                g[(10, 1)] = 2.0 * u[1];
                g[(11, 2)] = 2.0 * u[2];
                g[(13, 0)] = x[0] * x[0];
                g[(14, 1)] = x[0] * x[0];
                g
            }
            BasisPhi::Quadratic { state_dim, action_dim } => {
                let n = *state_dim;
                let d = n + action_dim;
                let z = |i: usize| if i < n { x[i] } else { u[i - n] };
                let mut g = DMatrix::zeros(self.len(), *action_dim);
                let mut row = 0;
                for i in 0..d {
                    for j in i..d {
                        if i >= n {
                            g[(row, i - n)] += z(j);
                        }
                        if j >= n {
                            g[(row, j - n)] += z(i);
                        }
                        row += 1;
                    }
                }
                g
            }
        }
    }
}

/// Actor basis `σ(x)`; the built-in variant is the state scaled
/// componentwise, which keeps `σ(0) = 0` and hence `h(0) = 0`.
#[derive(Clone, Debug, PartialEq)]
pub enum BasisSigma {
    /// `σ(x) = x ∘ (1 / scales)`. The scales are typically the half-widths
    /// of the state safety box so the actor gradient is well conditioned.
    ScaledState { scales: DVector<f64> },
}

impl BasisSigma {
    pub fn identity(state_dim: usize) -> Self {
        BasisSigma::ScaledState { scales: DVector::from_element(state_dim, 1.0) }
    }

    pub fn scaled(scales: DVector<f64>) -> Result<Self, FpiError> {
        if scales.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(FpiError::Config("actor basis scales must be positive".into()));
        }
        Ok(BasisSigma::ScaledState { scales })
    }

    pub fn dim(&self) -> usize {
        match self {
            BasisSigma::ScaledState { scales } => scales.len(),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.dim()
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            BasisSigma::ScaledState { scales } => {
                assert_eq!(x.len(), scales.len(), "actor basis dimension mismatch");
                DVector::from_fn(x.len(), |i, _| x[i] / scales[i])
            }
        }
    }
}

/// Critic: weight vector `W` over a state-action basis, evaluating
/// `Q̂(x, u) = Wᵀ φ(x, u)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QApprox {
    pub weights: DVector<f64>,
    pub basis: BasisPhi,
}

impl QApprox {
    pub fn new(weights: DVector<f64>, basis: BasisPhi) -> Self {
        assert_eq!(weights.len(), basis.len(), "critic weight length must match basis");
        Self { weights, basis }
    }

    pub fn zeros(basis: BasisPhi) -> Self {
        Self { weights: DVector::zeros(basis.len()), basis }
    }

    pub fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        eval_q(self, x, u)
    }
}

/// Actor: gains matrix over the actor basis, evaluating
/// `h(x) = gainsᵀ σ(x)`; rows index `σ`, columns index action components.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyApprox {
    pub gains: DMatrix<f64>,
    pub basis: BasisSigma,
}

impl PolicyApprox {
    pub fn new(gains: DMatrix<f64>, basis: BasisSigma) -> Result<Self, FpiError> {
        if gains.nrows() != basis.dim() {
            return Err(FpiError::Config(format!(
                "actor gains have {} rows but the actor basis has dimension {}",
                gains.nrows(),
                basis.dim()
            )));
        }
        Ok(Self { gains, basis })
    }

    pub fn action_dim(&self) -> usize {
        self.gains.ncols()
    }

    pub fn act(&self, x: &DVector<f64>) -> DVector<f64> {
        self.gains.transpose() * self.basis.eval(x)
    }

    /// The equivalent state-feedback matrix `K̄` with `u = K̄ x`.
    pub fn state_feedback(&self) -> DMatrix<f64> {
        match &self.basis {
            BasisSigma::ScaledState { scales } => {
                let mut k = self.gains.transpose();
                for (j, s) in scales.iter().enumerate() {
                    for i in 0..k.nrows() {
                        k[(i, j)] /= s;
                    }
                }
                k
            }
        }
    }
}

/// Evaluate the basis at one state-action pair.
pub fn eval_phi(basis: &BasisPhi, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    basis.eval(x, u)
}

/// Evaluate the critic: `Wᵀ φ(x, u)`.
pub fn eval_q(q: &QApprox, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
    q.weights.dot(&q.basis.eval(x, u))
}

/// Outcome of the full-column-rank check on a design matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RankStatus {
    Satisfied,
    Deficient { rank: usize },
}

impl RankStatus {
    pub fn is_satisfied(&self) -> bool {
        matches!(self, RankStatus::Satisfied)
    }
}

/// The linear system of one policy evaluation: design rows
/// `φ(x_k, u_k) − φ(x_{k+1}, h(x_{k+1}))`, targets `U(x_k, u_k)` and
/// per-sample replay weights.
#[derive(Clone, Debug)]
pub struct RegressionSystem {
    pub design: DMatrix<f64>,
    pub targets: DVector<f64>,
    pub weights: DVector<f64>,
}

impl RegressionSystem {
    pub fn new(
        design: DMatrix<f64>,
        targets: DVector<f64>,
        weights: DVector<f64>,
    ) -> Result<Self, FpiError> {
        if design.nrows() != targets.len() || design.nrows() != weights.len() {
            return Err(FpiError::Config(format!(
                "regression system row mismatch: design {} rows, {} targets, {} weights",
                design.nrows(),
                targets.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(FpiError::Config("replay weights must lie in [0, 1]".into()));
        }
        Ok(Self { design, targets, weights })
    }

    pub fn num_samples(&self) -> usize {
        self.design.nrows()
    }
}

/// Numerical rank check: satisfied iff the count of singular values above
/// `rank_tol · σ_max` equals the column count.
pub fn check_rank_condition(design: &DMatrix<f64>, rank_tol: f64) -> RankStatus {
    let rank = numerical_rank(design, rank_tol);
    if rank == design.ncols() {
        RankStatus::Satisfied
    } else {
        RankStatus::Deficient { rank }
    }
}

fn numerical_rank(m: &DMatrix<f64>, rank_tol: f64) -> usize {
    let svd = m.clone().svd(false, false);
    let sigma_max = svd.singular_values.max();
    if sigma_max <= 0.0 {
        return 0;
    }
    svd.singular_values.iter().filter(|s| **s > rank_tol * sigma_max).count()
}

/// Weighted least-squares solve `W = (XᵀΛX)† (XᵀΛY)` with the pseudoinverse
/// computed by singular value decomposition; singular values below
/// `rank_tol · σ_max` are treated as zero. Returns the solution together
/// with the rank diagnostic on the raw design matrix.
pub fn solve_weighted_ls(system: &RegressionSystem, rank_tol: f64) -> (DVector<f64>, RankStatus) {
    solve_weighted_ls_truncated(system, rank_tol, rank_tol)
}

/// Weighted least squares with the identifiability check and the spectral
/// truncation at separate tolerances. A truncation above the rank
/// tolerance discards poorly excited directions instead of inverting them,
/// which keeps the critic bounded off the sample distribution.
pub fn solve_weighted_ls_truncated(
    system: &RegressionSystem,
    rank_tol: f64,
    truncation_tol: f64,
) -> (DVector<f64>, RankStatus) {
    let status = check_rank_condition(&system.design, rank_tol);
    let cols = system.design.ncols();
    let xt = system.design.transpose();
    let mut xt_lambda = xt.clone();
    for (j, w) in system.weights.iter().enumerate() {
        for i in 0..cols {
            xt_lambda[(i, j)] *= *w;
        }
    }
    let normal = &xt_lambda * &system.design;
    let rhs = &xt_lambda * &system.targets;

    let svd = normal.svd(true, true);
    let sigma_max = svd.singular_values.max();
    if sigma_max <= 0.0 {
        return (DVector::zeros(cols), status);
    }
    let pinv = svd
        .pseudo_inverse(truncation_tol * sigma_max)
        .expect("pseudoinverse of a square matrix with computed SVD factors");
    (pinv * rhs, status)
}

/// Result of the analytic minimization of the critic over actions at a
/// fixed state.
#[derive(Clone, Debug)]
pub struct ActionMin {
    pub action: DVector<f64>,
    pub value: f64,
}

/// Rewrite `Q̂(x, ·)` as `uᵀA(x)u + b(x)ᵀu + c(x)` and return the exact
/// coefficients. The identities below are exact because every built-in
/// basis has action degree at most two.
pub fn action_quadratic_parts(
    q: &QApprox,
    x: &DVector<f64>,
) -> (DMatrix<f64>, DVector<f64>, f64) {
    let m = q.basis.action_dim();
    let zero = DVector::zeros(m);
    let c = eval_q(q, x, &zero);
    let mut a = DMatrix::zeros(m, m);
    let mut b = DVector::zeros(m);
    let mut q_plus = vec![0.0; m];
    for i in 0..m {
        let mut e = DVector::zeros(m);
        e[i] = 1.0;
        let qp = eval_q(q, x, &e);
        e[i] = -1.0;
        let qm = eval_q(q, x, &e);
        b[i] = (qp - qm) / 2.0;
        a[(i, i)] = (qp + qm - 2.0 * c) / 2.0;
        q_plus[i] = qp;
    }
    for i in 0..m {
        for j in (i + 1)..m {
            let mut e = DVector::zeros(m);
            e[i] = 1.0;
            e[j] = 1.0;
            let qij = eval_q(q, x, &e);
            let aij = (qij - q_plus[i] - q_plus[j] + c) / 2.0;
            a[(i, j)] = aij;
            a[(j, i)] = aij;
        }
    }
    (a, b, c)
}

/// Analytic minimizer of `Q̂(x, ·)`: `u* = −½ A(x)⁻¹ b(x)` when `A(x)` is
/// positive definite. Signals a non-convex critic otherwise so callers can
/// fall back to gradient descent.
pub fn min_q_over_action(q: &QApprox, x: &DVector<f64>) -> Result<ActionMin, FpiError> {
    let (a, b, c) = action_quadratic_parts(q, x);
    let chol = Cholesky::new(a.clone())
        .ok_or_else(|| FpiError::NonConvexInAction { state: x.clone() })?;
    let action = chol.solve(&b) * -0.5;
    let value = c + b.dot(&action) + (action.transpose() * &a * &action)[(0, 0)];
    Ok(ActionMin { action, value })
}

/// Minimum of `Q̂(x, ·)` over actions, tolerating positive semidefinite
/// curvature. Returns `None` when the critic is unbounded below in the
/// action, which supplemental-value extraction treats as zero after
/// clamping.
pub fn min_q_over_action_lenient(q: &QApprox, x: &DVector<f64>) -> Option<f64> {
    let (a, b, c) = action_quadratic_parts(q, x);
    let m = a.nrows();
    if m == 0 {
        return Some(c);
    }
    let eigen = SymmetricEigen::new(a);
    let lambda_max = eigen.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let tol = 1e-12 * lambda_max.max(1.0);
    let mut value = c;
    for k in 0..m {
        let lambda = eigen.eigenvalues[k];
        let proj = eigen.eigenvectors.column(k).dot(&b);
        if lambda < -tol {
            return None;
        }
        if lambda <= tol {
            if proj.abs() > tol {
                return None;
            }
            continue;
        }
        value -= proj * proj / (4.0 * lambda);
    }
    Some(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(values: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(values)
    }

    #[test]
    fn knee_basis_vanishes_at_origin() {
        let phi = BasisPhi::KneePoly15;
        let out = phi.eval(&v(&[0.0, 0.0]), &v(&[0.0, 0.0, 0.0]));
        assert_eq!(out, DVector::zeros(15));
    }

    #[test]
    fn knee_basis_unit_first_state() {
        let phi = BasisPhi::KneePoly15;
        let out = phi.eval(&v(&[1.0, 0.0]), &v(&[0.0, 0.0, 0.0]));
        let mut expected = DVector::zeros(15);
        expected[0] = 1.0;
        assert_eq!(out, expected);
    }

    #[test]
    fn knee_basis_all_ones() {
        let phi = BasisPhi::KneePoly15;
        let out = phi.eval(&v(&[1.0, 1.0]), &v(&[1.0, 1.0, 1.0]));
        assert_eq!(out, DVector::from_element(15, 1.0));
    }

    #[test]
    fn knee_basis_monomial_order() {
        let phi = BasisPhi::KneePoly15;
        let x = v(&[2.0, 3.0]);
        let u = v(&[5.0, 7.0, 11.0]);
        let out = phi.eval(&x, &u);
        let expected = [
            4.0, 6.0, 10.0, 14.0, 22.0, 9.0, 15.0, 21.0, 33.0, 25.0, 49.0, 121.0, 12.0, 20.0,
            28.0,
        ];
        for (got, want) in out.iter().zip(expected.iter()) {
            assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
        }
    }

    #[test]
    fn quadratic_basis_dimensions() {
        let phi = BasisPhi::Quadratic { state_dim: 1, action_dim: 1 };
        assert_eq!(phi.len(), 3);
        let out = phi.eval(&v(&[2.0]), &v(&[3.0]));
        assert_eq!(out, v(&[4.0, 6.0, 9.0]));
        let phi2 = BasisPhi::Quadratic { state_dim: 2, action_dim: 2 };
        assert_eq!(phi2.len(), 10);
    }

    #[test]
    fn eval_q_zero_weights() {
        let q = QApprox::zeros(BasisPhi::KneePoly15);
        assert_eq!(eval_q(&q, &v(&[1.5, -2.0]), &v(&[0.3, 0.1, -0.2])), 0.0);
    }

    #[test]
    fn eval_q_first_unit_weight() {
        let mut w = DVector::zeros(15);
        w[0] = 1.0;
        let q = QApprox::new(w, BasisPhi::KneePoly15);
        let got = eval_q(&q, &v(&[2.0, 0.0]), &v(&[0.0, 0.0, 0.0]));
        assert!((got - 4.0).abs() < 1e-12);
    }

    #[test]
    fn eval_q_all_ones() {
        let q = QApprox::new(DVector::from_element(15, 1.0), BasisPhi::KneePoly15);
        let got = eval_q(&q, &v(&[1.0, 1.0]), &v(&[1.0, 1.0, 1.0]));
        assert!((got - 15.0).abs() < 1e-12);
    }

    #[test]
    fn basis_gradient_matches_finite_differences() {
        for phi in [
            BasisPhi::KneePoly15,
            BasisPhi::Quadratic { state_dim: 2, action_dim: 3 },
        ] {
            let x = v(&[1.3, -0.7]);
            let u = v(&[0.4, -1.1, 2.2]);
            let g = phi.grad_action(&x, &u);
            // Central differences are exact for polynomials of action
            // degree at most two.
            let h = 0.5;
            for a in 0..3 {
                let mut up = u.clone();
                let mut um = u.clone();
                up[a] += h;
                um[a] -= h;
                let diff = (phi.eval(&x, &up) - phi.eval(&x, &um)) / (2.0 * h);
                for j in 0..phi.len() {
                    assert!(
                        (g[(j, a)] - diff[j]).abs() < 1e-10,
                        "basis {phi:?} row {j} action {a}"
                    );
                }
            }
        }
    }

    #[test]
    fn weighted_ls_identity_design() {
        let n = 4;
        let y = v(&[1.0, -2.0, 0.5, 3.0]);
        let system = RegressionSystem::new(
            DMatrix::identity(n, n),
            y.clone(),
            DVector::from_element(n, 1.0),
        )
        .unwrap();
        let (w, status) = solve_weighted_ls(&system, 1e-10);
        assert!(status.is_satisfied());
        assert!((w - y).amax() < 1e-12);
    }

    #[test]
    fn weighted_ls_scalar_mean() {
        let system = RegressionSystem::new(
            DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            v(&[1.0, 3.0]),
            v(&[1.0, 1.0]),
        )
        .unwrap();
        let (w, _) = solve_weighted_ls(&system, 1e-10);
        assert!((w[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_ls_ignores_zero_weight_rows() {
        let system = RegressionSystem::new(
            DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            v(&[1.0, 3.0]),
            v(&[1.0, 0.0]),
        )
        .unwrap();
        let (w, _) = solve_weighted_ls(&system, 1e-10);
        assert!((w[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_ls_zero_targets() {
        let system = RegressionSystem::new(
            DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -0.3, 2.0, 0.7, 0.1]),
            DVector::zeros(3),
            DVector::from_element(3, 1.0),
        )
        .unwrap();
        let (w, _) = solve_weighted_ls(&system, 1e-10);
        assert!(w.amax() < 1e-14);
    }

    #[test]
    fn rank_condition_identity() {
        assert_eq!(check_rank_condition(&DMatrix::identity(3, 3), 1e-10), RankStatus::Satisfied);
    }

    #[test]
    fn rank_condition_duplicated_row() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 1.0, 2.0]);
        assert_eq!(check_rank_condition(&m, 1e-10), RankStatus::Deficient { rank: 1 });
    }

    // Row-echelon elimination, kept independent of the SVD-based check.
    fn elimination_rank(m: &DMatrix<f64>, tol: f64) -> usize {
        let mut a = m.clone();
        let (rows, cols) = (a.nrows(), a.ncols());
        let mut rank = 0;
        for col in 0..cols {
            let mut pivot = None;
            let mut best = tol;
            for r in rank..rows {
                if a[(r, col)].abs() > best {
                    best = a[(r, col)].abs();
                    pivot = Some(r);
                }
            }
            let Some(p) = pivot else { continue };
            a.swap_rows(rank, p);
            for r in (rank + 1)..rows {
                let factor = a[(r, col)] / a[(rank, col)];
                for c in col..cols {
                    a[(r, c)] -= factor * a[(rank, c)];
                }
            }
            rank += 1;
            if rank == rows {
                break;
            }
        }
        rank
    }

    #[test]
    fn rank_condition_random_full_rank() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        let m = DMatrix::from_fn(20, 15, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        assert_eq!(check_rank_condition(&m, 1e-10), RankStatus::Satisfied);
        assert_eq!(elimination_rank(&m, 1e-9), 15);
    }

    #[test]
    fn min_q_centered_quadratic() {
        let mut w = DVector::zeros(15);
        w[9] = 1.0;
        w[10] = 2.0;
        w[11] = 0.5;
        let q = QApprox::new(w, BasisPhi::KneePoly15);
        let m = min_q_over_action(&q, &v(&[0.7, -0.4])).unwrap();
        assert!(m.action.amax() < 1e-12);
        assert!(m.value.abs() < 1e-12);
    }

    #[test]
    fn min_q_complete_the_square() {
        // Q = u² + 2 x u on a scalar channel; at x = 1 the minimizer is
        // u = −1 with value −1.
        let phi = BasisPhi::Quadratic { state_dim: 1, action_dim: 1 };
        let q = QApprox::new(v(&[0.0, 2.0, 1.0]), phi);
        let m = min_q_over_action(&q, &v(&[1.0])).unwrap();
        assert!((m.action[0] + 1.0).abs() < 1e-12);
        assert!((m.value + 1.0).abs() < 1e-12);
        assert_eq!(m.value.max(0.0), 0.0);
    }

    #[test]
    fn min_q_separable() {
        // Q = x1² + u² over a 2-state, 1-action channel.
        let phi = BasisPhi::Quadratic { state_dim: 2, action_dim: 1 };
        let mut w = DVector::zeros(phi.len());
        w[0] = 1.0;
        w[5] = 1.0;
        let q = QApprox::new(w, phi);
        let m = min_q_over_action(&q, &v(&[1.0, 0.0])).unwrap();
        assert!(m.action.amax() < 1e-12);
        assert!((m.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn min_q_rejects_concave_critic() {
        let phi = BasisPhi::Quadratic { state_dim: 1, action_dim: 1 };
        let q = QApprox::new(v(&[1.0, 0.0, -1.0]), phi);
        match min_q_over_action(&q, &v(&[0.5])) {
            Err(FpiError::NonConvexInAction { state }) => assert_eq!(state[0], 0.5),
            other => panic!("expected non-convex signal, got {other:?}"),
        }
    }

    #[test]
    fn lenient_min_handles_zero_critic() {
        let q = QApprox::zeros(BasisPhi::KneePoly15);
        assert_eq!(min_q_over_action_lenient(&q, &v(&[1.0, 2.0])), Some(0.0));
    }

    #[test]
    fn lenient_min_detects_unbounded() {
        let phi = BasisPhi::Quadratic { state_dim: 1, action_dim: 1 };
        let q = QApprox::new(v(&[0.0, 2.0, 0.0]), phi);
        // Q = 2xu is linear and unbounded below in u at x ≠ 0.
        assert_eq!(min_q_over_action_lenient(&q, &v(&[1.0])), None);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;
        use rand::{Rng, SeedableRng};

        proptest! {
            #[test]
            fn unit_weights_match_plain_least_squares(seed in 0u64..200) {
                let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
                let rows = 12;
                let cols = 4;
                let x = DMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>() * 2.0 - 1.0);
                let y = DVector::from_fn(rows, |_, _| rng.random::<f64>() * 2.0 - 1.0);
                prop_assume!(check_rank_condition(&x, 1e-10).is_satisfied());
                let system = RegressionSystem::new(
                    x.clone(),
                    y.clone(),
                    DVector::from_element(rows, 1.0),
                ).unwrap();
                let (w, _) = solve_weighted_ls(&system, 1e-10);
                // Independent route: QR-based ordinary least squares.
                let qr = x.clone().qr();
                let w_qr = qr.r().try_inverse().unwrap() * qr.q().transpose() * &y;
                prop_assert!((&w - &w_qr).amax() < 1e-10);
                // Residual is orthogonal to the column space.
                let residual = &x * &w - &y;
                prop_assert!((x.transpose() * residual).amax() < 1e-8);
            }

            #[test]
            fn analytic_minimum_beats_random_actions(seed in 0u64..50) {
                let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
                let phi = BasisPhi::KneePoly15;
                let mut w = DVector::from_fn(15, |_, _| rng.random::<f64>() * 2.0 - 1.0);
                // Force positive curvature on the pure action terms.
                w[9] = 0.5 + rng.random::<f64>();
                w[10] = 0.5 + rng.random::<f64>();
                w[11] = 0.5 + rng.random::<f64>();
                let q = QApprox::new(w, phi);
                let x = DVector::from_fn(2, |_, _| rng.random::<f64>() * 2.0 - 1.0);
                if let Ok(m) = min_q_over_action(&q, &x) {
                    let best = eval_q(&q, &x, &m.action);
                    for _ in 0..1000 {
                        let u = DVector::from_fn(3, |_, _| rng.random::<f64>() * 8.0 - 4.0);
                        prop_assert!(best <= eval_q(&q, &x, &u) + 1e-9);
                    }
                }
            }
        }
    }
}
