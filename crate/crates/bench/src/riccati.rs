//! Independent discrete algebraic Riccati oracle and Lyapunov solver.
//!
//! These fixed-point solvers never touch the policy-iteration code path;
//! they exist so converged critics and actors can be checked against an
//! independently computed optimum.

use nalgebra::DMatrix;
use std::fmt;

#[derive(Debug, Clone)]
pub enum OracleError {
    Dimension(String),
    NotConverged { spectral_radius: f64 },
    Singular(String),
}

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleError::Dimension(msg) => write!(f, "dimension error: {msg}"),
            OracleError::NotConverged { spectral_radius } => write!(
                f,
                "Riccati iteration did not converge; open-loop spectral radius {spectral_radius:.6}"
            ),
            OracleError::Singular(msg) => write!(f, "singular matrix: {msg}"),
        }
    }
}

impl std::error::Error for OracleError {}

/// Optimal gain and cost matrix for `x⁺ = A x + B u`, cost `xᵀQx + uᵀRu`,
/// with the control convention `u = −K x`.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub gain: DMatrix<f64>,
    pub cost_matrix: DMatrix<f64>,
}

/// Largest eigenvalue magnitude.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Solve the discrete algebraic Riccati equation by fixed-point iteration
/// of `P ← AᵀPA − AᵀPB (R + BᵀPB)⁻¹ BᵀPA + Q` from `P = Q`.
pub fn riccati_oracle(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<RiccatiSolution, OracleError> {
    let n = a.nrows();
    let m = b.ncols();
    if a.ncols() != n {
        return Err(OracleError::Dimension("A must be square".into()));
    }
    if b.nrows() != n {
        return Err(OracleError::Dimension("B must have one row per state".into()));
    }
    if q.nrows() != n || q.ncols() != n {
        return Err(OracleError::Dimension("Q must match the state dimension".into()));
    }
    if r.nrows() != m || r.ncols() != m {
        return Err(OracleError::Dimension("R must match the input dimension".into()));
    }

    let at = a.transpose();
    let bt = b.transpose();
    let mut p = q.clone();
    for _ in 0..max_iters {
        let r_eff = r + &bt * &p * b;
        let r_inv = r_eff
            .clone()
            .try_inverse()
            .ok_or_else(|| OracleError::Singular("R + BᵀPB is not invertible".into()))?;
        let next = &at * &p * a - &at * &p * b * &r_inv * &bt * &p * a + q;
        let delta = (&next - &p).amax();
        p = next;
        if delta < tol {
            let r_eff = r + &bt * &p * b;
            let r_inv = r_eff
                .try_inverse()
                .ok_or_else(|| OracleError::Singular("R + BᵀPB is not invertible".into()))?;
            let gain = r_inv * &bt * &p * a;
            return Ok(RiccatiSolution { gain, cost_matrix: p });
        }
    }
    Err(OracleError::NotConverged { spectral_radius: spectral_radius(a) })
}

/// Solve the discrete Lyapunov equation `P = AᵀPA + Q` for a stable `A` by
/// fixed-point iteration.
pub fn dlyap(
    a: &DMatrix<f64>,
    q: &DMatrix<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<DMatrix<f64>, OracleError> {
    let n = a.nrows();
    if a.ncols() != n || q.nrows() != n || q.ncols() != n {
        return Err(OracleError::Dimension("A and Q must be square of equal size".into()));
    }
    let at = a.transpose();
    let mut p = q.clone();
    for _ in 0..max_iters {
        let next = &at * &p * a + q;
        let delta = (&next - &p).amax();
        p = next;
        if delta < tol {
            return Ok(p);
        }
    }
    Err(OracleError::NotConverged { spectral_radius: spectral_radius(a) })
}

/// Q-factor of a value matrix `P`:
/// `G = blockdiag(Q, R) + [A B]ᵀ P [A B]`, so that
/// `Q(x, u) = [x; u]ᵀ G [x; u]`.
pub fn q_factor(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = a.nrows();
    let m = b.ncols();
    let mut ab = DMatrix::zeros(n, n + m);
    ab.view_mut((0, 0), (n, n)).copy_from(a);
    ab.view_mut((0, n), (n, m)).copy_from(b);
    let mut g = DMatrix::zeros(n + m, n + m);
    g.view_mut((0, 0), (n, n)).copy_from(q);
    g.view_mut((n, n), (m, m)).copy_from(r);
    g + ab.transpose() * p * ab
}

/// Exact value matrix of the linear policy `u = K̄ x`: solves
/// `P = Q + K̄ᵀRK̄ + (A + BK̄)ᵀ P (A + BK̄)`.
pub fn policy_value_matrix(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    k_bar: &DMatrix<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<DMatrix<f64>, OracleError> {
    let closed = a + b * k_bar;
    let stage = q + k_bar.transpose() * r * k_bar;
    dlyap(&closed, &stage, tol, max_iters)
}
