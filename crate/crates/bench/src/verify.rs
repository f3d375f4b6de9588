//! Empirical property suites: convergence to the Riccati optimum,
//! value-function monotonicity, closed-loop stability of every iterate,
//! supplemental-value invariance of the fixed point, and the iterative
//! error bound. All run on built-in linear-quadratic instances where an
//! exact optimum is computable.

use fpi_core::{
    check_error_bound, check_monotonicity, extract_supplemental, run_fpi, ErrorBoundProbe,
    FpiOutcome,
};
use nalgebra::DVector;

use crate::config::BenchError;
use crate::lq::{measure_error_bound_constants, scalar_instance, two_state_instance, LqInstance};
use crate::riccati::spectral_radius;

pub const SUITES: [&str; 5] =
    ["riccati", "monotonicity", "stability", "supplemental", "error-bound"];

/// One named check: pass/fail plus a human-readable margin. Checks marked
/// diagnostic-only never fail the suite; they document behavior outside
/// the regime the guarantees cover.
#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub diagnostic_only: bool,
    pub detail: String,
}

impl CheckResult {
    fn enforced(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.into(), passed, diagnostic_only: false, detail }
    }

    fn diagnostic(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.into(), passed, diagnostic_only: true, detail }
    }

    pub fn render(&self) -> String {
        let status = if self.passed {
            "PASS"
        } else if self.diagnostic_only {
            "DIAG"
        } else {
            "FAIL"
        };
        let suffix = if self.diagnostic_only { " [diagnostic only]" } else { "" };
        format!("{status} {} ({}){}", self.name, self.detail, suffix)
    }
}

fn fpi_gain(outcome: &FpiOutcome) -> nalgebra::DMatrix<f64> {
    outcome.policy.state_feedback()
}

fn run_instance(instance: &LqInstance) -> Result<FpiOutcome, BenchError> {
    instance.run().map_err(|e| BenchError::Suite(format!("tuning run failed: {e}")))
}

/// Riccati suite: the oracle against closed forms, then the tuner against
/// the oracle on the scalar and two-state instances.
pub fn verify_riccati() -> Result<Vec<CheckResult>, BenchError> {
    let mut checks = Vec::new();

    let golden = (1.0 + 5.0f64.sqrt()) / 2.0;
    let scalar = scalar_instance();
    let oracle = scalar.oracle();
    let p_err = (oracle.cost_matrix[(0, 0)] - golden).abs();
    let k_err = (oracle.gain[(0, 0)] - golden / (1.0 + golden)).abs();
    checks.push(CheckResult::enforced(
        "riccati/scalar-closed-form",
        p_err < 1e-9 && k_err < 1e-9,
        format!("p_err={p_err:.2e} gain_err={k_err:.2e}"),
    ));

    let outcome = run_instance(&scalar)?;
    let gain = fpi_gain(&outcome);
    let gain_err = (gain[(0, 0)] + oracle.gain[(0, 0)]).abs();
    let critic_err = (&outcome.critic.weights - &scalar.optimal_critic().weights).amax();
    checks.push(CheckResult::enforced(
        "riccati/fpi-scalar-gain",
        gain_err < 1e-3,
        format!("|k_fpi - k*| = {gain_err:.2e}, iterations = {}", outcome.trace.len()),
    ));
    checks.push(CheckResult::enforced(
        "riccati/fpi-scalar-critic",
        critic_err < 1e-3,
        format!("max coefficient error {critic_err:.2e}"),
    ));

    let two = two_state_instance();
    let oracle2 = two.oracle();
    let outcome2 = run_instance(&two)?;
    let gain2 = fpi_gain(&outcome2);
    let gain2_err = (&gain2 + &oracle2.gain).amax();
    checks.push(CheckResult::enforced(
        "riccati/fpi-two-state-gain",
        gain2_err < 1e-4 && outcome2.trace.len() <= 25,
        format!("max gain error {gain2_err:.2e} in {} iterations", outcome2.trace.len()),
    ));
    Ok(checks)
}

/// Monotonicity suite: the value function must not increase between
/// iterations in the noise-free regime; under injected sensor noise the
/// same check is reported as a diagnostic.
pub fn verify_monotonicity() -> Result<Vec<CheckResult>, BenchError> {
    let mut checks = Vec::new();
    let two = two_state_instance();
    let outcome = run_instance(&two)?;
    let report = check_monotonicity(&outcome.trace, 1e-6);
    checks.push(CheckResult::enforced(
        "monotonicity/noise-free",
        report.passed,
        format!("max violation {:.2e} over {} iterations", report.max_violation, outcome.trace.len()),
    ));

    // Outside the noise-free regime the guarantee does not apply; the
    // same check under 10% sensor noise is reported but never enforced.
    let mut noisy = two.clone();
    noisy.fpi.rng_seed = noisy.fpi.rng_seed.wrapping_add(17);
    noisy.fpi.i_max = 12;
    noisy.fpi.n_b_initial = 200;
    noisy.fpi.buffer_max = 200;
    noisy.fpi.learning_rate = 0.0003;
    noisy.fpi.actor_inner_iters = 60_000;
    noisy.fpi.convergence_tol = 1e-12;
    let mut plant = noisy.plant().with_sensor_noise(0.10);
    let check = match run_fpi(&mut plant, &noisy.setup(None)) {
        Ok(outcome) if outcome.trace.len() >= 2 => {
            let report = check_monotonicity(&outcome.trace, 1e-6);
            CheckResult::diagnostic(
                "monotonicity/sensor-noise-10pct",
                report.passed,
                format!("max violation {:.2e}", report.max_violation),
            )
        }
        Ok(_) => CheckResult::diagnostic(
            "monotonicity/sensor-noise-10pct",
            false,
            "run ended before two iterations".into(),
        ),
        Err(err) => CheckResult::diagnostic(
            "monotonicity/sensor-noise-10pct",
            false,
            format!("run aborted: {err}"),
        ),
    };
    checks.push(check);
    Ok(checks)
}

/// Stability suite: every recorded iterate and the final policy must keep
/// the closed loop inside the unit circle, and finite-horizon rollouts
/// from the probe grid must stay bounded.
pub fn verify_stability() -> Result<Vec<CheckResult>, BenchError> {
    let two = two_state_instance();
    let outcome = run_instance(&two)?;
    let mut worst = 0.0f64;
    let mut check_policy = |k_bar: &nalgebra::DMatrix<f64>| {
        let closed = &two.a + &two.b * k_bar;
        worst = worst.max(spectral_radius(&closed));
    };
    for diag in &outcome.trace {
        check_policy(&diag.policy_gains.transpose());
    }
    check_policy(&fpi_gain(&outcome));
    let mut checks = vec![CheckResult::enforced(
        "stability/spectral-radius",
        worst < 1.0,
        format!("max closed-loop spectral radius {worst:.6} over {} policies", outcome.trace.len() + 1),
    )];

    // Admissibility surrogate: 500-step rollout cost stays finite from
    // every probe state under every iterate.
    let mut max_cost = 0.0f64;
    for diag in &outcome.trace {
        let k_bar = diag.policy_gains.transpose();
        for x0 in outcome.probe_states.iter().step_by(7) {
            let mut x = x0.clone();
            let mut total = 0.0;
            for _ in 0..500 {
                let u = &k_bar * &x;
                total += (x.transpose() * &two.q * &x)[(0, 0)]
                    + (u.transpose() * &two.r * &u)[(0, 0)];
                x = &two.a * &x + &two.b * &u;
            }
            max_cost = max_cost.max(total);
        }
    }
    checks.push(CheckResult::enforced(
        "stability/rollout-cost-bounded",
        max_cost.is_finite() && max_cost < 1e9,
        format!("max 500-step rollout cost {max_cost:.3e}"),
    ));
    Ok(checks)
}

/// Supplemental suite: rerunning with a decaying supplemental value from a
/// prior converged critic must land on the same fixed point.
pub fn verify_supplemental() -> Result<Vec<CheckResult>, BenchError> {
    let scalar = scalar_instance();
    let plain = run_instance(&scalar)?;
    let supp = extract_supplemental(&plain.critic, 0.9)
        .map_err(|e| BenchError::Suite(format!("supplemental extraction failed: {e}")))?;

    let mut shaped = scalar.clone();
    shaped.fpi.supplemental = true;
    shaped.fpi.i_max = 200;
    shaped.fpi.rng_seed = shaped.fpi.rng_seed.wrapping_add(1);
    let mut plant = shaped.plant();
    let outcome = run_fpi(&mut plant, &shaped.setup(Some(supp)))
        .map_err(|e| BenchError::Suite(format!("shaped run failed: {e}")))?;

    let gain_plain = fpi_gain(&plain)[(0, 0)];
    let gain_shaped = fpi_gain(&outcome)[(0, 0)];
    let golden = (1.0 + 5.0f64.sqrt()) / 2.0;
    let optimal = -golden / (1.0 + golden);
    let gain_gap = (gain_plain - gain_shaped).abs();
    let critic_gap = (&plain.critic.weights - &outcome.critic.weights).amax();
    Ok(vec![
        CheckResult::enforced(
            "supplemental/gain-invariance",
            gain_gap < 1e-3 && (gain_shaped - optimal).abs() < 1e-3,
            format!(
                "plain {gain_plain:.6}, shaped {gain_shaped:.6}, optimal {optimal:.6}"
            ),
        ),
        CheckResult::enforced(
            "supplemental/critic-invariance",
            critic_gap < 1e-3,
            format!("max critic weight gap {critic_gap:.2e}"),
        ),
    ])
}

/// Error-bound suite: measure the approximation constants from the run and
/// verify the per-iteration sandwich around the optimal Q-function.
pub fn verify_error_bound() -> Result<Vec<CheckResult>, BenchError> {
    let scalar = scalar_instance();
    let outcome = run_instance(&scalar)?;
    let (xi, eta, gamma, beta) = measure_error_bound_constants(&scalar, &outcome);
    let mut checks = Vec::new();
    let condition = eta < (gamma + 1.0) / gamma;
    checks.push(CheckResult::enforced(
        "error-bound/constants",
        condition,
        format!("xi={xi:.6} eta={eta:.6} gamma={gamma:.4} beta={beta:.4}"),
    ));
    if condition {
        let probe = ErrorBoundProbe::new(xi, eta, gamma, beta)
            .map_err(|e| BenchError::Suite(format!("probe construction failed: {e}")))?;
        let q_star = scalar.optimal_critic();
        let report =
            check_error_bound(&outcome.trace, &outcome.probe_states, &probe, &q_star, 1e-7);
        checks.push(CheckResult::enforced(
            "error-bound/iterative-sandwich",
            report.passed,
            format!(
                "worst lower margin {:.2e}, worst upper margin {:.2e}",
                report.worst_lower_margin, report.worst_upper_margin
            ),
        ));
    }
    Ok(checks)
}

/// Run one suite by name, or every suite for `all`.
pub fn run_suites(which: &str) -> Result<Vec<CheckResult>, BenchError> {
    let run_one = |name: &str| -> Result<Vec<CheckResult>, BenchError> {
        match name {
            "riccati" => verify_riccati(),
            "monotonicity" => verify_monotonicity(),
            "stability" => verify_stability(),
            "supplemental" => verify_supplemental(),
            "error-bound" => verify_error_bound(),
            other => Err(BenchError::Validation(format!(
                "unknown suite `{other}`; available: all, {}",
                SUITES.join(", ")
            ))),
        }
    };
    if which == "all" {
        let mut all = Vec::new();
        for suite in SUITES {
            all.extend(run_one(suite)?);
        }
        Ok(all)
    } else {
        run_one(which)
    }
}

/// Evaluate the optimal value function at a state (test helper).
pub fn optimal_value(instance: &LqInstance, x: &DVector<f64>) -> f64 {
    let oracle = instance.oracle();
    (x.transpose() * &oracle.cost_matrix * x)[(0, 0)]
}
