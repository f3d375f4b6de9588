//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line. Linear-quadratic instances are checked for exact equivalence
//! against the Riccati oracle; the surrogate gait benchmark is checked at
//! trend level over fixed seed sets.
//!
//! Run with `cargo test -p fpi-bench --test acceptance -- --nocapture`.

use std::time::{Duration, Instant};

use fpi_bench::config::{default_config_path, load_config, CellConfig, LoadedExperiment};
use fpi_bench::lq::{measure_error_bound_constants, scalar_instance, two_state_instance};
use fpi_bench::riccati::spectral_radius;
use fpi_bench::sweep::{run_sweep, write_sweep_output, AggregateMetrics};
use fpi_core::{
    check_error_bound, check_monotonicity, extract_supplemental, rank_based_weights, run_fpi,
    ErrorBoundProbe, NoiseModel,
};

fn report(number: u32, title: &str, passed: bool, detail: &str) {
    let status = if passed { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE criterion {number:02} [{status}] {title}: {detail}");
}

/// The scalar optimum `p = (1 + √5)/2`, control `u = −p/(1+p)·x`.
fn scalar_golden_gain() -> f64 {
    let p = (1.0 + 5.0f64.sqrt()) / 2.0;
    -(p / (1.0 + p))
}

fn load_default() -> LoadedExperiment {
    load_config(&default_config_path()).expect("shipped default config loads")
}

fn shipped_cell(loaded: &LoadedExperiment, name: &str) -> CellConfig {
    loaded
        .config
        .cells
        .iter()
        .find(|c| c.name == name)
        .unwrap_or_else(|| panic!("shipped config defines cell {name}"))
        .clone()
}

/// Run one (cell, noise scenario) with the shipped plant and 30 trials.
/// Single-cell runs share the same per-trial seed stream, so different
/// cells compare on identical initial impedances and noise draws.
fn run_cell(cell: CellConfig, scenario: (&str, NoiseModel), trials: usize) -> AggregateMetrics {
    let mut loaded = load_default();
    loaded.config.trials = trials;
    loaded.config.cells = vec![cell];
    loaded.noise_scenarios = vec![(scenario.0.to_string(), scenario.1)];
    let output = run_sweep(&loaded).expect("sweep runs");
    output.aggregates[0].1.clone()
}

#[test]
fn criterion_01_scalar_lqr_equivalence() {
    let start = Instant::now();
    let instance = scalar_instance();
    let outcome = instance.run().expect("scalar run converges");
    let elapsed = start.elapsed();

    let gain = outcome.policy.state_feedback()[(0, 0)];
    let gain_err = (gain - scalar_golden_gain()).abs();
    let critic_err = (&outcome.critic.weights - &instance.optimal_critic().weights).amax();
    let passed = gain_err < 1e-3 && critic_err < 1e-3 && elapsed < Duration::from_secs(1);
    report(
        1,
        "scalar LQR equivalence",
        passed,
        &format!(
            "gain {gain:.6} vs -0.618034 (err {gain_err:.2e}), critic coefficient err \
             {critic_err:.2e}, {} iterations in {elapsed:.2?}",
            outcome.trace.len()
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_02_two_state_lq_equivalence() {
    let start = Instant::now();
    let instance = two_state_instance();
    let outcome = instance.run().expect("two-state run converges");
    let elapsed = start.elapsed();

    let oracle = instance.oracle();
    let gain_err = (outcome.policy.state_feedback() + &oracle.gain).amax();
    let iterations = outcome.trace.len();
    let passed = gain_err < 1e-4 && iterations <= 25 && elapsed < Duration::from_secs(5);
    report(
        2,
        "two-state LQ equivalence",
        passed,
        &format!("max gain err {gain_err:.2e} in {iterations} iterations, {elapsed:.2?}"),
    );
    assert!(passed);
}

#[test]
fn criterion_03_value_monotonicity() {
    let instance = two_state_instance();
    let outcome = instance.run().expect("two-state run converges");
    let m = check_monotonicity(&outcome.trace, 1e-6);
    report(
        3,
        "value-function monotonicity",
        m.passed,
        &format!(
            "max V increase {:.2e} over {} iterations on the probe grid (tol 1e-6)",
            m.max_violation,
            outcome.trace.len()
        ),
    );
    assert!(m.passed);
}

#[test]
fn criterion_04_stabilizing_iterates() {
    let instance = two_state_instance();
    let outcome = instance.run().expect("two-state run converges");
    let mut worst = 0.0f64;
    for diag in &outcome.trace {
        let closed = &instance.a + &instance.b * diag.policy_gains.transpose();
        worst = worst.max(spectral_radius(&closed));
    }
    let closed_final = &instance.a + &instance.b * outcome.policy.state_feedback();
    worst = worst.max(spectral_radius(&closed_final));
    let passed = worst < 1.0;
    report(
        4,
        "stabilizing iterates",
        passed,
        &format!(
            "max closed-loop spectral radius {worst:.6} over {} policies",
            outcome.trace.len() + 1
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_05_supplemental_invariance() {
    let instance = scalar_instance();
    let plain = instance.run().expect("plain scalar run converges");
    let supp = extract_supplemental(&plain.critic, 0.9).expect("supplemental extraction");

    let mut shaped = instance.clone();
    shaped.fpi.supplemental = true;
    shaped.fpi.i_max = 200;
    shaped.fpi.rng_seed = shaped.fpi.rng_seed.wrapping_add(1);
    let mut plant = shaped.plant();
    let outcome = run_fpi(&mut plant, &shaped.setup(Some(supp))).expect("shaped run converges");

    let gain = outcome.policy.state_feedback()[(0, 0)];
    let gain_err = (gain - scalar_golden_gain()).abs();
    let passed = gain_err < 1e-3;
    report(
        5,
        "supplemental-value invariance",
        passed,
        &format!(
            "shaped gain {gain:.6} vs -0.618034 (err {gain_err:.2e}) with alpha schedule 0.9^i"
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_06_iterative_error_bound() {
    let instance = scalar_instance();
    let outcome = instance.run().expect("scalar run converges");
    let (xi, eta, gamma, beta) = measure_error_bound_constants(&instance, &outcome);
    let condition = eta < (gamma + 1.0) / gamma;
    if !condition {
        report(
            6,
            "iterative error bound",
            false,
            &format!("measured eta {eta:.6} violates eta < (gamma+1)/gamma with gamma {gamma:.4}"),
        );
        panic!("error bound precondition failed");
    }
    let probe = ErrorBoundProbe::new(xi, eta, gamma, beta).expect("measured constants are valid");
    let q_star = instance.optimal_critic();
    let bound = check_error_bound(&outcome.trace, &outcome.probe_states, &probe, &q_star, 1e-7);
    report(
        6,
        "iterative error bound",
        bound.passed,
        &format!(
            "xi {xi:.4}, eta {eta:.4}, gamma {gamma:.4}, beta {beta:.4}; worst margins \
             lower {:.2e}, upper {:.2e}",
            bound.worst_lower_margin, bound.worst_upper_margin
        ),
    );
    assert!(bound.passed);
}

#[test]
fn criterion_07_rank_based_replay_weights() {
    let (_, weights) = rank_based_weights(&[3.0, 1.0, 2.0]);
    let expected = [6.0 / 11.0, 2.0 / 11.0, 3.0 / 11.0];
    let max_err = weights
        .iter()
        .zip(expected.iter())
        .map(|(w, e)| (w - e).abs())
        .fold(0.0f64, f64::max);

    use rand::{Rng, SeedableRng};
    let mut rng = rand::rngs::StdRng::seed_from_u64(7071);
    let mut worst_sum_err = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..80);
        let td: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 60.0 - 30.0).collect();
        let (_, w) = rank_based_weights(&td);
        worst_sum_err = worst_sum_err.max((w.iter().sum::<f64>() - 1.0).abs());
    }
    let passed = max_err < 1e-15 && worst_sum_err < 1e-12;
    report(
        7,
        "rank-based replay weights",
        passed,
        &format!(
            "delta [3,1,2] -> lambda [6/11, 2/11, 3/11] within {max_err:.1e}; \
             worst normalization error {worst_sum_err:.1e} over 1000 random TD vectors"
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_08_batch_size_trend() {
    let start = Instant::now();
    let loaded = load_default();
    let noise_free = ("noise_free", NoiseModel::None);
    let m20 = run_cell(shipped_cell(&loaded, "batch_nb20"), noise_free.clone(), 30);
    let m40 = run_cell(shipped_cell(&loaded, "batch_nb40"), noise_free.clone(), 30);
    let m100 = run_cell(shipped_cell(&loaded, "batch_nb100"), noise_free, 30);
    let elapsed = start.elapsed();

    let success_trend =
        m20.success_rate <= m40.success_rate && m40.success_rate <= m100.success_rate;
    let time_trend = m20.tuning_time_mean < m40.tuning_time_mean
        && m40.tuning_time_mean < m100.tuning_time_mean;
    let passed = success_trend && time_trend && elapsed < Duration::from_secs(120);
    report(
        8,
        "batch-size trend",
        passed,
        &format!(
            "success {:.0}%/{:.0}%/{:.0}%, tuning time {:.1}/{:.1}/{:.1} cycles for \
             N_b 20/40/100, {elapsed:.1?}",
            100.0 * m20.success_rate,
            100.0 * m40.success_rate,
            100.0 * m100.success_rate,
            m20.tuning_time_mean,
            m40.tuning_time_mean,
            m100.tuning_time_mean
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_09_replay_and_supplemental_trend() {
    let start = Instant::now();
    let loaded = load_default();
    // Mild sensor noise; both cells see identical seeds and initial
    // impedances.
    let scenario = ("sensor_05", NoiseModel::UniformSensor { fraction: 0.05 });
    let er = run_cell(shipped_cell(&loaded, "incr_er"), scenario.clone(), 30);
    let per_supp = run_cell(shipped_cell(&loaded, "incr_per_supp"), scenario, 30);
    let elapsed = start.elapsed();

    let passed = per_supp.success_rate >= er.success_rate
        && per_supp.tuning_time_mean <= er.tuning_time_mean
        && elapsed < Duration::from_secs(120);
    report(
        9,
        "prioritized replay + supplemental trend",
        passed,
        &format!(
            "success {:.0}% vs {:.0}% (plain replay), tuning time {:.1} vs {:.1} cycles, \
             {elapsed:.1?}",
            100.0 * per_supp.success_rate,
            100.0 * er.success_rate,
            per_supp.tuning_time_mean,
            er.tuning_time_mean
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_10_sensor_noise_robustness() {
    let loaded = load_default();
    let cell = shipped_cell(&loaded, "batch_nb100");
    let clean = run_cell(cell.clone(), ("noise_free", NoiseModel::None), 30);
    let noisy = run_cell(cell, ("sensor_10", NoiseModel::UniformSensor { fraction: 0.10 }), 30);

    let degradation = clean.success_rate - noisy.success_rate;
    let passed = degradation <= 0.25;
    report(
        10,
        "sensor-noise robustness",
        passed,
        &format!(
            "success {:.0}% noise-free vs {:.0}% under 10% sensor noise \
             (degradation {:.0} percentage points, allowed 25)",
            100.0 * clean.success_rate,
            100.0 * noisy.success_rate,
            100.0 * degradation
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_11_sweep_determinism() {
    let build = || {
        let mut loaded = load_default();
        loaded.config.trials = 3;
        loaded.config.cells = vec![
            shipped_cell(&loaded, "batch_nb20"),
            shipped_cell(&loaded, "incr_per_supp"),
        ];
        loaded
    };
    let first = run_sweep(&build()).expect("first sweep");
    let second = run_sweep(&build()).expect("second sweep");

    let dir_a = std::env::temp_dir().join("fpi-acceptance-sweep-a");
    let dir_b = std::env::temp_dir().join("fpi-acceptance-sweep-b");
    write_sweep_output(&first, &dir_a).expect("write first");
    write_sweep_output(&second, &dir_b).expect("write second");
    let bytes_equal = |name: &str| {
        std::fs::read(dir_a.join(name)).unwrap() == std::fs::read(dir_b.join(name)).unwrap()
    };

    let passed = first.trials_csv == second.trials_csv
        && first.aggregate_csv == second.aggregate_csv
        && bytes_equal("trials.csv")
        && bytes_equal("aggregate.csv");
    report(
        11,
        "sweep determinism",
        passed,
        &format!(
            "rerun with seed {} produced byte-identical trial and aggregate CSVs \
             ({} trial rows)",
            build().config.seed,
            first.records.len()
        ),
    );
    assert!(passed);
}
