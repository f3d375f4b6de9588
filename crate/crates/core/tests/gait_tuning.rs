//! End-to-end gait tuning through the public API: four phase controllers
//! in the loop with the surrogate plant, from a detuned start to success.

use fpi_core::{
    run_trial, BatchSizeMode, CostMatrices, DataMode, FpiConfig, ImpedanceSetting, NoiseModel,
    PhaseModel, SurrogateGaitPlant, TrialProtocol, TrialSetup, NUM_PHASES,
};
use nalgebra::{DMatrix, DVector};

fn phases() -> [PhaseModel; NUM_PHASES] {
    let rows: [[f64; 6]; NUM_PHASES] = [
        [1.6, 0.10, 0.08, 0.015, 0.175, -0.012],
        [-1.3, -0.08, 0.07, 0.018, 0.160, 0.011],
        [1.1, 0.12, -0.09, -0.014, 0.190, 0.013],
        [0.9, 0.09, 0.06, 0.020, 0.145, -0.010],
    ];
    let optima = [(3.0, 1.2, 1.5), (2.5, 0.9, -1.0), (1.8, 1.0, 2.0), (2.2, 1.4, -0.5)];
    std::array::from_fn(|m| PhaseModel {
        target_peak: 20.0,
        target_duration: 0.3,
        optimal_impedance: ImpedanceSetting::new(optima[m].0, optima[m].1, optima[m].2).unwrap(),
        sensitivity: DMatrix::from_row_slice(2, 3, &rows[m]),
    })
}

fn protocol() -> TrialProtocol {
    TrialProtocol {
        peak_upper: 8.0,
        peak_lower: 1.0,
        duration_upper: 0.25,
        duration_lower: 0.03,
        success_streak: 10,
        max_cycles: 500,
    }
}

fn setup() -> TrialSetup {
    let proto = protocol();
    // Weak admissible start: a small multiple of the sensitivity
    // pseudoinverse in scaled coordinates.
    let initial_gains = std::array::from_fn(|m| {
        let c = phases()[m].sensitivity.clone();
        let pinv = c.svd(true, true).pseudo_inverse(1e-12).unwrap();
        let scales = DMatrix::from_diagonal(&DVector::from_vec(vec![
            proto.peak_upper,
            proto.duration_upper,
        ]));
        scales * (-0.05 * pinv).transpose()
    });
    TrialSetup {
        fpi: FpiConfig {
            batch_size_mode: BatchSizeMode::Fixed,
            data_mode: DataMode::Batch,
            prioritization: false,
            supplemental: false,
            n_b_initial: 20,
            n_b_increment: 5,
            buffer_max: 100,
            alpha_base: 0.9,
            exploration_noise_fraction: 0.03,
            learning_rate: 0.002,
            actor_inner_iters: 20,
            convergence_tol: 1e-6,
            i_max: 600,
            rng_seed: 0,
            rank_tol: 1e-10,
            solver_truncation: Some(3e-2),
            bellman_residual_abort: None,
        },
        cost: CostMatrices::knee_default(),
        protocol: proto,
        initial_gains,
        supplemental: None,
        exploration_base: DVector::from_vec(vec![3.0, 1.0, 1.5]),
    }
}

#[test]
fn detuned_trial_tunes_to_success() {
    let mut plant = SurrogateGaitPlant::new(
        phases(),
        0.05,
        0.1,
        NoiseModel::None,
        [(0.0, 6.0), (0.0, 3.0), (-6.0, 6.0)],
    )
    .unwrap();
    let mut imps: [ImpedanceSetting; NUM_PHASES] =
        std::array::from_fn(|m| phases()[m].optimal_impedance);
    imps[0].stiffness += 1.2;
    imps[1].equilibrium_angle -= 0.9;
    imps[2].stiffness -= 0.9;
    imps[3].damping += 0.4;

    let result = run_trial(&mut plant, &setup(), &imps, 424242).unwrap();
    assert!(result.success, "trial failed: {:?}", result.failure);
    assert!(result.cycles_used <= 200, "took {} cycles", result.cycles_used);
    assert!(result.rmse_after < result.rmse_before);
    assert!(result.iterations_per_phase.iter().all(|&i| i >= 1));
    // The final impedances moved toward the optima relative to the
    // detuned start in the strongly observable stiffness components.
    let optimum = phases()[0].optimal_impedance.stiffness;
    let before = (imps[0].stiffness - optimum).abs();
    let after = (result.final_impedance[0].stiffness - optimum).abs();
    assert!(after < before, "stiffness error grew: {after} vs {before}");
}

#[test]
fn recorded_trace_noise_drives_reproducible_trials() {
    let trace = fpi_core::generate_variance_trace(120, 0.15, 0.003, 9);
    let run = || {
        let mut plant = SurrogateGaitPlant::new(
            phases(),
            0.05,
            0.1,
            NoiseModel::RecordedTrace { offsets: trace.clone() },
            [(0.0, 6.0), (0.0, 3.0), (-6.0, 6.0)],
        )
        .unwrap();
        let imps: [ImpedanceSetting; NUM_PHASES] =
            std::array::from_fn(|m| phases()[m].optimal_impedance);
        run_trial(&mut plant, &setup(), &imps, 7).unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a.success, b.success);
    assert_eq!(a.cycles_used, b.cycles_used);
    assert_eq!(a.rmse_after.to_bits(), b.rmse_after.to_bits());
}
