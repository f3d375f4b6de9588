//! Seeded trial sweeps over the setting-combination cells and noise
//! scenarios, with per-trial and aggregate CSV output.

use fpi_core::{
    derive_seed, run_trial, BatchSizeMode, DataMode, FpiConfig, ImpedanceSetting, NoiseModel,
    SupplementalValue, SurrogateGaitPlant, TrialSetup, NUM_PHASES,
};
use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::config::{BenchError, LoadedExperiment, LoadedPlant};

pub const TRIALS_CSV_HEADER: &str = "cell_id,trial,seed,success,cycles,rmse_before,rmse_after,\
final_K1,final_K2,final_K3,final_K4,final_B1,final_B2,final_B3,final_B4,\
final_theta1,final_theta2,final_theta3,final_theta4";

pub const AGGREGATE_CSV_HEADER: &str = "cell_id,trials,successes,success_rate,\
tuning_time_mean,tuning_time_std,rmse_before_mean,rmse_after_mean";

/// Decimal formatting used in every CSV cell: nine significant digits,
/// reproducible byte for byte.
pub fn fmt_sig9(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.8e}")
    }
}

/// Success and timing statistics of one sweep cell. Tuning statistics are
/// over successful trials only.
#[derive(Clone, Debug)]
pub struct AggregateMetrics {
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub tuning_time_mean: f64,
    pub tuning_time_std: f64,
    pub rmse_before_mean: f64,
    pub rmse_after_mean: f64,
}

/// One parsed per-trial record, as written to the CSV.
#[derive(Clone, Debug)]
pub struct TrialRecord {
    pub cell_id: String,
    pub trial: usize,
    pub seed: u64,
    pub success: bool,
    pub cycles: usize,
    pub rmse_before: f64,
    pub rmse_after: f64,
    pub final_impedance: [ImpedanceSetting; NUM_PHASES],
}

pub struct SweepOutput {
    pub records: Vec<TrialRecord>,
    pub aggregates: Vec<(String, AggregateMetrics)>,
    pub trials_csv: String,
    pub aggregate_csv: String,
}

impl SweepOutput {
    pub fn aggregate_for(&self, cell_id: &str) -> Option<&AggregateMetrics> {
        self.aggregates.iter().find(|(id, _)| id == cell_id).map(|(_, m)| m)
    }
}

/// Aggregate a cell's records. Values are the reparsed CSV-formatted
/// numbers, so recomputing from the emitted per-trial file reproduces the
/// emitted aggregates exactly.
pub fn aggregate_records(records: &[&TrialRecord]) -> AggregateMetrics {
    let trials = records.len();
    let successes = records.iter().filter(|r| r.success).count();
    let tuning: Vec<f64> = records
        .iter()
        .filter(|r| r.success)
        .map(|r| r.cycles as f64)
        .collect();
    let mean = |xs: &[f64]| {
        if xs.is_empty() {
            f64::NAN
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    };
    let tuning_time_mean = mean(&tuning);
    let tuning_time_std = if tuning.len() > 1 {
        let mu = tuning_time_mean;
        (tuning.iter().map(|t| (t - mu) * (t - mu)).sum::<f64>() / (tuning.len() - 1) as f64)
            .sqrt()
    } else if tuning.len() == 1 {
        0.0
    } else {
        f64::NAN
    };
    let before: Vec<f64> = records.iter().map(|r| r.rmse_before).collect();
    let after: Vec<f64> = records.iter().map(|r| r.rmse_after).collect();
    AggregateMetrics {
        trials,
        successes,
        success_rate: successes as f64 / trials as f64,
        tuning_time_mean,
        tuning_time_std,
        rmse_before_mean: mean(&before),
        rmse_after_mean: mean(&after),
    }
}

fn reparse(v: f64) -> f64 {
    fmt_sig9(v).parse().expect("sig9 output parses back")
}

/// Draw the per-trial initial impedance: the optimum plus a uniform offset
/// inside the configured amplitudes.
pub fn draw_initial_impedance(
    optimal: &[ImpedanceSetting; NUM_PHASES],
    init_offset: &[f64; 3],
    seed: u64,
) -> [ImpedanceSetting; NUM_PHASES] {
    let mut rng = StdRng::seed_from_u64(derive_seed(seed, &[3]));
    std::array::from_fn(|m| {
        let base = optimal[m].to_vector();
        let mut draw = [0.0; 3];
        for (c, d) in draw.iter_mut().enumerate() {
            *d = base[c] + init_offset[c] * (rng.random::<f64>() * 2.0 - 1.0);
        }
        ImpedanceSetting::new(draw[0].max(0.0), draw[1].max(0.0), draw[2])
            .expect("offsets validated against the impedance box")
    })
}

/// Train a supplemental value source: one noise-free batch-mode trial with
/// prioritization and shaping off, then extract each phase's converged
/// critic.
pub fn bootstrap_supplemental(
    template: &SurrogateGaitPlant,
    base_fpi: &FpiConfig,
    cost: &fpi_core::CostMatrices,
    protocol: &fpi_core::TrialProtocol,
    optimal: &[ImpedanceSetting; NUM_PHASES],
    init_offset: &[f64; 3],
    exploration_base: &[f64; 3],
    initial_gains: &[DMatrix<f64>; NUM_PHASES],
    seed: u64,
) -> Result<[SupplementalValue; NUM_PHASES], BenchError> {
    // The source run uses the most reliable data setting available: full
    // noise-free batches at the buffer capacity. Seeds advance until a
    // trial actually succeeds, deterministically.
    let mut fpi = base_fpi.clone();
    fpi.data_mode = DataMode::Batch;
    fpi.batch_size_mode = BatchSizeMode::Fixed;
    fpi.prioritization = false;
    fpi.supplemental = false;
    fpi.n_b_initial = fpi.buffer_max;
    let setup = TrialSetup {
        fpi,
        cost: cost.clone(),
        protocol: *protocol,
        initial_gains: initial_gains.clone(),
        supplemental: None,
        exploration_base: DVector::from_row_slice(exploration_base),
    };
    let alpha = base_fpi.alpha_base;
    let mut last_critics = None;
    for attempt in 1..=8u64 {
        let boot_seed = derive_seed(seed, &[99, attempt]);
        let imps = draw_initial_impedance(optimal, init_offset, boot_seed);
        let mut plant = template.clone();
        plant.set_noise(NoiseModel::None);
        let result = run_trial(&mut plant, &setup, &imps, boot_seed)?;
        let succeeded = result.success;
        last_critics = Some(result.final_critics);
        if succeeded {
            break;
        }
    }
    let critics = last_critics.expect("at least one bootstrap attempt ran");
    let supp: Result<Vec<SupplementalValue>, _> =
        critics.iter().map(|critic| fpi_core::extract_supplemental(critic, alpha)).collect();
    let supp = supp.map_err(|e| BenchError::Validation(format!("supplemental bootstrap: {e}")))?;
    Ok(supp.try_into().map_err(|_| unreachable!("four phases")).unwrap())
}

/// Run every (cell × noise scenario) with `trials` seeded trials each.
/// Deterministic for a fixed seed: trial seeds derive from (seed, cell
/// index, trial index) and output rows are ordered by (cell, trial).
pub fn run_sweep(experiment: &LoadedExperiment) -> Result<SweepOutput, BenchError> {
    let LoadedPlant::Surrogate {
        template,
        init_offset,
        exploration_base,
        optimal_impedance,
        initial_gains,
    } = &experiment.plant
    else {
        return Err(BenchError::Validation(
            "sweep requires a surrogate plant; use `run` for linear-quadratic configs".into(),
        ));
    };
    let config = &experiment.config;
    let cells: Vec<crate::config::CellConfig> = if config.cells.is_empty() {
        vec![crate::config::CellConfig { name: "base".into(), ..Default::default() }]
    } else {
        config.cells.clone()
    };

    let needs_supplemental = cells.iter().any(|c| c.apply(&config.fpi).supplemental);
    let supplemental = if needs_supplemental {
        Some(bootstrap_supplemental(
            template,
            &config.fpi,
            &experiment.cost,
            &config.protocol,
            optimal_impedance,
            init_offset,
            exploration_base,
            initial_gains,
            config.seed,
        )?)
    } else {
        None
    };

    let mut records = Vec::new();
    let mut cell_index = 0u64;
    for cell in &cells {
        let fpi = cell.apply(&config.fpi);
        for (noise_name, noise) in &experiment.noise_scenarios {
            let cell_id = format!("{}/{}", cell.name, noise_name);
            for trial in 0..config.trials {
                let trial_seed = derive_seed(config.seed, &[cell_index, trial as u64]);
                let imps = draw_initial_impedance(optimal_impedance, init_offset, trial_seed);
                let mut plant = template.clone();
                plant.set_noise(noise.clone());
                let setup = TrialSetup {
                    fpi: fpi.clone(),
                    cost: experiment.cost.clone(),
                    protocol: config.protocol,
                    initial_gains: initial_gains.clone(),
                    supplemental: if fpi.supplemental { supplemental.clone() } else { None },
                    exploration_base: DVector::from_row_slice(exploration_base),
                };
                let result = run_trial(&mut plant, &setup, &imps, trial_seed)?;
                records.push(TrialRecord {
                    cell_id: cell_id.clone(),
                    trial,
                    seed: trial_seed,
                    success: result.success,
                    cycles: result.cycles_used,
                    rmse_before: reparse(result.rmse_before),
                    rmse_after: reparse(result.rmse_after),
                    final_impedance: result.final_impedance,
                });
            }
            cell_index += 1;
        }
    }

    let mut trials_csv = String::from(TRIALS_CSV_HEADER);
    trials_csv.push('\n');
    for r in &records {
        let imp = &r.final_impedance;
        let fields: Vec<String> = vec![
            r.cell_id.clone(),
            r.trial.to_string(),
            r.seed.to_string(),
            if r.success { "1".into() } else { "0".into() },
            r.cycles.to_string(),
            fmt_sig9(r.rmse_before),
            fmt_sig9(r.rmse_after),
            fmt_sig9(imp[0].stiffness),
            fmt_sig9(imp[1].stiffness),
            fmt_sig9(imp[2].stiffness),
            fmt_sig9(imp[3].stiffness),
            fmt_sig9(imp[0].damping),
            fmt_sig9(imp[1].damping),
            fmt_sig9(imp[2].damping),
            fmt_sig9(imp[3].damping),
            fmt_sig9(imp[0].equilibrium_angle),
            fmt_sig9(imp[1].equilibrium_angle),
            fmt_sig9(imp[2].equilibrium_angle),
            fmt_sig9(imp[3].equilibrium_angle),
        ];
        trials_csv.push_str(&fields.join(","));
        trials_csv.push('\n');
    }

    let mut aggregates = Vec::new();
    let mut aggregate_csv = String::from(AGGREGATE_CSV_HEADER);
    aggregate_csv.push('\n');
    let mut seen: Vec<String> = Vec::new();
    for r in &records {
        if !seen.contains(&r.cell_id) {
            seen.push(r.cell_id.clone());
        }
    }
    for cell_id in seen {
        let cell_records: Vec<&TrialRecord> =
            records.iter().filter(|r| r.cell_id == cell_id).collect();
        let metrics = aggregate_records(&cell_records);
        let fields: Vec<String> = vec![
            cell_id.clone(),
            metrics.trials.to_string(),
            metrics.successes.to_string(),
            fmt_sig9(metrics.success_rate),
            fmt_sig9(metrics.tuning_time_mean),
            fmt_sig9(metrics.tuning_time_std),
            fmt_sig9(metrics.rmse_before_mean),
            fmt_sig9(metrics.rmse_after_mean),
        ];
        aggregate_csv.push_str(&fields.join(","));
        aggregate_csv.push('\n');
        aggregates.push((cell_id, metrics));
    }

    Ok(SweepOutput { records, aggregates, trials_csv, aggregate_csv })
}

/// Write the sweep CSVs under the output directory.
pub fn write_sweep_output(output: &SweepOutput, out_dir: &std::path::Path) -> Result<(), BenchError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| BenchError::Io(format!("cannot create {}: {e}", out_dir.display())))?;
    let trials_path = out_dir.join("trials.csv");
    std::fs::write(&trials_path, &output.trials_csv)
        .map_err(|e| BenchError::Io(format!("cannot write {}: {e}", trials_path.display())))?;
    let aggregate_path = out_dir.join("aggregate.csv");
    std::fs::write(&aggregate_path, &output.aggregate_csv)
        .map_err(|e| BenchError::Io(format!("cannot write {}: {e}", aggregate_path.display())))?;
    Ok(())
}

/// Parse a per-trial CSV back into records; used to check that aggregates
/// recompute exactly from the emitted file.
pub fn parse_trials_csv(text: &str) -> Result<Vec<TrialRecord>, BenchError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| BenchError::Validation("empty CSV".into()))?;
    if header != TRIALS_CSV_HEADER {
        return Err(BenchError::Validation("unexpected per-trial CSV header".into()));
    }
    let mut records = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 19 {
            return Err(BenchError::Validation("per-trial CSV row must have 19 fields".into()));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| BenchError::Validation(e.to_string()));
        let imp = |k: f64, b: f64, t: f64| ImpedanceSetting { stiffness: k, damping: b, equilibrium_angle: t };
        records.push(TrialRecord {
            cell_id: f[0].to_string(),
            trial: f[1].parse().map_err(|_| BenchError::Validation("bad trial index".into()))?,
            seed: f[2].parse().map_err(|_| BenchError::Validation("bad seed".into()))?,
            success: f[3] == "1",
            cycles: f[4].parse().map_err(|_| BenchError::Validation("bad cycle count".into()))?,
            rmse_before: num(f[5])?,
            rmse_after: num(f[6])?,
            final_impedance: [
                imp(num(f[7])?, num(f[11])?, num(f[15])?),
                imp(num(f[8])?, num(f[12])?, num(f[16])?),
                imp(num(f[9])?, num(f[13])?, num(f[17])?),
                imp(num(f[10])?, num(f[14])?, num(f[18])?),
            ],
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{default_config_path, load_config};

    #[test]
    fn sig9_formatting_is_parseable_and_stable() {
        assert_eq!(fmt_sig9(1.0), "1.00000000e0");
        assert_eq!(fmt_sig9(-0.125), "-1.25000000e-1");
        assert_eq!(fmt_sig9(f64::NAN), "nan");
        let v = 93.4567890123;
        assert_eq!(fmt_sig9(v), fmt_sig9(fmt_sig9(v).parse::<f64>().unwrap()));
    }

    #[test]
    fn aggregate_counts_successes_only_for_tuning_time() {
        let mk = |success: bool, cycles: usize| TrialRecord {
            cell_id: "c".into(),
            trial: 0,
            seed: 0,
            success,
            cycles,
            rmse_before: 1.0,
            rmse_after: 0.1,
            final_impedance: std::array::from_fn(|_| ImpedanceSetting {
                stiffness: 1.0,
                damping: 0.1,
                equilibrium_angle: 0.0,
            }),
        };
        let rows = [mk(true, 100), mk(false, 500), mk(true, 200)];
        let refs: Vec<&TrialRecord> = rows.iter().collect();
        let m = aggregate_records(&refs);
        assert_eq!(m.successes, 2);
        assert!((m.success_rate - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.tuning_time_mean - 150.0).abs() < 1e-12);
        assert!((m.tuning_time_std - (50.0f64 * 50.0 * 2.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn single_trial_from_optimum_succeeds_in_streak_cycles() {
        let mut loaded = load_config(&default_config_path()).unwrap();
        loaded.config.trials = 1;
        loaded.config.cells.truncate(1);
        loaded.noise_scenarios.truncate(1);
        // Start exactly at the optimum.
        if let LoadedPlant::Surrogate { init_offset, .. } = &mut loaded.plant {
            *init_offset = [0.0, 0.0, 0.0];
        }
        loaded.config.fpi.exploration_noise_fraction = 0.0;
        let out = run_sweep(&loaded).unwrap();
        assert_eq!(out.records.len(), 1);
        assert!(out.records[0].success);
        assert_eq!(out.records[0].cycles, loaded.config.protocol.success_streak);
        let metrics = &out.aggregates[0].1;
        assert!((metrics.success_rate - 1.0).abs() < 1e-15);
        assert_eq!(metrics.tuning_time_mean, loaded.config.protocol.success_streak as f64);
    }

    #[test]
    fn sweep_is_deterministic_for_a_fixed_seed() {
        let mut loaded = load_config(&default_config_path()).unwrap();
        loaded.config.trials = 2;
        loaded.config.cells.truncate(1);
        loaded.noise_scenarios.truncate(2);
        let a = run_sweep(&loaded).unwrap();
        let b = run_sweep(&loaded).unwrap();
        assert_eq!(a.trials_csv, b.trials_csv);
        assert_eq!(a.aggregate_csv, b.aggregate_csv);
    }

    #[test]
    fn aggregates_recompute_exactly_from_the_emitted_csv() {
        let mut loaded = load_config(&default_config_path()).unwrap();
        loaded.config.trials = 3;
        loaded.config.cells.truncate(2);
        loaded.noise_scenarios.truncate(1);
        let out = run_sweep(&loaded).unwrap();
        let parsed = parse_trials_csv(&out.trials_csv).unwrap();
        for (cell_id, emitted) in &out.aggregates {
            let cell_records: Vec<&TrialRecord> =
                parsed.iter().filter(|r| &r.cell_id == cell_id).collect();
            let recomputed = aggregate_records(&cell_records);
            assert_eq!(fmt_sig9(recomputed.success_rate), fmt_sig9(emitted.success_rate));
            assert_eq!(fmt_sig9(recomputed.tuning_time_mean), fmt_sig9(emitted.tuning_time_mean));
            assert_eq!(fmt_sig9(recomputed.tuning_time_std), fmt_sig9(emitted.tuning_time_std));
            assert_eq!(fmt_sig9(recomputed.rmse_before_mean), fmt_sig9(emitted.rmse_before_mean));
            assert_eq!(fmt_sig9(recomputed.rmse_after_mean), fmt_sig9(emitted.rmse_after_mean));
        }
    }
}
