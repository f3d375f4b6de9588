//! Command-line experiment runner.
//!
//! Exit codes: 0 ok, 1 validation error, 2 property-suite failure,
//! 3 i/o error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fpi_core::{generate_variance_trace, run_fpi, trace_to_csv};
use fpi_bench::config::{load_config, BenchError, LoadedPlant};
use fpi_bench::riccati::riccati_oracle;
use fpi_bench::sweep::{run_sweep, write_sweep_output};
use fpi_bench::verify::run_suites;

#[derive(Parser)]
#[command(
    name = "fpi-bench",
    about = "Benchmark harness for flexible policy iteration: seeded gait-tuning sweeps, \
             Riccati oracle verification, and synthetic variance traces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single seeded trial (surrogate plant) or a single tuning run
    /// (linear-quadratic plant) from a config file.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Run the full (cells × noise scenarios × trials) sweep and write the
    /// per-trial and aggregate CSVs.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Run the empirical property suites on built-in linear-quadratic
    /// instances: all, riccati, monotonicity, stability, supplemental,
    /// error-bound.
    Verify {
        #[arg(default_value = "all")]
        suite: String,
    },
    /// Generate a synthetic gait-to-gait variance trace CSV.
    TraceGen {
        cycles: usize,
        out: PathBuf,
        #[arg(long, default_value_t = 0xC0FFEE)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            match err {
                BenchError::Validation(_) => ExitCode::from(1),
                BenchError::Suite(_) => ExitCode::from(2),
                BenchError::Io(_) => ExitCode::from(3),
            }
        }
    }
}

fn apply_overrides(
    loaded: &mut fpi_bench::LoadedExperiment,
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
    trials: Option<usize>,
) {
    if let Some(seed) = seed {
        loaded.config.seed = seed;
    }
    if let Some(out_dir) = out_dir {
        loaded.config.out_dir = out_dir;
    }
    if let Some(trials) = trials {
        loaded.config.trials = trials;
    }
}

fn dispatch() -> Result<(), BenchError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, seed, out_dir, trials } => {
            let mut loaded = load_config(&config)?;
            apply_overrides(&mut loaded, seed, out_dir, trials);
            match &loaded.plant {
                LoadedPlant::Surrogate { .. } => {
                    loaded.config.trials = 1;
                    let output = run_sweep(&loaded)?;
                    for record in &output.records {
                        println!(
                            "trial {} cell {}: success={} cycles={} rmse {:.3} -> {:.3}",
                            record.trial,
                            record.cell_id,
                            record.success,
                            record.cycles,
                            record.rmse_before,
                            record.rmse_after
                        );
                    }
                }
                LoadedPlant::LinearQuadratic { plant, initial_gains } => {
                    let mut plant = plant.clone();
                    let mut fpi = loaded.config.fpi.clone();
                    if let Some(seed) = seed {
                        fpi.rng_seed = seed;
                    }
                    let n = plant.a().nrows();
                    let setup = fpi_core::FpiSetup {
                        config: fpi,
                        cost: loaded.cost.clone(),
                        phi: fpi_core::BasisPhi::Quadratic {
                            state_dim: n,
                            action_dim: plant.b().ncols(),
                        },
                        initial_policy: fpi_core::PolicyApprox::new(
                            initial_gains.clone(),
                            fpi_core::BasisSigma::identity(n),
                        )?,
                        supplemental: None,
                        exploration_base: nalgebra::DVector::from_element(
                            plant.b().ncols(),
                            1.0,
                        ),
                    };
                    let a = plant.a().clone();
                    let b = plant.b().clone();
                    let outcome = run_fpi(&mut plant, &setup)
                        .map_err(|e| BenchError::Suite(format!("tuning run failed: {e}")))?;
                    println!(
                        "converged={} iterations={} cycles={}",
                        outcome.converged,
                        outcome.trace.len(),
                        outcome.cycles
                    );
                    println!("state feedback (u = K x):\n{}", outcome.policy.state_feedback());
                    if let Ok(oracle) = riccati_oracle(
                        &a,
                        &b,
                        loaded.cost.state_weight(),
                        loaded.cost.action_weight(),
                        1e-12,
                        100_000,
                    ) {
                        let gap = (outcome.policy.state_feedback() + oracle.gain).amax();
                        println!("max gain error vs Riccati oracle: {gap:.3e}");
                    }
                }
            }
            Ok(())
        }
        Command::Sweep { config, seed, out_dir, trials } => {
            let mut loaded = load_config(&config)?;
            apply_overrides(&mut loaded, seed, out_dir, trials);
            let output = run_sweep(&loaded)?;
            write_sweep_output(&output, &loaded.config.out_dir)?;
            println!(
                "{} trials across {} cells -> {}",
                output.records.len(),
                output.aggregates.len(),
                loaded.config.out_dir.display()
            );
            for (cell_id, m) in &output.aggregates {
                println!(
                    "{cell_id}: success {}/{} ({:.0}%), tuning time {:.1} ± {:.1} cycles",
                    m.successes,
                    m.trials,
                    100.0 * m.success_rate,
                    m.tuning_time_mean,
                    m.tuning_time_std
                );
            }
            Ok(())
        }
        Command::Verify { suite } => {
            let results = run_suites(&suite)?;
            let mut failed = false;
            for check in &results {
                println!("{}", check.render());
                if !check.passed && !check.diagnostic_only {
                    failed = true;
                }
            }
            if failed {
                Err(BenchError::Suite("one or more property checks failed".into()))
            } else {
                println!("{} checks passed", results.len());
                Ok(())
            }
        }
        Command::TraceGen { cycles, out, seed } => {
            if cycles == 0 {
                return Err(BenchError::Validation("cycles must be positive".into()));
            }
            let trace = generate_variance_trace(cycles, 0.25, 0.004, seed);
            std::fs::write(&out, trace_to_csv(&trace))
                .map_err(|e| BenchError::Io(format!("cannot write {}: {e}", out.display())))?;
            println!("wrote {} cycles to {}", cycles, out.display());
            Ok(())
        }
    }
}
