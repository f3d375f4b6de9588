//! Benchmark harness for the flexible policy iteration library: experiment
//! configuration, seeded trial sweeps with CSV reporting, an independent
//! Riccati oracle, and empirical property suites.

pub mod config;
pub mod lq;
pub mod riccati;
pub mod sweep;
pub mod verify;

pub use config::{load_config, BenchError, ExperimentConfig, LoadedExperiment, LoadedPlant};
pub use lq::{critic_from_quadratic_form, scalar_instance, two_state_instance, LqInstance};
pub use riccati::{dlyap, q_factor, riccati_oracle, spectral_radius, RiccatiSolution};
pub use sweep::{fmt_sig9, run_sweep, write_sweep_output, AggregateMetrics, SweepOutput};
pub use verify::{run_suites, CheckResult};
