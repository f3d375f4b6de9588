//! Experiment configuration: TOML loading, validation with field paths,
//! and construction of the plant, cost and controller pieces.

use std::fmt;
use std::path::{Path, PathBuf};

use fpi_core::{
    trace_from_csv, BatchSizeMode, CostMatrices, DataMode, FpiConfig, ImpedanceSetting,
    LinearQuadraticPlant, NoiseModel, PhaseModel, SamplingMode, SurrogateGaitPlant,
    TrialProtocol, NUM_PHASES,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Harness-level errors, mapped onto the CLI exit codes.
#[derive(Debug)]
pub enum BenchError {
    /// Exit code 1.
    Validation(String),
    /// Exit code 2.
    Suite(String),
    /// Exit code 3.
    Io(String),
}

impl fmt::Display for BenchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BenchError::Validation(msg) => write!(f, "validation error: {msg}"),
            BenchError::Suite(msg) => write!(f, "property suite failure: {msg}"),
            BenchError::Io(msg) => write!(f, "i/o error: {msg}"),
        }
    }
}

impl std::error::Error for BenchError {}

impl From<fpi_core::FpiError> for BenchError {
    fn from(err: fpi_core::FpiError) -> Self {
        BenchError::Validation(err.to_string())
    }
}

/// One phase of the surrogate plant as configured.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub target_peak: f64,
    pub target_duration: f64,
    /// `[stiffness, damping, equilibrium_angle]` reproducing the target.
    pub optimal_impedance: [f64; 3],
    /// 2×3 sensitivity of (peak error, duration error) to impedance offsets.
    pub sensitivity: [[f64; 3]; 2],
    /// 2×3 initial actor gains over the scaled state basis; must be
    /// admissible.
    pub initial_gains: [[f64; 3]; 2],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlantConfig {
    Surrogate {
        curvature_coeff: f64,
        cross_phase_coupling: f64,
        /// Per-component `[low, high]` device limits on the impedance.
        impedance_box: [[f64; 2]; 3],
        /// Per-component amplitude of the random initial impedance offset
        /// drawn around the optimum at the start of each trial.
        init_offset: [f64; 3],
        /// Per-component impedance magnitude scale for exploration noise.
        exploration_base: [f64; 3],
        phases: Vec<PhaseConfig>,
    },
    LinearQuadratic {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        state_box: Vec<[f64; 2]>,
        #[serde(default)]
        draw_box: Option<Vec<[f64; 2]>>,
        init_state: Vec<f64>,
        /// state dim × input dim initial gains, stabilizing.
        initial_gains: Vec<Vec<f64>>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKindConfig {
    None,
    UniformActuator { fraction: f64 },
    UniformSensor { fraction: f64 },
    RecordedTrace { path: PathBuf },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NoiseScenarioConfig {
    pub name: String,
    #[serde(flatten)]
    pub noise: NoiseKindConfig,
}

/// Per-cell overrides of the base controller settings.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct CellConfig {
    pub name: String,
    #[serde(default)]
    pub batch_size_mode: Option<BatchSizeMode>,
    #[serde(default)]
    pub data_mode: Option<DataMode>,
    #[serde(default)]
    pub prioritization: Option<bool>,
    #[serde(default)]
    pub supplemental: Option<bool>,
    #[serde(default)]
    pub n_b_initial: Option<usize>,
    #[serde(default)]
    pub n_b_increment: Option<usize>,
    #[serde(default)]
    pub buffer_max: Option<usize>,
    #[serde(default)]
    pub learning_rate: Option<f64>,
    #[serde(default)]
    pub actor_inner_iters: Option<usize>,
}

impl CellConfig {
    pub fn apply(&self, base: &FpiConfig) -> FpiConfig {
        let mut fpi = base.clone();
        if let Some(v) = self.batch_size_mode {
            fpi.batch_size_mode = v;
        }
        if let Some(v) = self.data_mode {
            fpi.data_mode = v;
        }
        if let Some(v) = self.prioritization {
            fpi.prioritization = v;
        }
        if let Some(v) = self.supplemental {
            fpi.supplemental = v;
        }
        if let Some(v) = self.n_b_initial {
            fpi.n_b_initial = v;
        }
        if let Some(v) = self.n_b_increment {
            fpi.n_b_increment = v;
        }
        if let Some(v) = self.buffer_max {
            fpi.buffer_max = v;
        }
        if let Some(v) = self.learning_rate {
            fpi.learning_rate = v;
        }
        if let Some(v) = self.actor_inner_iters {
            fpi.actor_inner_iters = v;
        }
        fpi
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CostConfig {
    pub r_x: Vec<Vec<f64>>,
    pub r_u: Vec<Vec<f64>>,
}

/// The full experiment file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: usize,
    pub out_dir: PathBuf,
    pub cost: CostConfig,
    pub protocol: TrialProtocol,
    pub fpi: FpiConfig,
    pub plant: PlantConfig,
    pub noise_scenarios: Vec<NoiseScenarioConfig>,
    #[serde(default)]
    pub cells: Vec<CellConfig>,
}

/// A validated experiment with every referenced file loaded and every
/// matrix constructed.
pub struct LoadedExperiment {
    pub config: ExperimentConfig,
    pub cost: CostMatrices,
    pub plant: LoadedPlant,
    /// `(scenario name, noise model)` in file order.
    pub noise_scenarios: Vec<(String, NoiseModel)>,
}

pub enum LoadedPlant {
    Surrogate {
        /// Noise-free template; sweeps clone it and set the scenario noise.
        template: SurrogateGaitPlant,
        init_offset: [f64; 3],
        exploration_base: [f64; 3],
        optimal_impedance: [ImpedanceSetting; NUM_PHASES],
        initial_gains: [DMatrix<f64>; NUM_PHASES],
    },
    LinearQuadratic {
        plant: LinearQuadraticPlant,
        initial_gains: DMatrix<f64>,
    },
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, BenchError> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(BenchError::Validation(format!("{what} must be a non-empty matrix")));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(BenchError::Validation(format!("{what} rows have inconsistent lengths")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

fn box_from_pairs(pairs: &[[f64; 2]], what: &str) -> Result<Vec<(f64, f64)>, BenchError> {
    pairs
        .iter()
        .enumerate()
        .map(|(i, [lo, hi])| {
            if lo >= hi {
                Err(BenchError::Validation(format!("{what}[{i}] bounds must satisfy low < high")))
            } else {
                Ok((*lo, *hi))
            }
        })
        .collect()
}

/// Parse and validate an experiment file. Referenced trace files are
/// resolved relative to the configuration file and must exist.
pub fn load_config(path: &Path) -> Result<LoadedExperiment, BenchError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| BenchError::Io(format!("cannot read {}: {e}", path.display())))?;
    let config: ExperimentConfig =
        toml::from_str(&text).map_err(|e| BenchError::Validation(format!("{e}")))?;
    let base_dir = path.parent().unwrap_or_else(|| Path::new("."));
    validate_and_build(config, base_dir)
}

pub fn validate_and_build(
    config: ExperimentConfig,
    base_dir: &Path,
) -> Result<LoadedExperiment, BenchError> {
    if config.trials == 0 {
        return Err(BenchError::Validation("trials must be at least 1".into()));
    }
    config.protocol.validate()?;

    let r_x = matrix_from_rows(&config.cost.r_x, "cost.r_x")?;
    let r_u = matrix_from_rows(&config.cost.r_u, "cost.r_u")?;
    let cost = CostMatrices::new(r_x, r_u)
        .map_err(|e| BenchError::Validation(format!("cost: {e}")))?;

    let plant = match &config.plant {
        PlantConfig::Surrogate {
            curvature_coeff,
            cross_phase_coupling,
            impedance_box,
            init_offset,
            exploration_base,
            phases,
        } => {
            if cost.state_dim() != 2 || cost.action_dim() != 3 {
                return Err(BenchError::Validation(
                    "cost matrices must be 2×2 and 3×3 for the surrogate plant".into(),
                ));
            }
            if phases.len() != NUM_PHASES {
                return Err(BenchError::Validation(format!(
                    "plant.phases must list exactly {NUM_PHASES} phases, got {}",
                    phases.len()
                )));
            }
            let imp_box: [(f64, f64); 3] = {
                let b = box_from_pairs(impedance_box, "plant.impedance_box")?;
                [b[0], b[1], b[2]]
            };
            let mut models = Vec::with_capacity(NUM_PHASES);
            let mut optimal = Vec::with_capacity(NUM_PHASES);
            let mut gains = Vec::with_capacity(NUM_PHASES);
            for (m, phase) in phases.iter().enumerate() {
                let [k, b, theta] = phase.optimal_impedance;
                let imp = ImpedanceSetting::new(k, b, theta).map_err(|e| {
                    BenchError::Validation(format!("plant.phases[{m}].optimal_impedance: {e}"))
                })?;
                for (c, (lo, hi)) in imp_box.iter().enumerate() {
                    let v = [k, b, theta][c];
                    let margin = init_offset[c];
                    if v - margin < *lo || v + margin > *hi {
                        return Err(BenchError::Validation(format!(
                            "plant.phases[{m}]: optimal impedance ± init_offset leaves the \
                             impedance box in component {c}"
                        )));
                    }
                }
                let sens = DMatrix::from_row_slice(
                    2,
                    3,
                    &[
                        phase.sensitivity[0][0],
                        phase.sensitivity[0][1],
                        phase.sensitivity[0][2],
                        phase.sensitivity[1][0],
                        phase.sensitivity[1][1],
                        phase.sensitivity[1][2],
                    ],
                );
                let model = PhaseModel {
                    target_peak: phase.target_peak,
                    target_duration: phase.target_duration,
                    optimal_impedance: imp,
                    sensitivity: sens,
                };
                model.validate(1e-10).map_err(|e| {
                    BenchError::Validation(format!("plant.phases[{m}].sensitivity: {e}"))
                })?;
                models.push(model);
                optimal.push(imp);
                gains.push(DMatrix::from_row_slice(
                    2,
                    3,
                    &[
                        phase.initial_gains[0][0],
                        phase.initial_gains[0][1],
                        phase.initial_gains[0][2],
                        phase.initial_gains[1][0],
                        phase.initial_gains[1][1],
                        phase.initial_gains[1][2],
                    ],
                ));
            }
            let template = SurrogateGaitPlant::new(
                models.try_into().expect("exactly four phases"),
                *curvature_coeff,
                *cross_phase_coupling,
                NoiseModel::None,
                imp_box,
            )
            .map_err(|e| BenchError::Validation(format!("plant: {e}")))?;
            if exploration_base.iter().any(|b| !(*b > 0.0)) {
                return Err(BenchError::Validation(
                    "plant.exploration_base components must be positive".into(),
                ));
            }
            LoadedPlant::Surrogate {
                template,
                init_offset: *init_offset,
                exploration_base: *exploration_base,
                optimal_impedance: optimal.try_into().expect("exactly four phases"),
                initial_gains: gains.try_into().expect("exactly four phases"),
            }
        }
        PlantConfig::LinearQuadratic { a, b, state_box, draw_box, init_state, initial_gains } => {
            let a = matrix_from_rows(a, "plant.a")?;
            let b = matrix_from_rows(b, "plant.b")?;
            let n = a.nrows();
            let m = b.ncols();
            if cost.state_dim() != n || cost.action_dim() != m {
                return Err(BenchError::Validation(
                    "cost matrix dimensions must match plant.a and plant.b".into(),
                ));
            }
            let state_box = box_from_pairs(state_box, "plant.state_box")?;
            let sampling = match draw_box {
                Some(pairs) => SamplingMode::RandomRestart {
                    draw_box: box_from_pairs(pairs, "plant.draw_box")?,
                },
                None => SamplingMode::Rollout,
            };
            let gains = matrix_from_rows(initial_gains, "plant.initial_gains")?;
            if gains.nrows() != n || gains.ncols() != m {
                return Err(BenchError::Validation(format!(
                    "plant.initial_gains must be {n}×{m}"
                )));
            }
            let plant = LinearQuadraticPlant::new(
                a,
                b,
                state_box,
                DVector::from_vec(init_state.clone()),
                sampling,
            )
            .map_err(|e| BenchError::Validation(format!("plant: {e}")))?;
            LoadedPlant::LinearQuadratic { plant, initial_gains: gains }
        }
    };

    if config.noise_scenarios.is_empty() {
        return Err(BenchError::Validation("at least one noise scenario is required".into()));
    }
    let mut noise_scenarios = Vec::with_capacity(config.noise_scenarios.len());
    for scenario in &config.noise_scenarios {
        let model = match &scenario.noise {
            NoiseKindConfig::None => NoiseModel::None,
            NoiseKindConfig::UniformActuator { fraction } => {
                check_fraction(*fraction, &scenario.name)?;
                NoiseModel::UniformActuator { fraction: *fraction }
            }
            NoiseKindConfig::UniformSensor { fraction } => {
                check_fraction(*fraction, &scenario.name)?;
                NoiseModel::UniformSensor { fraction: *fraction }
            }
            NoiseKindConfig::RecordedTrace { path } => {
                let resolved =
                    if path.is_absolute() { path.clone() } else { base_dir.join(path) };
                let text = std::fs::read_to_string(&resolved).map_err(|e| {
                    BenchError::Validation(format!(
                        "noise_scenarios.{}: cannot read trace {}: {e}",
                        scenario.name,
                        resolved.display()
                    ))
                })?;
                let offsets = trace_from_csv(&text).map_err(|e| {
                    BenchError::Validation(format!("noise_scenarios.{}: {e}", scenario.name))
                })?;
                NoiseModel::RecordedTrace { offsets }
            }
        };
        noise_scenarios.push((scenario.name.clone(), model));
    }

    // Every cell must produce a legal settings combination; incremental
    // mode with an adaptive batch size is rejected here by validate().
    let basis_len = match &plant {
        LoadedPlant::Surrogate { .. } => 15,
        LoadedPlant::LinearQuadratic { plant, .. } => {
            let d = plant.a().nrows() + plant.b().ncols();
            d * (d + 1) / 2
        }
    };
    config
        .fpi
        .validate(basis_len)
        .map_err(|e| BenchError::Validation(format!("fpi: {e}")))?;
    for cell in &config.cells {
        cell.apply(&config.fpi)
            .validate(basis_len)
            .map_err(|e| BenchError::Validation(format!("cells.{}: {e}", cell.name)))?;
    }

    Ok(LoadedExperiment { config, cost, plant, noise_scenarios })
}

fn check_fraction(fraction: f64, scenario: &str) -> Result<(), BenchError> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(BenchError::Validation(format!(
            "noise_scenarios.{scenario}: fraction must lie in [0, 1)"
        )));
    }
    Ok(())
}

/// Path of the annotated default configuration shipped with the
/// repository.
pub fn default_config_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml")
}
