//! JSON run configuration: plant description plus defaults for every
//! pipeline stage.

use serde::{Deserialize, Serialize};

use dcbc_core::error::{Error, Result};
use dcbc_core::expr::Dictionary;
use dcbc_core::model::{augment, AugmentedModel, BoxRegion, InputConstraints, PlantModel, RegionSpec};
use dcbc_core::scenario::GridSpec;
use dcbc_core::synth::{LevelMode, SynthOptions};
use nalgebra::DMatrix;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxConfig {
    pub fn to_region(&self) -> Result<BoxRegion> {
        BoxRegion::new(self.lower.clone(), self.upper.clone())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantConfig {
    pub n: usize,
    pub m: usize,
    /// Term source strings; the first n must be `x1..xn`, the next m
    /// `u1..um`.
    pub dictionary: Vec<String>,
    /// Simulation oracle, row-major n x N. Never read by synthesis.
    pub a_matrix: Vec<Vec<f64>>,
    pub state_box: BoxConfig,
    pub initial_boxes: Vec<BoxConfig>,
    pub unsafe_boxes: Vec<BoxConfig>,
    /// Symmetric per-input bounds: `|u_i| <= input_bounds[i]`.
    pub input_bounds: Vec<f64>,
}

fn default_eps1() -> f64 {
    1.0 / 1500.0
}

fn default_eps2() -> f64 {
    1499.0 / 1500.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentationConfig {
    #[serde(default = "default_eps1")]
    pub eps1: f64,
    #[serde(default = "default_eps2")]
    pub eps2: f64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            eps1: default_eps1(),
            eps2: default_eps2(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Trajectory length; defaults to N + 1 for the configured dictionary.
    #[serde(default)]
    pub samples: Option<usize>,
    /// Excitation box for the virtual input; defaults to the augmented
    /// input-slice box.
    #[serde(default)]
    pub excitation_box: Option<BoxConfig>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            samples: None,
            excitation_box: None,
            seed: 0,
        }
    }
}

fn default_varpi() -> f64 {
    0.01
}

fn default_grid_res() -> usize {
    51
}

fn default_level_mode() -> LevelMode {
    LevelMode::Optimized
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisConfig {
    #[serde(default = "default_varpi")]
    pub varpi: f64,
    #[serde(default = "default_grid_res")]
    pub grid_res: usize,
    #[serde(default)]
    pub sound: bool,
    #[serde(default = "default_level_mode")]
    pub level_mode: LevelMode,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            varpi: default_varpi(),
            grid_res: default_grid_res(),
            sound: false,
            level_mode: default_level_mode(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioPath {
    None,
    Deterministic,
    Probabilistic,
}

fn default_epsilon() -> f64 {
    0.01
}

fn default_beta() -> f64 {
    1e-10
}

fn default_scenario_seed() -> u64 {
    1
}

fn default_kappa_floor_frac() -> f64 {
    0.8
}

fn default_rho_ladder() -> Vec<f64> {
    vec![4.0, 2.0, 1.3, 1.05]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default = "ScenarioConfig::default_path")]
    pub path: ScenarioPath,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Per-axis grid counts for the deterministic route; defaults to 21
    /// points per axis.
    #[serde(default)]
    pub grid_counts: Option<Vec<usize>>,
    #[serde(default = "default_scenario_seed")]
    pub seed: u64,
    #[serde(default = "default_kappa_floor_frac")]
    pub kappa_floor_frac: f64,
    #[serde(default = "default_rho_ladder")]
    pub rho_ladder: Vec<f64>,
}

impl ScenarioConfig {
    fn default_path() -> ScenarioPath {
        ScenarioPath::None
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            path: ScenarioPath::None,
            epsilon: default_epsilon(),
            beta: default_beta(),
            grid_counts: None,
            seed: default_scenario_seed(),
            kappa_floor_frac: default_kappa_floor_frac(),
            rho_ladder: default_rho_ladder(),
        }
    }
}

fn default_verify_samples() -> u64 {
    10_000
}

fn default_verify_runs() -> u64 {
    1000
}

fn default_verify_seed() -> u64 {
    2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationConfig {
    #[serde(default = "default_grid_res")]
    pub grid_res: usize,
    #[serde(default = "default_verify_samples")]
    pub n_samples: u64,
    #[serde(default = "default_verify_runs")]
    pub n_runs: u64,
    #[serde(default = "default_verify_seed")]
    pub seed: u64,
}

impl Default for VerificationConfig {
    fn default() -> Self {
        VerificationConfig {
            grid_res: default_grid_res(),
            n_samples: default_verify_samples(),
            n_runs: default_verify_runs(),
            seed: default_verify_seed(),
        }
    }
}

fn default_format_version() -> u32 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_format_version")]
    pub format_version: u32,
    pub plant: PlantConfig,
    #[serde(default)]
    pub augmentation: AugmentationConfig,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub synthesis: SynthesisConfig,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub verification: VerificationConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if config.format_version != 1 {
            return Err(Error::Config(format!(
                "unsupported config format_version {}",
                config.format_version
            )));
        }
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn build_plant(&self) -> Result<PlantModel> {
        let p = &self.plant;
        let dictionary = Dictionary::parse(p.n, p.m, &p.dictionary)?;
        let n_terms = dictionary.len();
        if p.a_matrix.len() != p.n || p.a_matrix.iter().any(|row| row.len() != n_terms) {
            return Err(Error::Config(format!(
                "a_matrix must be {} x {} to match the dictionary",
                p.n, n_terms
            )));
        }
        let flat: Vec<f64> = p.a_matrix.iter().flatten().copied().collect();
        let a = DMatrix::from_row_slice(p.n, n_terms, &flat);
        let regions = RegionSpec::new(
            p.state_box.to_region()?,
            p.initial_boxes
                .iter()
                .map(BoxConfig::to_region)
                .collect::<Result<Vec<_>>>()?,
            p.unsafe_boxes
                .iter()
                .map(BoxConfig::to_region)
                .collect::<Result<Vec<_>>>()?,
        )?;
        let inputs = InputConstraints::from_box_bounds(&p.input_bounds)?;
        PlantModel::new(dictionary, a, regions, inputs)
    }

    pub fn build_augmented(&self) -> Result<AugmentedModel> {
        let plant = self.build_plant()?;
        augment(&plant, self.augmentation.eps1, self.augmentation.eps2)
    }

    pub fn synth_options(&self) -> SynthOptions {
        SynthOptions {
            varpi: self.synthesis.varpi,
            grid_res: self.synthesis.grid_res,
            sound: self.synthesis.sound,
            level_mode: self.synthesis.level_mode,
        }
    }

    /// Experiment length: configured, or N + 1.
    pub fn experiment_samples(&self, n_terms: usize) -> usize {
        self.experiment.samples.unwrap_or(n_terms + 1)
    }

    pub fn scenario_grid(&self, dim: usize) -> GridSpec {
        match &self.scenario.grid_counts {
            Some(counts) => GridSpec {
                counts: counts.clone(),
            },
            None => GridSpec::uniform(dim, 21),
        }
    }

    /// Applies the command-line seed override: stage seeds become
    /// `seed`, `seed + 1`, `seed + 2`.
    pub fn override_seed(&mut self, seed: u64) {
        self.experiment.seed = seed;
        self.scenario.seed = seed + 1;
        self.verification.seed = seed + 2;
    }
}
