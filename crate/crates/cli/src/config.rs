//! Experiment configuration: one TOML file plus command-line overrides.
//!
//! Every field has a desk-scale default, so an empty file is a valid
//! configuration. Unknown keys are rejected.
//!
//! ```toml
//! experiment = "exp1"
//! dataset = "data/synthetic.csv"   # omit to generate the synthetic set
//! simulator = "rf"                 # or "nn"
//! noise = "gaussian"               # "t3", "gamma"
//! n_sim = 20
//! alphas = [0.05, 0.2]
//! methods = ["bde", "de", "nb"]
//! seed = 1
//! out = "runs/exp1"
//!
//! [ensemble]
//! members = 5
//! retrain_fraction = 0.3
//!
//! [network]
//! hidden_sizes = [40, 30, 20]
//! epochs = 80
//! # l2_coefficient = 0.0          # omit for 1 / n_train
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use bde::ensemble::EnsembleConfig;
use bde::intervals::Method;
use bde::network::MlpConfig;
use bde::simulate::{synthetic_dataset, ForestConfig, SYNTHETIC_ROWS, SYNTHETIC_SEED};
use bde::{Dataset, NoiseModel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    #[default]
    Exp1,
    Exp2,
    Exp3,
    Exp4,
    NoiseVariant,
    NoReg,
    RSweep,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Exp1 => "exp1",
            Experiment::Exp2 => "exp2",
            Experiment::Exp3 => "exp3",
            Experiment::Exp4 => "exp4",
            Experiment::NoiseVariant => "noise_variant",
            Experiment::NoReg => "no_reg",
            Experiment::RSweep => "r_sweep",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SimulatorKind {
    #[default]
    Rf,
    Nn,
}

impl std::str::FromStr for SimulatorKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "rf" => Ok(SimulatorKind::Rf),
            "nn" => Ok(SimulatorKind::Nn),
            other => Err(format!("unknown simulator `{other}` (rf, nn)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub members: usize,
    pub retrain_fraction: f64,
    /// Replay the original batch order during the retrain.
    pub reuse_order: bool,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        EnsembleSection {
            members: 5,
            retrain_fraction: 0.3,
            reuse_order: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub hidden_sizes: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub variance_floor: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l2_coefficient: Option<f64>,
}

impl Default for NetworkSection {
    fn default() -> Self {
        let m = MlpConfig::new(1);
        NetworkSection {
            hidden_sizes: m.hidden_sizes,
            epochs: m.epochs,
            batch_size: m.batch_size,
            learning_rate: m.learning_rate,
            variance_floor: m.variance_floor,
            l2_coefficient: m.l2_coefficient,
        }
    }
}

impl NetworkSection {
    pub fn mlp(&self, input_dim: usize) -> MlpConfig {
        MlpConfig {
            hidden_sizes: self.hidden_sizes.clone(),
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            variance_floor: self.variance_floor,
            l2_coefficient: self.l2_coefficient,
            ..MlpConfig::new(input_dim)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestSection {
    pub n_trees: usize,
    pub min_leaf: usize,
    pub feature_frac: f64,
    pub bootstrap: bool,
}

impl Default for ForestSection {
    fn default() -> Self {
        let f = ForestConfig::default();
        ForestSection {
            n_trees: f.n_trees,
            min_leaf: f.min_leaf,
            feature_frac: f.feature_frac,
            bootstrap: f.bootstrap,
        }
    }
}

impl ForestSection {
    pub fn forest(&self) -> ForestConfig {
        ForestConfig {
            n_trees: self.n_trees,
            min_leaf: self.min_leaf,
            feature_frac: self.feature_frac,
            bootstrap: self.bootstrap,
        }
    }
}

/// Variance-versus-N sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Exp2Section {
    /// Training-set sizes; each is a random subsample of the training rows.
    pub n_grid: Vec<usize>,
    /// Networks per arm (fixed targets, random targets).
    pub k: usize,
}

impl Default for Exp2Section {
    fn default() -> Self {
        Exp2Section {
            n_grid: vec![50, 100, 200, 400],
            k: 20,
        }
    }
}

/// Variance decomposition on one simulated data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Exp3Section {
    /// Members of the BDE and size of the fresh-target oracle ensemble.
    pub members: usize,
}

impl Default for Exp3Section {
    fn default() -> Self {
        Exp3Section { members: 20 }
    }
}

/// Overfitting demonstration on a handful of pure-noise points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Exp4Section {
    pub n_points: usize,
    pub target_sd: f64,
    pub hidden_sizes: Vec<usize>,
    pub members: usize,
    pub alpha: f64,
    /// Training inputs are evenly spaced on `[-1, 1]`; the plot grid spans
    /// `[-grid_half_width, grid_half_width]`.
    pub grid_points: usize,
    pub grid_half_width: f64,
}

impl Default for Exp4Section {
    fn default() -> Self {
        Exp4Section {
            n_points: 7,
            target_sd: 0.2,
            hidden_sizes: vec![400, 200, 100],
            members: 5,
            alpha: 0.1,
            grid_points: 121,
            grid_half_width: 1.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// The unmodified coverage run, for comparison.
    Baseline,
    T3,
    Gamma,
    NoReg,
    NnSimulator,
    RSweep,
}

impl Variant {
    pub fn dir_name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::T3 => "noise-t3",
            Variant::Gamma => "noise-gamma",
            Variant::NoReg => "no-reg",
            Variant::NnSimulator => "nn-simulator",
            Variant::RSweep => "r-sweep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VariantsSection {
    pub which: Vec<Variant>,
    pub r_grid: Vec<f64>,
}

impl Default for VariantsSection {
    fn default() -> Self {
        VariantsSection {
            which: vec![
                Variant::Baseline,
                Variant::T3,
                Variant::Gamma,
                Variant::NoReg,
                Variant::NnSimulator,
                Variant::RSweep,
            ],
            r_grid: vec![0.0, 0.1, 0.2, 0.3, 0.4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    pub simulator: SimulatorKind,
    pub noise: NoiseModel,
    pub n_sim: usize,
    pub alphas: Vec<f64>,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub out: PathBuf,
    /// Monte Carlo draws per point for BDE prediction intervals.
    pub pi_draws: usize,
    pub ensemble: EnsembleSection,
    pub network: NetworkSection,
    pub forest: ForestSection,
    pub exp2: Exp2Section,
    pub exp3: Exp3Section,
    pub exp4: Exp4Section,
    pub variants: VariantsSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: Experiment::Exp1,
            dataset: None,
            simulator: SimulatorKind::Rf,
            noise: NoiseModel::Gaussian,
            n_sim: 20,
            alphas: vec![0.05, 0.2],
            methods: vec![Method::Bde, Method::De, Method::Nb],
            seed: 1,
            out: PathBuf::from("runs"),
            pi_draws: bde::intervals::DEFAULT_PI_DRAWS,
            ensemble: EnsembleSection::default(),
            network: NetworkSection::default(),
            forest: ForestSection::default(),
            exp2: Exp2Section::default(),
            exp3: Exp3Section::default(),
            exp4: Exp4Section::default(),
            variants: VariantsSection::default(),
        }
    }
}

/// Scalar fields that may be set on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub n_sim: Option<usize>,
    pub members: Option<usize>,
    pub retrain_fraction: Option<f64>,
    pub alphas: Vec<f64>,
    pub methods: Vec<Method>,
    pub noise: Option<NoiseModel>,
    pub simulator: Option<SimulatorKind>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
        if let Some(v) = &o.dataset {
            self.dataset = Some(v.clone());
        }
        if let Some(v) = o.n_sim {
            self.n_sim = v;
        }
        if let Some(v) = o.members {
            self.ensemble.members = v;
        }
        if let Some(v) = o.retrain_fraction {
            self.ensemble.retrain_fraction = v;
        }
        if !o.alphas.is_empty() {
            self.alphas = o.alphas.clone();
        }
        if !o.methods.is_empty() {
            self.methods = o.methods.clone();
        }
        if let Some(v) = o.noise {
            self.noise = v;
        }
        if let Some(v) = o.simulator {
            self.simulator = v;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::config(m));
        if self.n_sim == 0 {
            return bad("n_sim must be at least 1".into());
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return bad(format!("alphas must be a nonempty subset of (0, 1), got {:?}", self.alphas));
        }
        if self.methods.is_empty() {
            return bad("methods must not be empty".into());
        }
        if self.pi_draws < 2 {
            return bad("pi_draws must be at least 2".into());
        }
        let ens = self.ensemble_config(1, 0);
        ens.validate().map_err(|e| CliError::config(e.to_string()))?;
        self.forest.forest().validate().map_err(|e| CliError::config(e.to_string()))?;
        if self.exp2.k < 2 || self.exp2.n_grid.is_empty() || self.exp2.n_grid.contains(&0) {
            return bad("exp2 needs k >= 2 and a nonempty grid of positive sizes".into());
        }
        if self.exp3.members < 2 {
            return bad("exp3.members must be at least 2".into());
        }
        let e4 = &self.exp4;
        if e4.n_points < 2 || e4.members < 2 || !(e4.alpha > 0.0 && e4.alpha < 1.0) || e4.grid_points < 2 {
            return bad("exp4 needs n_points >= 2, members >= 2, alpha in (0, 1), grid_points >= 2".into());
        }
        if self.variants.r_grid.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return bad("variants.r_grid values must lie in [0, 1]".into());
        }
        Ok(())
    }

    pub fn ensemble_config(&self, input_dim: usize, base_seed: u64) -> EnsembleConfig {
        EnsembleConfig {
            members: self.ensemble.members,
            retrain_fraction: self.ensemble.retrain_fraction,
            net: self.network.mlp(input_dim),
            base_seed,
            reuse_order: self.ensemble.reuse_order,
        }
    }

    /// Hash of everything that affects results. The output directory is
    /// excluded so a run can be moved or repeated elsewhere.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }

    /// The configured CSV, or the generated synthetic set when none is given.
    pub fn load_dataset(&self) -> Result<LoadedData> {
        match &self.dataset {
            Some(path) => {
                let csv = bde::data::read_csv(path)?;
                Ok(LoadedData {
                    source: path.display().to_string(),
                    header: csv.header,
                    data: csv.data,
                })
            }
            None => Ok(LoadedData {
                source: format!("synthetic(n={SYNTHETIC_ROWS}, seed={SYNTHETIC_SEED})"),
                header: bde::simulate::synthetic_header(),
                data: synthetic_dataset(SYNTHETIC_ROWS, SYNTHETIC_SEED)?,
            }),
        }
    }
}

pub struct LoadedData {
    pub source: String,
    pub header: Vec<String>,
    pub data: Dataset,
}
