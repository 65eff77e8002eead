//! TOML experiment configuration.
//!
//! Every section rejects unknown keys. Sections other than `[data]` may be
//! omitted and take the defaults below (the hyperparameters the method was
//! reported with, plus conventional training settings).
//!
//! ```toml
//! [data]                 # exactly one of `csv` or `[data.synthetic]`
//! csv = "loans.csv"      # relative to the config file
//!
//! [split]                # orig_period cut points
//! val_cut = 4            # train: t < 4, validation: 4 <= t < 7, oot: t >= 7
//! oot_cut = 7
//!
//! [smote]                # k_neighbors = 5, target_ratio = 1.0, standardize = true, seed = 0
//! [model]                # hidden_dims = [128, 64], dropout_rate = 0.2, activation leaky_relu(0.01)
//! [loss]                 # lambda = 0.01, exclude_biases = false
//! [optimizer]            # kind = "symplectic", eta = 0.01, beta = 0.9, epsilon = 1e-8
//! [training]             # max_epochs = 100, batch_size = 256, patience = 10, seed = 0, threshold = 0.5
//! [cv]                   # k = 5
//! [grid]                 # optional lists: eta, beta, lambda, hidden_dims
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{DriftGenConfig, SmoteConfig};
use crate::error::{Error, Result};
use crate::loss::LossConfig;
use crate::mlp::{Activation, LayerSpec};
use crate::optim::{EnergyScope, OptimConfig, OptimizerKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub smote: SmoteConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub cv: CvConfig,
    #[serde(default)]
    pub grid: GridAxes,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<DriftGenConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub val_cut: i64,
    pub oot_cut: i64,
}

impl Default for SplitConfig {
    /// Suits the default ten-period synthetic data: 4 train, 3 validation, 3 OOT periods.
    fn default() -> Self {
        Self { val_cut: 4, oot_cut: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "ModelConfig::default_hidden")]
    pub hidden_dims: Vec<usize>,
    #[serde(default = "ModelConfig::default_dropout")]
    pub dropout_rate: f64,
    #[serde(default)]
    pub activation: Activation,
}

impl ModelConfig {
    fn default_hidden() -> Vec<usize> {
        vec![128, 64]
    }
    fn default_dropout() -> f64 {
        0.2
    }

    pub fn layer_spec(&self, input_dim: usize) -> LayerSpec {
        LayerSpec {
            input_dim,
            hidden_dims: self.hidden_dims.clone(),
            dropout_rate: self.dropout_rate,
            activation: self.activation,
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dims: Self::default_hidden(),
            dropout_rate: Self::default_dropout(),
            activation: Activation::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    #[serde(default)]
    pub kind: OptimizerKind,
    #[serde(default = "OptimizerConfig::default_eta")]
    pub eta: f64,
    #[serde(default = "OptimizerConfig::default_beta")]
    pub beta: f64,
    #[serde(default = "OptimizerConfig::default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub energy_scope: EnergyScope,
}

impl OptimizerConfig {
    fn default_eta() -> f64 {
        0.01
    }
    fn default_beta() -> f64 {
        0.9
    }
    fn default_epsilon() -> f64 {
        1e-8
    }

    pub fn optim(&self) -> OptimConfig {
        OptimConfig {
            eta: self.eta,
            beta: self.beta,
            epsilon: self.epsilon,
            energy_scope: self.energy_scope,
        }
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Symplectic,
            eta: Self::default_eta(),
            beta: Self::default_beta(),
            epsilon: Self::default_epsilon(),
            energy_scope: EnergyScope::PerTensor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    #[serde(default = "TrainingConfig::default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "TrainingConfig::default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "TrainingConfig::default_patience")]
    pub patience: usize,
    #[serde(default)]
    pub seed: u64,
    /// Scores at or above this are classified as default.
    #[serde(default = "TrainingConfig::default_threshold")]
    pub threshold: f64,
    /// Z-score features with training-portion statistics before fitting.
    #[serde(default = "TrainingConfig::default_standardize")]
    pub standardize: bool,
}

impl TrainingConfig {
    fn default_max_epochs() -> usize {
        100
    }
    fn default_batch_size() -> usize {
        256
    }
    fn default_patience() -> usize {
        10
    }
    fn default_threshold() -> f64 {
        0.5
    }
    fn default_standardize() -> bool {
        true
    }
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            max_epochs: Self::default_max_epochs(),
            batch_size: Self::default_batch_size(),
            patience: Self::default_patience(),
            seed: 0,
            threshold: Self::default_threshold(),
            standardize: Self::default_standardize(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvConfig {
    pub k: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { k: 5 }
    }
}

/// Grid axes; an empty axis means "use the base config's value".
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxes {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub beta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lambda: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hidden_dims: Vec<Vec<usize>>,
}

impl GridAxes {
    pub fn is_empty(&self) -> bool {
        self.eta.is_empty() && self.beta.is_empty() && self.lambda.is_empty() && self.hidden_dims.is_empty()
    }
}

impl ExperimentConfig {
    /// A config with defaults everywhere and the given data source.
    pub fn with_data(data: DataConfig) -> Self {
        Self {
            data,
            split: SplitConfig::default(),
            smote: SmoteConfig::default(),
            model: ModelConfig::default(),
            loss: LossConfig::default(),
            optimizer: OptimizerConfig::default(),
            training: TrainingConfig::default(),
            cv: CvConfig::default(),
            grid: GridAxes::default(),
        }
    }

    /// Every violated constraint, in section order.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        match (&self.data.csv, &self.data.synthetic) {
            (Some(_), Some(_)) => v.push("data: set either `csv` or `[data.synthetic]`, not both".into()),
            (None, None) => v.push("data: one of `csv` or `[data.synthetic]` is required".into()),
            (None, Some(gen)) => v.extend(gen.violations()),
            (Some(_), None) => {}
        }
        if self.split.val_cut >= self.split.oot_cut {
            v.push(format!(
                "split.val_cut ({}) must be less than split.oot_cut ({})",
                self.split.val_cut, self.split.oot_cut
            ));
        }
        v.extend(self.smote.violations());
        v.extend(self.model.layer_spec(1).violations());
        v.extend(self.loss.violations());
        v.extend(self.optimizer.optim().violations());
        let t = &self.training;
        if t.max_epochs == 0 {
            v.push("training.max_epochs must be at least 1".into());
        }
        if t.batch_size == 0 {
            v.push("training.batch_size must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&t.threshold) {
            v.push(format!("training.threshold must be in [0, 1], got {}", t.threshold));
        }
        if self.cv.k < 2 {
            v.push(format!("cv.k must be at least 2, got {}", self.cv.k));
        }
        for (i, &eta) in self.grid.eta.iter().enumerate() {
            if !(eta > 0.0 && eta.is_finite()) {
                v.push(format!("grid.eta[{i}] must be > 0, got {eta}"));
            }
        }
        for (i, &beta) in self.grid.beta.iter().enumerate() {
            if !(0.0..1.0).contains(&beta) {
                v.push(format!("grid.beta[{i}] must be in [0, 1), got {beta}"));
            }
        }
        for (i, &lambda) in self.grid.lambda.iter().enumerate() {
            if !(lambda >= 0.0 && lambda.is_finite()) {
                v.push(format!("grid.lambda[{i}] must be >= 0, got {lambda}"));
            }
        }
        for (i, dims) in self.grid.hidden_dims.iter().enumerate() {
            if dims.iter().any(|&d| d == 0) {
                v.push(format!("grid.hidden_dims[{i}] has a zero width: {dims:?}"));
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    /// Applies a master seed to training, SMOTE and (if present) the generator.
    pub fn set_seed(&mut self, seed: u64) {
        self.training.seed = seed;
        self.smote.seed = seed;
        if let Some(gen) = &mut self.data.synthetic {
            gen.seed = seed;
        }
    }
}

/// Parses and validates TOML text. `base_dir` anchors a relative `data.csv`.
pub fn parse_config_str(text: &str, base_dir: Option<&Path>) -> Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
    if let (Some(dir), Some(csv)) = (base_dir, cfg.data.csv.as_mut()) {
        if csv.is_relative() {
            *csv = dir.join(&*csv);
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Data {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_config_str(&text, path.parent()).map_err(|e| match e {
        Error::ConfigParse(msg) => Error::ConfigParse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn to_toml(cfg: &ExperimentConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::ConfigParse(e.to_string()))
}
