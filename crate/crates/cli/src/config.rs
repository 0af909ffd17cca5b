use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use veil_core::dataset::{AugmentConfig, SyntheticConfig};
use veil_core::model::ModelConfig;
use veil_core::trainer::TrainConfig;

use crate::error::{CliError, Result};

/// Overrides the seed list with a single seed.
pub const SEED_ENV: &str = "VEIL_SEED";
/// Name of the resolved config echoed into every output directory.
pub const ECHO_FILE: &str = "config.json";

/// Where the images come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// A dataset directory (manifest plus PGM files).
    Path(PathBuf),
    Synthetic(SyntheticConfig),
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SyntheticConfig::default())
    }
}

fn default_augment() -> Option<AugmentConfig> {
    Some(AugmentConfig::default())
}

fn default_folds() -> usize {
    10
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// One experiment: data, architecture, training schedule, folds and seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub data: DataSource,
    /// Corpus expansion before folding; `null` uses the images as they are.
    #[serde(default = "default_augment")]
    pub augment: Option<AugmentConfig>,
    #[serde(default)]
    pub augment_seed: u64,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_folds")]
    pub folds: usize,
    /// Relative paths are taken from the config file's directory.
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// One full protocol run per seed; empty means `[train.seed]`.
    #[serde(default)]
    pub seeds: Vec<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("every field has a default")
    }
}

impl RunConfig {
    /// Reads a config file and resolves it: paths become absolute (relative
    /// to the file), `VEIL_SEED` replaces the seed list, and an empty seed
    /// list becomes the training seed.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut config: RunConfig = serde_json::from_str(&raw).map_err(|e| CliError::config(path, e))?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let absolute = |p: &Path| std::path::absolute(base.join(p)).map_err(|e| CliError::io(p, e));
        if let DataSource::Path(p) = &config.data {
            config.data = DataSource::Path(absolute(p)?);
        }
        config.output_dir = absolute(&config.output_dir)?;
        if let Ok(seed) = std::env::var(SEED_ENV) {
            let seed = seed.trim().parse().map_err(|_| CliError::config(path, format!("{SEED_ENV}={seed:?} is not a u64")))?;
            config.seeds = vec![seed];
        }
        if config.seeds.is_empty() {
            config.seeds.push(config.train.seed);
        }
        config.validate().map_err(|e| CliError::config(path, e))?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.model.validate().map_err(|e| e.to_string())?;
        self.train.validate().map_err(|e| e.to_string())?;
        if let Some(a) = &self.augment {
            a.validate().map_err(|e| e.to_string())?;
        }
        if let DataSource::Synthetic(s) = &self.data {
            s.validate().map_err(|e| e.to_string())?;
            if s.image_size != self.model.input_size {
                return Err(format!("image_size {} differs from model input_size {}", s.image_size, self.model.input_size));
            }
        }
        if self.folds < 2 {
            return Err(format!("need at least 2 folds, got {}", self.folds));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err("seeds must be distinct".into());
        }
        Ok(())
    }

    /// The resolved config as written beside the outputs. The output
    /// directory is recorded as `.` so the echo reruns in place, or anywhere
    /// it is copied to.
    pub fn echo(&self) -> serde_json::Value {
        let mut echo = self.clone();
        echo.output_dir = PathBuf::from(".");
        serde_json::to_value(&echo).expect("config is plain data")
    }

    /// Training settings for one seed of the run.
    pub fn train_for(&self, seed: u64) -> TrainConfig {
        TrainConfig { seed, ..self.train.clone() }
    }
}
