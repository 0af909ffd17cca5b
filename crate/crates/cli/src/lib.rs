//! Orchestration behind the `veil` binary: config resolution, the staged
//! per-fold pipeline with on-disk handoff, and report assembly.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;

use std::path::{Path, PathBuf};

use veil_core::dataset::{generate_synthetic, save_dataset, SyntheticConfig};

pub use config::RunConfig;
pub use error::{CliError, Result};
pub use pipeline::Stage;

/// Writes the synthetic dataset a config file describes. Without `out` the
/// dataset lands in `dataset/` next to the config file.
pub fn generate(config_path: &Path, out: Option<PathBuf>) -> Result<(PathBuf, SyntheticConfig, usize)> {
    let config: SyntheticConfig = pipeline::read_json(config_path)?;
    let out = out.unwrap_or_else(|| config_path.parent().unwrap_or(Path::new(".")).join("dataset"));
    let images = generate_synthetic(&config)?;
    save_dataset(&images, &out)?;
    Ok((out, config, images.len()))
}
