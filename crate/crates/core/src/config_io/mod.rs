//! Configuration files, checkpoints, CSV output and the shared generator.

pub mod checkpoint;
pub mod config;
pub mod prng;

use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::harness::LearningCurve;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{parse_config, ExperimentConfig, Overrides};
pub use prng::{prng_uniform, Prng};

/// Writes `curve` as `epoch,mse` CSV, creating parent directories.
pub fn write_curve_csv(curve: &LearningCurve, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, curve.to_csv())?;
    Ok(())
}
