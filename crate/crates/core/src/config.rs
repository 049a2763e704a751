//! Experiment configuration in TOML.
//!
//! ```toml
//! [train]
//! epochs = 100
//! seed = 7
//! mode = "without-graph"
//!
//! [model]
//! k_max = 4
//!
//! [data]
//! path = "data/texas"
//!
//! [run]
//! out_dir = "runs/texas"
//! export_every = 25
//! ```
//!
//! Every section and field is optional. Relative paths resolve against the
//! directory holding the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::ModelConfig;
use crate::training::TrainConfig;

/// Environment variable that overrides `train.seed`.
pub const SEED_ENV: &str = "CELLTOP_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Directory holding `dataset.json`.
    pub path: PathBuf,
    /// Use the dataset's own splits when it has them.
    pub use_dataset_splits: bool,
    /// Fractions for generated stratified splits; the rest is test.
    pub train_frac: f64,
    pub val_frac: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: PathBuf::from("data"),
            use_dataset_splits: true,
            train_frac: 0.6,
            val_frac: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    /// Epochs between complex exports and parameter snapshots.
    pub export_every: usize,
    /// Parallel split workers.
    pub workers: usize,
    /// Write parameter snapshots at the export cadence, not only the best model.
    pub snapshot_params: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("runs/latest"),
            export_every: 50,
            workers: 1,
            snapshot_params: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub data: DataConfig,
    pub run: RunConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.data.path, &mut cfg.run.out_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies [`SEED_ENV`] when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.train.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.model.validate()?;
        let d = &self.data;
        if !(d.train_frac > 0.0 && d.val_frac >= 0.0 && d.train_frac + d.val_frac <= 1.0) {
            return Err(Error::Config(
                "split fractions must satisfy 0 < train, 0 ≤ val, train + val ≤ 1".into(),
            ));
        }
        if self.run.export_every == 0 {
            return Err(Error::Config("export_every must be at least 1".into()));
        }
        if self.run.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }
}
