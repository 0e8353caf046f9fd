use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierConfig;
use crate::dataset::{EmbeddingDataset, SplitConfig};
use crate::hdbscan::{default_grid, TuneGrid};
use crate::kpca::KernelConfig;
use crate::vae::VaeConfig;
use crate::{Error, Result};

/// Held-out intents: either listed explicitly or drawn at random.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub ood_intents: Vec<String>,
    /// Used only when `ood_intents` is empty.
    pub ood_count: Option<usize>,
    pub seed: u64,
}

impl SplitSpec {
    pub fn resolve(&self, ds: &EmbeddingDataset) -> Result<SplitConfig> {
        if !self.ood_intents.is_empty() {
            return Ok(SplitConfig {
                ood_intents: self.ood_intents.clone(),
                seed: self.seed,
            });
        }
        match self.ood_count {
            Some(count) => SplitConfig::random(&ds.vocab(), count, self.seed),
            None => Err(Error::InvalidConfig(
                "split needs ood_intents or ood_count".into(),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub dataset: PathBuf,
    pub split: SplitSpec,
    pub vae: VaeConfig,
    pub classifier: ClassifierConfig,
    pub kernel: KernelConfig,
    pub hdbscan_grid: TuneGrid,
    pub threshold_quantile: f64,
    /// Cap on in-domain training rows used to tune clustering; larger sets
    /// are subsampled deterministically.
    pub tune_max_rows: usize,
    pub out: PathBuf,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::from("data"),
            split: SplitSpec::default(),
            vae: VaeConfig::default(),
            classifier: ClassifierConfig::default(),
            kernel: KernelConfig::default(),
            hdbscan_grid: default_grid(),
            threshold_quantile: 0.95,
            tune_max_rows: 1500,
            out: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Sets the master seed and every nested seed to `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.split.seed = seed;
        self.vae.seed = seed;
        self.classifier.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.vae.validate()?;
        self.kernel.validate()?;
        if self.classifier.batch_size == 0 || !(self.classifier.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(
                "classifier needs batch_size ≥ 1 and a positive learning rate".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.threshold_quantile) {
            return Err(Error::InvalidConfig(format!(
                "threshold_quantile {} outside [0, 1]",
                self.threshold_quantile
            )));
        }
        if self.hdbscan_grid.configs().is_empty() {
            return Err(Error::EmptyGrid);
        }
        if self.tune_max_rows < 2 {
            return Err(Error::InvalidConfig(
                "tune_max_rows must be at least 2".into(),
            ));
        }
        Ok(())
    }
}
