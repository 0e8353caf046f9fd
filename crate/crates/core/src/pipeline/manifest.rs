use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineConfig;
use crate::dataset::{EMBEDDINGS_FILE, LABELS_FILE, META_FILE, SPLITS_FILE};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Seeds, input hashes and output hashes of one pipeline stage.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: Option<PipelineConfig>,
    pub stages: BTreeMap<String, StageRecord>,
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl StageRecord {
    pub fn new(cfg: &PipelineConfig) -> Result<Self> {
        let mut rec = Self::default();
        for (k, v) in [
            ("seed", cfg.seed),
            ("split", cfg.split.seed),
            ("vae", cfg.vae.seed),
            ("classifier", cfg.classifier.seed),
        ] {
            rec.seeds.insert(k.to_string(), v);
        }
        let cfg_json = serde_json::to_vec(cfg).expect("config serializes");
        rec.inputs
            .insert("config".into(), hex::encode(Sha256::digest(&cfg_json)));
        for name in [META_FILE, EMBEDDINGS_FILE, LABELS_FILE, SPLITS_FILE] {
            let path = cfg.dataset.join(name);
            if path.exists() {
                rec.inputs.insert(name.to_string(), file_sha256(&path)?);
            }
        }
        Ok(rec)
    }

    pub fn add_outputs(&mut self, dir: &Path, names: &[&str]) -> Result<()> {
        for name in names {
            self.outputs
                .insert(name.to_string(), file_sha256(&dir.join(name))?);
        }
        Ok(())
    }
}

impl Manifest {
    pub fn load_or_default(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(&path, e))
    }

    /// Replaces the record of `stage` and rewrites the manifest in `dir`.
    pub fn record(dir: &Path, cfg: &PipelineConfig, stage: &str, rec: StageRecord) -> Result<()> {
        let mut m = Self::load_or_default(dir)?;
        m.config = Some(cfg.clone());
        m.stages.insert(stage.to_string(), rec);
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_known_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x");
        std::fs::write(&p, b"abc").unwrap();
        assert_eq!(
            file_sha256(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn stages_merge() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig::default();
        Manifest::record(dir.path(), &cfg, "train", StageRecord::default()).unwrap();
        Manifest::record(dir.path(), &cfg, "eval", StageRecord::default()).unwrap();
        let m = Manifest::load_or_default(dir.path()).unwrap();
        assert_eq!(m.stages.keys().collect::<Vec<_>>(), ["eval", "train"]);
    }
}
