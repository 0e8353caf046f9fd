use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{layer_shapes, LayerShape, VaeConfig, VaeModel};
use crate::dataset::ScalerStats;
use crate::{Error, Result, Scalar};

pub const MODEL_FILE: &str = "model.json";
pub const WEIGHTS_FILE: &str = "weights.f32";

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    config: VaeConfig,
    dim: usize,
    scaler: ScalerStats,
    threshold: Option<f64>,
    layers: Vec<LayerShape>,
    num_params: usize,
}

/// Writes `model.json` and `weights.f32` (every parameter tensor in
/// declaration order, little-endian `f32`).
pub fn save_model<T: Scalar>(model: &VaeModel<T>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = ModelMeta {
        config: model.config.clone(),
        dim: model.dim,
        scaler: model.scaler.clone(),
        threshold: model.threshold,
        layers: model.layers.clone(),
        num_params: model.params.len(),
    };
    let path = dir.join(MODEL_FILE);
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    let bytes: Vec<u8> = model
        .params
        .iter()
        .flat_map(|p| (p.to_f64_lossy() as f32).to_le_bytes())
        .collect();
    let path = dir.join(WEIGHTS_FILE);
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
}

pub fn load_model<T: Scalar>(dir: &Path) -> Result<VaeModel<T>> {
    let path = dir.join(MODEL_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: ModelMeta = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
    meta.config.validate()?;
    let layers = layer_shapes(
        meta.dim,
        &meta.config.encoder_hidden,
        meta.config.latent_dim,
    );
    if layers != meta.layers {
        return Err(Error::InvalidConfig(
            "layer shapes in model.json do not chain from the config".into(),
        ));
    }
    if meta.scaler.dim() != meta.dim {
        return Err(Error::DimMismatch {
            expected: meta.dim,
            got: meta.scaler.dim(),
        });
    }
    let expected: usize = layers.iter().map(LayerShape::num_params).sum();
    let path = dir.join(WEIGHTS_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if bytes.len() != 4 * expected || meta.num_params != expected {
        return Err(Error::LengthMismatch {
            left: bytes.len() / 4,
            right: expected,
        });
    }
    let params: Vec<T> = bytes
        .chunks_exact(4)
        .map(|c| T::from_f64_lossy(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect();
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidConfig("non-finite weight".into()));
    }
    Ok(VaeModel {
        config: meta.config,
        dim: meta.dim,
        layers,
        params,
        scaler: meta.scaler,
        threshold: meta.threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vae::init_model;

    #[test]
    fn f32_model_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = VaeConfig {
            encoder_hidden: vec![5, 3],
            latent_dim: 2,
            ..VaeConfig::default()
        };
        let scaler = ScalerStats {
            per_dim_min: vec![-1.0; 4],
            per_dim_max: vec![2.0; 4],
        };
        let mut m: VaeModel<f32> = init_model(&cfg, 4, scaler).unwrap();
        m.set_threshold(Some(12.5));
        save_model(&m, dir.path()).unwrap();
        let back: VaeModel<f32> = load_model(dir.path()).unwrap();
        assert_eq!(back, m);
        let size = fs::metadata(dir.path().join(WEIGHTS_FILE)).unwrap().len();
        assert_eq!(size as usize, 4 * m.num_params());
    }

    #[test]
    fn truncated_weights_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let scaler = ScalerStats {
            per_dim_min: vec![0.0; 3],
            per_dim_max: vec![1.0; 3],
        };
        let cfg = VaeConfig {
            encoder_hidden: vec![2],
            latent_dim: 1,
            ..VaeConfig::default()
        };
        let m: VaeModel<f64> = init_model(&cfg, 3, scaler).unwrap();
        save_model(&m, dir.path()).unwrap();
        let path = dir.path().join(WEIGHTS_FILE);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(load_model::<f64>(dir.path()).is_err());
    }
}
