use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::VaeModel;
use crate::adam::Adam;
use crate::dataset::EmbeddingDataset;
use crate::{Error, Result, Scalar};

const SCORE_CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_total: f64,
    pub train_recon: f64,
    pub train_kl: f64,
    /// Deterministic (`z = mu`) mean loss on the dev rows; NaN without dev rows.
    pub dev_total: f64,
}

fn flat_rows<T: Scalar>(ds: &EmbeddingDataset, indices: &[usize]) -> Vec<T> {
    let mut out = Vec::with_capacity(indices.len() * ds.dim());
    for &i in indices {
        out.extend(ds.row(i).iter().map(|&v| T::from_f64_lossy(v as f64)));
    }
    out
}

/// Mean deterministic loss over every row of an already scaled dataset.
fn mean_eval_loss<T: Scalar>(model: &VaeModel<T>, scaled: &EmbeddingDataset) -> Result<f64> {
    let mut acc = 0.0;
    let idx: Vec<usize> = (0..scaled.len()).collect();
    for chunk in idx.chunks(SCORE_CHUNK) {
        let batch = flat_rows::<T>(scaled, chunk);
        let eps = vec![T::zero(); chunk.len() * model.latent_dim()];
        for l in model.row_losses(&batch, &eps)? {
            acc += l.total.to_f64_lossy();
        }
    }
    Ok(acc / scaled.len().max(1) as f64)
}

/// Adam over shuffled mini-batches of scaled training rows.
///
/// Returns the parameters with the lowest dev loss seen at the end of any
/// epoch (the initial model counts as epoch 0) and stops after
/// `early_stop_patience` epochs without improvement. Without dev rows the
/// final parameters are returned.
pub fn train<T: Scalar>(
    model: VaeModel<T>,
    train_scaled: &EmbeddingDataset,
    dev_scaled: &EmbeddingDataset,
) -> Result<(VaeModel<T>, Vec<EpochLoss>)> {
    if train_scaled.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for ds in [train_scaled, dev_scaled] {
        if !ds.is_empty() && ds.dim() != model.dim() {
            return Err(Error::DimMismatch {
                expected: model.dim(),
                got: ds.dim(),
            });
        }
    }
    let cfg = model.config().clone();
    let mut history = Vec::with_capacity(cfg.epochs);
    if cfg.epochs == 0 {
        return Ok((model, history));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut opt = Adam::new(model.num_params(), T::from_f64_lossy(cfg.learning_rate));
    let use_dev = !dev_scaled.is_empty();
    let mut best_dev = if use_dev {
        mean_eval_loss(&model, dev_scaled)?
    } else {
        f64::INFINITY
    };
    let mut best = model.clone();
    let mut model = model;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train_scaled.len()).collect();
    let latent = model.latent_dim();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut recon, mut kl, mut seen) = (0.0, 0.0, 0usize);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = flat_rows::<T>(train_scaled, chunk);
            let eps: Vec<T> = (0..chunk.len() * latent)
                .map(|_| T::from_f64_lossy(StandardNormal.sample(&mut rng)))
                .collect();
            let (loss, grad) = model.loss_and_gradient(&batch, &eps)?;
            if !loss.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            opt.step(model.params_mut(), &grad);
            recon += loss.reconstruction.to_f64_lossy() * chunk.len() as f64;
            kl += loss.kl.to_f64_lossy() * chunk.len() as f64;
            seen += chunk.len();
        }
        let n = seen as f64;
        let dev_total = if use_dev {
            mean_eval_loss(&model, dev_scaled)?
        } else {
            f64::NAN
        };
        history.push(EpochLoss {
            epoch,
            train_total: (recon + kl) / n,
            train_recon: recon / n,
            train_kl: kl / n,
            dev_total,
        });
        if !use_dev {
            continue;
        }
        if !dev_total.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: 0 });
        }
        if dev_total < best_dev {
            best_dev = dev_total;
            best = model.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.early_stop_patience {
                break;
            }
        }
    }
    Ok((if use_dev { best } else { model }, history))
}

/// Per-row out-of-domain score: the loss at `z = mu` of each unscaled row,
/// scaled with the model's own statistics.
pub fn reconstruction_scores<T: Scalar>(
    model: &VaeModel<T>,
    ds: &EmbeddingDataset,
) -> Result<Vec<T>> {
    if !ds.is_empty() && ds.dim() != model.dim() {
        return Err(Error::DimMismatch {
            expected: model.dim(),
            got: ds.dim(),
        });
    }
    let dim = model.dim();
    let mut scores = Vec::with_capacity(ds.len());
    let mut scaled = vec![0f32; dim];
    let idx: Vec<usize> = (0..ds.len()).collect();
    for chunk in idx.chunks(SCORE_CHUNK) {
        let mut batch = Vec::with_capacity(chunk.len() * dim);
        for &i in chunk {
            model.scaler().scale_row(ds.row(i), &mut scaled);
            batch.extend(scaled.iter().map(|&v| T::from_f64_lossy(v as f64)));
        }
        let eps = vec![T::zero(); chunk.len() * model.latent_dim()];
        scores.extend(model.row_losses(&batch, &eps)?.into_iter().map(|l| l.total));
    }
    Ok(scores)
}

/// Linear-interpolation quantile of unsorted values.
pub(crate) fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Sets the threshold to the `quantile` of the dev rows' scores.
pub fn calibrate_threshold<T: Scalar>(
    mut model: VaeModel<T>,
    dev_in_domain: &EmbeddingDataset,
    quantile_level: f64,
) -> Result<VaeModel<T>> {
    if dev_in_domain.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(0.0..=1.0).contains(&quantile_level) {
        return Err(Error::InvalidConfig(format!(
            "quantile {quantile_level} outside [0, 1]"
        )));
    }
    let scores: Vec<f64> = reconstruction_scores(&model, dev_in_domain)?
        .into_iter()
        .map(Scalar::to_f64_lossy)
        .collect();
    model.set_threshold(Some(quantile(&scores, quantile_level)));
    Ok(model)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OodDecision {
    InDomain,
    Ood,
}

impl OodDecision {
    /// Strictly above the threshold is out-of-domain.
    pub fn from_score(score: f64, threshold: f64) -> Self {
        if score > threshold {
            OodDecision::Ood
        } else {
            OodDecision::InDomain
        }
    }

    pub fn is_ood(self) -> bool {
        self == OodDecision::Ood
    }
}

pub fn detect_ood<T: Scalar>(
    model: &VaeModel<T>,
    ds: &EmbeddingDataset,
) -> Result<Vec<OodDecision>> {
    let t = model.threshold().ok_or(Error::ThresholdUnset)?;
    Ok(reconstruction_scores(model, ds)?
        .into_iter()
        .map(|s| OodDecision::from_score(s.to_f64_lossy(), t))
        .collect())
}

/// CSV `epoch,train_total,train_recon,train_kl,dev_total`.
pub fn write_loss_history(history: &[EpochLoss], path: &Path) -> Result<()> {
    let mut out = String::from("epoch,train_total,train_recon,train_kl,dev_total\n");
    for h in history {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            h.epoch, h.train_total, h.train_recon, h.train_kl, h.dev_total
        ));
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{fit_scaler, scale, synth_generate, Split, SynthConfig};
    use crate::vae::{init_model, VaeConfig};

    fn small_data() -> (
        EmbeddingDataset,
        EmbeddingDataset,
        crate::dataset::ScalerStats,
    ) {
        let ds = synth_generate(&SynthConfig {
            classes: 2,
            per_class: 60,
            dim: 8,
            separation: 6.0,
            noise_sigma: 1.0,
            seed: 4,
        })
        .unwrap();
        let train = ds.split_part(Split::Train);
        let dev = ds.split_part(Split::Dev);
        let stats = fit_scaler(&train).unwrap();
        (
            scale(&train, &stats).unwrap(),
            scale(&dev, &stats).unwrap(),
            stats,
        )
    }

    fn cfg(epochs: usize) -> VaeConfig {
        VaeConfig {
            encoder_hidden: vec![16, 8],
            latent_dim: 4,
            epochs,
            batch_size: 16,
            learning_rate: 1e-2,
            seed: 3,
            early_stop_patience: 1000,
        }
    }

    #[test]
    fn quantile_interpolates() {
        assert_eq!(quantile(&[4.0, 1.0, 3.0, 2.0], 0.5), 2.5);
        assert_eq!(quantile(&[4.0, 1.0, 3.0, 2.0], 1.0), 4.0);
        assert_eq!(quantile(&[7.0], 0.95), 7.0);
    }

    #[test]
    fn zero_epochs_is_identity() {
        let (tr, dv, stats) = small_data();
        let m: VaeModel<f32> = init_model(&cfg(0), 8, stats).unwrap();
        let (out, hist) = train(m.clone(), &tr, &dv).unwrap();
        assert_eq!(out, m);
        assert!(hist.is_empty());
    }

    #[test]
    fn training_reduces_loss_and_is_reproducible() {
        let (tr, dv, stats) = small_data();
        let m: VaeModel<f32> = init_model(&cfg(15), 8, stats).unwrap();
        let (a, ha) = train(m.clone(), &tr, &dv).unwrap();
        let (b, hb) = train(m, &tr, &dv).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(a, b);
        assert!(ha.last().unwrap().train_total < ha[0].train_total);
    }

    #[test]
    fn early_stopping_respects_patience() {
        let (tr, dv, stats) = small_data();
        let c = VaeConfig {
            early_stop_patience: 1,
            learning_rate: 0.5,
            ..cfg(50)
        };
        let m: VaeModel<f32> = init_model(&c, 8, stats).unwrap();
        let (_, hist) = train(m, &tr, &dv).unwrap();
        assert!(hist.len() < 50);
    }

    #[test]
    fn scores_threshold_and_decisions() {
        let (_, _, stats) = small_data();
        let mut m: VaeModel<f64> = init_model(&cfg(0), 8, stats).unwrap();
        let raw = synth_generate(&SynthConfig {
            classes: 1,
            per_class: 100,
            dim: 8,
            separation: 1.0,
            noise_sigma: 1.0,
            seed: 9,
        })
        .unwrap();
        let dup = raw.subset(&[0, 0, 5]);
        let s = reconstruction_scores(&m, &dup).unwrap();
        assert_eq!(s[0], s[1]);
        assert!(s.iter().all(|v| v.is_finite() && *v >= 0.0));
        assert!(matches!(detect_ood(&m, &raw), Err(Error::ThresholdUnset)));

        m = calibrate_threshold(m, &raw, 0.95).unwrap();
        let scores: Vec<f64> = reconstruction_scores(&m, &raw).unwrap();
        let t = m.threshold().unwrap();
        let above = scores.iter().filter(|&&v| v > t).count();
        // oracle: sorted-order count for the 0.95 quantile of 100 values
        let mut sorted = scores.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        assert!(t >= sorted[94] && t <= sorted[95]);
        assert_eq!(above, 5);
        let decisions = detect_ood(&m, &raw).unwrap();
        assert_eq!(decisions.iter().filter(|d| d.is_ood()).count(), 5);

        let m_max = calibrate_threshold(m.clone(), &raw, 1.0).unwrap();
        assert!(detect_ood(&m_max, &raw)
            .unwrap()
            .iter()
            .all(|d| !d.is_ood()));
        let mut m_inf = m;
        m_inf.set_threshold(Some(f64::INFINITY));
        assert!(detect_ood(&m_inf, &raw)
            .unwrap()
            .iter()
            .all(|d| !d.is_ood()));
        assert!(calibrate_threshold(m_inf, &raw.subset(&[]), 0.5).is_err());
    }

    #[test]
    fn tie_with_threshold_is_in_domain() {
        assert_eq!(OodDecision::from_score(2.0, 2.0), OodDecision::InDomain);
        assert_eq!(OodDecision::from_score(2.0 + 1e-12, 2.0), OodDecision::Ood);
    }
}
