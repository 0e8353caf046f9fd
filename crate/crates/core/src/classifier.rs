//! Single affine layer + softmax over the known intents.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adam::Adam;
use crate::dataset::EmbeddingDataset;
use crate::linalg::Matrix;
use crate::{Error, Result, Scalar};

pub const CLASSIFIER_FILE: &str = "classifier.json";
pub const CLASSIFIER_WEIGHTS_FILE: &str = "classifier.f32";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            learning_rate: 1e-2,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierModel<T> {
    dim: usize,
    vocab: Vec<String>,
    /// `dim × vocab.len()`, row-major, followed by the bias.
    params: Vec<T>,
}

impl<T: Scalar> ClassifierModel<T> {
    pub fn zeros(dim: usize, vocab: Vec<String>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        if vocab.is_empty() || !vocab.iter().all(|l| seen.insert(l)) {
            return Err(Error::InvalidConfig(
                "vocabulary must be non-empty and unique".into(),
            ));
        }
        Ok(Self {
            dim,
            params: vec![T::zero(); dim * vocab.len() + vocab.len()],
            vocab,
        })
    }

    pub fn from_parts(
        dim: usize,
        vocab: Vec<String>,
        weight: Vec<T>,
        bias: Vec<T>,
    ) -> Result<Self> {
        let mut m = Self::zeros(dim, vocab)?;
        let k = m.vocab.len();
        if weight.len() != dim * k || bias.len() != k {
            return Err(Error::LengthMismatch {
                left: weight.len() + bias.len(),
                right: dim * k + k,
            });
        }
        m.params[..dim * k].copy_from_slice(&weight);
        m.params[dim * k..].copy_from_slice(&bias);
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn weight(&self) -> &[T] {
        &self.params[..self.dim * self.vocab.len()]
    }

    pub fn bias(&self) -> &[T] {
        &self.params[self.dim * self.vocab.len()..]
    }

    fn logits(&self, x: &[T]) -> Vec<T> {
        let k = self.vocab.len();
        let mut out = self.bias().to_vec();
        let w = self.weight();
        for (i, &v) in x.iter().enumerate() {
            for (o, &wv) in out.iter_mut().zip(&w[i * k..(i + 1) * k]) {
                *o += v * wv;
            }
        }
        out
    }

    /// Softmax probabilities for one row.
    pub fn probabilities(&self, x: &[T]) -> Vec<T> {
        softmax(&self.logits(x))
    }
}

pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn accuracy<T: Scalar>(model: &ClassifierModel<T>, ds: &EmbeddingDataset) -> f64 {
    let mut x = vec![T::zero(); ds.dim()];
    let correct = (0..ds.len())
        .filter(|&i| {
            for (d, &v) in x.iter_mut().zip(ds.row(i)) {
                *d = T::from_f64_lossy(v as f64);
            }
            model.vocab[argmax(&model.logits(&x))] == ds.labels()[i]
        })
        .count();
    correct as f64 / ds.len().max(1) as f64
}

/// Softmax cross-entropy with Adam; keeps the snapshot with the best dev
/// accuracy (the zero-initialized model included).
pub fn train_classifier<T: Scalar>(
    train: &EmbeddingDataset,
    dev: &EmbeddingDataset,
    cfg: &ClassifierConfig,
) -> Result<ClassifierModel<T>> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::InvalidConfig(
            "classifier needs batch_size ≥ 1 and a positive learning rate".into(),
        ));
    }
    if !dev.is_empty() && dev.dim() != train.dim() {
        return Err(Error::DimMismatch {
            expected: train.dim(),
            got: dev.dim(),
        });
    }
    let dim = train.dim();
    let vocab = train.vocab();
    let k = vocab.len();
    let targets: Vec<usize> = train
        .labels()
        .iter()
        .map(|l| vocab.iter().position(|v| v == l).expect("label from vocab"))
        .collect();
    let mut model = ClassifierModel::<T>::zeros(dim, vocab)?;
    let mut opt = Adam::new(model.params.len(), T::from_f64_lossy(cfg.learning_rate));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = model.clone();
    let mut best_acc = if dev.is_empty() {
        -1.0
    } else {
        accuracy(&model, dev)
    };
    let mut x = vec![T::zero(); dim];
    let mut grad = vec![T::zero(); model.params.len()];

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = T::zero());
            let inv = T::one() / T::from_usize_lossy(chunk.len());
            for &r in chunk {
                for (d, &v) in x.iter_mut().zip(train.row(r)) {
                    *d = T::from_f64_lossy(v as f64);
                }
                let mut delta = model.probabilities(&x);
                delta[targets[r]] -= T::one();
                let (gw, gb) = grad.split_at_mut(dim * k);
                for (b, &d) in gb.iter_mut().zip(&delta) {
                    *b += d * inv;
                }
                for (i, &xv) in x.iter().enumerate() {
                    for (g, &d) in gw[i * k..(i + 1) * k].iter_mut().zip(&delta) {
                        *g += xv * d * inv;
                    }
                }
            }
            opt.step(&mut model.params, &grad);
        }
        if !dev.is_empty() {
            let acc = accuracy(&model, dev);
            if acc > best_acc {
                best_acc = acc;
                best = model.clone();
            }
        }
    }
    Ok(if dev.is_empty() { model } else { best })
}

/// Predicted intent per row plus the `n × |I|` probability matrix.
pub fn predict_intent<T: Scalar>(
    model: &ClassifierModel<T>,
    ds: &EmbeddingDataset,
) -> Result<(Vec<String>, Matrix<T>)> {
    if !ds.is_empty() && ds.dim() != model.dim {
        return Err(Error::DimMismatch {
            expected: model.dim,
            got: ds.dim(),
        });
    }
    let k = model.vocab.len();
    let mut probs = Matrix::zeros(ds.len(), k);
    let mut names = Vec::with_capacity(ds.len());
    let mut x = vec![T::zero(); model.dim];
    for i in 0..ds.len() {
        for (d, &v) in x.iter_mut().zip(ds.row(i)) {
            *d = T::from_f64_lossy(v as f64);
        }
        let logits = model.logits(&x);
        names.push(model.vocab[argmax(&logits)].clone());
        probs.row_mut(i).copy_from_slice(&softmax(&logits));
    }
    Ok((names, probs))
}

#[derive(Serialize, Deserialize)]
struct ClassifierMeta {
    vocab: Vec<String>,
    dim: usize,
    classes: usize,
}

/// `classifier.json` plus `classifier.f32` (weight then bias, little-endian).
pub fn save_classifier<T: Scalar>(model: &ClassifierModel<T>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = ClassifierMeta {
        vocab: model.vocab.clone(),
        dim: model.dim,
        classes: model.vocab.len(),
    };
    let path = dir.join(CLASSIFIER_FILE);
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    let bytes: Vec<u8> = model
        .params
        .iter()
        .flat_map(|p| (p.to_f64_lossy() as f32).to_le_bytes())
        .collect();
    let path = dir.join(CLASSIFIER_WEIGHTS_FILE);
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
}

pub fn load_classifier<T: Scalar>(dir: &Path) -> Result<ClassifierModel<T>> {
    let path = dir.join(CLASSIFIER_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: ClassifierMeta = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
    if meta.classes != meta.vocab.len() {
        return Err(Error::LengthMismatch {
            left: meta.classes,
            right: meta.vocab.len(),
        });
    }
    let path = dir.join(CLASSIFIER_WEIGHTS_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let values: Vec<T> = bytes
        .chunks_exact(4)
        .map(|c| T::from_f64_lossy(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect();
    let split = meta.dim * meta.classes;
    if bytes.len() % 4 != 0 || values.len() != split + meta.classes {
        return Err(Error::LengthMismatch {
            left: values.len(),
            right: split + meta.classes,
        });
    }
    ClassifierModel::from_parts(
        meta.dim,
        meta.vocab,
        values[..split].to_vec(),
        values[split..].to_vec(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_generate, Split, SynthConfig};

    #[test]
    fn zero_model_is_uniform() {
        let m =
            ClassifierModel::<f64>::zeros(3, vec!["a".into(), "b".into(), "c".into(), "d".into()])
                .unwrap();
        let p = m.probabilities(&[1.0, -2.0, 0.5]);
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-12));
        assert_eq!(argmax(&p), 0);
    }

    #[test]
    fn hand_built_two_class_softmax() {
        // logits: a = 1·x0 + 0.5, b = -1·x1
        let m = ClassifierModel::from_parts(
            2,
            vec!["a".into(), "b".into()],
            vec![1.0, 0.0, 0.0, -1.0],
            vec![0.5, 0.0],
        )
        .unwrap();
        let p = m.probabilities(&[1.0, 2.0]);
        let (la, lb): (f64, f64) = (1.5, -2.0);
        let expect_a = la.exp() / (la.exp() + lb.exp());
        assert!((p[0] - expect_a).abs() < 1e-12);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shift_invariance() {
        let logits = [0.3, -1.2, 2.0];
        let shifted: Vec<f64> = logits.iter().map(|v| v + 17.5).collect();
        let (a, b) = (softmax(&logits), softmax(&shifted));
        assert_eq!(argmax(&a), argmax(&b));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn vocab_must_be_unique() {
        assert!(ClassifierModel::<f32>::zeros(2, vec!["a".into(), "a".into()]).is_err());
    }

    fn blobs() -> crate::dataset::EmbeddingDataset {
        synth_generate(&SynthConfig {
            classes: 4,
            per_class: 100,
            dim: 16,
            separation: 8.0,
            noise_sigma: 1.0,
            seed: 2,
        })
        .unwrap()
    }

    #[test]
    fn separable_data_is_learned() {
        let ds = blobs();
        let train = ds.split_part(Split::Train);
        let dev = ds.split_part(Split::Dev);
        let cfg = ClassifierConfig {
            epochs: 20,
            ..ClassifierConfig::default()
        };
        let m: ClassifierModel<f32> = train_classifier(&train, &dev, &cfg).unwrap();
        assert!(accuracy(&m, &dev) >= 0.99);
        let again: ClassifierModel<f32> = train_classifier(&train, &dev, &cfg).unwrap();
        assert_eq!(m, again);
        let (names, probs) = predict_intent(&m, &dev).unwrap();
        assert_eq!(names.len(), dev.len());
        for row in probs.iter_rows() {
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn single_class_always_predicted() {
        let ds = blobs();
        let one = ds.subset(&ds.indices_where(|l, _| l == "synth_1"));
        let m: ClassifierModel<f32> =
            train_classifier(&one, &one.subset(&[]), &ClassifierConfig::default()).unwrap();
        let (names, _) = predict_intent(&m, &ds).unwrap();
        assert!(names.iter().all(|n| n == "synth_1"));
        assert!(
            train_classifier::<f32>(&one.subset(&[]), &one, &ClassifierConfig::default()).is_err()
        );
    }

    #[test]
    fn persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = ClassifierModel::<f32>::from_parts(
            2,
            vec!["x".into(), "y".into()],
            vec![0.5, -1.5, 2.0, 0.25],
            vec![0.1, -0.1],
        )
        .unwrap();
        save_classifier(&m, dir.path()).unwrap();
        assert_eq!(load_classifier::<f32>(dir.path()).unwrap(), m);
        let ds = blobs();
        assert!(predict_intent(&m, &ds).is_err());
    }
}
