//! Embedding datasets: on-disk format, in-domain / out-of-domain splitting,
//! min-max scaling and a synthetic generator.
//!
//! A dataset directory holds:
//!
//! * `meta.json`: `{"n": .., "d": .., "labels_vocab": [..], "source": ".."}`
//! * `embeddings.f32`: `n·d` little-endian `f32`, row-major, no header
//! * `labels.txt`: one UTF-8 label per line, LF terminated
//! * `splits.txt` (optional): one of `train`/`dev`/`test` per line

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::{Error, Result, Scalar};

pub const META_FILE: &str = "meta.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.f32";
pub const LABELS_FILE: &str = "labels.txt";
pub const SPLITS_FILE: &str = "splits.txt";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidDataset(format!(
                "unknown split tag `{other}`"
            ))),
        }
    }
}

/// `n × d` matrix of `f32` sentence embeddings with one intent label and one
/// split tag per row.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingDataset {
    embeddings: Vec<f32>,
    dim: usize,
    labels: Vec<String>,
    splits: Vec<Split>,
    source: String,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    n: usize,
    d: usize,
    labels_vocab: Vec<String>,
    source: String,
}

impl EmbeddingDataset {
    pub fn new(
        embeddings: Vec<f32>,
        dim: usize,
        labels: Vec<String>,
        splits: Vec<Split>,
        source: impl Into<String>,
    ) -> Result<Self> {
        let n = labels.len();
        if splits.len() != n {
            return Err(Error::LengthMismatch {
                left: splits.len(),
                right: n,
            });
        }
        if dim == 0 && n > 0 {
            return Err(Error::InvalidDataset("dimension must be at least 1".into()));
        }
        if embeddings.len() != n * dim {
            return Err(Error::InvalidDataset(format!(
                "{} values for {n} rows of dimension {dim}",
                embeddings.len()
            )));
        }
        if let Some(pos) = embeddings.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / dim,
                col: pos % dim,
            });
        }
        if let Some(bad) = labels.iter().find(|l| l.contains('\n')) {
            return Err(Error::InvalidDataset(format!(
                "label {bad:?} contains a newline"
            )));
        }
        Ok(Self {
            embeddings,
            dim,
            labels,
            splits,
            source: source.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.embeddings[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> + '_ {
        (0..self.len()).map(|i| self.row(i))
    }

    pub fn embeddings(&self) -> &[f32] {
        &self.embeddings
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Distinct labels in order of first appearance.
    pub fn vocab(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.labels
            .iter()
            .filter(|l| seen.insert(l.as_str()))
            .cloned()
            .collect()
    }

    pub fn to_matrix<T: Scalar>(&self) -> Matrix<T> {
        let data = self
            .embeddings
            .iter()
            .map(|&v| T::from_f64_lossy(v as f64))
            .collect();
        Matrix::from_vec(self.len(), self.dim, data).expect("shape checked at construction")
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut embeddings = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            embeddings.extend_from_slice(self.row(i));
        }
        Self {
            embeddings,
            dim: self.dim,
            labels: indices.iter().map(|&i| self.labels[i].clone()).collect(),
            splits: indices.iter().map(|&i| self.splits[i]).collect(),
            source: self.source.clone(),
        }
    }

    pub fn indices_where(&self, mut pred: impl FnMut(&str, Split) -> bool) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| pred(&self.labels[i], self.splits[i]))
            .collect()
    }

    pub fn split_part(&self, split: Split) -> Self {
        self.subset(&self.indices_where(|_, s| s == split))
    }

    /// Copy with every value replaced through `f`; labels and splits kept.
    pub fn map_values(&self, mut f: impl FnMut(usize, f32) -> f32) -> Self {
        let dim = self.dim.max(1);
        let embeddings = self
            .embeddings
            .iter()
            .enumerate()
            .map(|(k, &v)| f(k % dim, v))
            .collect();
        Self {
            embeddings,
            ..self.clone()
        }
    }
}

/// Reads a dataset directory.
pub fn load_dataset(path: &Path) -> Result<EmbeddingDataset> {
    let meta_path = path.join(META_FILE);
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: Meta = serde_json::from_str(&meta_text).map_err(|e| Error::json(&meta_path, e))?;
    if meta.n == 0 {
        return Err(Error::EmptyDataset);
    }

    let emb_path = path.join(EMBEDDINGS_FILE);
    let bytes = fs::read(&emb_path).map_err(|e| Error::io(&emb_path, e))?;
    let expected = 4 * meta.n * meta.d;
    if bytes.len() != expected {
        return Err(Error::InvalidDataset(format!(
            "{EMBEDDINGS_FILE} has {} bytes, expected 4·{}·{} = {expected}",
            bytes.len(),
            meta.n,
            meta.d
        )));
    }
    let embeddings: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    let labels_path = path.join(LABELS_FILE);
    let labels_text = fs::read_to_string(&labels_path).map_err(|e| Error::io(&labels_path, e))?;
    let labels = split_lines(&labels_text);
    if labels.len() != meta.n {
        return Err(Error::InvalidDataset(format!(
            "{LABELS_FILE} has {} lines, expected {}",
            labels.len(),
            meta.n
        )));
    }

    let splits_path = path.join(SPLITS_FILE);
    let splits = if splits_path.exists() {
        let text = fs::read_to_string(&splits_path).map_err(|e| Error::io(&splits_path, e))?;
        let tags = split_lines(&text);
        if tags.len() != meta.n {
            return Err(Error::InvalidDataset(format!(
                "{SPLITS_FILE} has {} lines, expected {}",
                tags.len(),
                meta.n
            )));
        }
        tags.iter().map(|t| t.parse()).collect::<Result<Vec<_>>>()?
    } else {
        vec![Split::Train; meta.n]
    };

    EmbeddingDataset::new(embeddings, meta.d, labels, splits, meta.source)
}

fn split_lines(text: &str) -> Vec<String> {
    if text.is_empty() {
        return Vec::new();
    }
    let body = text.strip_suffix('\n').unwrap_or(text);
    body.split('\n').map(str::to_owned).collect()
}

/// Writes `ds` in the directory format; `load_dataset` returns it bit-exactly.
pub fn write_dataset(ds: &EmbeddingDataset, path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))?;
    let meta = Meta {
        n: ds.len(),
        d: ds.dim,
        labels_vocab: ds.vocab(),
        source: ds.source.clone(),
    };
    let meta_path = path.join(META_FILE);
    let meta_json = serde_json::to_string_pretty(&meta).map_err(|e| Error::json(&meta_path, e))?;
    fs::write(&meta_path, meta_json).map_err(|e| Error::io(&meta_path, e))?;

    let bytes: Vec<u8> = ds.embeddings.iter().flat_map(|v| v.to_le_bytes()).collect();
    let emb_path = path.join(EMBEDDINGS_FILE);
    fs::write(&emb_path, bytes).map_err(|e| Error::io(&emb_path, e))?;

    let labels_path = path.join(LABELS_FILE);
    fs::write(
        &labels_path,
        join_lines(ds.labels.iter().map(String::as_str)),
    )
    .map_err(|e| Error::io(&labels_path, e))?;

    let splits_path = path.join(SPLITS_FILE);
    fs::write(
        &splits_path,
        join_lines(ds.splits.iter().map(|s| s.as_str())),
    )
    .map_err(|e| Error::io(&splits_path, e))?;
    Ok(())
}

fn join_lines<'a>(lines: impl Iterator<Item = &'a str>) -> String {
    let mut out = String::new();
    for l in lines {
        out.push_str(l);
        out.push('\n');
    }
    out
}

/// Which intents are held out as out-of-domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub ood_intents: Vec<String>,
    #[serde(default)]
    pub seed: u64,
}

impl SplitConfig {
    /// Draws `count` out-of-domain intents uniformly from `vocab`.
    pub fn random(vocab: &[String], count: usize, seed: u64) -> Result<Self> {
        if count == 0 || count >= vocab.len() {
            return Err(Error::InvalidConfig(format!(
                "cannot hold out {count} of {} intents",
                vocab.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pool = vocab.to_vec();
        pool.shuffle(&mut rng);
        pool.truncate(count);
        Ok(Self {
            ood_intents: pool,
            seed,
        })
    }
}

/// Partitions rows into `(in_domain, ood)`, preserving relative order.
pub fn apply_split(
    ds: &EmbeddingDataset,
    cfg: &SplitConfig,
) -> Result<(EmbeddingDataset, EmbeddingDataset)> {
    if cfg.ood_intents.is_empty() {
        return Err(Error::InvalidConfig("ood_intents must not be empty".into()));
    }
    let vocab: BTreeSet<&str> = ds.labels.iter().map(String::as_str).collect();
    if let Some(unknown) = cfg.ood_intents.iter().find(|l| !vocab.contains(l.as_str())) {
        return Err(Error::UnknownLabel(unknown.clone()));
    }
    let ood: HashSet<&str> = cfg.ood_intents.iter().map(String::as_str).collect();
    if vocab.iter().all(|l| ood.contains(l)) {
        return Err(Error::NoInDomainData);
    }
    let in_idx = ds.indices_where(|l, _| !ood.contains(l));
    let ood_idx = ds.indices_where(|l, _| ood.contains(l));
    Ok((ds.subset(&in_idx), ds.subset(&ood_idx)))
}

/// Per-dimension min/max over training rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalerStats {
    pub per_dim_min: Vec<f32>,
    pub per_dim_max: Vec<f32>,
}

impl ScalerStats {
    pub fn dim(&self) -> usize {
        self.per_dim_min.len()
    }

    /// Maps one value of dimension `i` into `[0, 1]`.
    pub fn scale_value(&self, i: usize, v: f32) -> f32 {
        let (lo, hi) = (self.per_dim_min[i], self.per_dim_max[i]);
        if hi <= lo {
            return 0.0;
        }
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    }

    pub fn scale_row(&self, row: &[f32], out: &mut [f32]) {
        for (i, (o, &v)) in out.iter_mut().zip(row).enumerate() {
            *o = self.scale_value(i, v);
        }
    }
}

pub fn fit_scaler(train: &EmbeddingDataset) -> Result<ScalerStats> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut per_dim_min = train.row(0).to_vec();
    let mut per_dim_max = per_dim_min.clone();
    for row in train.rows().skip(1) {
        for (i, &v) in row.iter().enumerate() {
            per_dim_min[i] = per_dim_min[i].min(v);
            per_dim_max[i] = per_dim_max[i].max(v);
        }
    }
    Ok(ScalerStats {
        per_dim_min,
        per_dim_max,
    })
}

/// Min-max scales every value into `[0, 1]`, clamping values outside the
/// training range. Constant dimensions map to 0.
pub fn scale(ds: &EmbeddingDataset, stats: &ScalerStats) -> Result<EmbeddingDataset> {
    if ds.dim() != stats.dim() {
        return Err(Error::DimMismatch {
            expected: stats.dim(),
            got: ds.dim(),
        });
    }
    Ok(ds.map_values(|i, v| stats.scale_value(i, v)))
}

/// Parameters of [`synth_generate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub separation: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 6,
            per_class: 200,
            dim: 64,
            separation: 8.0,
            noise_sigma: 1.0,
            seed: 7,
        }
    }
}

/// Gaussian blobs around random directions scaled by `separation`.
///
/// Rows are grouped by class (`synth_0`, `synth_1`, ...). Within each class
/// the first 70% of rows are tagged `train`, the next 15% `dev` and the rest
/// `test`.
pub fn synth_generate(cfg: &SynthConfig) -> Result<EmbeddingDataset> {
    if cfg.classes == 0 || cfg.per_class == 0 || cfg.dim == 0 {
        return Err(Error::InvalidConfig(
            "synthetic counts must be at least 1".into(),
        ));
    }
    if !(cfg.noise_sigma > 0.0) || !cfg.separation.is_finite() {
        return Err(Error::InvalidConfig(
            "noise_sigma must be positive and separation finite".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let centers: Vec<Vec<f64>> = (0..cfg.classes)
        .map(|_| {
            let dir: Vec<f64> = (0..cfg.dim)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let norm = dir
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
                .max(f64::MIN_POSITIVE);
            dir.iter().map(|v| v / norm * cfg.separation).collect()
        })
        .collect();

    let n_train = (cfg.per_class as f64 * 0.70).round() as usize;
    let n_dev = (cfg.per_class as f64 * 0.15).round() as usize;
    let n = cfg.classes * cfg.per_class;
    let mut embeddings = Vec::with_capacity(n * cfg.dim);
    let mut labels = Vec::with_capacity(n);
    let mut splits = Vec::with_capacity(n);
    for (c, center) in centers.iter().enumerate() {
        for r in 0..cfg.per_class {
            for &mu in center {
                let eps: f64 = StandardNormal.sample(&mut rng);
                embeddings.push((mu + cfg.noise_sigma * eps) as f32);
            }
            labels.push(format!("synth_{c}"));
            splits.push(if r < n_train {
                Split::Train
            } else if r < n_train + n_dev {
                Split::Dev
            } else {
                Split::Test
            });
        }
    }
    let source = format!(
        "synth(classes={},per_class={},dim={},separation={},sigma={},seed={})",
        cfg.classes, cfg.per_class, cfg.dim, cfg.separation, cfg.noise_sigma, cfg.seed
    );
    EmbeddingDataset::new(embeddings, cfg.dim, labels, splits, source)
}
