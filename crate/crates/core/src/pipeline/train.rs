use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::{Manifest, StageRecord};
use super::{AtStage, PipelineConfig, Stage, StageResult};
use crate::classifier::{
    save_classifier, train_classifier, CLASSIFIER_FILE, CLASSIFIER_WEIGHTS_FILE,
};
use crate::dataset::{
    apply_split, fit_scaler, load_dataset, scale, write_dataset, EmbeddingDataset, Split,
    SplitConfig,
};
use crate::hdbscan::{tune_hyperparams, HdbscanConfig, TuneRow};
use crate::vae::{
    self, calibrate_threshold, init_model, save_model, EpochLoss, MODEL_FILE, WEIGHTS_FILE,
};
use crate::{kpca, Classifier, Error, Result, Vae};

pub const HDBSCAN_FILE: &str = "hdbscan.json";
pub const LOSS_HISTORY_FILE: &str = "loss_history.csv";
pub const SPLIT_FILE: &str = "split.json";

/// The dataset partitioned for training and evaluation. Out-of-domain
/// intents never appear in `train` or `dev`; `test` holds the in-domain test
/// rows plus every out-of-domain row, in original order.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub split: SplitConfig,
    pub train: EmbeddingDataset,
    pub dev: EmbeddingDataset,
    pub test: EmbeddingDataset,
    /// Original row index of each test row.
    pub test_index: Vec<usize>,
    pub test_is_ood: Vec<bool>,
}

pub fn prepare(cfg: &PipelineConfig) -> StageResult<PreparedData> {
    let ds = load_dataset(&cfg.dataset).at(Stage::Load)?;
    let split = cfg.split.resolve(&ds).at(Stage::Split)?;
    apply_split(&ds, &split).at(Stage::Split)?;
    let ood: HashSet<&str> = split.ood_intents.iter().map(String::as_str).collect();
    let train_idx = ds.indices_where(|l, s| s == Split::Train && !ood.contains(l));
    let dev_idx = ds.indices_where(|l, s| s == Split::Dev && !ood.contains(l));
    let test_idx = ds.indices_where(|l, s| s == Split::Test || ood.contains(l));
    if train_idx.is_empty() {
        return Err(Error::MissingSplit("train")).at(Stage::Split);
    }
    if dev_idx.is_empty() {
        return Err(Error::MissingSplit("dev")).at(Stage::Split);
    }
    let test_is_ood = test_idx
        .iter()
        .map(|&i| ood.contains(ds.labels()[i].as_str()))
        .collect();
    Ok(PreparedData {
        train: ds.subset(&train_idx),
        dev: ds.subset(&dev_idx),
        test: ds.subset(&test_idx),
        test_index: test_idx,
        test_is_ood,
        split,
    })
}

/// Tuned clustering settings and the grid they were picked from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningRecord {
    pub best: HdbscanConfig,
    pub best_ari: f64,
    pub rows_used: usize,
    pub table: Vec<TuneRow>,
}

/// Projects (a deterministic subsample of) the in-domain training rows with
/// kernel PCA and grid-searches HDBSCAN against their intent labels.
pub fn tune_discovery(train: &EmbeddingDataset, cfg: &PipelineConfig) -> Result<TuningRecord> {
    let mut idx: Vec<usize> = (0..train.len()).collect();
    if idx.len() > cfg.tune_max_rows {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        idx.shuffle(&mut rng);
        idx.truncate(cfg.tune_max_rows);
        idx.sort_unstable();
    }
    let rows = train.subset(&idx);
    let points = rows.to_matrix::<f64>();
    let model = kpca::fit(&points, &cfg.kernel)?;
    let proj = kpca::transform(&model, &points)?;
    let result = tune_hyperparams(&proj, rows.labels(), &cfg.hdbscan_grid)?;
    Ok(TuningRecord {
        best: result.best,
        best_ari: result.best_ari,
        rows_used: rows.len(),
        table: result.table,
    })
}

pub fn load_tuning(dir: &Path) -> Result<TuningRecord> {
    let path = dir.join(HDBSCAN_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(&path, e))
}

fn write_json<S: Serialize>(value: &S, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("artifact serializes");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub struct TrainOutput {
    pub vae: Vae,
    pub classifier: Classifier,
    pub tuning: TuningRecord,
    pub history: Vec<EpochLoss>,
    pub data: PreparedData,
}

/// Fits every model on in-domain data only and writes the artifacts plus a
/// manifest to `cfg.out`.
pub fn run_train(cfg: &PipelineConfig) -> StageResult<TrainOutput> {
    cfg.validate().at(Stage::Config)?;
    let data = prepare(cfg)?;
    std::fs::create_dir_all(&cfg.out)
        .map_err(|e| Error::io(&cfg.out, e))
        .at(Stage::Write)?;

    let scaler = fit_scaler(&data.train).at(Stage::Train)?;
    let train_scaled = scale(&data.train, &scaler).at(Stage::Train)?;
    let dev_scaled = scale(&data.dev, &scaler).at(Stage::Train)?;
    let model = init_model::<f32>(&cfg.vae, data.train.dim(), scaler).at(Stage::Train)?;
    let (model, history) = vae::train(model, &train_scaled, &dev_scaled).at(Stage::Train)?;
    let model =
        calibrate_threshold(model, &data.dev, cfg.threshold_quantile).at(Stage::Calibrate)?;
    let classifier =
        train_classifier::<f32>(&data.train, &data.dev, &cfg.classifier).at(Stage::Train)?;
    let tuning = tune_discovery(&data.train, cfg).at(Stage::Tune)?;

    let out = cfg.out.as_path();
    (|| -> Result<()> {
        save_model(&model, out)?;
        save_classifier(&classifier, out)?;
        write_json(&tuning, &out.join(HDBSCAN_FILE))?;
        write_json(&data.split, &out.join(SPLIT_FILE))?;
        vae::write_loss_history(&history, &out.join(LOSS_HISTORY_FILE))?;
        let mut rec = StageRecord::new(cfg)?;
        rec.add_outputs(
            out,
            &[
                MODEL_FILE,
                WEIGHTS_FILE,
                CLASSIFIER_FILE,
                CLASSIFIER_WEIGHTS_FILE,
                HDBSCAN_FILE,
                SPLIT_FILE,
                LOSS_HISTORY_FILE,
            ],
        )?;
        Manifest::record(out, cfg, "train", rec)
    })()
    .at(Stage::Write)?;

    Ok(TrainOutput {
        vae: model,
        classifier,
        tuning,
        history,
        data,
    })
}

/// Re-derives the threshold of the saved model from in-domain dev rows at
/// `cfg.threshold_quantile`; returns the new threshold.
pub fn run_calibrate(cfg: &PipelineConfig) -> StageResult<f64> {
    cfg.validate().at(Stage::Config)?;
    let data = prepare(cfg)?;
    let model: Vae = vae::load_model(&cfg.out).at(Stage::Load)?;
    let model =
        calibrate_threshold(model, &data.dev, cfg.threshold_quantile).at(Stage::Calibrate)?;
    save_model(&model, &cfg.out).at(Stage::Write)?;
    let mut rec = StageRecord::new(cfg).at(Stage::Write)?;
    rec.add_outputs(&cfg.out, &[MODEL_FILE]).at(Stage::Write)?;
    Manifest::record(&cfg.out, cfg, "calibrate", rec).at(Stage::Write)?;
    Ok(model.threshold().expect("calibration sets the threshold"))
}

/// Writes the in-domain and out-of-domain parts of the dataset to
/// `cfg.out/in_domain` and `cfg.out/ood`.
pub fn run_split(cfg: &PipelineConfig) -> StageResult<(EmbeddingDataset, EmbeddingDataset)> {
    cfg.validate().at(Stage::Config)?;
    let ds = load_dataset(&cfg.dataset).at(Stage::Load)?;
    let split = cfg.split.resolve(&ds).at(Stage::Split)?;
    let (in_domain, ood) = apply_split(&ds, &split).at(Stage::Split)?;
    let out = cfg.out.as_path();
    (|| -> Result<()> {
        write_dataset(&in_domain, &out.join("in_domain"))?;
        write_dataset(&ood, &out.join("ood"))?;
        write_json(&split, &out.join(SPLIT_FILE))?;
        let mut rec = StageRecord::new(cfg)?;
        rec.add_outputs(out, &[SPLIT_FILE])?;
        Manifest::record(out, cfg, "split", rec)
    })()
    .at(Stage::Write)?;
    Ok((in_domain, ood))
}
