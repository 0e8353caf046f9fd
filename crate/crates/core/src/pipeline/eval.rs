use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::manifest::{Manifest, StageRecord};
use super::train::{load_tuning, prepare, PreparedData};
use super::{csv_field, AtStage, PipelineConfig, Stage, StageResult, OOD_CLASS};
use crate::classifier::{load_classifier, predict_intent};
use crate::dataset::EmbeddingDataset;
use crate::hdbscan::{fit_predict, write_assignments, HdbscanConfig};
use crate::kpca::{self, KernelConfig};
use crate::linalg::Matrix;
use crate::metrics::{
    f1_scores, k_report, roc_auc, write_roc_csv, DiscoveryScores, EvalReport, NOISE,
};
use crate::vae::{load_model, reconstruction_scores, OodDecision};
use crate::{Classifier, Error, Result, Vae};

pub const REPORT_FILE: &str = "report.json";
pub const ROC_FILE: &str = "roc.csv";
pub const ASSIGNMENTS_FILE: &str = "assignments.csv";
pub const PROJECTIONS_FILE: &str = "projections.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";

#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub scores: Vec<f64>,
    pub threshold: f64,
    pub flagged: Vec<bool>,
}

impl Detection {
    pub fn flagged_positions(&self) -> Vec<usize> {
        (0..self.flagged.len())
            .filter(|&i| self.flagged[i])
            .collect()
    }
}

/// Scores every row and flags those strictly above the model's threshold.
pub fn detect(model: &Vae, ds: &EmbeddingDataset) -> Result<Detection> {
    let threshold = model.threshold().ok_or(Error::ThresholdUnset)?;
    let scores: Vec<f64> = reconstruction_scores(model, ds)?
        .into_iter()
        .map(f64::from)
        .collect();
    let flagged = scores
        .iter()
        .map(|&s| OodDecision::from_score(s, threshold).is_ood())
        .collect();
    Ok(Detection {
        scores,
        threshold,
        flagged,
    })
}

/// Clustering of the flagged rows. `positions` index into the dataset that
/// was passed to [`discover`].
#[derive(Clone, Debug, PartialEq)]
pub struct Discovery {
    pub positions: Vec<usize>,
    pub projections: Matrix<f64>,
    pub labels: Vec<i64>,
    pub k: usize,
    /// Too few rows to project or cluster; every flagged row is noise.
    pub skipped: bool,
}

/// Fits kernel PCA on the flagged rows themselves, then clusters the
/// projections.
pub fn discover(
    ds: &EmbeddingDataset,
    positions: &[usize],
    kernel: &KernelConfig,
    clustering: &HdbscanConfig,
) -> Result<Discovery> {
    let needed = (kernel.target_dim + 1).max(clustering.min_samples + 1);
    if positions.len() < needed {
        return Ok(Discovery {
            positions: positions.to_vec(),
            projections: Matrix::zeros(0, kernel.target_dim),
            labels: vec![NOISE; positions.len()],
            k: 0,
            skipped: true,
        });
    }
    let points = ds.subset(positions).to_matrix::<f64>();
    let model = kpca::fit(&points, kernel)?;
    let projections = kpca::transform(&model, &points)?;
    let assignment = fit_predict(&projections, clustering)?;
    Ok(Discovery {
        positions: positions.to_vec(),
        projections,
        labels: assignment.labels,
        k: assignment.k,
        skipped: false,
    })
}

/// Where a row ended up: an intent from the classifier, a discovered cluster,
/// or noise.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Route {
    Intent(String),
    Cluster(i64),
    Noise,
}

impl Route {
    pub fn output_label(&self) -> String {
        match self {
            Route::Intent(s) => s.clone(),
            Route::Cluster(c) => format!("cluster_{c}"),
            Route::Noise => "noise".into(),
        }
    }
}

/// Routes rows at or below the threshold to the classifier and the rest to
/// discovery. Every row gets exactly one route.
pub fn route(
    classifier: &Classifier,
    ds: &EmbeddingDataset,
    detection: &Detection,
    discovery: &Discovery,
) -> Result<Vec<Route>> {
    if detection.flagged.len() != ds.len() {
        return Err(Error::LengthMismatch {
            left: detection.flagged.len(),
            right: ds.len(),
        });
    }
    let kept: Vec<usize> = (0..ds.len()).filter(|&i| !detection.flagged[i]).collect();
    let (intents, _) = predict_intent(classifier, &ds.subset(&kept))?;
    let mut routes = vec![Route::Noise; ds.len()];
    for (&i, name) in kept.iter().zip(intents) {
        routes[i] = Route::Intent(name);
    }
    for (&i, &c) in discovery.positions.iter().zip(&discovery.labels) {
        if !detection.flagged[i] {
            return Err(Error::InvalidConfig(format!(
                "row {i} was clustered but not flagged"
            )));
        }
        routes[i] = if c == NOISE {
            Route::Noise
        } else {
            Route::Cluster(c)
        };
    }
    Ok(routes)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowOutput {
    pub row_index: usize,
    pub gold_label: String,
    pub gold_ood: bool,
    pub score: f64,
    pub flagged: bool,
    pub output: String,
}

/// CSV `row_index,gold_label,gold_ood,score,flagged,output`.
pub fn write_predictions(rows: &[RowOutput], path: &Path) -> Result<()> {
    let mut out = String::from("row_index,gold_label,gold_ood,score,flagged,output\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.row_index,
            csv_field(&r.gold_label),
            r.gold_ood,
            r.score,
            r.flagged,
            csv_field(&r.output)
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub struct EvalOutput {
    pub report: EvalReport,
    pub rows: Vec<RowOutput>,
    pub detection: Detection,
    pub discovery: Discovery,
}

fn compute_report(
    test: &EmbeddingDataset,
    is_ood: &[bool],
    detection: &Detection,
    routes: &[Route],
    discovery: &Discovery,
) -> Result<EvalReport> {
    let tag = |ood: bool| if ood { "ood" } else { "in_domain" };
    let gold_bin: Vec<&str> = is_ood.iter().map(|&o| tag(o)).collect();
    let pred_bin: Vec<&str> = detection.flagged.iter().map(|&o| tag(o)).collect();
    let (macro_f1, micro_f1) = f1_scores(&gold_bin, &pred_bin)?;

    let gold_mc: Vec<&str> = test
        .labels()
        .iter()
        .zip(is_ood)
        .map(|(l, &o)| if o { OOD_CLASS } else { l.as_str() })
        .collect();
    let pred_mc: Vec<String> = routes
        .iter()
        .map(|r| match r {
            Route::Intent(s) => s.clone(),
            _ => OOD_CLASS.to_string(),
        })
        .collect();
    let pred_mc: Vec<&str> = pred_mc.iter().map(String::as_str).collect();
    let (macro_f1_mc, micro_f1_mc) = f1_scores(&gold_mc, &pred_mc)?;

    let (auc, roc_points) = roc_auc(&detection.scores, is_ood)?;

    let cluster_of: HashMap<usize, i64> = discovery
        .positions
        .iter()
        .copied()
        .zip(discovery.labels.iter().copied())
        .collect();
    let ood_rows: Vec<usize> = (0..test.len()).filter(|&i| is_ood[i]).collect();
    let ood_gold: Vec<&str> = ood_rows
        .iter()
        .map(|&i| test.labels()[i].as_str())
        .collect();
    let ood_pred: Vec<i64> = ood_rows
        .iter()
        .map(|i| cluster_of.get(i).copied().unwrap_or(NOISE))
        .collect();
    let gold_view = DiscoveryScores::compute(&ood_gold, &ood_pred)?;
    let (_, k_star) = k_report(&ood_pred, &ood_gold)?;

    let flagged_gold: Vec<&str> = discovery
        .positions
        .iter()
        .map(|&i| test.labels()[i].as_str())
        .collect();
    let flagged = DiscoveryScores::compute(&flagged_gold, &discovery.labels)?;

    Ok(EvalReport {
        macro_f1,
        micro_f1,
        macro_f1_mc,
        micro_f1_mc,
        auc,
        roc_points,
        nmi: gold_view.nmi,
        ari: gold_view.ari,
        acc: gold_view.acc,
        k_discovered: discovery.k,
        k_star,
        flagged,
        threshold: detection.threshold,
        n_test: test.len(),
        n_gold_ood: ood_rows.len(),
        n_flagged: discovery.positions.len(),
    })
}

/// Routes every test row through the trained artifacts in `cfg.out`,
/// computes the report and writes it with the per-row tables.
pub fn run_eval(cfg: &PipelineConfig) -> StageResult<EvalOutput> {
    cfg.validate().at(Stage::Config)?;
    let data = prepare(cfg)?;
    if data.test.is_empty() {
        return Err(Error::MissingSplit("test")).at(Stage::Evaluate);
    }
    let out = cfg.out.as_path();
    let vae: Vae = load_model(out).at(Stage::Load)?;
    let classifier: Classifier = load_classifier(out).at(Stage::Load)?;
    let tuning = load_tuning(out).at(Stage::Load)?;
    for dim in [vae.dim(), classifier.dim()] {
        if dim != data.test.dim() {
            return Err(Error::DimMismatch {
                expected: dim,
                got: data.test.dim(),
            })
            .at(Stage::Load);
        }
    }

    let detection = detect(&vae, &data.test).at(Stage::Detect)?;
    let discovery = discover(
        &data.test,
        &detection.flagged_positions(),
        &cfg.kernel,
        &tuning.best,
    )
    .at(Stage::Discover)?;
    let routes = route(&classifier, &data.test, &detection, &discovery).at(Stage::Detect)?;
    let report = compute_report(
        &data.test,
        &data.test_is_ood,
        &detection,
        &routes,
        &discovery,
    )
    .at(Stage::Evaluate)?;

    let rows: Vec<RowOutput> = (0..data.test.len())
        .map(|i| RowOutput {
            row_index: data.test_index[i],
            gold_label: data.test.labels()[i].clone(),
            gold_ood: data.test_is_ood[i],
            score: detection.scores[i],
            flagged: detection.flagged[i],
            output: routes[i].output_label(),
        })
        .collect();
    let original: Vec<usize> = discovery
        .positions
        .iter()
        .map(|&i| data.test_index[i])
        .collect();

    (|| -> Result<()> {
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        let path = out.join(REPORT_FILE);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        write_roc_csv(&report.roc_points, &out.join(ROC_FILE))?;
        write_assignments(&original, &discovery.labels, &out.join(ASSIGNMENTS_FILE))?;
        let proj_index: &[usize] = if discovery.skipped { &[] } else { &original };
        kpca::write_projections(
            proj_index,
            &discovery.projections,
            &out.join(PROJECTIONS_FILE),
        )?;
        write_predictions(&rows, &out.join(PREDICTIONS_FILE))?;
        let mut rec = StageRecord::new(cfg)?;
        rec.add_outputs(
            out,
            &[
                REPORT_FILE,
                ROC_FILE,
                ASSIGNMENTS_FILE,
                PROJECTIONS_FILE,
                PREDICTIONS_FILE,
            ],
        )?;
        Manifest::record(out, cfg, "evaluate", rec)
    })()
    .at(Stage::Write)?;

    Ok(EvalOutput {
        report,
        rows,
        detection,
        discovery,
    })
}

pub const DETECTIONS_FILE: &str = "detections.csv";

/// Scores the test rows with the saved model and writes
/// `row_index,score,ood` to `cfg.out`.
pub fn run_detect(cfg: &PipelineConfig) -> StageResult<(PreparedData, Detection)> {
    cfg.validate().at(Stage::Config)?;
    let data = prepare(cfg)?;
    let vae: Vae = load_model(&cfg.out).at(Stage::Load)?;
    let detection = detect(&vae, &data.test).at(Stage::Detect)?;
    let out = cfg.out.as_path();
    (|| -> Result<()> {
        let mut text = String::from("row_index,score,ood\n");
        for (i, (&s, &f)) in detection.scores.iter().zip(&detection.flagged).enumerate() {
            text.push_str(&format!("{},{s},{f}\n", data.test_index[i]));
        }
        let path = out.join(DETECTIONS_FILE);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        let mut rec = StageRecord::new(cfg)?;
        rec.add_outputs(out, &[DETECTIONS_FILE])?;
        Manifest::record(out, cfg, "detect", rec)
    })()
    .at(Stage::Write)?;
    Ok((data, detection))
}

/// Detects, then clusters the flagged test rows with the tuned settings and
/// writes the assignments and projections to `cfg.out`.
pub fn run_discover(cfg: &PipelineConfig) -> StageResult<Discovery> {
    let (data, detection) = run_detect(cfg)?;
    let tuning = load_tuning(&cfg.out).at(Stage::Load)?;
    let discovery = discover(
        &data.test,
        &detection.flagged_positions(),
        &cfg.kernel,
        &tuning.best,
    )
    .at(Stage::Discover)?;
    let original: Vec<usize> = discovery
        .positions
        .iter()
        .map(|&i| data.test_index[i])
        .collect();
    let out = cfg.out.as_path();
    (|| -> Result<()> {
        write_assignments(&original, &discovery.labels, &out.join(ASSIGNMENTS_FILE))?;
        let proj_index: &[usize] = if discovery.skipped { &[] } else { &original };
        kpca::write_projections(
            proj_index,
            &discovery.projections,
            &out.join(PROJECTIONS_FILE),
        )?;
        let mut rec = StageRecord::new(cfg)?;
        rec.add_outputs(out, &[ASSIGNMENTS_FILE, PROJECTIONS_FILE])?;
        Manifest::record(out, cfg, "discover", rec)
    })()
    .at(Stage::Write)?;
    Ok(discovery)
}
