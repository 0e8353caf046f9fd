//! End-to-end orchestration: split, train, calibrate, route, discover and
//! evaluate, with every artifact written under one output directory.

mod config;
mod eval;
mod manifest;
mod train;

use std::fmt;

pub use config::{PipelineConfig, SplitSpec};
pub use eval::{
    detect, discover, route, run_detect, run_discover, run_eval, write_predictions, Detection,
    Discovery, EvalOutput, Route, RowOutput, ASSIGNMENTS_FILE, DETECTIONS_FILE, PREDICTIONS_FILE,
    PROJECTIONS_FILE, REPORT_FILE, ROC_FILE,
};
pub use manifest::{file_sha256, Manifest, StageRecord, MANIFEST_FILE};
pub use train::{
    load_tuning, prepare, run_calibrate, run_split, run_train, tune_discovery, PreparedData,
    TrainOutput, TuningRecord, HDBSCAN_FILE, LOSS_HISTORY_FILE, SPLIT_FILE,
};

use crate::Error;

/// Pipeline step a failure happened in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Config,
    Load,
    Split,
    Train,
    Calibrate,
    Tune,
    Detect,
    Discover,
    Evaluate,
    Write,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::Split => "split",
            Stage::Train => "train",
            Stage::Calibrate => "calibrate",
            Stage::Tune => "tune",
            Stage::Detect => "detect",
            Stage::Discover => "discover",
            Stage::Evaluate => "evaluate",
            Stage::Write => "write",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("[{stage}] {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

pub type StageResult<T> = std::result::Result<T, StageError>;

pub trait AtStage<T> {
    fn at(self, stage: Stage) -> StageResult<T>;
}

impl<T> AtStage<T> for crate::Result<T> {
    fn at(self, stage: Stage) -> StageResult<T> {
        self.map_err(|source| StageError { stage, source })
    }
}

/// Class name standing for every out-of-domain intent in multi-class scoring.
pub const OOD_CLASS: &str = "<ood>";

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
