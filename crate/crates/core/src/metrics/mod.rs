//! Detection metrics (F1, ROC/AUC) and clustering metrics (NMI, ARI,
//! Hungarian-matched accuracy, discovered vs true cluster counts).

mod classification;
mod hungarian;
mod partition;

pub use classification::{f1_scores, roc_auc, write_roc_csv, RocPoint};
pub use hungarian::{clustering_accuracy, min_cost_assignment};
pub use partition::{ari, k_report, nmi, noise_as_singletons};

use serde::{Deserialize, Serialize};

/// Cluster label of a noise row.
pub const NOISE: i64 = -1;

/// NMI / ARI / ACC of one clustering against gold labels. Noise rows count
/// as singleton clusters for NMI and ARI and as errors for ACC.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryScores {
    pub rows: usize,
    pub nmi: f64,
    pub ari: f64,
    pub acc: f64,
}

impl DiscoveryScores {
    pub fn compute<L: Eq + std::hash::Hash + Clone>(
        gold: &[L],
        pred: &[i64],
    ) -> crate::Result<Self> {
        let singletons = noise_as_singletons(pred);
        Ok(Self {
            rows: gold.len(),
            nmi: nmi(gold, &singletons)?,
            ari: ari(gold, &singletons)?,
            acc: clustering_accuracy(gold, pred)?.0,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// In-domain vs out-of-domain.
    pub macro_f1: f64,
    pub micro_f1: f64,
    /// Known intents plus one out-of-domain class.
    pub macro_f1_mc: f64,
    pub micro_f1_mc: f64,
    pub auc: f64,
    pub roc_points: Vec<RocPoint>,
    /// Clustering of gold out-of-domain rows; rows the detector missed are noise.
    pub nmi: f64,
    pub ari: f64,
    pub acc: f64,
    pub k_discovered: usize,
    pub k_star: usize,
    /// Clustering of detector-flagged rows against their true labels.
    pub flagged: DiscoveryScores,
    pub threshold: f64,
    pub n_test: usize,
    pub n_gold_ood: usize,
    pub n_flagged: usize,
}
