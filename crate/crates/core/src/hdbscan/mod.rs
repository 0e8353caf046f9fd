//! Density-based clustering: core distances, mutual-reachability MST,
//! condensed tree, leaf selection with an epsilon merge threshold, and a
//! grid search over hyperparameters.

mod condense;
mod mst;
mod select;
mod tune;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use condense::{condense_tree, CondensedEdge, CondensedTree};
pub use mst::{build_mst, core_distances, mutual_reachability, MstEdge, MutualReachability};
pub use select::{label_points, select_leaves};
pub use tune::{default_grid, tune_hyperparams, TuneGrid, TuneResult, TuneRow};

use crate::linalg::Matrix;
use crate::{Error, Result, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HdbscanConfig {
    pub min_samples: usize,
    pub min_cluster_size: usize,
    pub cluster_selection_epsilon: f64,
}

impl Default for HdbscanConfig {
    fn default() -> Self {
        Self {
            min_samples: 5,
            min_cluster_size: 10,
            cluster_selection_epsilon: 0.0,
        }
    }
}

impl HdbscanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_samples < 1 {
            return Err(Error::InvalidConfig(
                "min_samples must be at least 1".into(),
            ));
        }
        if self.min_cluster_size < 2 {
            return Err(Error::InvalidConfig(
                "min_cluster_size must be at least 2".into(),
            ));
        }
        if !(self.cluster_selection_epsilon >= 0.0) || !self.cluster_selection_epsilon.is_finite() {
            return Err(Error::InvalidConfig(
                "cluster_selection_epsilon must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Per-row cluster labels (`-1` for noise) and the number of clusters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<i64>,
    pub k: usize,
}

#[derive(Clone, Debug)]
pub struct HdbscanFit<T> {
    pub tree: CondensedTree<T>,
    pub selected: Vec<usize>,
    pub assignment: ClusterAssignment,
}

pub fn fit<T: Scalar>(points: &Matrix<T>, config: &HdbscanConfig) -> Result<HdbscanFit<T>> {
    config.validate()?;
    let cores = core_distances(points, config.min_samples)?;
    let mst = build_mst(points, &cores)?;
    let tree = condense_tree(&mst, points.rows(), config.min_cluster_size);
    let selected = select_leaves(&tree, config.cluster_selection_epsilon);
    let labels = label_points(&tree, &selected);
    let k = labels.iter().copied().max().map_or(0, |m| (m + 1) as usize);
    Ok(HdbscanFit {
        tree,
        selected,
        assignment: ClusterAssignment { labels, k },
    })
}

pub fn fit_predict<T: Scalar>(
    points: &Matrix<T>,
    config: &HdbscanConfig,
) -> Result<ClusterAssignment> {
    Ok(fit(points, config)?.assignment)
}

/// `row_index,cluster_label` rows.
pub fn write_assignments(row_index: &[usize], labels: &[i64], path: &Path) -> Result<()> {
    if row_index.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: row_index.len(),
            right: labels.len(),
        });
    }
    let mut out = String::from("row_index,cluster_label\n");
    for (r, l) in row_index.iter().zip(labels) {
        out.push_str(&format!("{r},{l}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_tree<T: Scalar>(tree: &CondensedTree<T>, path: &Path) -> Result<()> {
    std::fs::write(path, tree.to_csv()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(HdbscanConfig::default().validate().is_ok());
        let bad = |f: fn(&mut HdbscanConfig)| {
            let mut c = HdbscanConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.min_samples = 0));
        assert!(bad(|c| c.min_cluster_size = 1));
        assert!(bad(|c| c.cluster_selection_epsilon = -0.1));
        assert!(bad(|c| c.cluster_selection_epsilon = f64::NAN));
    }

    #[test]
    fn two_groups_on_a_line() {
        let xs: Vec<f64> = (0..12)
            .map(|i| {
                if i < 6 {
                    i as f64 * 0.1
                } else {
                    100.0 + i as f64 * 0.1
                }
            })
            .collect();
        let pts = Matrix::from_vec(12, 1, xs).unwrap();
        let cfg = HdbscanConfig {
            min_samples: 2,
            min_cluster_size: 3,
            cluster_selection_epsilon: 0.0,
        };
        let a = fit_predict(&pts, &cfg).unwrap();
        assert_eq!(a.k, 2);
        assert_eq!(a.labels, vec![0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1]);
    }

    #[test]
    fn writers_emit_headers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        write_assignments(&[3, 9], &[0, -1], &p).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "row_index,cluster_label\n3,0\n9,-1\n"
        );
        assert!(write_assignments(&[1], &[], &p).is_err());
    }
}
