use std::hash::Hash;

use serde::{Deserialize, Serialize};

use super::mst::{build_mst, core_distances};
use super::{condense::condense_tree, select::label_points, select::select_leaves, HdbscanConfig};
use crate::linalg::Matrix;
use crate::metrics::{ari, noise_as_singletons};
use crate::{Error, Result, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneGrid {
    pub min_cluster_size: Vec<usize>,
    pub min_samples: Vec<usize>,
    pub cluster_selection_epsilon: Vec<f64>,
}

impl Default for TuneGrid {
    fn default() -> Self {
        default_grid()
    }
}

impl TuneGrid {
    pub fn configs(&self) -> Vec<HdbscanConfig> {
        let mut out = Vec::new();
        for &min_cluster_size in &self.min_cluster_size {
            for &min_samples in &self.min_samples {
                for &cluster_selection_epsilon in &self.cluster_selection_epsilon {
                    out.push(HdbscanConfig {
                        min_samples,
                        min_cluster_size,
                        cluster_selection_epsilon,
                    });
                }
            }
        }
        out
    }
}

pub fn default_grid() -> TuneGrid {
    TuneGrid {
        min_cluster_size: vec![5, 10, 15, 25],
        min_samples: vec![1, 5, 10],
        cluster_selection_epsilon: vec![0.0, 0.01, 0.05, 0.1],
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneRow {
    pub config: HdbscanConfig,
    /// `None` when the configuration could not be run on this data.
    pub ari: Option<f64>,
    pub k: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: HdbscanConfig,
    pub best_ari: f64,
    pub table: Vec<TuneRow>,
}

/// Grid search scored by ARI against `labels`, noise rows counted as
/// singletons. The first configuration reaching the top score wins.
pub fn tune_hyperparams<T: Scalar, L: Eq + Hash>(
    points: &Matrix<T>,
    labels: &[L],
    grid: &TuneGrid,
) -> Result<TuneResult> {
    if labels.len() != points.rows() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: points.rows(),
        });
    }
    let configs = grid.configs();
    if configs.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut table = Vec::with_capacity(configs.len());
    let mut msts = std::collections::HashMap::new();
    for config in configs {
        let row = match config.validate() {
            Err(_) => TuneRow {
                config,
                ari: None,
                k: 0,
            },
            Ok(()) => {
                let mst = msts.entry(config.min_samples).or_insert_with(|| {
                    core_distances(points, config.min_samples)
                        .and_then(|cores| build_mst(points, &cores))
                        .ok()
                });
                match mst {
                    None => TuneRow {
                        config,
                        ari: None,
                        k: 0,
                    },
                    Some(mst) => {
                        let tree = condense_tree(mst, points.rows(), config.min_cluster_size);
                        let selected = select_leaves(&tree, config.cluster_selection_epsilon);
                        let pred = label_points(&tree, &selected);
                        TuneRow {
                            config,
                            ari: ari(labels, &noise_as_singletons(&pred)).ok(),
                            k: selected.len(),
                        }
                    }
                }
            }
        };
        table.push(row);
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, row) in table.iter().enumerate() {
        if let Some(a) = row.ari {
            if best.is_none_or(|(_, b)| a > b) {
                best = Some((i, a));
            }
        }
    }
    let (i, best_ari) = best.ok_or(Error::TooFewPoints {
        n: points.rows(),
        min_samples: grid.min_samples.iter().copied().min().unwrap_or(0),
    })?;
    Ok(TuneResult {
        best: table[i].config.clone(),
        best_ari,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> (Matrix<f64>, Vec<usize>) {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for b in 0..3 {
            for i in 0..20 {
                let t = i as f64;
                rows.push(vec![b as f64 * 30.0 + (t * 0.7).sin(), (t * 1.9).cos()]);
                labels.push(b);
            }
        }
        (Matrix::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn grid_order_and_size() {
        let g = default_grid();
        let c = g.configs();
        assert_eq!(c.len(), 48);
        assert_eq!((c[0].min_cluster_size, c[0].min_samples), (5, 1));
        assert_eq!(c[1].cluster_selection_epsilon, 0.01);
    }

    #[test]
    fn finds_perfect_config_and_skips_invalid() {
        let (pts, labels) = blobs();
        let grid = TuneGrid {
            min_cluster_size: vec![8, 100],
            min_samples: vec![2, 80],
            cluster_selection_epsilon: vec![0.0],
        };
        let r = tune_hyperparams(&pts, &labels, &grid).unwrap();
        assert_eq!(r.best_ari, 1.0);
        assert_eq!(r.best.min_cluster_size, 8);
        assert_eq!(r.table.len(), 4);
        assert!(r
            .table
            .iter()
            .filter(|t| t.config.min_samples == 80)
            .all(|t| t.ari.is_none()));
    }

    #[test]
    fn empty_grid_errors() {
        let (pts, labels) = blobs();
        let grid = TuneGrid {
            min_cluster_size: vec![],
            min_samples: vec![1],
            cluster_selection_epsilon: vec![0.0],
        };
        assert!(matches!(
            tune_hyperparams(&pts, &labels, &grid),
            Err(Error::EmptyGrid)
        ));
    }
}
