use std::hash::Hash;

use super::partition::Contingency;
use super::NOISE;
use crate::{Error, Result};

/// Minimum-cost perfect matching on a square cost matrix (Kuhn–Munkres with
/// row/column potentials, O(n³)). Returns `assignment[row] = column`.
pub fn min_cost_assignment(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based internals; column 0 is a virtual start
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if row_of[j] > 0 {
            assignment[row_of[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Clustering accuracy under the best one-to-one map from predicted clusters
/// to gold labels. Noise rows (`-1`) are always wrong; clusters or labels
/// left unmatched (when their counts differ) contribute nothing.
///
/// Returns the accuracy and the matched `(cluster, gold label)` pairs that
/// cover at least one row.
pub fn clustering_accuracy<L: Eq + Hash + Clone>(
    gold: &[L],
    pred: &[i64],
) -> Result<(f64, Vec<(i64, L)>)> {
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: gold.len(),
            right: pred.len(),
        });
    }
    if gold.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let kept: Vec<usize> = (0..pred.len()).filter(|&i| pred[i] != NOISE).collect();
    let kept_pred: Vec<i64> = kept.iter().map(|&i| pred[i]).collect();
    let kept_gold: Vec<L> = kept.iter().map(|&i| gold[i].clone()).collect();
    if kept.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let table = Contingency::new(&kept_pred, &kept_gold)?;
    let clusters = first_seen(&kept_pred);
    let labels = first_seen(&kept_gold);

    let size = clusters.len().max(labels.len());
    let max = table.counts.iter().flatten().copied().max().unwrap_or(0) as i64;
    let mut cost = vec![vec![max; size]; size];
    for (i, row) in table.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            cost[i][j] = max - c as i64;
        }
    }
    let assignment = min_cost_assignment(&cost);
    let mut matched = 0usize;
    let mut mapping = Vec::new();
    for (i, &j) in assignment.iter().enumerate() {
        if i < clusters.len() && j < labels.len() && table.counts[i][j] > 0 {
            matched += table.counts[i][j];
            mapping.push((clusters[i], labels[j].clone()));
        }
    }
    Ok((matched as f64 / gold.len() as f64, mapping))
}

fn first_seen<L: Eq + Hash + Clone>(labels: &[L]) -> Vec<L> {
    let mut seen = std::collections::HashSet::new();
    labels.iter().filter(|l| seen.insert(*l)).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assignment_small() {
        let cost = vec![vec![4, 1, 3], vec![2, 0, 5], vec![3, 2, 2]];
        let a = min_cost_assignment(&cost);
        let total: i64 = a.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        assert_eq!(total, 5);
    }

    #[test]
    fn permutation_recovered() {
        let gold = ["x", "x", "y", "z", "z", "z"];
        let pred = [2, 2, 0, 1, 1, 1];
        let (acc, map) = clustering_accuracy(&gold, &pred).unwrap();
        assert_eq!(acc, 1.0);
        assert!(map.contains(&(2, "x")) && map.contains(&(0, "y")) && map.contains(&(1, "z")));
    }

    #[test]
    fn noise_is_always_wrong() {
        assert_eq!(clustering_accuracy(&["a", "b"], &[-1, -1]).unwrap().0, 0.0);
        let (acc, _) = clustering_accuracy(&["a", "a", "b", "b"], &[0, -1, 1, 1]).unwrap();
        assert_eq!(acc, 0.75);
        assert!(clustering_accuracy(&["a"], &[0, 1]).is_err());
    }

    #[test]
    fn more_clusters_than_labels() {
        let (acc, map) = clustering_accuracy(&["a", "a", "a", "b"], &[0, 1, 1, 2]).unwrap();
        assert_eq!(acc, 0.75);
        assert_eq!(map.len(), 2);
    }
}
