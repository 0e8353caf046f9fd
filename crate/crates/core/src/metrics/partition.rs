use std::collections::{HashMap, HashSet};
use std::hash::Hash;

use super::NOISE;
use crate::{Error, Result};

/// Cross-tabulation of two labelings; rows follow `a`'s labels, columns
/// `b`'s, both in order of first appearance.
pub(crate) struct Contingency {
    pub counts: Vec<Vec<usize>>,
    pub n: usize,
}

impl Contingency {
    pub fn new<A: Eq + Hash, B: Eq + Hash>(a: &[A], b: &[B]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::LengthMismatch {
                left: a.len(),
                right: b.len(),
            });
        }
        let ia = first_appearance(a);
        let ib = first_appearance(b);
        let mut counts = vec![vec![0usize; ib.len()]; ia.len()];
        for (x, y) in a.iter().zip(b) {
            counts[ia[x]][ib[y]] += 1;
        }
        Ok(Self { counts, n: a.len() })
    }

    fn row_sums(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    fn col_sums(&self) -> Vec<usize> {
        let cols = self.counts.first().map_or(0, Vec::len);
        (0..cols)
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }
}

fn first_appearance<L: Eq + Hash>(labels: &[L]) -> HashMap<&L, usize> {
    let mut map = HashMap::new();
    for l in labels {
        let next = map.len();
        map.entry(l).or_insert(next);
    }
    map
}

fn entropy(sums: &[usize], n: usize) -> f64 {
    let n = n as f64;
    sums.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information, normalized by the arithmetic mean of the
/// two entropies (natural log).
pub fn nmi<A: Eq + Hash, B: Eq + Hash>(gold: &[A], pred: &[B]) -> Result<f64> {
    let c = Contingency::new(gold, pred)?;
    let (rows, cols) = (c.row_sums(), c.col_sums());
    let (hu, hv) = (entropy(&rows, c.n), entropy(&cols, c.n));
    if hu == 0.0 || hv == 0.0 {
        // two single-cluster partitions are identical
        return Ok(if hu == 0.0 && hv == 0.0 { 1.0 } else { 0.0 });
    }
    let n = c.n as f64;
    let mut mi = 0.0;
    for (i, row) in c.counts.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij == 0 {
                continue;
            }
            let nij = nij as f64;
            mi += nij / n * (n * nij / (rows[i] as f64 * cols[j] as f64)).ln();
        }
    }
    Ok((mi / ((hu + hv) / 2.0)).clamp(0.0, 1.0))
}

fn comb2(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index. Returns 1 when the index cannot deviate from its
/// expectation (both partitions trivial in the same way).
pub fn ari<A: Eq + Hash, B: Eq + Hash>(gold: &[A], pred: &[B]) -> Result<f64> {
    let c = Contingency::new(gold, pred)?;
    let index: f64 = c.counts.iter().flatten().map(|&v| comb2(v)).sum();
    let sum_a: f64 = c.row_sums().into_iter().map(comb2).sum();
    let sum_b: f64 = c.col_sums().into_iter().map(comb2).sum();
    let total = comb2(c.n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_a * sum_b / total;
    let max = (sum_a + sum_b) / 2.0;
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// `(k, k_star)`: distinct non-noise predicted clusters and distinct gold labels.
pub fn k_report<L: Eq + Hash>(pred: &[i64], gold: &[L]) -> Result<(usize, usize)> {
    if pred.len() != gold.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: gold.len(),
        });
    }
    let k = pred
        .iter()
        .filter(|&&p| p != NOISE)
        .collect::<HashSet<_>>()
        .len();
    let k_star = gold.iter().collect::<HashSet<_>>().len();
    Ok((k, k_star))
}

/// Replaces each noise label with a fresh singleton id so pair-counting
/// metrics treat every noise row as its own (wrong) cluster.
pub fn noise_as_singletons(labels: &[i64]) -> Vec<i64> {
    let mut next = labels.iter().copied().max().unwrap_or(0).max(0) + 1;
    labels
        .iter()
        .map(|&l| {
            if l == NOISE {
                next += 1;
                next - 1
            } else {
                l
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Pair-counting oracle: enumerate all pairs, then the Hubert–Arabie form.
    fn ari_by_pairs(a: &[i64], b: &[i64]) -> f64 {
        let (mut ss, mut sd, mut ds, mut dd) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..a.len() {
            for j in i + 1..a.len() {
                match (a[i] == a[j], b[i] == b[j]) {
                    (true, true) => ss += 1.0,
                    (true, false) => sd += 1.0,
                    (false, true) => ds += 1.0,
                    (false, false) => dd += 1.0,
                }
            }
        }
        2.0 * (ss * dd - sd * ds) / ((ss + sd) * (sd + dd) + (ss + ds) * (ds + dd))
    }

    #[test]
    fn ari_four_point_example() {
        let gold = [0i64, 0, 1, 1];
        let pred = [0i64, 0, 1, 2];
        let v = ari(&gold, &pred).unwrap();
        assert!((v - ari_by_pairs(&gold, &pred)).abs() < 1e-12);
        assert!((v - 4.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn ari_trivial_cases() {
        let g = [3i64, 3, 1, 1, 2, 2];
        assert_eq!(ari(&g, &g).unwrap(), 1.0);
        assert_eq!(ari(&g, &[0i64; 6]).unwrap(), 0.0);
        assert!(ari(&g, &[0i64; 5]).is_err());
    }

    #[test]
    fn nmi_examples() {
        let g = [0i64, 0, 1, 1, 2, 2];
        assert!((nmi(&g, &g).unwrap() - 1.0).abs() < 1e-12);
        // halves vs parity: product contingency
        let halves = [0i64, 0, 0, 0, 1, 1, 1, 1];
        let parity = [0i64, 1, 0, 1, 0, 1, 0, 1];
        assert!(nmi(&halves, &parity).unwrap().abs() < 1e-12);
        assert_eq!(nmi(&[1i64, 1, 1], &[5i64, 5, 5]).unwrap(), 1.0);
        assert_eq!(nmi(&[1i64, 1, 1], &[5i64, 6, 5]).unwrap(), 0.0);
    }

    #[test]
    fn nmi_four_point_contingency() {
        // contingency [[1,1],[0,2]] computed directly
        let gold = [0i64, 0, 1, 1];
        let pred = [0i64, 1, 1, 1];
        let n = 4.0f64;
        let h = |ps: &[f64]| -ps.iter().map(|p| p * p.ln()).sum::<f64>();
        let hu = h(&[0.5, 0.5]);
        let hv = h(&[0.25, 0.75]);
        let cells = [(1.0, 2.0, 1.0), (1.0, 2.0, 3.0), (2.0, 2.0, 3.0)];
        let mi: f64 = cells
            .iter()
            .map(|&(nij, a, b)| nij / n * (n * nij / (a * b)).ln())
            .sum();
        let expect = mi / ((hu + hv) / 2.0);
        assert!((nmi(&gold, &pred).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn k_and_singletons() {
        assert_eq!(k_report(&[-1, -1, -1], &["a", "b", "a"]).unwrap(), (0, 2));
        assert_eq!(
            k_report(&[0, 1, -1, 1], &["a", "b", "a", "c"]).unwrap(),
            (2, 3)
        );
        assert_eq!(noise_as_singletons(&[0, -1, 1, -1]), vec![0, 2, 1, 3]);
    }
}
