use crate::linalg::{euclidean, Matrix};
use crate::{Error, Result, Scalar};

/// Distance from each point to its `min_samples`-th nearest neighbour,
/// the point itself excluded.
pub fn core_distances<T: Scalar>(points: &Matrix<T>, min_samples: usize) -> Result<Vec<T>> {
    let n = points.rows();
    if min_samples == 0 || n <= min_samples {
        return Err(Error::TooFewPoints { n, min_samples });
    }
    let mut dists = Vec::with_capacity(n - 1);
    Ok((0..n)
        .map(|i| {
            dists.clear();
            dists.extend(
                (0..n)
                    .filter(|&j| j != i)
                    .map(|j| euclidean(points.row(i), points.row(j))),
            );
            let (_, kth, _) = dists.select_nth_unstable_by(min_samples - 1, |a, b| {
                a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal)
            });
            *kth
        })
        .collect())
}

/// `max(core(a), core(b), d(a, b))` over an implicit complete graph.
pub struct MutualReachability<'a, T> {
    points: &'a Matrix<T>,
    cores: &'a [T],
}

impl<'a, T: Scalar> MutualReachability<'a, T> {
    pub fn new(points: &'a Matrix<T>, cores: &'a [T]) -> Result<Self> {
        if cores.len() != points.rows() {
            return Err(Error::LengthMismatch {
                left: cores.len(),
                right: points.rows(),
            });
        }
        Ok(Self { points, cores })
    }

    pub fn len(&self) -> usize {
        self.cores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cores.is_empty()
    }

    pub fn distance(&self, a: usize, b: usize) -> T {
        let d = euclidean(self.points.row(a), self.points.row(b));
        d.max(self.cores[a]).max(self.cores[b])
    }
}

pub fn mutual_reachability<'a, T: Scalar>(
    points: &'a Matrix<T>,
    cores: &'a [T],
) -> Result<MutualReachability<'a, T>> {
    MutualReachability::new(points, cores)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MstEdge<T> {
    /// Lower endpoint index.
    pub a: usize,
    pub b: usize,
    pub weight: T,
}

/// Prim's algorithm over the mutual-reachability graph. Among equal
/// candidate weights the lowest vertex (then lowest tree endpoint) wins.
pub fn build_mst<T: Scalar>(points: &Matrix<T>, cores: &[T]) -> Result<Vec<MstEdge<T>>> {
    let n = points.rows();
    if n < 2 {
        return Err(Error::TooFewPoints { n, min_samples: 1 });
    }
    let graph = MutualReachability::new(points, cores)?;
    let mut in_tree = vec![false; n];
    let mut best = vec![T::infinity(); n];
    let mut parent = vec![usize::MAX; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            let d = graph.distance(current, v);
            if d < best[v] || (d == best[v] && current < parent[v]) {
                best[v] = d;
                parent[v] = current;
            }
        }
        let mut next = usize::MAX;
        for v in 0..n {
            if !in_tree[v] && (next == usize::MAX || best[v] < best[next]) {
                next = v;
            }
        }
        in_tree[next] = true;
        let p = parent[next];
        edges.push(MstEdge {
            a: p.min(next),
            b: p.max(next),
            weight: best[next],
        });
        current = next;
    }
    Ok(edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> Matrix<f64> {
        Matrix::from_vec(xs.len(), 1, xs.to_vec()).unwrap()
    }

    #[test]
    fn collinear_core_distances() {
        assert_eq!(
            core_distances(&line(&[0.0, 1.0, 3.0]), 1).unwrap(),
            vec![1.0, 1.0, 2.0]
        );
        assert_eq!(core_distances(&line(&[2.0, 2.0, 9.0]), 1).unwrap()[0], 0.0);
        assert!(core_distances(&line(&[0.0, 1.0]), 2).is_err());
    }

    #[test]
    fn mutual_reachability_max_rule() {
        let pts = line(&[0.0, 100.0]);
        let mr = mutual_reachability(&pts, &[1.0, 1.0]).unwrap();
        assert_eq!(mr.distance(0, 1), 100.0);
        let pts = line(&[0.0, 0.1]);
        let mr = mutual_reachability(&pts, &[5.0, 1.0]).unwrap();
        assert_eq!(mr.distance(0, 1), 5.0);
        assert_eq!(mr.distance(1, 0), 5.0);
    }

    #[test]
    fn three_point_mst_by_enumeration() {
        let pts = line(&[0.0, 1.0, 3.0]);
        let cores = core_distances(&pts, 1).unwrap();
        let mr = mutual_reachability(&pts, &cores).unwrap();
        // the three spanning trees of K3, each omitting one edge
        let w = |a, b| mr.distance(a, b);
        let trees = [
            ([(0, 1), (1, 2)], w(0, 1) + w(1, 2)),
            ([(0, 1), (0, 2)], w(0, 1) + w(0, 2)),
            ([(0, 2), (1, 2)], w(0, 2) + w(1, 2)),
        ];
        let best = trees
            .iter()
            .min_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
            .unwrap();
        let mst = build_mst(&pts, &cores).unwrap();
        let mut got: Vec<(usize, usize)> = mst.iter().map(|e| (e.a, e.b)).collect();
        got.sort();
        assert_eq!(got, best.0.to_vec());
        let total: f64 = mst.iter().map(|e| e.weight).sum();
        assert_eq!(total, best.1);
    }

    #[test]
    fn duplicates_give_zero_edge() {
        let pts = line(&[5.0, 5.0, 8.0, 9.0]);
        let cores = core_distances(&pts, 1).unwrap();
        let mst = build_mst(&pts, &cores).unwrap();
        assert!(mst.iter().any(|e| e.weight == 0.0 && (e.a, e.b) == (0, 1)));
        assert!(build_mst(&line(&[1.0]), &[0.0]).is_err());
    }
}
