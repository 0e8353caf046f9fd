use std::collections::{HashMap, HashSet};

use super::condense::CondensedTree;
use crate::metrics::NOISE;
use crate::Scalar;

struct ClusterIndex<T> {
    parent: HashMap<usize, usize>,
    birth: HashMap<usize, T>,
    children: HashMap<usize, Vec<usize>>,
}

impl<T: Scalar> ClusterIndex<T> {
    fn new(tree: &CondensedTree<T>) -> Self {
        let mut parent = HashMap::new();
        let mut birth = HashMap::new();
        let mut children: HashMap<usize, Vec<usize>> = HashMap::new();
        for e in tree.cluster_edges() {
            parent.insert(e.child, e.parent);
            birth.insert(e.child, e.lambda);
            children.entry(e.parent).or_default().push(e.child);
        }
        Self {
            parent,
            birth,
            children,
        }
    }

    /// Distance at which the cluster splits off its parent.
    fn birth_distance(&self, c: usize) -> f64 {
        let lambda = self.birth[&c].to_f64_lossy();
        if lambda > 0.0 {
            1.0 / lambda
        } else {
            f64::INFINITY
        }
    }

    fn descendants(&self, c: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![c];
        while let Some(x) = stack.pop() {
            if let Some(kids) = self.children.get(&x) {
                out.extend(kids);
                stack.extend(kids);
            }
        }
        out
    }

    fn has_ancestor_in(&self, c: usize, set: &HashSet<usize>) -> bool {
        let mut cur = c;
        while let Some(&p) = self.parent.get(&cur) {
            if set.contains(&p) {
                return true;
            }
            cur = p;
        }
        false
    }
}

/// Climbs from a leaf born below `eps` to the first ancestor born above it,
/// stopping below the root.
fn traverse_upwards<T: Scalar>(idx: &ClusterIndex<T>, root: usize, eps: f64, leaf: usize) -> usize {
    let mut cur = leaf;
    loop {
        let p = idx.parent[&cur];
        if p == root {
            return cur;
        }
        if idx.birth_distance(p) > eps {
            return p;
        }
        cur = p;
    }
}

/// Leaf clusters of the condensed tree. With `eps > 0`, leaves that split
/// off at a distance below `eps` are replaced by the nearest ancestor that
/// formed above it. The root is never selected. Returned ids are sorted.
pub fn select_leaves<T: Scalar>(tree: &CondensedTree<T>, eps: f64) -> Vec<usize> {
    let idx = ClusterIndex::new(tree);
    let mut leaves: Vec<usize> = idx
        .parent
        .keys()
        .copied()
        .filter(|c| !idx.children.contains_key(c))
        .collect();
    leaves.sort_unstable();

    let mut selected = HashSet::new();
    if eps <= 0.0 {
        selected.extend(leaves);
    } else {
        let mut processed = HashSet::new();
        for leaf in leaves {
            if idx.birth_distance(leaf) < eps {
                if processed.contains(&leaf) {
                    continue;
                }
                let chosen = traverse_upwards(&idx, tree.root(), eps, leaf);
                selected.insert(chosen);
                processed.extend(idx.descendants(chosen));
            } else {
                selected.insert(leaf);
            }
        }
    }
    // an ancestor chosen after one of its leaves absorbs that leaf
    let mut out: Vec<usize> = selected
        .iter()
        .copied()
        .filter(|&c| !idx.has_ancestor_in(c, &selected))
        .collect();
    out.sort_unstable();
    out
}

/// Labels each point with the selected cluster at or above the cluster it
/// fell out of, or noise if none. Labels are numbered `0..k` in order of the
/// first point carrying them.
pub fn label_points<T: Scalar>(tree: &CondensedTree<T>, selected: &[usize]) -> Vec<i64> {
    let idx = ClusterIndex::new(tree);
    let selected: HashSet<usize> = selected.iter().copied().collect();
    let mut home = vec![tree.root(); tree.n_points];
    for e in tree.point_edges() {
        home[e.child] = e.parent;
    }
    let raw: Vec<Option<usize>> = home
        .iter()
        .map(|&h| {
            let mut cur = h;
            loop {
                if selected.contains(&cur) {
                    return Some(cur);
                }
                cur = *idx.parent.get(&cur)?;
            }
        })
        .collect();
    let mut renumber = HashMap::new();
    raw.into_iter()
        .map(|c| match c {
            Some(c) => {
                let next = renumber.len() as i64;
                *renumber.entry(c).or_insert(next)
            }
            None => NOISE,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hdbscan::condense::CondensedEdge;

    fn edge(parent: usize, child: usize, lambda: f64, size: usize) -> CondensedEdge<f64> {
        CondensedEdge {
            parent,
            child,
            lambda,
            size,
        }
    }

    /// 8 points: root 8 splits at d=10 into 9 {0..3} and 10 {4..7};
    /// 10 splits at d=0.5 into 11 {4,5} and 12 {6,7}.
    fn nested() -> CondensedTree<f64> {
        let mut edges = vec![
            edge(8, 9, 0.1, 4),
            edge(8, 10, 0.1, 4),
            edge(10, 11, 2.0, 2),
            edge(10, 12, 2.0, 2),
        ];
        for p in 0..4 {
            edges.push(edge(9, p, 1.0, 1));
        }
        for (c, ps) in [(11, [4, 5]), (12, [6, 7])] {
            for p in ps {
                edges.push(edge(c, p, 5.0, 1));
            }
        }
        CondensedTree { n_points: 8, edges }
    }

    #[test]
    fn leaves_without_epsilon() {
        let t = nested();
        assert_eq!(select_leaves(&t, 0.0), vec![9, 11, 12]);
        assert_eq!(label_points(&t, &[9, 11, 12]), vec![0, 0, 0, 0, 1, 1, 2, 2]);
    }

    #[test]
    fn epsilon_merges_late_splits() {
        let t = nested();
        // 11 and 12 split off at distance 0.5 < 1, so 10 (born at 10) is used
        assert_eq!(select_leaves(&t, 1.0), vec![9, 10]);
        assert_eq!(label_points(&t, &[9, 10]), vec![0, 0, 0, 0, 1, 1, 1, 1]);
        // 9 and 10 are born below 20 too, but the root is never taken
        assert_eq!(select_leaves(&t, 20.0), vec![9, 10]);
    }

    #[test]
    fn root_only_tree_is_all_noise() {
        let t = CondensedTree {
            n_points: 3,
            edges: (0..3).map(|p| edge(3, p, 1.0, 1)).collect(),
        };
        assert!(select_leaves(&t, 0.0).is_empty());
        assert_eq!(label_points(&t, &[]), vec![NOISE; 3]);
    }

    #[test]
    fn points_leaving_above_selection_are_noise() {
        let mut t = nested();
        // point 7 now falls out of cluster 10 before it splits
        t.edges.retain(|e| e.child != 7);
        t.edges.push(edge(10, 7, 0.5, 1));
        assert_eq!(label_points(&t, &[9, 11, 12])[7], NOISE);
        assert_eq!(label_points(&t, &[9, 10])[7], 1);
    }
}
