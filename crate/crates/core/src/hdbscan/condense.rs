use std::collections::VecDeque;

use super::mst::MstEdge;
use crate::Scalar;

/// One departure in the condensed tree. `child < n_points` is a single point
/// falling out of `parent`; otherwise `child` is a new cluster.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CondensedEdge<T> {
    pub parent: usize,
    pub child: usize,
    /// `1 / distance` at which the child leaves the parent.
    pub lambda: T,
    pub size: usize,
}

/// Cluster hierarchy pruned by `min_cluster_size`. Cluster ids start at
/// `n_points`; the root is `n_points`.
#[derive(Clone, Debug, PartialEq)]
pub struct CondensedTree<T> {
    pub n_points: usize,
    pub edges: Vec<CondensedEdge<T>>,
}

impl<T: Scalar> CondensedTree<T> {
    pub fn root(&self) -> usize {
        self.n_points
    }

    pub fn is_cluster(&self, id: usize) -> bool {
        id >= self.n_points
    }

    pub fn cluster_edges(&self) -> impl Iterator<Item = &CondensedEdge<T>> + '_ {
        self.edges.iter().filter(move |e| self.is_cluster(e.child))
    }

    pub fn point_edges(&self) -> impl Iterator<Item = &CondensedEdge<T>> + '_ {
        self.edges.iter().filter(move |e| !self.is_cluster(e.child))
    }

    /// Number of cluster ids in use, root included.
    pub fn num_clusters(&self) -> usize {
        self.cluster_edges().count() + 1
    }

    /// `parent,child,lambda,size` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("parent,child,lambda,size\n");
        for e in &self.edges {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.parent, e.child, e.lambda, e.size
            ));
        }
        out
    }
}

struct Node<T> {
    left: usize,
    right: usize,
    distance: T,
    size: usize,
}

/// Single-linkage dendrogram from MST edges merged in ascending weight
/// order. Ids `0..n` are points, `n..2n-1` merges; the last merge is the root.
fn single_linkage<T: Scalar>(edges: &[MstEdge<T>], n: usize) -> Vec<Node<T>> {
    let mut sorted: Vec<&MstEdge<T>> = edges.iter().collect();
    sorted.sort_by(|x, y| {
        x.weight
            .partial_cmp(&y.weight)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then((x.a, x.b).cmp(&(y.a, y.b)))
    });
    let mut parent: Vec<usize> = (0..2 * n).collect();
    let mut size = vec![1usize; 2 * n];
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut nodes = Vec::with_capacity(n.saturating_sub(1));
    for e in sorted {
        let (ra, rb) = (find(&mut parent, e.a), find(&mut parent, e.b));
        let id = n + nodes.len();
        parent[ra] = id;
        parent[rb] = id;
        size[id] = size[ra] + size[rb];
        nodes.push(Node {
            left: ra,
            right: rb,
            distance: e.weight,
            size: size[id],
        });
    }
    nodes
}

fn lambda_of<T: Scalar>(distance: T) -> T {
    if distance > T::zero() {
        T::one() / distance
    } else {
        T::infinity()
    }
}

/// Walks the dendrogram from the root. A split where both sides have at
/// least `min_cluster_size` points creates two child clusters; otherwise the
/// small side's points fall out of the current cluster and the large side
/// (if any) continues as that cluster.
pub fn condense_tree<T: Scalar>(
    mst: &[MstEdge<T>],
    n: usize,
    min_cluster_size: usize,
) -> CondensedTree<T> {
    let nodes = single_linkage(mst, n);
    let mut edges = Vec::new();
    if n == 0 {
        return CondensedTree { n_points: n, edges };
    }
    if nodes.is_empty() {
        edges.push(CondensedEdge {
            parent: n,
            child: 0,
            lambda: T::infinity(),
            size: 1,
        });
        return CondensedTree { n_points: n, edges };
    }
    let node_size = |id: usize| if id < n { 1 } else { nodes[id - n].size };
    let leaves_under = |id: usize| {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(x) = stack.pop() {
            if x < n {
                out.push(x);
            } else {
                stack.push(nodes[x - n].right);
                stack.push(nodes[x - n].left);
            }
        }
        out
    };

    let root = n + nodes.len() - 1;
    let mut next_cluster = n + 1;
    // (dendrogram node, cluster it belongs to)
    let mut queue = VecDeque::from([(root, n)]);
    while let Some((id, cluster)) = queue.pop_front() {
        if id < n {
            // a lone point reached as a cluster continuation
            edges.push(CondensedEdge {
                parent: cluster,
                child: id,
                lambda: T::infinity(),
                size: 1,
            });
            continue;
        }
        let node = &nodes[id - n];
        let lambda = lambda_of(node.distance);
        let (l, r) = (node.left, node.right);
        let (l_big, r_big) = (
            node_size(l) >= min_cluster_size,
            node_size(r) >= min_cluster_size,
        );
        let fall_out = |side: usize, edges: &mut Vec<CondensedEdge<T>>| {
            for p in leaves_under(side) {
                edges.push(CondensedEdge {
                    parent: cluster,
                    child: p,
                    lambda,
                    size: 1,
                });
            }
        };
        match (l_big, r_big) {
            (true, true) => {
                for side in [l, r] {
                    let c = next_cluster;
                    next_cluster += 1;
                    edges.push(CondensedEdge {
                        parent: cluster,
                        child: c,
                        lambda,
                        size: node_size(side),
                    });
                    queue.push_back((side, c));
                }
            }
            (true, false) => {
                fall_out(r, &mut edges);
                queue.push_back((l, cluster));
            }
            (false, true) => {
                fall_out(l, &mut edges);
                queue.push_back((r, cluster));
            }
            (false, false) => {
                fall_out(l, &mut edges);
                fall_out(r, &mut edges);
            }
        }
    }
    CondensedTree { n_points: n, edges }
}
