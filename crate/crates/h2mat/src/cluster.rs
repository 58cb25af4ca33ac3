//! Cluster trees over point sets.
//!
//! A cluster tree recursively partitions the index set `{0, .., n-1}` of a
//! point cloud. Every node ("cluster") owns a contiguous range of the
//! permuted index order, an axis-aligned bounding box of its points, and
//! either zero or two sons whose ranges partition the father's range. The
//! permutation mapping tree positions back to original indices is stored on
//! the tree; matrices built on top of a tree live entirely in tree order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a cluster within its tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClusterId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl BoundingBox {
    fn of_points(points: &[Vec<f64>], idx: &[usize], dim: usize) -> Self {
        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        for &i in idx {
            for d in 0..dim {
                min[d] = min[d].min(points[i][d]);
                max[d] = max[d].max(points[i][d]);
            }
        }
        BoundingBox { min, max }
    }

    pub fn diameter(&self) -> f64 {
        self.min
            .iter()
            .zip(&self.max)
            .map(|(lo, hi)| (hi - lo) * (hi - lo))
            .sum::<f64>()
            .sqrt()
    }

    /// Euclidean distance between two boxes (zero if they intersect).
    pub fn distance(&self, other: &BoundingBox) -> f64 {
        self.min
            .iter()
            .zip(&self.max)
            .zip(other.min.iter().zip(&other.max))
            .map(|((alo, ahi), (blo, bhi))| {
                let gap = (blo - ahi).max(alo - bhi).max(0.0);
                gap * gap
            })
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cluster {
    pub id: ClusterId,
    /// Range in tree (permuted) order, `begin..end`.
    pub begin: usize,
    pub end: usize,
    pub level: usize,
    pub sons: Option<(ClusterId, ClusterId)>,
    pub father: Option<ClusterId>,
    pub bbox: BoundingBox,
}

impl Cluster {
    pub fn size(&self) -> usize {
        self.end - self.begin
    }

    pub fn is_leaf(&self) -> bool {
        self.sons.is_none()
    }
}

/// How index sets are split while building the tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClusterStrategy {
    /// Split the longest box axis at its midpoint.
    GeometricBisection,
    /// Nested-dissection flavored splitting: a thin separator band around
    /// the splitting plane is ordered last, after the two interior halves.
    /// Within the binary tree this appears as `t -> (interiors, separator)`
    /// with the interior node split into the two halves.
    DomainDecomposition,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterTree {
    dim: usize,
    leaf_size: usize,
    nodes: Vec<Cluster>,
    root: ClusterId,
    /// `perm[pos]` is the original index stored at tree position `pos`.
    perm: Vec<usize>,
    /// `inv_perm[original]` is the tree position of an original index.
    inv_perm: Vec<usize>,
    depth: usize,
}

impl ClusterTree {
    pub fn root(&self) -> ClusterId {
        self.root
    }

    pub fn cluster(&self, id: ClusterId) -> &Cluster {
        &self.nodes[id.0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of indices below the root.
    pub fn n_indices(&self) -> usize {
        self.perm.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// Tree position of an original index.
    pub fn position_of(&self, original: usize) -> usize {
        self.inv_perm[original]
    }

    pub fn clusters(&self) -> impl Iterator<Item = &Cluster> {
        self.nodes.iter()
    }

    /// Preorder walk of the subtree rooted at `t`.
    pub fn descendants(&self, t: ClusterId) -> Vec<ClusterId> {
        let mut out = Vec::new();
        let mut stack = vec![t];
        while let Some(c) = stack.pop() {
            out.push(c);
            if let Some((a, b)) = self.nodes[c.0].sons {
                stack.push(b);
                stack.push(a);
            }
        }
        out
    }

    /// Clusters from the root down to `t`, inclusive.
    pub fn path_from_root(&self, t: ClusterId) -> Vec<ClusterId> {
        let mut path = vec![t];
        let mut cur = t;
        while let Some(f) = self.nodes[cur.0].father {
            path.push(f);
            cur = f;
        }
        path.reverse();
        path
    }

    /// Human-readable position of a cluster, e.g. `root.0.1`.
    pub fn path_label(&self, t: ClusterId) -> String {
        let path = self.path_from_root(t);
        let mut label = String::from("root");
        for pair in path.windows(2) {
            let (father, son) = (pair[0], pair[1]);
            let (s0, _) = self.nodes[father.0].sons.expect("path steps through sons");
            label.push('.');
            label.push(if son == s0 { '0' } else { '1' });
        }
        label
    }

    /// Copy the subtree rooted at `t` into a standalone tree whose index
    /// space is `0..size(t)` in tree order (original labels are dropped).
    /// Returns the new tree and a map from old cluster ids to new ones.
    pub fn extract_subtree(&self, t: ClusterId) -> (ClusterTree, Vec<Option<ClusterId>>) {
        let offset = self.nodes[t.0].begin;
        let base_level = self.nodes[t.0].level;
        let mut old_to_new: Vec<Option<ClusterId>> = vec![None; self.nodes.len()];
        let mut nodes = Vec::new();
        let order = self.descendants(t);
        for &old in &order {
            let new_id = ClusterId(nodes.len());
            old_to_new[old.0] = Some(new_id);
            let c = &self.nodes[old.0];
            nodes.push(Cluster {
                id: new_id,
                begin: c.begin - offset,
                end: c.end - offset,
                level: c.level - base_level,
                sons: None,
                father: c.father.and_then(|f| old_to_new[f.0]),
                bbox: c.bbox.clone(),
            });
        }
        for &old in &order {
            if let Some((a, b)) = self.nodes[old.0].sons {
                let new_id = old_to_new[old.0].unwrap();
                nodes[new_id.0].sons = Some((old_to_new[a.0].unwrap(), old_to_new[b.0].unwrap()));
            }
        }
        let size = self.nodes[t.0].size();
        let depth = nodes.iter().map(|c| c.level).max().unwrap_or(0) + 1;
        (
            ClusterTree {
                dim: self.dim,
                leaf_size: self.leaf_size,
                nodes,
                root: ClusterId(0),
                perm: (0..size).collect(),
                inv_perm: (0..size).collect(),
                depth,
            },
            old_to_new,
        )
    }

    /// Serializable dump of the tree structure.
    pub fn dump(&self) -> TreeDump {
        TreeDump {
            format_version: TREE_DUMP_VERSION,
            n: self.n_indices(),
            dim: self.dim,
            depth: self.depth,
            perm: self.perm.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|c| TreeDumpNode {
                    id: c.id.0,
                    begin: c.begin,
                    end: c.end,
                    level: c.level,
                    sons: c.sons.map(|(a, b)| [a.0, b.0]),
                    bbox_min: c.bbox.min.clone(),
                    bbox_max: c.bbox.max.clone(),
                })
                .collect(),
        }
    }
}

pub const TREE_DUMP_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct TreeDump {
    pub format_version: u32,
    pub n: usize,
    pub dim: usize,
    pub depth: usize,
    pub perm: Vec<usize>,
    pub nodes: Vec<TreeDumpNode>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TreeDumpNode {
    pub id: usize,
    pub begin: usize,
    pub end: usize,
    pub level: usize,
    pub sons: Option<[usize; 2]>,
    pub bbox_min: Vec<f64>,
    pub bbox_max: Vec<f64>,
}

/// Build a cluster tree over `points` with the given leaf size cap.
///
/// Clusters with more than `leaf_size` points are split; a degenerate point
/// set that cannot be split (all coordinates equal) stays a leaf.
pub fn build_cluster_tree(
    points: &[Vec<f64>],
    leaf_size: usize,
    strategy: ClusterStrategy,
) -> Result<ClusterTree> {
    if points.is_empty() {
        return Err(Error::EmptyCluster("no points given".into()));
    }
    if leaf_size == 0 {
        return Err(Error::structural("leaf_size must be positive"));
    }
    let dim = points[0].len();
    if dim == 0 {
        return Err(Error::structural("points must have at least one coordinate"));
    }
    for (i, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(Error::structural(format!(
                "point {i} has dimension {}, expected {dim}",
                p.len()
            )));
        }
        if p.iter().any(|c| !c.is_finite()) {
            return Err(Error::structural(format!("point {i} has a non-finite coordinate")));
        }
    }

    let mut builder = TreeBuilder {
        points,
        dim,
        leaf_size,
        strategy,
        nodes: Vec::new(),
    };
    let mut order: Vec<usize> = (0..points.len()).collect();
    let root = builder.build(&mut order, 0, 0, None);
    let mut inv_perm = vec![0usize; points.len()];
    for (pos, &orig) in order.iter().enumerate() {
        inv_perm[orig] = pos;
    }
    let depth = builder.nodes.iter().map(|c| c.level).max().unwrap_or(0) + 1;
    Ok(ClusterTree {
        dim,
        leaf_size,
        nodes: builder.nodes,
        root,
        perm: order,
        inv_perm,
        depth,
    })
}

struct TreeBuilder<'a> {
    points: &'a [Vec<f64>],
    dim: usize,
    leaf_size: usize,
    strategy: ClusterStrategy,
    nodes: Vec<Cluster>,
}

enum Split {
    Leaf,
    /// Two parts, already arranged consecutively in the index slice.
    Two(usize),
    /// Interiors and separator: `[0..mid1 | mid1..mid2 | mid2..]`, the last
    /// part ordered after both interiors.
    ThreeWithSeparator(usize, usize),
}

impl<'a> TreeBuilder<'a> {
    fn push_node(
        &mut self,
        begin: usize,
        end: usize,
        level: usize,
        father: Option<ClusterId>,
        bbox: BoundingBox,
    ) -> ClusterId {
        let id = ClusterId(self.nodes.len());
        self.nodes.push(Cluster {
            id,
            begin,
            end,
            level,
            sons: None,
            father,
            bbox,
        });
        id
    }

    fn build(
        &mut self,
        idx: &mut [usize],
        begin: usize,
        level: usize,
        father: Option<ClusterId>,
    ) -> ClusterId {
        let bbox = BoundingBox::of_points(self.points, idx, self.dim);
        let id = self.push_node(begin, begin + idx.len(), level, father, bbox.clone());
        match self.split(idx, &bbox) {
            Split::Leaf => {}
            Split::Two(mid) => {
                let (left, right) = idx.split_at_mut(mid);
                let a = self.build(left, begin, level + 1, Some(id));
                let b = self.build(right, begin + mid, level + 1, Some(id));
                self.nodes[id.0].sons = Some((a, b));
            }
            Split::ThreeWithSeparator(mid1, mid2) => {
                // t -> (interiors, separator); interiors -> (left, right).
                let (interior, separator) = idx.split_at_mut(mid2);
                let ibox = BoundingBox::of_points(self.points, interior, self.dim);
                let interior_id =
                    self.push_node(begin, begin + mid2, level + 1, Some(id), ibox);
                let (left, right) = interior.split_at_mut(mid1);
                let a = self.build(left, begin, level + 2, Some(interior_id));
                let b = self.build(right, begin + mid1, level + 2, Some(interior_id));
                self.nodes[interior_id.0].sons = Some((a, b));
                let sep_id = self.build(separator, begin + mid2, level + 1, Some(id));
                self.nodes[id.0].sons = Some((interior_id, sep_id));
            }
        }
        id
    }

    fn split(&self, idx: &mut [usize], bbox: &BoundingBox) -> Split {
        if idx.len() <= self.leaf_size {
            return Split::Leaf;
        }
        let axis = (0..self.dim)
            .max_by(|&a, &b| {
                let ea = bbox.max[a] - bbox.min[a];
                let eb = bbox.max[b] - bbox.min[b];
                ea.partial_cmp(&eb).unwrap()
            })
            .unwrap();
        let extent = bbox.max[axis] - bbox.min[axis];
        if extent == 0.0 {
            // All points coincide along every axis with positive extent:
            // nothing to split geometrically.
            return Split::Leaf;
        }
        let mid_coord = 0.5 * (bbox.min[axis] + bbox.max[axis]);

        if self.strategy == ClusterStrategy::DomainDecomposition {
            if let Some(split) = self.separator_split(idx, axis, mid_coord, extent) {
                return split;
            }
        }
        Split::Two(self.bisect(idx, axis, mid_coord))
    }

    /// Midpoint bisection with a median fallback when one side is empty.
    fn bisect(&self, idx: &mut [usize], axis: usize, mid_coord: f64) -> usize {
        let mid = partition(idx, |i| self.points[i][axis] < mid_coord);
        if mid > 0 && mid < idx.len() {
            return mid;
        }
        idx.sort_by(|&a, &b| {
            self.points[a][axis]
                .partial_cmp(&self.points[b][axis])
                .unwrap()
                .then(a.cmp(&b))
        });
        idx.len() / 2
    }

    fn separator_split(
        &self,
        idx: &mut [usize],
        axis: usize,
        mid_coord: f64,
        extent: f64,
    ) -> Option<Split> {
        // Approximate one mesh width from the point count, so the band
        // captures roughly one grid line of a quasi-uniform point set.
        let lines = (idx.len() as f64).sqrt().ceil().max(2.0);
        let band = 0.5 * extent / (lines - 1.0);
        let in_left = |i: usize| self.points[i][axis] < mid_coord - band;
        let in_sep = |i: usize| (self.points[i][axis] - mid_coord).abs() <= band;
        let mid1 = partition(idx, in_left);
        let mid2 = mid1 + partition(&mut idx[mid1..], |i| !in_sep(i));
        let (n_left, n_right, n_sep) = (mid1, mid2 - mid1, idx.len() - mid2);
        if n_left == 0 || n_right == 0 || n_sep == 0 {
            return None;
        }
        Some(Split::ThreeWithSeparator(mid1, mid2))
    }
}

/// Stable partition; returns the number of elements satisfying `pred`.
fn partition(idx: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let mut buf: Vec<usize> = Vec::with_capacity(idx.len());
    let mut n_true = 0;
    for &i in idx.iter() {
        if pred(i) {
            buf.push(i);
            n_true += 1;
        }
    }
    for &i in idx.iter() {
        if !pred(i) {
            buf.push(i);
        }
    }
    idx.copy_from_slice(&buf);
    n_true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_points(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![i as f64 / n as f64]).collect()
    }

    fn grid_points(m: usize) -> Vec<Vec<f64>> {
        let mut pts = Vec::new();
        for j in 0..m {
            for i in 0..m {
                pts.push(vec![i as f64 / m as f64, j as f64 / m as f64]);
            }
        }
        pts
    }

    fn check_tree_invariants(tree: &ClusterTree, points: &[Vec<f64>]) {
        // perm is a permutation.
        let mut seen = vec![false; points.len()];
        for &p in tree.perm() {
            assert!(!seen[p]);
            seen[p] = true;
        }
        // son ranges partition the father's range; leaves cover 0..n.
        let mut covered = vec![0usize; points.len()];
        for c in tree.clusters() {
            assert!(c.begin < c.end, "clusters are nonempty");
            match c.sons {
                Some((a, b)) => {
                    let (ca, cb) = (tree.cluster(a), tree.cluster(b));
                    assert_eq!(ca.begin, c.begin);
                    assert_eq!(ca.end, cb.begin);
                    assert_eq!(cb.end, c.end);
                    assert_eq!(ca.level, c.level + 1);
                }
                None => {
                    for pos in c.begin..c.end {
                        covered[pos] += 1;
                    }
                }
            }
            // bbox contains the cluster's points.
            for pos in c.begin..c.end {
                let p = &points[tree.perm()[pos]];
                for d in 0..tree.dim() {
                    assert!(p[d] >= c.bbox.min[d] - 1e-12 && p[d] <= c.bbox.max[d] + 1e-12);
                }
            }
        }
        assert!(covered.iter().all(|&c| c == 1), "leaf ranges partition 0..n");
        // inverse permutation is consistent.
        for orig in 0..points.len() {
            assert_eq!(tree.perm()[tree.position_of(orig)], orig);
        }
    }

    #[test]
    fn sixteen_interval_points_make_a_perfect_depth_three_tree() {
        let points = line_points(16);
        let tree = build_cluster_tree(&points, 4, ClusterStrategy::GeometricBisection).unwrap();
        check_tree_invariants(&tree, &points);
        assert_eq!(tree.depth(), 3);
        assert_eq!(tree.len(), 7);
        let root = tree.cluster(tree.root());
        let (a, b) = root.sons.unwrap();
        assert_eq!(tree.cluster(a).size(), 8);
        assert_eq!(tree.cluster(b).size(), 8);
        for c in tree.clusters().filter(|c| c.is_leaf()) {
            assert_eq!(c.size(), 4);
        }
    }

    #[test]
    fn bisection_handles_grids_and_random_clouds() {
        let points = grid_points(9);
        let tree = build_cluster_tree(&points, 16, ClusterStrategy::GeometricBisection).unwrap();
        check_tree_invariants(&tree, &points);
        for c in tree.clusters().filter(|c| c.is_leaf()) {
            assert!(c.size() <= 16);
        }
    }

    #[test]
    fn duplicate_points_become_an_oversized_leaf() {
        let points = vec![vec![0.5, 0.5]; 10];
        let tree = build_cluster_tree(&points, 4, ClusterStrategy::GeometricBisection).unwrap();
        check_tree_invariants(&tree, &points);
        assert_eq!(tree.depth(), 1);
        assert_eq!(tree.cluster(tree.root()).size(), 10);
    }

    #[test]
    fn domain_decomposition_orders_separator_last() {
        let points = grid_points(16);
        let tree = build_cluster_tree(&points, 8, ClusterStrategy::DomainDecomposition).unwrap();
        check_tree_invariants(&tree, &points);
        // The root should carry an interior/separator split: the second son
        // is a thin band around the splitting plane.
        let root = tree.cluster(tree.root());
        let (interior, sep) = root.sons.unwrap();
        let (ci, cs) = (tree.cluster(interior), tree.cluster(sep));
        assert!(cs.size() < ci.size());
        let sep_extent: f64 = (0..tree.dim())
            .map(|d| cs.bbox.max[d] - cs.bbox.min[d])
            .fold(f64::INFINITY, f64::min);
        let int_extent: f64 = (0..tree.dim())
            .map(|d| ci.bbox.max[d] - ci.bbox.min[d])
            .fold(0.0, f64::max);
        assert!(sep_extent < int_extent);
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(build_cluster_tree(&[], 4, ClusterStrategy::GeometricBisection).is_err());
    }

    #[test]
    fn subtree_extraction_preserves_structure() {
        let points = line_points(32);
        let tree = build_cluster_tree(&points, 4, ClusterStrategy::GeometricBisection).unwrap();
        let (t1, _) = tree.cluster(tree.root()).sons.unwrap();
        let (sub, map) = tree.extract_subtree(t1);
        assert_eq!(sub.n_indices(), tree.cluster(t1).size());
        assert_eq!(sub.cluster(sub.root()).begin, 0);
        assert_eq!(sub.depth(), tree.depth() - 1);
        assert_eq!(map[t1.0], Some(sub.root()));
        for &old in &tree.descendants(t1) {
            let new = map[old.0].unwrap();
            assert_eq!(sub.cluster(new).size(), tree.cluster(old).size());
        }
    }

    #[test]
    fn tree_dump_round_trips_through_json() {
        let points = line_points(16);
        let tree = build_cluster_tree(&points, 4, ClusterStrategy::GeometricBisection).unwrap();
        let dump = tree.dump();
        let text = serde_json::to_string(&dump).unwrap();
        let back: TreeDump = serde_json::from_str(&text).unwrap();
        assert_eq!(back.format_version, TREE_DUMP_VERSION);
        assert_eq!(back.nodes.len(), tree.len());
        assert_eq!(back.perm, tree.perm());
    }
}
