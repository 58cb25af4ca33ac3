//! Nested cluster bases.
//!
//! A cluster basis attaches to every cluster `t` a matrix with `rank(t)`
//! columns: leaves store it explicitly (the leaf matrix), non-leaf clusters
//! represent it through their sons via transfer matrices,
//! `V_t|_son = V_son * E_son`. The materialized basis therefore never needs
//! to be formed; transforms walk the tree instead.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterId, ClusterTree};
use crate::dense::{qr_r_factor, DenseMatrix};
use crate::error::{Error, Result};

/// Read-only access to a (possibly virtual) cluster basis. The recompression
/// machinery works against this trait so that bases extended by update
/// columns never have to be materialized tree-wide.
pub trait BasisView {
    fn rank(&self, t: ClusterId) -> usize;
    /// Leaf matrix of a leaf cluster, `size(t) x rank(t)`.
    fn leaf_matrix(&self, t: ClusterId) -> Cow<'_, DenseMatrix>;
    /// Transfer matrix into the father, `rank(t) x rank(father(t))`.
    fn transfer(&self, t: ClusterId) -> Cow<'_, DenseMatrix>;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterBasis {
    ranks: Vec<usize>,
    /// Leaf matrices, present exactly for leaf clusters.
    leaf: Vec<Option<DenseMatrix>>,
    /// Transfer matrices, present exactly for non-root clusters.
    transfer: Vec<Option<DenseMatrix>>,
    /// Set when every materialized `V_t` has orthonormal columns.
    orthogonal: bool,
    /// Lazily computed R factors of the materialized bases ("basis
    /// weights"); invalidated whenever a cluster's matrices change.
    #[serde(skip)]
    weight_cache: Vec<Option<DenseMatrix>>,
}

impl BasisView for ClusterBasis {
    fn rank(&self, t: ClusterId) -> usize {
        self.ranks[t.0]
    }

    fn leaf_matrix(&self, t: ClusterId) -> Cow<'_, DenseMatrix> {
        Cow::Borrowed(self.leaf[t.0].as_ref().expect("leaf matrix on leaf cluster"))
    }

    fn transfer(&self, t: ClusterId) -> Cow<'_, DenseMatrix> {
        Cow::Borrowed(self.transfer[t.0].as_ref().expect("transfer on non-root cluster"))
    }
}

impl ClusterBasis {
    /// Rank-zero basis: every cluster has an empty column set.
    pub fn zero(tree: &ClusterTree) -> Self {
        let n = tree.len();
        let mut basis = ClusterBasis {
            ranks: vec![0; n],
            leaf: vec![None; n],
            transfer: vec![None; n],
            orthogonal: true,
            weight_cache: vec![None; n],
        };
        for c in tree.clusters() {
            if c.is_leaf() {
                basis.leaf[c.id.0] = Some(DenseMatrix::zeros(c.size(), 0));
            }
            if c.father.is_some() {
                basis.transfer[c.id.0] = Some(DenseMatrix::zeros(0, 0));
            }
        }
        basis
    }

    pub fn is_orthogonal(&self) -> bool {
        self.orthogonal
    }

    pub fn set_orthogonal(&mut self, flag: bool) {
        self.orthogonal = flag;
    }

    /// Replace the matrices of a single cluster. Ranks of the father's
    /// transfer matrices must be fixed up by the caller; cached weights of
    /// the cluster, its subtree and its ancestors become stale and are
    /// invalidated lazily through [`ClusterBasis::invalidate`].
    pub fn set_leaf_matrix(&mut self, t: ClusterId, v: DenseMatrix) {
        self.ranks[t.0] = v.ncols();
        self.leaf[t.0] = Some(v);
    }

    pub fn set_transfer(&mut self, t: ClusterId, e: DenseMatrix) {
        self.ranks[t.0] = e.nrows();
        self.transfer[t.0] = Some(e);
    }

    /// Set the rank of a cluster without matrices attached yet (used while
    /// rebuilding a subtree bottom-up).
    pub fn set_rank(&mut self, t: ClusterId, rank: usize) {
        self.ranks[t.0] = rank;
    }

    /// Drop cached weights for `t`, its subtree, and its root path.
    pub fn invalidate(&mut self, tree: &ClusterTree, t: ClusterId) {
        for c in tree.descendants(t) {
            self.weight_cache[c.0] = None;
        }
        for c in tree.path_from_root(t) {
            self.weight_cache[c.0] = None;
        }
    }

    pub fn invalidate_all(&mut self) {
        self.weight_cache.iter_mut().for_each(|w| *w = None);
    }

    /// Restore skipped fields after deserialization.
    pub fn reset_cache(&mut self) {
        self.weight_cache = vec![None; self.ranks.len()];
    }

    /// Materialized basis `V_t` of shape `size(t) x rank(t)`.
    pub fn materialize(&self, tree: &ClusterTree, t: ClusterId) -> DenseMatrix {
        materialize_view(self, tree, t)
    }

    /// `V_t^T x` for `x` with `size(t)` rows, computed through the nested
    /// representation.
    pub fn apply_transposed(&self, tree: &ClusterTree, t: ClusterId, x: &DenseMatrix) -> DenseMatrix {
        debug_assert_eq!(x.nrows(), tree.cluster(t).size());
        apply_transposed_rec(self, tree, t, x, tree.cluster(t).begin)
    }

    /// `V_t c` for coefficient matrix `c` with `rank(t)` rows.
    pub fn apply(&self, tree: &ClusterTree, t: ClusterId, c: &DenseMatrix) -> DenseMatrix {
        debug_assert_eq!(c.nrows(), self.ranks[t.0]);
        let mut out = DenseMatrix::zeros(tree.cluster(t).size(), c.ncols());
        apply_rec(self, tree, t, c, tree.cluster(t).begin, &mut out);
        out
    }

    /// R factor of a thin QR factorization of the materialized basis,
    /// computed bottom-up and cached. Shape `r x rank(t)` with
    /// `r = min(size(t), rank(t))`.
    pub fn weight(&mut self, tree: &ClusterTree, t: ClusterId) -> DenseMatrix {
        if let Some(w) = &self.weight_cache[t.0] {
            return w.clone();
        }
        let w = match tree.cluster(t).sons {
            None => qr_r_factor(self.leaf[t.0].as_ref().expect("leaf matrix")),
            Some((a, b)) => {
                let wa = self.weight(tree, a);
                let wb = self.weight(tree, b);
                let ea = self.transfer[a.0].as_ref().expect("transfer");
                let eb = self.transfer[b.0].as_ref().expect("transfer");
                qr_r_factor(&vstack(&(wa * ea), &(wb * eb)))
            }
        };
        self.weight_cache[t.0] = Some(w.clone());
        w
    }

    /// Fresh, cache-free weight computation for an arbitrary basis view.
    pub fn weight_of_view<B: BasisView>(view: &B, tree: &ClusterTree, t: ClusterId) -> DenseMatrix {
        match tree.cluster(t).sons {
            None => qr_r_factor(&view.leaf_matrix(t)),
            Some((a, b)) => {
                let wa = Self::weight_of_view(view, tree, a);
                let wb = Self::weight_of_view(view, tree, b);
                let prod_a = wa * view.transfer(a).as_ref();
                let prod_b = wb * view.transfer(b).as_ref();
                qr_r_factor(&vstack(&prod_a, &prod_b))
            }
        }
    }

    /// Number of stored scalars (leaf plus transfer matrices).
    pub fn stored_scalars(&self) -> usize {
        let leaf: usize = self.leaf.iter().flatten().map(|m| m.len()).sum();
        let transfer: usize = self.transfer.iter().flatten().map(|m| m.len()).sum();
        leaf + transfer
    }

    /// Structural consistency against a tree.
    pub fn validate(&self, tree: &ClusterTree) -> Result<()> {
        if self.ranks.len() != tree.len() {
            return Err(Error::structural(format!(
                "basis covers {} clusters, tree has {}",
                self.ranks.len(),
                tree.len()
            )));
        }
        for c in tree.clusters() {
            let k = self.ranks[c.id.0];
            match (&self.leaf[c.id.0], c.is_leaf()) {
                (Some(v), true) => {
                    if v.shape() != (c.size(), k) {
                        return Err(Error::structural(format!(
                            "leaf matrix of cluster {} has shape {:?}, expected {:?}",
                            c.id.0,
                            v.shape(),
                            (c.size(), k)
                        )));
                    }
                }
                (None, false) => {}
                (Some(_), false) => {
                    return Err(Error::structural(format!(
                        "non-leaf cluster {} carries a leaf matrix",
                        c.id.0
                    )))
                }
                (None, true) => {
                    return Err(Error::structural(format!(
                        "leaf cluster {} misses its leaf matrix",
                        c.id.0
                    )))
                }
            }
            match (&self.transfer[c.id.0], c.father) {
                (Some(e), Some(f)) => {
                    let expected = (k, self.ranks[f.0]);
                    if e.shape() != expected {
                        return Err(Error::structural(format!(
                            "transfer of cluster {} has shape {:?}, expected {:?}",
                            c.id.0,
                            e.shape(),
                            expected
                        )));
                    }
                }
                (None, None) => {}
                (Some(_), None) => {
                    return Err(Error::structural("root cluster carries a transfer matrix"))
                }
                (None, Some(_)) => {
                    return Err(Error::structural(format!(
                        "non-root cluster {} misses its transfer matrix",
                        c.id.0
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Materialize any basis view by recursion over the tree.
pub fn materialize_view<B: BasisView>(view: &B, tree: &ClusterTree, t: ClusterId) -> DenseMatrix {
    let c = tree.cluster(t);
    match c.sons {
        None => view.leaf_matrix(t).into_owned(),
        Some((a, b)) => {
            let va = materialize_view(view, tree, a) * view.transfer(a).as_ref();
            let vb = materialize_view(view, tree, b) * view.transfer(b).as_ref();
            vstack(&va, &vb)
        }
    }
}

fn apply_transposed_rec<B: BasisView>(
    view: &B,
    tree: &ClusterTree,
    t: ClusterId,
    x: &DenseMatrix,
    base: usize,
) -> DenseMatrix {
    let c = tree.cluster(t);
    match c.sons {
        None => {
            let rows = x.rows(c.begin - base, c.size());
            view.leaf_matrix(t).tr_mul(&rows)
        }
        Some((a, b)) => {
            let xa = apply_transposed_rec(view, tree, a, x, base);
            let xb = apply_transposed_rec(view, tree, b, x, base);
            view.transfer(a).tr_mul(&xa) + view.transfer(b).tr_mul(&xb)
        }
    }
}

fn apply_rec<B: BasisView>(
    view: &B,
    tree: &ClusterTree,
    t: ClusterId,
    c: &DenseMatrix,
    base: usize,
    out: &mut DenseMatrix,
) {
    let cl = tree.cluster(t);
    match cl.sons {
        None => {
            let block = view.leaf_matrix(t).as_ref() * c;
            out.rows_mut(cl.begin - base, cl.size()).copy_from(&block);
        }
        Some((a, b)) => {
            let ca = view.transfer(a).as_ref() * c;
            let cb = view.transfer(b).as_ref() * c;
            apply_rec(view, tree, a, &ca, base, out);
            apply_rec(view, tree, b, &cb, base, out);
        }
    }
}

/// A basis extended by the columns of a low-rank factor on the subtree below
/// `sub_root`: leaves gain the restricted rows of `x`, transfers gain an
/// identity block, so the extension stays nested without copying the basis.
pub struct ExtendedBasis<'a> {
    pub basis: &'a ClusterBasis,
    pub tree: &'a ClusterTree,
    pub sub_root: ClusterId,
    /// Extension columns over the rows of `sub_root`'s range.
    pub x: &'a DenseMatrix,
}

impl<'a> ExtendedBasis<'a> {
    pub fn new(
        basis: &'a ClusterBasis,
        tree: &'a ClusterTree,
        sub_root: ClusterId,
        x: &'a DenseMatrix,
    ) -> Self {
        debug_assert_eq!(x.nrows(), tree.cluster(sub_root).size());
        ExtendedBasis {
            basis,
            tree,
            sub_root,
            x,
        }
    }

    fn x_cols(&self) -> usize {
        self.x.ncols()
    }
}

impl BasisView for ExtendedBasis<'_> {
    fn rank(&self, t: ClusterId) -> usize {
        self.basis.rank(t) + self.x_cols()
    }

    fn leaf_matrix(&self, t: ClusterId) -> Cow<'_, DenseMatrix> {
        let c = self.tree.cluster(t);
        let base = self.tree.cluster(self.sub_root).begin;
        let v = self.basis.leaf_matrix(t);
        let k = v.ncols();
        let mut ext = DenseMatrix::zeros(c.size(), k + self.x_cols());
        ext.columns_mut(0, k).copy_from(v.as_ref());
        ext.columns_mut(k, self.x_cols())
            .copy_from(&self.x.rows(c.begin - base, c.size()));
        Cow::Owned(ext)
    }

    fn transfer(&self, t: ClusterId) -> Cow<'_, DenseMatrix> {
        let e = self.basis.transfer(t);
        let (rows, cols) = e.shape();
        let kx = self.x_cols();
        let mut ext = DenseMatrix::zeros(rows + kx, cols + kx);
        ext.view_mut((0, 0), (rows, cols)).copy_from(e.as_ref());
        for i in 0..kx {
            ext[(rows + i, cols + i)] = 1.0;
        }
        Cow::Owned(ext)
    }
}

/// Stack two matrices vertically.
pub fn vstack(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    debug_assert_eq!(a.ncols(), b.ncols());
    let mut out = DenseMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.rows_mut(0, a.nrows()).copy_from(a);
    out.rows_mut(a.nrows(), b.nrows()).copy_from(b);
    out
}

/// Stack two matrices horizontally.
pub fn hstack(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    debug_assert_eq!(a.nrows(), b.nrows());
    let mut out = DenseMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

#[cfg(test)]
pub(crate) fn random_orthonormal_basis(
    tree: &ClusterTree,
    rank: usize,
    seed: u64,
) -> ClusterBasis {
    use crate::dense::qr_thin;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut basis = ClusterBasis::zero(tree);
    // Bottom-up: orthonormal leaf matrices, then orthonormal stacked
    // transfer blocks so that materialized bases stay orthonormal.
    let mut order: Vec<ClusterId> = tree.descendants(tree.root());
    order.reverse();
    for t in order {
        let c = tree.cluster(t);
        match c.sons {
            None => {
                let k = rank.min(c.size());
                let m = DenseMatrix::from_fn(c.size(), k, |_, _| rng.gen_range(-1.0..1.0));
                let (q, _) = qr_thin(&m);
                basis.set_leaf_matrix(t, q);
            }
            Some((a, b)) => {
                let (ka, kb) = (basis.rank(a), basis.rank(b));
                let k = rank.min(ka + kb);
                let m = DenseMatrix::from_fn(ka + kb, k, |_, _| rng.gen_range(-1.0..1.0));
                let (q, _) = qr_thin(&m);
                basis.set_rank(t, q.ncols());
                basis.set_transfer(a, q.rows(0, ka).into_owned());
                basis.set_transfer(b, q.rows(ka, kb).into_owned());
            }
        }
    }
    basis.set_orthogonal(true);
    basis
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{build_cluster_tree, ClusterStrategy};
    use crate::dense::qr_thin;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn line_tree(n: usize, leaf: usize) -> ClusterTree {
        let points: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        build_cluster_tree(&points, leaf, ClusterStrategy::GeometricBisection).unwrap()
    }

    #[test]
    fn zero_basis_is_valid_and_materializes_empty() {
        let tree = line_tree(32, 8);
        let basis = ClusterBasis::zero(&tree);
        basis.validate(&tree).unwrap();
        let v = basis.materialize(&tree, tree.root());
        assert_eq!(v.shape(), (32, 0));
        assert_eq!(basis.stored_scalars(), 0);
    }

    #[test]
    fn random_basis_is_nested_and_orthonormal() {
        let tree = line_tree(64, 8);
        let basis = random_orthonormal_basis(&tree, 3, 1);
        basis.validate(&tree).unwrap();
        for c in tree.clusters() {
            let v = basis.materialize(&tree, c.id);
            assert_eq!(v.shape(), (c.size(), basis.rank(c.id)));
            let gram = v.tr_mul(&v);
            assert!((gram - DenseMatrix::identity(v.ncols(), v.ncols())).amax() < 1e-12);
            if let Some((a, b)) = c.sons {
                // nestedness: V_t restricted to a son equals V_son * E_son
                let va = basis.materialize(&tree, a) * basis.transfer(a).as_ref();
                let vb = basis.materialize(&tree, b) * basis.transfer(b).as_ref();
                let (na, nb) = (va.nrows(), vb.nrows());
                assert!((v.rows(0, na) - va).amax() < 1e-12);
                assert!((v.rows(na, nb) - vb).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn transforms_match_materialized_products() {
        let tree = line_tree(48, 8);
        let basis = random_orthonormal_basis(&tree, 4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for t in [tree.root(), tree.cluster(tree.root()).sons.unwrap().0] {
            let c = tree.cluster(t);
            let v = basis.materialize(&tree, t);
            let x = DenseMatrix::from_fn(c.size(), 3, |_, _| rng.gen_range(-1.0..1.0));
            let fwd = basis.apply_transposed(&tree, t, &x);
            assert!((v.tr_mul(&x) - &fwd).amax() < 1e-12);
            let coeff = DenseMatrix::from_fn(basis.rank(t), 2, |_, _| rng.gen_range(-1.0..1.0));
            let back = basis.apply(&tree, t, &coeff);
            assert!((&v * &coeff - back).amax() < 1e-12);
        }
    }

    #[test]
    fn cached_weight_equals_direct_qr_of_materialized_basis() {
        let tree = line_tree(64, 8);
        // Non-orthogonal basis: scale a random orthonormal one.
        let mut basis = random_orthonormal_basis(&tree, 3, 4);
        for c in tree.clusters().filter(|c| c.is_leaf()) {
            let scaled = basis.leaf_matrix(c.id).into_owned() * 1.7;
            basis.set_leaf_matrix(c.id, scaled);
        }
        basis.set_orthogonal(false);
        basis.invalidate_all();
        let mut basis = basis;
        for c in tree.clusters() {
            let w = basis.weight(&tree, c.id);
            let v = basis.materialize(&tree, c.id);
            let (_, r) = qr_thin(&v);
            assert_eq!(w.shape(), r.shape());
            assert!((w - r).amax() < 1e-10);
        }
    }

    #[test]
    fn extended_view_materializes_basis_with_update_columns() {
        let tree = line_tree(32, 8);
        let basis = random_orthonormal_basis(&tree, 2, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = DenseMatrix::from_fn(32, 2, |_, _| rng.gen_range(-1.0..1.0));
        let ext = ExtendedBasis::new(&basis, &tree, tree.root(), &x);
        let v_ext = materialize_view(&ext, &tree, tree.root());
        let v = basis.materialize(&tree, tree.root());
        assert_eq!(v_ext.ncols(), v.ncols() + 2);
        assert!((v_ext.columns(0, v.ncols()) - &v).amax() < 1e-12);
        assert!((v_ext.columns(v.ncols(), 2) - &x).amax() < 1e-12);

        // Fresh view weights agree with a QR of the materialized extension.
        let w = ClusterBasis::weight_of_view(&ext, &tree, tree.root());
        let (_, r) = qr_thin(&v_ext);
        assert!((w - r).amax() < 1e-10);
    }

    #[test]
    fn validation_rejects_inconsistent_shapes() {
        let tree = line_tree(16, 4);
        let mut basis = random_orthonormal_basis(&tree, 2, 7);
        let leaf = tree
            .clusters()
            .find(|c| c.is_leaf())
            .map(|c| c.id)
            .unwrap();
        basis.set_leaf_matrix(leaf, DenseMatrix::zeros(1, 2));
        assert!(basis.validate(&tree).is_err());
    }
}
