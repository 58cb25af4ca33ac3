//! The central rank-structured matrix type.
//!
//! An [`H2Matrix`] stores, over a block tree:
//! * one coupling matrix `S_b` per admissible leaf `b = (t, s)`, so that the
//!   block equals `V_t S_b W_s^T` with the shared row basis `V` and column
//!   basis `W`,
//! * one dense matrix per inadmissible leaf,
//! * the two nested cluster bases.
//!
//! All indices are in tree (permuted) order; callers translate to original
//! labels through the cluster trees' permutations.

mod build;
mod io;

pub use build::{h2_from_dense, h2_from_sparse, FROM_DENSE_GUARD};
pub use io::{H2MatrixDump, H2_DUMP_VERSION};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::basis::ClusterBasis;
use crate::block::{BlockId, BlockKind, BlockTree};
use crate::cluster::{ClusterId, ClusterTree};
use crate::dense::{DenseMatrix, DenseVector};
use crate::error::{Error, Result};

/// Entry cap for materializing structured matrices densely.
pub const DENSIFY_GUARD: usize = 4096 * 4096;

#[derive(Debug, Clone)]
pub struct H2Matrix {
    blocks: Arc<BlockTree>,
    row_basis: ClusterBasis,
    col_basis: ClusterBasis,
    /// Indexed by block id; `Some` exactly on admissible leaves.
    coupling: Vec<Option<DenseMatrix>>,
    /// Indexed by block id; `Some` exactly on inadmissible leaves.
    nearfield: Vec<Option<DenseMatrix>>,
}

/// Scalar counts of one structured representation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageReport {
    pub coupling_scalars: usize,
    pub nearfield_scalars: usize,
    pub basis_scalars: usize,
    pub max_rank: usize,
    pub rows: usize,
    pub cols: usize,
}

impl StorageReport {
    pub fn total_scalars(&self) -> usize {
        self.coupling_scalars + self.nearfield_scalars + self.basis_scalars
    }

    pub fn total_bytes(&self) -> usize {
        self.total_scalars() * std::mem::size_of::<f64>()
    }

    /// Kilobytes per row, the "Mem/n" figure of the benchmark tables.
    pub fn kib_per_row(&self) -> f64 {
        self.total_bytes() as f64 / 1024.0 / self.rows as f64
    }
}

impl H2Matrix {
    /// The zero matrix over a block structure: rank-0 bases, empty coupling
    /// matrices, zero dense blocks.
    pub fn zero(blocks: Arc<BlockTree>) -> Self {
        let row_basis = ClusterBasis::zero(blocks.row_tree());
        let col_basis = ClusterBasis::zero(blocks.col_tree());
        let mut coupling = vec![None; blocks.len()];
        let mut nearfield = vec![None; blocks.len()];
        for b in blocks.blocks() {
            match b.kind {
                BlockKind::Admissible => coupling[b.id.0] = Some(DenseMatrix::zeros(0, 0)),
                BlockKind::Inadmissible => {
                    let rows = blocks.row_tree().cluster(b.row).size();
                    let cols = blocks.col_tree().cluster(b.col).size();
                    nearfield[b.id.0] = Some(DenseMatrix::zeros(rows, cols));
                }
                BlockKind::Subdivided => {}
            }
        }
        H2Matrix {
            blocks,
            row_basis,
            col_basis,
            coupling,
            nearfield,
        }
    }

    pub fn from_parts(
        blocks: Arc<BlockTree>,
        row_basis: ClusterBasis,
        col_basis: ClusterBasis,
        coupling: Vec<Option<DenseMatrix>>,
        nearfield: Vec<Option<DenseMatrix>>,
    ) -> Result<Self> {
        let m = H2Matrix {
            blocks,
            row_basis,
            col_basis,
            coupling,
            nearfield,
        };
        m.validate_structure()?;
        Ok(m)
    }

    pub fn nrows(&self) -> usize {
        self.blocks.row_tree().n_indices()
    }

    pub fn ncols(&self) -> usize {
        self.blocks.col_tree().n_indices()
    }

    pub fn block_tree(&self) -> &Arc<BlockTree> {
        &self.blocks
    }

    pub fn row_tree(&self) -> &Arc<ClusterTree> {
        self.blocks.row_tree()
    }

    pub fn col_tree(&self) -> &Arc<ClusterTree> {
        self.blocks.col_tree()
    }

    pub fn row_basis(&self) -> &ClusterBasis {
        &self.row_basis
    }

    pub fn col_basis(&self) -> &ClusterBasis {
        &self.col_basis
    }

    pub fn row_basis_mut(&mut self) -> &mut ClusterBasis {
        &mut self.row_basis
    }

    pub fn col_basis_mut(&mut self) -> &mut ClusterBasis {
        &mut self.col_basis
    }

    /// Row and column basis at once, mutably (they are independent fields).
    pub fn bases_mut(&mut self) -> (&mut ClusterBasis, &mut ClusterBasis) {
        (&mut self.row_basis, &mut self.col_basis)
    }

    pub fn coupling(&self, b: BlockId) -> &DenseMatrix {
        self.coupling[b.0].as_ref().expect("coupling on admissible leaf")
    }

    pub fn nearfield(&self, b: BlockId) -> &DenseMatrix {
        self.nearfield[b.0].as_ref().expect("dense block on inadmissible leaf")
    }

    pub fn nearfield_mut(&mut self, b: BlockId) -> &mut DenseMatrix {
        self.nearfield[b.0].as_mut().expect("dense block on inadmissible leaf")
    }

    pub fn set_coupling(&mut self, b: BlockId, s: DenseMatrix) {
        debug_assert_eq!(self.blocks.block(b).kind, BlockKind::Admissible);
        self.coupling[b.0] = Some(s);
    }

    pub fn set_nearfield(&mut self, b: BlockId, d: DenseMatrix) {
        debug_assert_eq!(self.blocks.block(b).kind, BlockKind::Inadmissible);
        self.nearfield[b.0] = Some(d);
    }

    /// Largest coupling rank dimension in the representation.
    pub fn max_rank(&self) -> usize {
        self.blocks
            .row_tree()
            .clusters()
            .map(|c| self.row_basis.rank(c.id))
            .chain(
                self.blocks
                    .col_tree()
                    .clusters()
                    .map(|c| self.col_basis.rank(c.id)),
            )
            .max()
            .unwrap_or(0)
    }

    pub fn storage_report(&self) -> StorageReport {
        let coupling_scalars = self.coupling.iter().flatten().map(|m| m.len()).sum();
        let nearfield_scalars = self.nearfield.iter().flatten().map(|m| m.len()).sum();
        let basis_scalars = self.row_basis.stored_scalars() + self.col_basis.stored_scalars();
        StorageReport {
            coupling_scalars,
            nearfield_scalars,
            basis_scalars,
            max_rank: self.max_rank(),
            rows: self.nrows(),
            cols: self.ncols(),
        }
    }

    /// Cheap shape consistency checks (bases, coupling and dense blocks).
    pub fn validate_structure(&self) -> Result<()> {
        self.row_basis.validate(self.blocks.row_tree())?;
        self.col_basis.validate(self.blocks.col_tree())?;
        if self.coupling.len() != self.blocks.len() || self.nearfield.len() != self.blocks.len() {
            return Err(Error::structural("per-block tables do not match the block tree"));
        }
        for b in self.blocks.blocks() {
            let s = &self.coupling[b.id.0];
            let d = &self.nearfield[b.id.0];
            match b.kind {
                BlockKind::Admissible => {
                    let s = s.as_ref().ok_or_else(|| {
                        Error::structural(format!("admissible leaf {} misses coupling", b.id.0))
                    })?;
                    let expected = (self.row_basis.rank(b.row), self.col_basis.rank(b.col));
                    if s.shape() != expected {
                        return Err(Error::structural(format!(
                            "coupling at block {} has shape {:?}, expected {:?}",
                            b.id.0,
                            s.shape(),
                            expected
                        )));
                    }
                    if d.is_some() {
                        return Err(Error::structural("admissible leaf carries a dense block"));
                    }
                }
                BlockKind::Inadmissible => {
                    let d = d.as_ref().ok_or_else(|| {
                        Error::structural(format!("inadmissible leaf {} misses dense block", b.id.0))
                    })?;
                    let rows = self.blocks.row_tree().cluster(b.row).size();
                    let cols = self.blocks.col_tree().cluster(b.col).size();
                    if d.shape() != (rows, cols) {
                        return Err(Error::structural(format!(
                            "dense block at {} has shape {:?}, expected {:?}",
                            b.id.0,
                            d.shape(),
                            (rows, cols)
                        )));
                    }
                    if s.is_some() {
                        return Err(Error::structural("inadmissible leaf carries a coupling"));
                    }
                }
                BlockKind::Subdivided => {
                    if s.is_some() || d.is_some() {
                        return Err(Error::structural("subdivided block carries matrix data"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Apply the sub-block rooted at `b` to a thin dense matrix whose rows
    /// match the block's column cluster. Returns rows matching the row
    /// cluster.
    pub fn apply_block(&self, b: BlockId, x: &DenseMatrix) -> DenseMatrix {
        let blk = self.blocks.block(b);
        let row_tree = self.blocks.row_tree();
        let col_tree = self.blocks.col_tree();
        let rows = row_tree.cluster(blk.row).size();
        debug_assert_eq!(x.nrows(), col_tree.cluster(blk.col).size());
        let mut y = DenseMatrix::zeros(rows, x.ncols());

        // Forward transform of x over the column subtree.
        let mut xhat: Vec<Option<DenseMatrix>> = vec![None; col_tree.len()];
        forward_transform(
            &self.col_basis,
            col_tree,
            blk.col,
            x,
            col_tree.cluster(blk.col).begin,
            &mut xhat,
        );

        // Coupling and dense contributions.
        let mut yhat: Vec<Option<DenseMatrix>> = vec![None; row_tree.len()];
        let row_base = row_tree.cluster(blk.row).begin;
        let col_base = col_tree.cluster(blk.col).begin;
        for id in self.blocks.descendants(b) {
            let leaf = self.blocks.block(id);
            match leaf.kind {
                BlockKind::Admissible => {
                    let contrib = self.coupling(id) * xhat[leaf.col.0].as_ref().expect("forward pass");
                    match &mut yhat[leaf.row.0] {
                        Some(acc) => *acc += contrib,
                        slot => *slot = Some(contrib),
                    }
                }
                BlockKind::Inadmissible => {
                    let rc = row_tree.cluster(leaf.row);
                    let cc = col_tree.cluster(leaf.col);
                    let contrib = self.nearfield(id) * x.rows(cc.begin - col_base, cc.size());
                    let mut target = y.rows_mut(rc.begin - row_base, rc.size());
                    target += contrib;
                }
                BlockKind::Subdivided => {}
            }
        }

        // Backward transform of the accumulated coefficients.
        backward_transform(&self.row_basis, row_tree, blk.row, row_base, &mut yhat, &mut y);
        y
    }

    /// Apply the transpose of the sub-block rooted at `b`; `x` rows match
    /// the row cluster, the result matches the column cluster.
    pub fn apply_block_transposed(&self, b: BlockId, x: &DenseMatrix) -> DenseMatrix {
        let blk = self.blocks.block(b);
        let row_tree = self.blocks.row_tree();
        let col_tree = self.blocks.col_tree();
        debug_assert_eq!(x.nrows(), row_tree.cluster(blk.row).size());
        let cols = col_tree.cluster(blk.col).size();
        let mut y = DenseMatrix::zeros(cols, x.ncols());

        let mut xhat: Vec<Option<DenseMatrix>> = vec![None; row_tree.len()];
        forward_transform(
            &self.row_basis,
            row_tree,
            blk.row,
            x,
            row_tree.cluster(blk.row).begin,
            &mut xhat,
        );

        let mut yhat: Vec<Option<DenseMatrix>> = vec![None; col_tree.len()];
        let row_base = row_tree.cluster(blk.row).begin;
        let col_base = col_tree.cluster(blk.col).begin;
        for id in self.blocks.descendants(b) {
            let leaf = self.blocks.block(id);
            match leaf.kind {
                BlockKind::Admissible => {
                    let contrib = self.coupling(id).tr_mul(xhat[leaf.row.0].as_ref().expect("forward pass"));
                    match &mut yhat[leaf.col.0] {
                        Some(acc) => *acc += contrib,
                        slot => *slot = Some(contrib),
                    }
                }
                BlockKind::Inadmissible => {
                    let rc = row_tree.cluster(leaf.row);
                    let cc = col_tree.cluster(leaf.col);
                    let contrib = self.nearfield(id).tr_mul(&x.rows(rc.begin - row_base, rc.size()));
                    let mut target = y.rows_mut(cc.begin - col_base, cc.size());
                    target += contrib;
                }
                BlockKind::Subdivided => {}
            }
        }

        backward_transform(&self.col_basis, col_tree, blk.col, col_base, &mut yhat, &mut y);
        y
    }

    /// Matrix-vector product in tree order.
    pub fn matvec(&self, x: &DenseVector) -> DenseVector {
        let m = DenseMatrix::from_column_slice(x.len(), 1, x.as_slice());
        let y = self.apply_block(self.blocks.root(), &m);
        DenseVector::from_column_slice(y.as_slice())
    }

    /// Transposed matrix-vector product in tree order.
    pub fn matvec_transposed(&self, x: &DenseVector) -> DenseVector {
        let m = DenseMatrix::from_column_slice(x.len(), 1, x.as_slice());
        let y = self.apply_block_transposed(self.blocks.root(), &m);
        DenseVector::from_column_slice(y.as_slice())
    }

    /// Work units of one `apply_block` call with `ncols` right-hand sides,
    /// derived from the current ranks (the transform performs exactly these
    /// products).
    pub fn apply_block_work(&self, b: BlockId, ncols: usize) -> f64 {
        use crate::dense::work;
        let row_tree = self.blocks.row_tree();
        let col_tree = self.blocks.col_tree();
        let blk = self.blocks.block(b);
        let mut total = 0.0;
        // forward + backward transforms
        for t in col_tree.descendants(blk.col) {
            let c = col_tree.cluster(t);
            let k = self.col_basis.rank(t);
            total += match c.sons {
                None => work::matmul(k, c.size(), ncols),
                Some((a, b2)) => {
                    work::matmul(self.col_basis.rank(a), k, ncols)
                        + work::matmul(self.col_basis.rank(b2), k, ncols)
                }
            };
        }
        for t in row_tree.descendants(blk.row) {
            let c = row_tree.cluster(t);
            let k = self.row_basis.rank(t);
            total += match c.sons {
                None => work::matmul(c.size(), k, ncols),
                Some((a, b2)) => {
                    work::matmul(self.row_basis.rank(a), k, ncols)
                        + work::matmul(self.row_basis.rank(b2), k, ncols)
                }
            };
        }
        for id in self.blocks.descendants(b) {
            let leaf = self.blocks.block(id);
            match leaf.kind {
                BlockKind::Admissible => {
                    total += work::matmul(
                        self.row_basis.rank(leaf.row),
                        self.col_basis.rank(leaf.col),
                        ncols,
                    );
                }
                BlockKind::Inadmissible => {
                    let rows = row_tree.cluster(leaf.row).size();
                    let cols = col_tree.cluster(leaf.col).size();
                    total += work::matmul(rows, cols, ncols);
                }
                BlockKind::Subdivided => {}
            }
        }
        total
    }

    /// Densify one block (admissible, inadmissible or subdivided).
    pub fn densify_block(&self, b: BlockId) -> Result<DenseMatrix> {
        let blk = self.blocks.block(b);
        let row_tree = self.blocks.row_tree();
        let col_tree = self.blocks.col_tree();
        let rows = row_tree.cluster(blk.row).size();
        let cols = col_tree.cluster(blk.col).size();
        if rows * cols > DENSIFY_GUARD {
            return Err(Error::SizeGuard {
                rows,
                cols,
                limit: DENSIFY_GUARD,
            });
        }
        let mut out = DenseMatrix::zeros(rows, cols);
        let row_base = row_tree.cluster(blk.row).begin;
        let col_base = col_tree.cluster(blk.col).begin;
        for id in self.blocks.descendants(b) {
            let leaf = self.blocks.block(id);
            let rc = row_tree.cluster(leaf.row);
            let cc = col_tree.cluster(leaf.col);
            match leaf.kind {
                BlockKind::Admissible => {
                    let v = self.row_basis.materialize(row_tree, leaf.row);
                    let w = self.col_basis.materialize(col_tree, leaf.col);
                    let block = v * self.coupling(id) * w.transpose();
                    out.view_mut(
                        (rc.begin - row_base, cc.begin - col_base),
                        (rc.size(), cc.size()),
                    )
                    .copy_from(&block);
                }
                BlockKind::Inadmissible => {
                    out.view_mut(
                        (rc.begin - row_base, cc.begin - col_base),
                        (rc.size(), cc.size()),
                    )
                    .copy_from(self.nearfield(id));
                }
                BlockKind::Subdivided => {}
            }
        }
        Ok(out)
    }

    /// Densify the whole matrix (guarded; test-scale only).
    pub fn densify(&self) -> Result<DenseMatrix> {
        self.densify_block(self.blocks.root())
    }

    /// Transpose. Requires the mirrored block structure, i.e. shared row and
    /// column cluster trees.
    pub fn transpose(&self) -> Result<H2Matrix> {
        if self.blocks.mirror_of(self.blocks.root()).is_none() {
            return Err(Error::structural(
                "transpose needs a mirror-symmetric block tree (shared cluster tree)",
            ));
        }
        let mut coupling = vec![None; self.blocks.len()];
        let mut nearfield = vec![None; self.blocks.len()];
        for b in self.blocks.blocks() {
            let m = self.blocks.mirror_of(b.id).expect("mirror map");
            if let Some(s) = &self.coupling[m.0] {
                coupling[b.id.0] = Some(s.transpose());
            }
            if let Some(d) = &self.nearfield[m.0] {
                nearfield[b.id.0] = Some(d.transpose());
            }
        }
        Ok(H2Matrix {
            blocks: self.blocks.clone(),
            row_basis: self.col_basis.clone(),
            col_basis: self.row_basis.clone(),
            coupling,
            nearfield,
        })
    }

    /// Detach the submatrix rooted at block `b0` into a standalone matrix
    /// over freshly extracted subtrees.
    pub fn submatrix(&self, b0: BlockId) -> H2Matrix {
        let blk = self.blocks.block(b0);
        let row_tree = self.blocks.row_tree();
        let col_tree = self.blocks.col_tree();
        let (row_sub, row_map) = row_tree.extract_subtree(blk.row);
        let (col_sub, col_map) = col_tree.extract_subtree(blk.col);
        let row_sub = Arc::new(row_sub);
        let col_sub = Arc::new(col_sub);
        let sub_blocks = Arc::new(self.blocks.extract_subtree(
            b0,
            row_sub.clone(),
            col_sub.clone(),
            &row_map,
            &col_map,
        ));

        let mut row_basis = ClusterBasis::zero(&row_sub);
        for old in row_tree.descendants(blk.row) {
            let new = row_map[old.0].expect("cluster in subtree");
            let c = row_tree.cluster(old);
            if c.is_leaf() {
                row_basis.set_leaf_matrix(new, self.row_basis.leaf_matrix(old).into_owned());
            } else {
                row_basis.set_rank(new, self.row_basis.rank(old));
            }
            if old != blk.row {
                row_basis.set_transfer(new, self.row_basis.transfer(old).into_owned());
            }
        }
        row_basis.set_orthogonal(self.row_basis.is_orthogonal());
        let mut col_basis = ClusterBasis::zero(&col_sub);
        for old in col_tree.descendants(blk.col) {
            let new = col_map[old.0].expect("cluster in subtree");
            let c = col_tree.cluster(old);
            if c.is_leaf() {
                col_basis.set_leaf_matrix(new, self.col_basis.leaf_matrix(old).into_owned());
            } else {
                col_basis.set_rank(new, self.col_basis.rank(old));
            }
            if old != blk.col {
                col_basis.set_transfer(new, self.col_basis.transfer(old).into_owned());
            }
        }
        col_basis.set_orthogonal(self.col_basis.is_orthogonal());

        let mut coupling = vec![None; sub_blocks.len()];
        let mut nearfield = vec![None; sub_blocks.len()];
        for (new_id, &old_id) in self.blocks.descendants(b0).iter().enumerate() {
            coupling[new_id] = self.coupling[old_id.0].clone();
            nearfield[new_id] = self.nearfield[old_id.0].clone();
        }
        H2Matrix {
            blocks: sub_blocks,
            row_basis,
            col_basis,
            coupling,
            nearfield,
        }
    }

    /// Test hook: overwrite one coupling entry to simulate a corrupted
    /// representation (used by the verification pipeline).
    pub fn corrupt_coupling_entry(&mut self) -> bool {
        for s in self.coupling.iter_mut().flatten() {
            if s.len() > 0 {
                s[(0, 0)] += 1.0 + s[(0, 0)].abs();
                return true;
            }
        }
        false
    }
}

use crate::basis::BasisView;

fn forward_transform(
    basis: &ClusterBasis,
    tree: &ClusterTree,
    t: ClusterId,
    x: &DenseMatrix,
    base: usize,
    out: &mut Vec<Option<DenseMatrix>>,
) {
    let c = tree.cluster(t);
    match c.sons {
        None => {
            let rows = x.rows(c.begin - base, c.size());
            out[t.0] = Some(basis.leaf_matrix(t).tr_mul(&rows));
        }
        Some((a, b)) => {
            forward_transform(basis, tree, a, x, base, out);
            forward_transform(basis, tree, b, x, base, out);
            let xa = out[a.0].as_ref().expect("son transformed");
            let xb = out[b.0].as_ref().expect("son transformed");
            let combined =
                basis.transfer(a).tr_mul(xa) + basis.transfer(b).tr_mul(xb);
            out[t.0] = Some(combined);
        }
    }
}

fn backward_transform(
    basis: &ClusterBasis,
    tree: &ClusterTree,
    t: ClusterId,
    base: usize,
    yhat: &mut Vec<Option<DenseMatrix>>,
    y: &mut DenseMatrix,
) {
    let c = tree.cluster(t);
    let coeff = yhat[t.0].take();
    match c.sons {
        None => {
            if let Some(coeff) = coeff {
                let contrib = basis.leaf_matrix(t).as_ref() * coeff;
                let mut target = y.rows_mut(c.begin - base, c.size());
                target += contrib;
            }
        }
        Some((a, b)) => {
            if let Some(coeff) = coeff {
                for son in [a, b] {
                    let push = basis.transfer(son).as_ref() * &coeff;
                    match &mut yhat[son.0] {
                        Some(acc) => *acc += push,
                        slot => *slot = Some(push),
                    }
                }
            }
            backward_transform(basis, tree, a, base, yhat, y);
            backward_transform(basis, tree, b, base, yhat, y);
        }
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use crate::basis::random_orthonormal_basis;
    use crate::block::build_block_tree;
    use crate::cluster::{build_cluster_tree, ClusterStrategy};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    pub fn line_block_tree(n: usize, leaf: usize, eta: f64) -> Arc<BlockTree> {
        let points: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / n as f64]).collect();
        let tree = Arc::new(
            build_cluster_tree(&points, leaf, ClusterStrategy::GeometricBisection).unwrap(),
        );
        Arc::new(build_block_tree(tree.clone(), tree, eta).unwrap())
    }

    /// Random valid matrix over a shared tree: random orthonormal bases,
    /// random couplings and dense blocks.
    pub fn random_h2(blocks: &Arc<BlockTree>, rank: usize, seed: u64) -> H2Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let row_basis = random_orthonormal_basis(blocks.row_tree(), rank, seed.wrapping_mul(7) + 1);
        let col_basis = random_orthonormal_basis(blocks.col_tree(), rank, seed.wrapping_mul(13) + 2);
        let mut m = H2Matrix::zero(blocks.clone());
        m.row_basis = row_basis;
        m.col_basis = col_basis;
        let ids: Vec<BlockId> = blocks.blocks().map(|b| b.id).collect();
        for id in ids {
            let b = blocks.block(id);
            match b.kind {
                BlockKind::Admissible => {
                    let (kt, ks) = (m.row_basis.rank(b.row), m.col_basis.rank(b.col));
                    m.set_coupling(id, DenseMatrix::from_fn(kt, ks, |_, _| rng.gen_range(-1.0..1.0)));
                }
                BlockKind::Inadmissible => {
                    let rows = blocks.row_tree().cluster(b.row).size();
                    let cols = blocks.col_tree().cluster(b.col).size();
                    m.set_nearfield(id, DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0)));
                }
                BlockKind::Subdivided => {}
            }
        }
        m.validate_structure().unwrap();
        m
    }
}
