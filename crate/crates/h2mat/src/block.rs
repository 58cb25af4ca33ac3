//! Block trees: pairs of clusters classified by admissibility.
//!
//! Starting from the pair of roots, a block `(t, s)` is kept as an
//! admissible leaf when `max(diam t, diam s) <= eta * dist(t, s)` (with
//! positive distance), kept as an inadmissible (dense) leaf when both
//! clusters are leaves, and otherwise subdivided into the pairs of sons,
//! where a leaf cluster stands in for its own son. Leaves of the block tree
//! partition the product index set.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterId, ClusterTree};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BlockId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    Subdivided,
    Admissible,
    Inadmissible,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Block {
    pub id: BlockId,
    pub row: ClusterId,
    pub col: ClusterId,
    pub kind: BlockKind,
    pub level: usize,
    pub father: Option<BlockId>,
    /// Son blocks in row-major order over `sons+(row) x sons+(col)`.
    pub sons: Vec<BlockId>,
}

impl Block {
    pub fn is_leaf(&self) -> bool {
        self.kind != BlockKind::Subdivided
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockTree {
    #[serde(skip)]
    row_tree: Option<Arc<ClusterTree>>,
    #[serde(skip)]
    col_tree: Option<Arc<ClusterTree>>,
    eta: f64,
    nodes: Vec<Block>,
    root: BlockId,
    /// Admissible leaves grouped by row cluster, in construction order.
    adm_by_row: Vec<Vec<BlockId>>,
    /// Admissible leaves grouped by column cluster.
    adm_by_col: Vec<Vec<BlockId>>,
    /// For each block `(t, s)`, the block `(s, t)`; present when row and
    /// column trees coincide (the admissibility condition is symmetric).
    mirror: Option<Vec<BlockId>>,
    #[serde(skip)]
    lookup: HashMap<(usize, usize), BlockId>,
}

impl BlockTree {
    pub fn root(&self) -> BlockId {
        self.root
    }

    pub fn block(&self, id: BlockId) -> &Block {
        &self.nodes[id.0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn row_tree(&self) -> &Arc<ClusterTree> {
        self.row_tree.as_ref().expect("block tree carries its row tree")
    }

    pub fn col_tree(&self) -> &Arc<ClusterTree> {
        self.col_tree.as_ref().expect("block tree carries its col tree")
    }

    pub fn same_cluster_tree(&self) -> bool {
        Arc::ptr_eq(self.row_tree(), self.col_tree())
    }

    pub fn blocks(&self) -> impl Iterator<Item = &Block> {
        self.nodes.iter()
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Block> {
        self.nodes.iter().filter(|b| b.is_leaf())
    }

    pub fn admissible_leaves(&self) -> impl Iterator<Item = &Block> {
        self.nodes.iter().filter(|b| b.kind == BlockKind::Admissible)
    }

    pub fn inadmissible_leaves(&self) -> impl Iterator<Item = &Block> {
        self.nodes.iter().filter(|b| b.kind == BlockKind::Inadmissible)
    }

    /// Admissible leaves whose row cluster is `t` (the row set of `t`).
    pub fn admissible_by_row(&self, t: ClusterId) -> &[BlockId] {
        &self.adm_by_row[t.0]
    }

    /// Admissible leaves whose column cluster is `s`.
    pub fn admissible_by_col(&self, s: ClusterId) -> &[BlockId] {
        &self.adm_by_col[s.0]
    }

    /// The block at a cluster pair, if the pair is a node of the tree.
    pub fn block_at(&self, t: ClusterId, s: ClusterId) -> Option<BlockId> {
        self.lookup.get(&(t.0, s.0)).copied()
    }

    /// The mirrored block `(s, t)` of `(t, s)`.
    pub fn mirror_of(&self, b: BlockId) -> Option<BlockId> {
        self.mirror.as_ref().map(|m| m[b.0])
    }

    /// Preorder walk of the sub-block-tree rooted at `b`.
    pub fn descendants(&self, b: BlockId) -> Vec<BlockId> {
        let mut out = Vec::new();
        let mut stack = vec![b];
        while let Some(cur) = stack.pop() {
            out.push(cur);
            for &son in self.nodes[cur.0].sons.iter().rev() {
                stack.push(son);
            }
        }
        out
    }

    /// Largest number of leaf blocks sharing one row or column cluster.
    pub fn sparsity_constant(&self) -> usize {
        let mut by_row = vec![0usize; self.row_tree().len()];
        let mut by_col = vec![0usize; self.col_tree().len()];
        for b in self.leaves() {
            by_row[b.row.0] += 1;
            by_col[b.col.0] += 1;
        }
        by_row
            .iter()
            .chain(by_col.iter())
            .copied()
            .max()
            .unwrap_or(0)
    }

    /// Copy the sub-block-tree rooted at `b0` onto already extracted
    /// subtrees of the row and column cluster trees. `row_map`/`col_map`
    /// translate old cluster ids into the new trees.
    pub fn extract_subtree(
        &self,
        b0: BlockId,
        row_tree: Arc<ClusterTree>,
        col_tree: Arc<ClusterTree>,
        row_map: &[Option<ClusterId>],
        col_map: &[Option<ClusterId>],
    ) -> BlockTree {
        let order = self.descendants(b0);
        let mut old_to_new: Vec<Option<BlockId>> = vec![None; self.nodes.len()];
        let mut nodes = Vec::with_capacity(order.len());
        let base_level = self.nodes[b0.0].level;
        for &old in &order {
            let new_id = BlockId(nodes.len());
            old_to_new[old.0] = Some(new_id);
            let b = &self.nodes[old.0];
            nodes.push(Block {
                id: new_id,
                row: row_map[b.row.0].expect("row cluster inside subtree"),
                col: col_map[b.col.0].expect("col cluster inside subtree"),
                kind: b.kind,
                level: b.level - base_level,
                father: b.father.and_then(|f| old_to_new[f.0]),
                sons: Vec::new(),
            });
        }
        for &old in &order {
            let new_id = old_to_new[old.0].unwrap();
            nodes[new_id.0].sons = self.nodes[old.0]
                .sons
                .iter()
                .map(|s| old_to_new[s.0].unwrap())
                .collect();
        }
        finish_tree(nodes, self.eta, row_tree, col_tree)
    }

    /// Restore the derived tables and tree handles after deserialization.
    pub fn reattach(&mut self, row_tree: Arc<ClusterTree>, col_tree: Arc<ClusterTree>) {
        let rebuilt = finish_tree(self.nodes.clone(), self.eta, row_tree, col_tree);
        *self = rebuilt;
    }
}

/// Build the block tree for the given cluster trees and admissibility
/// parameter `eta`.
pub fn build_block_tree(
    row_tree: Arc<ClusterTree>,
    col_tree: Arc<ClusterTree>,
    eta: f64,
) -> Result<BlockTree> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::structural(format!("eta must be positive and finite, got {eta}")));
    }
    let mut nodes: Vec<Block> = Vec::new();
    // Iterative construction in depth-first order keeps son ids contiguous
    // and the traversal deterministic.
    build_rec(&mut nodes, &row_tree, &col_tree, eta, row_tree.root(), col_tree.root(), 0, None);
    Ok(finish_tree(nodes, eta, row_tree, col_tree))
}

fn build_rec(
    nodes: &mut Vec<Block>,
    row_tree: &ClusterTree,
    col_tree: &ClusterTree,
    eta: f64,
    t: ClusterId,
    s: ClusterId,
    level: usize,
    father: Option<BlockId>,
) -> BlockId {
    let ct = row_tree.cluster(t);
    let cs = col_tree.cluster(s);
    let dist = ct.bbox.distance(&cs.bbox);
    let admissible = dist > 0.0 && ct.bbox.diameter().max(cs.bbox.diameter()) <= eta * dist;
    let id = BlockId(nodes.len());
    let kind = if admissible {
        BlockKind::Admissible
    } else if ct.is_leaf() && cs.is_leaf() {
        BlockKind::Inadmissible
    } else {
        BlockKind::Subdivided
    };
    nodes.push(Block {
        id,
        row: t,
        col: s,
        kind,
        level,
        father,
        sons: Vec::new(),
    });
    if kind == BlockKind::Subdivided {
        let row_sons: Vec<ClusterId> = match ct.sons {
            Some((a, b)) => vec![a, b],
            None => vec![t],
        };
        let col_sons: Vec<ClusterId> = match cs.sons {
            Some((a, b)) => vec![a, b],
            None => vec![s],
        };
        let mut sons = Vec::with_capacity(row_sons.len() * col_sons.len());
        for &tr in &row_sons {
            for &sc in &col_sons {
                sons.push(build_rec(nodes, row_tree, col_tree, eta, tr, sc, level + 1, Some(id)));
            }
        }
        nodes[id.0].sons = sons;
    }
    id
}

fn finish_tree(
    nodes: Vec<Block>,
    eta: f64,
    row_tree: Arc<ClusterTree>,
    col_tree: Arc<ClusterTree>,
) -> BlockTree {
    let mut adm_by_row = vec![Vec::new(); row_tree.len()];
    let mut adm_by_col = vec![Vec::new(); col_tree.len()];
    let mut lookup = HashMap::with_capacity(nodes.len());
    for b in &nodes {
        if b.kind == BlockKind::Admissible {
            adm_by_row[b.row.0].push(b.id);
            adm_by_col[b.col.0].push(b.id);
        }
        lookup.insert((b.row.0, b.col.0), b.id);
    }
    let mirror = if Arc::ptr_eq(&row_tree, &col_tree) {
        let mut mirror = vec![BlockId(0); nodes.len()];
        let mut ok = true;
        for b in &nodes {
            match lookup.get(&(b.col.0, b.row.0)) {
                Some(&m) => mirror[b.id.0] = m,
                None => {
                    ok = false;
                    break;
                }
            }
        }
        ok.then_some(mirror)
    } else {
        None
    };
    BlockTree {
        row_tree: Some(row_tree),
        col_tree: Some(col_tree),
        eta,
        root: BlockId(0),
        nodes,
        adm_by_row,
        adm_by_col,
        mirror,
        lookup,
    }
}
