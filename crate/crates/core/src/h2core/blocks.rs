use std::ops::Range;

use nalgebra::DMatrix;

use crate::geometry::MortonKey;
use crate::tree::Octree;

/// `sqrt(3)`: same-level cells are admissible exactly when they are not adjacent.
pub const DEFAULT_ETA: f64 = 1.732_050_807_568_877_2;

/// Relative slack so that the boundary case `diam = eta * dist` is admitted despite rounding.
const ADMISSIBILITY_SLACK: f64 = 1e-12;

/// Geometric admissibility: `max(diam) <= eta * dist` for the closed cells.
pub fn admissible(row: &MortonKey, col: &MortonKey, eta: f64) -> bool {
    let dist = row.distance(col);
    if dist <= 0.0 {
        return false;
    }
    row.diameter().max(col.diameter()) <= eta * dist * (1.0 + ADMISSIBILITY_SLACK)
}

/// Cluster tree shared by the row and column bases, in breadth-first order
/// (level, then Morton key).
#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    pub keys: Vec<MortonKey>,
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Range<usize>>,
    /// Index ranges into the Morton-sorted points.
    pub ranges: Vec<Range<usize>>,
}

impl Topology {
    pub fn from_octree(tree: &Octree) -> Self {
        let nodes = tree.nodes();
        Topology {
            keys: nodes.iter().map(|n| n.key).collect(),
            parent: nodes.iter().map(|n| n.parent).collect(),
            children: nodes.iter().map(|n| n.children()).collect(),
            ranges: nodes.iter().map(|n| n.range.clone()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn is_leaf(&self, i: usize) -> bool {
        self.children[i].is_empty()
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.is_leaf(i))
    }

    pub fn depth(&self) -> u32 {
        self.keys.iter().map(|k| k.level()).max().unwrap_or(0)
    }

    pub fn size(&self, i: usize) -> usize {
        self.ranges[i].len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockTag {
    Subdivided,
    LowRank(usize),
    Dense(usize),
}

/// Node of the block quadtree over `(row node, column node)` pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockNode {
    pub row: usize,
    pub col: usize,
    pub tag: BlockTag,
}

/// Admissible block `U_row S V_col^T`.
#[derive(Clone, Debug, PartialEq)]
pub struct LowRankBlock {
    pub row: usize,
    pub col: usize,
    pub s: DMatrix<f64>,
    /// Frobenius norm of the exact block.
    pub norm: f64,
    /// Relative Frobenius error `||A - U S V^T|| / ||A||` of the stored approximation.
    pub rel_error: f64,
    /// A basis on either side hit the rank cap.
    pub capped: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseBlock {
    pub row: usize,
    pub col: usize,
    pub d: DMatrix<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockTree {
    pub nodes: Vec<BlockNode>,
    pub lowrank: Vec<LowRankBlock>,
    pub dense: Vec<DenseBlock>,
    pub lowrank_by_row: Vec<Vec<usize>>,
    pub dense_by_row: Vec<Vec<usize>>,
}

impl BlockTree {
    /// Dual traversal from `(root, root)`: admissible pairs become low-rank leaves, pairs
    /// of leaves become dense, otherwise the non-leaf sides are split.
    pub fn build(topo: &Topology, eta: f64) -> Self {
        let mut bt = BlockTree {
            nodes: Vec::new(),
            lowrank: Vec::new(),
            dense: Vec::new(),
            lowrank_by_row: vec![Vec::new(); topo.len()],
            dense_by_row: vec![Vec::new(); topo.len()],
        };
        bt.visit(topo, eta, 0, 0);
        bt
    }

    fn visit(&mut self, topo: &Topology, eta: f64, i: usize, j: usize) {
        let tag = if admissible(&topo.keys[i], &topo.keys[j], eta) {
            self.lowrank_by_row[i].push(self.lowrank.len());
            self.lowrank.push(LowRankBlock {
                row: i,
                col: j,
                s: DMatrix::zeros(0, 0),
                norm: 0.0,
                rel_error: 0.0,
                capped: false,
            });
            BlockTag::LowRank(self.lowrank.len() - 1)
        } else if topo.is_leaf(i) && topo.is_leaf(j) {
            self.dense_by_row[i].push(self.dense.len());
            self.dense.push(DenseBlock { row: i, col: j, d: DMatrix::zeros(0, 0) });
            BlockTag::Dense(self.dense.len() - 1)
        } else {
            BlockTag::Subdivided
        };
        self.nodes.push(BlockNode { row: i, col: j, tag });
        if tag != BlockTag::Subdivided {
            return;
        }
        let rows = if topo.is_leaf(i) { i..i + 1 } else { topo.children[i].clone() };
        let cols = if topo.is_leaf(j) { j..j + 1 } else { topo.children[j].clone() };
        for ci in rows {
            for cj in cols.clone() {
                self.visit(topo, eta, ci, cj);
            }
        }
    }

    pub fn max_lowrank_per_row(&self) -> usize {
        self.lowrank_by_row.iter().map(Vec::len).max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate, lattice, DistributionKind, DistributionSpec};
    use crate::tree::{balance_2to1, build_tree};

    #[test]
    fn admissibility_cases() {
        let a = MortonKey::encode([1, 1, 1], 3).unwrap();
        assert!(!admissible(&a, &a, DEFAULT_ETA));
        let face = MortonKey::encode([2, 1, 1], 3).unwrap();
        assert!(!admissible(&a, &face, DEFAULT_ETA));
        let corner = MortonKey::encode([2, 2, 2], 3).unwrap();
        assert!(!admissible(&a, &corner, DEFAULT_ETA));
        let two_away = MortonKey::encode([3, 1, 1], 3).unwrap();
        assert!(admissible(&a, &two_away, DEFAULT_ETA));
        let two_away_diag = MortonKey::encode([3, 3, 3], 3).unwrap();
        assert!(admissible(&a, &two_away_diag, DEFAULT_ETA));
        // a smaller eta needs more separation
        assert!(!admissible(&a, &two_away, 1.0));
        assert!(admissible(&a, &MortonKey::encode([5, 1, 1], 3).unwrap(), 1.0));
    }

    #[test]
    fn same_level_admissible_iff_not_adjacent() {
        let level = 2;
        for x in 0..4u32 {
            for y in 0..4u32 {
                for z in 0..4u32 {
                    let a = MortonKey::encode([1, 2, 1], level).unwrap();
                    let b = MortonKey::encode([x, y, z], level).unwrap();
                    assert_eq!(admissible(&a, &b, DEFAULT_ETA), a != b && !a.is_adjacent(&b));
                }
            }
        }
    }

    fn coverage_ok(topo: &Topology, bt: &BlockTree, n: usize) {
        let mut cover = vec![0u8; n * n];
        let mut mark = |i: usize, j: usize| {
            for r in topo.ranges[i].clone() {
                for c in topo.ranges[j].clone() {
                    cover[r * n + c] += 1;
                }
            }
        };
        for b in &bt.lowrank {
            mark(b.row, b.col);
        }
        for b in &bt.dense {
            assert!(topo.is_leaf(b.row) && topo.is_leaf(b.col));
            mark(b.row, b.col);
        }
        assert!(cover.iter().all(|&c| c == 1));
    }

    #[test]
    fn leaves_partition_the_index_square() {
        let ps = generate(&DistributionSpec::new(DistributionKind::Plummer, 600, 3)).unwrap();
        let tree = balance_2to1(build_tree(ps, 8).unwrap()).unwrap();
        let topo = Topology::from_octree(&tree);
        let bt = BlockTree::build(&topo, DEFAULT_ETA);
        coverage_ok(&topo, &bt, 600);
        // structure is symmetric
        let pairs: std::collections::HashSet<(usize, usize)> =
            bt.lowrank.iter().map(|b| (b.row, b.col)).collect();
        assert!(pairs.iter().all(|&(i, j)| pairs.contains(&(j, i))));
    }

    #[test]
    fn uniform_tree_matches_interaction_lists() {
        let tree = build_tree(lattice(3, 1).unwrap(), 1).unwrap();
        let topo = Topology::from_octree(&tree);
        let bt = BlockTree::build(&topo, DEFAULT_ETA);
        coverage_ok(&topo, &bt, 512);
        assert_eq!(bt.max_lowrank_per_row(), 189);
        // near field: 26 neighbours plus self for interior leaves
        assert_eq!(bt.dense_by_row.iter().map(Vec::len).max().unwrap(), 27);
        for b in &bt.lowrank {
            assert_eq!(topo.keys[b.row].level(), topo.keys[b.col].level());
        }
    }
}
