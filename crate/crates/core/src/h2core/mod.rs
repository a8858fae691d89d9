//! H²-matrices for kernel matrices over octree-ordered particles.
//!
//! `A ≈ Σ_dense A_ij + Σ_admissible U_i S_ij V_j^T`, where the cluster bases are nested:
//! the basis of an interior cluster is the stacked child bases times small transfer
//! matrices. The dense oracle in [`dense_matrix`] / [`dense_matvec`] is the reference
//! for every accuracy check.

mod blocks;
mod compress;
mod container;
mod dense;
mod kernel;
mod matvec;
mod report;

pub use blocks::{
    admissible, BlockNode, BlockTag, BlockTree, DenseBlock, LowRankBlock, Topology, DEFAULT_ETA,
};
pub use compress::{compress, BasisTree, CompressOptions, Side};
pub use container::H2_MAGIC;
pub use dense::{dense_matrix, dense_matvec, oracle_max, DEFAULT_ORACLE_MAX, ORACLE_MAX_ENV};
pub use kernel::{KernelKind, KernelSpec};
pub use report::{BuildSummary, LevelRanks, MatvecWork, StorageReport, WORD_BYTES};

/// Compressed kernel matrix. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct H2Matrix {
    n: usize,
    kernel: KernelSpec,
    options: CompressOptions,
    topo: Topology,
    /// Particle positions in Morton order.
    points: Vec<[f64; 3]>,
    /// `permutation[k]` is the input position of sorted point `k`.
    permutation: Vec<usize>,
    row: BasisTree,
    col: BasisTree,
    blocks: BlockTree,
}

impl H2Matrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn options(&self) -> &CompressOptions {
        &self.options
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn row_basis(&self) -> &BasisTree {
        &self.row
    }

    pub fn col_basis(&self) -> &BasisTree {
        &self.col
    }

    pub fn blocks(&self) -> &BlockTree {
        &self.blocks
    }

    /// Points in Morton order.
    pub fn sorted_points(&self) -> &[[f64; 3]] {
        &self.points
    }

    /// Points in the original input order.
    pub fn points(&self) -> Vec<[f64; 3]> {
        let mut out = vec![[0.0; 3]; self.n];
        for (k, &i) in self.permutation.iter().enumerate() {
            out[i] = self.points[k];
        }
        out
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    /// Largest rank over both basis trees.
    pub fn max_rank(&self) -> usize {
        self.row.max_rank().max(self.col.max_rank())
    }
}

#[cfg(test)]
mod tests;
