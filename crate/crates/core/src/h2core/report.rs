use serde::{Deserialize, Serialize};

use super::{CompressOptions, H2Matrix, KernelSpec};

/// Bytes per stored real.
pub const WORD_BYTES: usize = 8;

/// Stored reals per category, times [`WORD_BYTES`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageReport {
    pub leaf_bases: usize,
    pub transfers: usize,
    pub coupling: usize,
    pub dense: usize,
    pub total: usize,
}

/// Multiply-adds of one matvec, per phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatvecWork {
    pub dense: usize,
    pub upsweep: usize,
    pub coupling: usize,
    pub downsweep: usize,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelRanks {
    pub level: u32,
    pub nodes: usize,
    pub max_rank: usize,
    pub mean_rank: f64,
}

/// JSON description of a compressed matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub n: usize,
    pub kernel: KernelSpec,
    pub options: CompressOptions,
    pub depth: u32,
    pub tree_nodes: usize,
    pub max_rank: usize,
    pub ranks_per_level: Vec<LevelRanks>,
    pub lowrank_blocks: usize,
    pub dense_blocks: usize,
    pub max_lowrank_blocks_per_row: usize,
    pub capped_blocks: usize,
    /// Largest relative Frobenius error over the low-rank blocks.
    pub max_block_error: f64,
    pub storage: StorageReport,
    pub matvec_work: MatvecWork,
}

impl H2Matrix {
    pub fn storage_report(&self) -> StorageReport {
        let mut leaf = 0;
        let mut transfer = 0;
        for basis in [&self.row, &self.col] {
            leaf += basis.leaf_bases.iter().map(|m| m.len()).sum::<usize>();
            transfer += basis.transfers.iter().map(|m| m.len()).sum::<usize>();
        }
        let coupling = self.blocks.lowrank.iter().map(|b| b.s.len()).sum::<usize>();
        let dense = self.blocks.dense.iter().map(|b| b.d.len()).sum::<usize>();
        StorageReport {
            leaf_bases: leaf * WORD_BYTES,
            transfers: transfer * WORD_BYTES,
            coupling: coupling * WORD_BYTES,
            dense: dense * WORD_BYTES,
            total: (leaf + transfer + coupling + dense) * WORD_BYTES,
        }
    }

    pub fn matvec_work(&self) -> MatvecWork {
        let dense = self.blocks.dense.iter().map(|b| b.d.len()).sum();
        let sweep = |basis: &super::BasisTree| -> usize {
            basis.leaf_bases.iter().map(|m| m.len()).sum::<usize>()
                + basis.transfers.iter().map(|m| m.len()).sum::<usize>()
        };
        let upsweep = sweep(&self.col);
        let downsweep = sweep(&self.row);
        let coupling = self.blocks.lowrank.iter().map(|b| b.s.len()).sum();
        MatvecWork { dense, upsweep, coupling, downsweep, total: dense + upsweep + coupling + downsweep }
    }

    pub fn summary(&self) -> BuildSummary {
        let depth = self.topo.depth();
        let ranks_per_level = (0..=depth)
            .map(|level| {
                let ranks: Vec<usize> = (0..self.topo.len())
                    .filter(|&i| self.topo.keys[i].level() == level)
                    .map(|i| self.row.ranks[i])
                    .collect();
                LevelRanks {
                    level,
                    nodes: ranks.len(),
                    max_rank: ranks.iter().copied().max().unwrap_or(0),
                    mean_rank: if ranks.is_empty() {
                        0.0
                    } else {
                        ranks.iter().sum::<usize>() as f64 / ranks.len() as f64
                    },
                }
            })
            .collect();
        BuildSummary {
            n: self.n,
            kernel: self.kernel,
            options: self.options,
            depth,
            tree_nodes: self.topo.len(),
            max_rank: self.row.max_rank().max(self.col.max_rank()),
            ranks_per_level,
            lowrank_blocks: self.blocks.lowrank.len(),
            dense_blocks: self.blocks.dense.len(),
            max_lowrank_blocks_per_row: self.blocks.max_lowrank_per_row(),
            capped_blocks: self.blocks.lowrank.iter().filter(|b| b.capped).count(),
            max_block_error: self.blocks.lowrank.iter().map(|b| b.rel_error).fold(0.0, f64::max),
            storage: self.storage_report(),
            matvec_work: self.matvec_work(),
        }
    }
}
