//! Nested-basis construction.
//!
//! For every cluster `i` the far field is the list of column clusters of its own
//! admissible blocks followed by the far field of its parent. A leaf basis spans the
//! dominant left singular subspace of its far-field block row; an interior basis spans
//! that of the children's projected block rows, and its slices are the transfer
//! matrices. Every column group is weighted by the inverse Frobenius norm of its slice,
//! so the truncation threshold is relative per block.

use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen, QR};
use serde::{Deserialize, Serialize};

use super::blocks::{BlockTree, Topology, DEFAULT_ETA};
use super::{H2Matrix, KernelSpec};
use crate::error::{Error, Result};
use crate::tree::Octree;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressOptions {
    /// Relative Frobenius tolerance per low-rank block.
    pub eps: f64,
    pub max_rank: usize,
    pub eta: f64,
}

impl Default for CompressOptions {
    fn default() -> Self {
        CompressOptions { eps: 1e-6, max_rank: 256, eta: DEFAULT_ETA }
    }
}

impl CompressOptions {
    pub fn new(eps: f64) -> Self {
        CompressOptions { eps, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::Config(format!("eps must lie in (0, 1), got {}", self.eps)));
        }
        if self.max_rank == 0 {
            return Err(Error::Config("max_rank must be at least 1".into()));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be positive, got {}", self.eta)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    /// `U` leaves and `E` transfers.
    Row,
    /// `V` leaves and `F` transfers.
    Column,
}

/// Nested basis over the cluster tree.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisTree {
    pub side: Side,
    pub ranks: Vec<usize>,
    /// `size(i) x rank(i)` at leaves, empty at interior nodes.
    pub leaf_bases: Vec<DMatrix<f64>>,
    /// `rank(i) x rank(parent(i))`, empty at the root.
    pub transfers: Vec<DMatrix<f64>>,
    /// The rank of this node was cut by `max_rank`.
    pub capped: Vec<bool>,
}

impl BasisTree {
    /// The basis of node `i` expanded through the transfers below it (`size(i) x rank(i)`).
    pub fn explicit(&self, topo: &Topology, i: usize) -> DMatrix<f64> {
        if topo.is_leaf(i) {
            return self.leaf_bases[i].clone();
        }
        let mut out = DMatrix::zeros(topo.size(i), self.ranks[i]);
        let base = topo.ranges[i].start;
        for c in topo.children[i].clone() {
            let part = self.explicit(topo, c) * &self.transfers[c];
            out.view_mut((topo.ranges[c].start - base, 0), part.shape()).copy_from(&part);
        }
        out
    }

    pub fn max_rank(&self) -> usize {
        self.ranks.iter().copied().max().unwrap_or(0)
    }
}

/// Below this ratio of tolerance to matrix norm, the Gram matrix cannot resolve the
/// tail and the basis comes from a QR-then-SVD factorisation instead.
const GRAM_RESOLUTION: f64 = 1e-7;

/// Column group of a far-field block row: rows `start..start + len` of the transposed
/// block row, scaled by `weight` before truncation.
struct Group {
    start: usize,
    len: usize,
    weight: f64,
}

/// Dominant left singular vectors of the weighted block row whose transpose is `t`
/// (`C x m`). Returns `m x k` with the discarded weighted energy at most `tau^2`,
/// `k <= max_rank`, and the rank that the tolerance alone would need.
fn truncate(t: &DMatrix<f64>, groups: &[Group], tau: f64, max_rank: usize) -> (DMatrix<f64>, usize) {
    let (c, m) = t.shape();
    if c == 0 || m == 0 {
        return (DMatrix::zeros(m, 0), 0);
    }
    let mut tw = t.clone();
    for col in tw.as_mut_slice().chunks_exact_mut(c) {
        for g in groups {
            for v in &mut col[g.start..g.start + g.len] {
                *v *= g.weight;
            }
        }
    }
    let total = tw.norm_squared();
    if total <= tau * tau {
        return (DMatrix::zeros(m, 0), 0);
    }

    // (sigma^2, right singular vector of tw) in decreasing order
    let (sigma2, vectors): (Vec<f64>, DMatrix<f64>) = if tau * tau < GRAM_RESOLUTION * GRAM_RESOLUTION * total {
        let r = if c >= m { QR::new(tw).r() } else { tw };
        let svd = r.svd(false, true);
        let v_t = svd.v_t.expect("requested");
        (svd.singular_values.iter().map(|s| s * s).collect(), v_t.transpose())
    } else {
        let gram = tw.transpose() * &tw;
        let eig = SymmetricEigen::new(gram);
        (eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect(), eig.eigenvectors)
    };
    let mut order: Vec<usize> = (0..sigma2.len()).collect();
    order.sort_by(|&a, &b| sigma2[b].total_cmp(&sigma2[a]));

    let mut tail: f64 = sigma2.iter().sum();
    let mut needed = 0;
    while needed < order.len() && tail > tau * tau {
        tail -= sigma2[order[needed]];
        needed += 1;
    }
    let k = needed.min(max_rank);
    let mut u = DMatrix::zeros(m, k);
    for (dst, &src) in order[..k].iter().enumerate() {
        u.set_column(dst, &vectors.column(src));
    }
    (u, needed)
}

struct Builder<'a> {
    topo: &'a Topology,
    points: &'a [[f64; 3]],
    kernel: KernelSpec,
    tau: f64,
    max_rank: usize,
    blocks: &'a mut BlockTree,
    pair: HashMap<(usize, usize), usize>,
    ranks: Vec<usize>,
    leaf_bases: Vec<DMatrix<f64>>,
    transfers: Vec<DMatrix<f64>>,
    capped: Vec<bool>,
    capped_below: Vec<bool>,
    explicit: Vec<Option<DMatrix<f64>>>,
}

impl Builder<'_> {
    /// Far-field column clusters of `i`'s own admissible blocks.
    fn own_groups(&self, i: usize) -> Vec<usize> {
        self.blocks.lowrank_by_row[i].iter().map(|&b| self.blocks.lowrank[b].col).collect()
    }

    /// Builds the subtree at `i` whose ancestors' far field is `inherited`. Returns the
    /// projection `T_inherited U_i` (transposed block row times explicit basis) and the
    /// squared norms of the inherited slices.
    fn process(&mut self, i: usize, inherited: &[usize]) -> (DMatrix<f64>, Vec<f64>) {
        let own = self.own_groups(i);
        let far: Vec<usize> = own.iter().chain(inherited).copied().collect();
        let mut starts = Vec::with_capacity(far.len());
        let mut total = 0;
        for &g in &far {
            starts.push(total);
            total += self.topo.size(g);
        }

        let (t, norms2) = if self.topo.is_leaf(i) {
            let rows = &self.points[self.topo.ranges[i].clone()];
            let mut src = Vec::with_capacity(total);
            for &g in &far {
                src.extend_from_slice(&self.points[self.topo.ranges[g].clone()]);
            }
            let mut t = DMatrix::zeros(total, rows.len());
            self.kernel.fill(rows, &src, t.as_mut_slice());
            let norms2 = far
                .iter()
                .zip(&starts)
                .map(|(&g, &s)| t.rows(s, self.topo.size(g)).norm_squared())
                .collect();
            (t, norms2)
        } else {
            let children: Vec<usize> = self.topo.children[i].clone().collect();
            let parts: Vec<(DMatrix<f64>, Vec<f64>)> =
                children.iter().map(|&c| self.process(c, &far)).collect();
            let width: usize = parts.iter().map(|p| p.0.ncols()).sum();
            let mut t = DMatrix::zeros(total, width);
            let mut norms2 = vec![0.0; far.len()];
            let mut col = 0;
            for (p, n2) in &parts {
                t.columns_mut(col, p.ncols()).copy_from(p);
                col += p.ncols();
                for (acc, v) in norms2.iter_mut().zip(n2) {
                    *acc += v;
                }
            }
            (t, norms2)
        };

        let groups: Vec<Group> = far
            .iter()
            .zip(&starts)
            .zip(&norms2)
            .map(|((&g, &start), &n2)| Group {
                start,
                len: self.topo.size(g),
                weight: if n2 > 0.0 { 1.0 / n2.sqrt() } else { 0.0 },
            })
            .collect();
        let (u, needed) = truncate(&t, &groups, self.tau, self.max_rank);
        let k = u.ncols();
        self.ranks[i] = k;
        self.capped[i] = needed > k;
        self.capped_below[i] = self.capped[i];

        if self.topo.is_leaf(i) {
            self.explicit[i] = Some(u.clone());
            self.leaf_bases[i] = u.clone();
        } else {
            let mut ex = DMatrix::zeros(self.topo.size(i), k);
            let base = self.topo.ranges[i].start;
            let mut off = 0;
            for c in self.topo.children[i].clone() {
                let kc = self.ranks[c];
                let e = u.rows(off, kc).into_owned();
                off += kc;
                let part = self.explicit[c].as_ref().expect("child finished") * &e;
                ex.view_mut((self.topo.ranges[c].start - base, 0), part.shape()).copy_from(&part);
                self.transfers[c] = e;
                self.capped_below[i] |= self.capped_below[c];
            }
            self.explicit[i] = Some(ex);
        }

        // projection of every far-field slice onto the new basis
        let p = &t * &u;
        for (slot, &b) in self.blocks.lowrank_by_row[i].clone().iter().enumerate() {
            let j = self.blocks.lowrank[b].col;
            let Some(vj) = self.explicit[j].as_ref() else { continue };
            let s = p.rows(starts[slot], self.topo.size(j)).transpose() * vj;
            let norm2 = norms2[slot];
            let norm = norm2.sqrt();
            let rel_error = if norm > 0.0 {
                (norm2 - s.norm_squared()).max(0.0).sqrt() / norm
            } else {
                0.0
            };
            let capped = self.capped_below[i] || self.capped_below[j];
            let mirror = *self.pair.get(&(j, i)).expect("block structure is symmetric");
            let st = s.transpose();
            for (idx, mat) in [(b, s), (mirror, st)] {
                let blk = &mut self.blocks.lowrank[idx];
                blk.s = mat;
                blk.norm = norm;
                blk.rel_error = rel_error;
                blk.capped = capped;
            }
        }
        let own_cols = starts.get(own.len()).copied().unwrap_or(total);
        let up = p.rows(own_cols, total - own_cols).into_owned();
        (up, norms2[own.len()..].to_vec())
    }
}

/// Compress the kernel matrix over the particles of `tree` into H² form.
///
/// The kernels are symmetric, so the column basis tree is the row basis tree.
pub fn compress(tree: &Octree, kernel: &KernelSpec, options: &CompressOptions) -> Result<H2Matrix> {
    options.validate()?;
    kernel.validate()?;
    let topo = Topology::from_octree(tree);
    let points: Vec<[f64; 3]> = tree.particles().iter().map(|p| p.position).collect();
    let mut blocks = BlockTree::build(&topo, options.eta);
    let pair = blocks.lowrank.iter().enumerate().map(|(b, blk)| ((blk.row, blk.col), b)).collect();
    let tau = options.eps / (2.0 * (topo.depth() as f64 + 1.0)).sqrt();
    let nn = topo.len();

    let mut builder = Builder {
        topo: &topo,
        points: &points,
        kernel: *kernel,
        tau,
        max_rank: options.max_rank,
        blocks: &mut blocks,
        pair,
        ranks: vec![0; nn],
        leaf_bases: vec![DMatrix::zeros(0, 0); nn],
        transfers: vec![DMatrix::zeros(0, 0); nn],
        capped: vec![false; nn],
        capped_below: vec![false; nn],
        explicit: vec![None; nn],
    };
    builder.process(0, &[]);
    let Builder { ranks, leaf_bases, transfers, capped, .. } = builder;
    let capped_blocks = blocks.lowrank.iter().filter(|b| b.capped).count();
    if capped_blocks > 0 {
        log::warn!("{capped_blocks} low-rank blocks limited by max_rank = {}", options.max_rank);
    }

    for blk in &mut blocks.dense {
        let rows = &points[topo.ranges[blk.row].clone()];
        let cols = &points[topo.ranges[blk.col].clone()];
        let mut d = DMatrix::zeros(rows.len(), cols.len());
        kernel.fill(cols, rows, d.as_mut_slice());
        blk.d = d;
    }

    let row = BasisTree { side: Side::Row, ranks, leaf_bases, transfers, capped };
    let col = BasisTree { side: Side::Column, ..row.clone() };
    Ok(H2Matrix {
        n: points.len(),
        kernel: *kernel,
        options: *options,
        topo,
        points,
        permutation: tree.permutation().to_vec(),
        row,
        col,
        blocks,
    })
}
