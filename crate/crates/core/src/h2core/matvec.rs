//! The H² matrix-vector product: dense near-field blocks plus the upsweep, coupling
//! and downsweep of the low-rank part. Node vectors `x̂`, `ŷ` are indexed like the
//! cluster tree (level, then Morton key).

use nalgebra::{DVector, DVectorView, DVectorViewMut};

use super::H2Matrix;
use crate::error::{Error, Result};

impl H2Matrix {
    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::Dimension { expected: self.n, got: x.len() });
        }
        Ok(())
    }

    /// Input-order vector to Morton order.
    pub(crate) fn to_sorted(&self, x: &[f64]) -> Vec<f64> {
        self.permutation.iter().map(|&i| x[i]).collect()
    }

    /// Morton-order vector to input order.
    pub(crate) fn from_sorted(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (k, &i) in self.permutation.iter().enumerate() {
            out[i] = y[k];
        }
        out
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let dense = self.dense_phase(x)?;
        let lowrank = self.lowrank_phase(x)?;
        Ok(dense.iter().zip(&lowrank).map(|(a, b)| a + b).collect())
    }

    /// Contribution of the dense blocks alone.
    pub fn dense_phase(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        let xs = self.to_sorted(x);
        let mut y = vec![0.0; self.n];
        for (i, list) in self.blocks.dense_by_row.iter().enumerate() {
            if list.is_empty() {
                continue;
            }
            let rows = self.topo.ranges[i].clone();
            let mut yi = DVectorViewMut::from_slice(&mut y[rows], self.topo.size(i));
            for &b in list {
                let blk = &self.blocks.dense[b];
                let cols = self.topo.ranges[blk.col].clone();
                let xj = DVectorView::from_slice(&xs[cols.clone()], cols.len());
                yi.gemv(1.0, &blk.d, &xj, 1.0);
            }
        }
        Ok(self.from_sorted(&y))
    }

    /// Contribution of the low-rank blocks alone.
    pub fn lowrank_phase(&self, x: &[f64]) -> Result<Vec<f64>> {
        let xhat = self.upsweep(x)?;
        let yhat = self.coupling(&xhat)?;
        self.downsweep(&yhat)
    }

    /// `x̂_j = V_j^T x_j` at leaves and `x̂_j = Σ_c F_c^T x̂_c` above.
    pub fn upsweep(&self, x: &[f64]) -> Result<Vec<DVector<f64>>> {
        self.check_len(x)?;
        let xs = self.to_sorted(x);
        let nn = self.topo.len();
        let mut xhat: Vec<DVector<f64>> = (0..nn).map(|j| DVector::zeros(self.col.ranks[j])).collect();
        for j in (0..nn).rev() {
            if self.col.ranks[j] == 0 {
                continue;
            }
            if self.topo.is_leaf(j) {
                let r = self.topo.ranges[j].clone();
                let xj = DVectorView::from_slice(&xs[r.clone()], r.len());
                xhat[j].gemv_tr(1.0, &self.col.leaf_bases[j], &xj, 0.0);
            } else {
                let mut acc = DVector::zeros(self.col.ranks[j]);
                for c in self.topo.children[j].clone() {
                    if self.col.ranks[c] > 0 {
                        acc.gemv_tr(1.0, &self.col.transfers[c], &xhat[c], 1.0);
                    }
                }
                xhat[j] = acc;
            }
        }
        Ok(xhat)
    }

    /// `ŷ_i = Σ_j S_ij x̂_j` over the low-rank blocks of row `i`, in block order.
    pub fn coupling(&self, xhat: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        let nn = self.topo.len();
        if xhat.len() != nn {
            return Err(Error::Dimension { expected: nn, got: xhat.len() });
        }
        let mut yhat: Vec<DVector<f64>> = (0..nn).map(|i| DVector::zeros(self.row.ranks[i])).collect();
        for (i, list) in self.blocks.lowrank_by_row.iter().enumerate() {
            for &b in list {
                let blk = &self.blocks.lowrank[b];
                if blk.s.nrows() > 0 && blk.s.ncols() > 0 {
                    yhat[i].gemv(1.0, &blk.s, &xhat[blk.col], 1.0);
                }
            }
        }
        Ok(yhat)
    }

    /// Pushes `ŷ` down (`ŷ_c += E_c ŷ_parent`) and expands at the leaves (`y_i = U_i ŷ_i`).
    pub fn downsweep(&self, yhat: &[DVector<f64>]) -> Result<Vec<f64>> {
        let nn = self.topo.len();
        if yhat.len() != nn {
            return Err(Error::Dimension { expected: nn, got: yhat.len() });
        }
        let mut acc = yhat.to_vec();
        let mut y = vec![0.0; self.n];
        for i in 0..nn {
            if self.row.ranks[i] == 0 {
                continue;
            }
            if self.topo.is_leaf(i) {
                let r = self.topo.ranges[i].clone();
                let len = r.len();
                let mut yi = DVectorViewMut::from_slice(&mut y[r], len);
                yi.gemv(1.0, &self.row.leaf_bases[i], &acc[i], 0.0);
            } else {
                for c in self.topo.children[i].clone() {
                    if self.row.ranks[c] > 0 {
                        let (head, tail) = acc.split_at_mut(c);
                        tail[0].gemv(1.0, &self.row.transfers[c], &head[i], 1.0);
                    }
                }
            }
        }
        Ok(self.from_sorted(&y))
    }
}
