//! Binary H² container (all integers and reals little-endian).
//!
//! ```text
//! header    "H2FM" | u32 version | u64 n
//! kernel    u32 kind (0 laplace3d, 1 laplace2d, 2 gaussian, 3 one) | f64 delta | f64 sigma
//! options   f64 eps | u64 max_rank | f64 eta
//! tree      u64 count, then per node: u64 key bits | u32 level | u64 parent (u64::MAX at root)
//!           | u64 first child | u64 child count | u64 range start | u64 range end
//! points    n x (f64 x, f64 y, f64 z) in Morton order
//! perm      n x u64 (input position of each sorted point)
//! bases     row tree then column tree; per node: u64 rank | u8 capped | matrix leaf basis
//!           | matrix transfer
//! quadtree  u64 count, then per node: u64 row | u64 col | u8 tag (0 split, 1 low-rank,
//!           2 dense) | u64 block index
//! low-rank  u64 count, then per block: u64 row | u64 col | f64 norm | f64 rel_error
//!           | u8 capped | matrix S
//! dense     u64 count, then per block: u64 row | u64 col | matrix D
//! matrix    u64 rows | u64 cols | rows*cols f64, row-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use nalgebra::DMatrix;

use super::blocks::{BlockNode, BlockTag, BlockTree, DenseBlock, LowRankBlock, Topology};
use super::compress::{BasisTree, Side};
use super::{CompressOptions, H2Matrix, KernelKind, KernelSpec};
use crate::error::{Error, Result};
use crate::geometry::MortonKey;
use crate::FORMAT_VERSION;

pub const H2_MAGIC: [u8; 4] = *b"H2FM";

const NONE: u64 = u64::MAX;

fn write_matrix<W: Write>(w: &mut W, m: &DMatrix<f64>) -> Result<()> {
    w.write_u64::<LE>(m.nrows() as u64)?;
    w.write_u64::<LE>(m.ncols() as u64)?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_f64::<LE>(m[(i, j)])?;
        }
    }
    Ok(())
}

fn read_len<R: Read>(r: &mut R) -> Result<usize> {
    let v = r.read_u64::<LE>()?;
    usize::try_from(v).map_err(|_| Error::Format(format!("length {v} does not fit in memory")))
}

fn read_matrix<R: Read>(r: &mut R) -> Result<DMatrix<f64>> {
    let rows = read_len(r)?;
    let cols = read_len(r)?;
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Format("matrix dimensions overflow".into()))?;
    let mut data = Vec::with_capacity(len.min(1 << 24));
    for _ in 0..len {
        data.push(r.read_f64::<LE>()?);
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

fn read_index<R: Read>(r: &mut R, bound: usize) -> Result<usize> {
    let v = read_len(r)?;
    if v >= bound {
        return Err(Error::Format(format!("index {v} out of range {bound}")));
    }
    Ok(v)
}

impl H2Matrix {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&H2_MAGIC)?;
        w.write_u32::<LE>(FORMAT_VERSION)?;
        w.write_u64::<LE>(self.n as u64)?;
        w.write_u32::<LE>(self.kernel.kind.code())?;
        w.write_f64::<LE>(self.kernel.regularization)?;
        w.write_f64::<LE>(self.kernel.sigma)?;
        w.write_f64::<LE>(self.options.eps)?;
        w.write_u64::<LE>(self.options.max_rank as u64)?;
        w.write_f64::<LE>(self.options.eta)?;

        let t = &self.topo;
        w.write_u64::<LE>(t.len() as u64)?;
        for i in 0..t.len() {
            w.write_u64::<LE>(t.keys[i].bits())?;
            w.write_u32::<LE>(t.keys[i].level())?;
            w.write_u64::<LE>(t.parent[i].map_or(NONE, |p| p as u64))?;
            w.write_u64::<LE>(t.children[i].start as u64)?;
            w.write_u64::<LE>(t.children[i].len() as u64)?;
            w.write_u64::<LE>(t.ranges[i].start as u64)?;
            w.write_u64::<LE>(t.ranges[i].end as u64)?;
        }
        for p in &self.points {
            for c in p {
                w.write_f64::<LE>(*c)?;
            }
        }
        for &i in &self.permutation {
            w.write_u64::<LE>(i as u64)?;
        }
        for basis in [&self.row, &self.col] {
            for i in 0..t.len() {
                w.write_u64::<LE>(basis.ranks[i] as u64)?;
                w.write_u8(basis.capped[i] as u8)?;
                write_matrix(&mut w, &basis.leaf_bases[i])?;
                write_matrix(&mut w, &basis.transfers[i])?;
            }
        }
        let b = &self.blocks;
        w.write_u64::<LE>(b.nodes.len() as u64)?;
        for node in &b.nodes {
            w.write_u64::<LE>(node.row as u64)?;
            w.write_u64::<LE>(node.col as u64)?;
            let (tag, idx) = match node.tag {
                BlockTag::Subdivided => (0u8, 0usize),
                BlockTag::LowRank(k) => (1, k),
                BlockTag::Dense(k) => (2, k),
            };
            w.write_u8(tag)?;
            w.write_u64::<LE>(idx as u64)?;
        }
        w.write_u64::<LE>(b.lowrank.len() as u64)?;
        for blk in &b.lowrank {
            w.write_u64::<LE>(blk.row as u64)?;
            w.write_u64::<LE>(blk.col as u64)?;
            w.write_f64::<LE>(blk.norm)?;
            w.write_f64::<LE>(blk.rel_error)?;
            w.write_u8(blk.capped as u8)?;
            write_matrix(&mut w, &blk.s)?;
        }
        w.write_u64::<LE>(b.dense.len() as u64)?;
        for blk in &b.dense {
            w.write_u64::<LE>(blk.row as u64)?;
            w.write_u64::<LE>(blk.col as u64)?;
            write_matrix(&mut w, &blk.d)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != H2_MAGIC {
            return Err(Error::Format("not an H2 matrix file (bad magic)".into()));
        }
        let version = r.read_u32::<LE>()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported H2 file version {version}")));
        }
        let n = read_len(&mut r)?;
        let kind = KernelKind::from_code(r.read_u32::<LE>()?)?;
        let kernel = KernelSpec { kind, regularization: r.read_f64::<LE>()?, sigma: r.read_f64::<LE>()? };
        let options = CompressOptions {
            eps: r.read_f64::<LE>()?,
            max_rank: read_len(&mut r)?,
            eta: r.read_f64::<LE>()?,
        };

        let count = read_len(&mut r)?;
        let mut topo = Topology {
            keys: Vec::with_capacity(count.min(1 << 24)),
            parent: Vec::new(),
            children: Vec::new(),
            ranges: Vec::new(),
        };
        for _ in 0..count {
            let bits = r.read_u64::<LE>()?;
            let level = r.read_u32::<LE>()?;
            topo.keys.push(MortonKey::from_raw(bits, level)?);
            let parent = r.read_u64::<LE>()?;
            topo.parent.push(if parent == NONE { None } else { Some(parent as usize) });
            let first = read_len(&mut r)?;
            let len = read_len(&mut r)?;
            topo.children.push(first..first + len);
            let start = read_len(&mut r)?;
            let end = read_len(&mut r)?;
            if start > end || end > n {
                return Err(Error::Format("invalid particle range".into()));
            }
            topo.ranges.push(start..end);
        }
        if topo.children.iter().any(|c| c.end > count) || topo.parent.iter().flatten().any(|&p| p >= count) {
            return Err(Error::Format("invalid tree links".into()));
        }
        let mut points = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            points.push([r.read_f64::<LE>()?, r.read_f64::<LE>()?, r.read_f64::<LE>()?]);
        }
        let mut permutation = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            permutation.push(read_index(&mut r, n)?);
        }
        let mut bases = Vec::new();
        for side in [Side::Row, Side::Column] {
            let mut basis = BasisTree {
                side,
                ranks: Vec::with_capacity(count),
                leaf_bases: Vec::with_capacity(count),
                transfers: Vec::with_capacity(count),
                capped: Vec::with_capacity(count),
            };
            for _ in 0..count {
                basis.ranks.push(read_len(&mut r)?);
                basis.capped.push(r.read_u8()? != 0);
                basis.leaf_bases.push(read_matrix(&mut r)?);
                basis.transfers.push(read_matrix(&mut r)?);
            }
            bases.push(basis);
        }
        let col = bases.pop().expect("two sides");
        let row = bases.pop().expect("two sides");

        let mut blocks = BlockTree {
            nodes: Vec::new(),
            lowrank: Vec::new(),
            dense: Vec::new(),
            lowrank_by_row: vec![Vec::new(); count],
            dense_by_row: vec![Vec::new(); count],
        };
        let qn = read_len(&mut r)?;
        for _ in 0..qn {
            let row = read_index(&mut r, count)?;
            let col = read_index(&mut r, count)?;
            let tag = r.read_u8()?;
            let idx = read_len(&mut r)?;
            let tag = match tag {
                0 => BlockTag::Subdivided,
                1 => BlockTag::LowRank(idx),
                2 => BlockTag::Dense(idx),
                t => return Err(Error::Format(format!("unknown block tag {t}"))),
            };
            blocks.nodes.push(BlockNode { row, col, tag });
        }
        let ln = read_len(&mut r)?;
        for b in 0..ln {
            let row = read_index(&mut r, count)?;
            let col = read_index(&mut r, count)?;
            let norm = r.read_f64::<LE>()?;
            let rel_error = r.read_f64::<LE>()?;
            let capped = r.read_u8()? != 0;
            let s = read_matrix(&mut r)?;
            blocks.lowrank_by_row[row].push(b);
            blocks.lowrank.push(LowRankBlock { row, col, s, norm, rel_error, capped });
        }
        let dn = read_len(&mut r)?;
        for b in 0..dn {
            let row = read_index(&mut r, count)?;
            let col = read_index(&mut r, count)?;
            let d = read_matrix(&mut r)?;
            blocks.dense_by_row[row].push(b);
            blocks.dense.push(DenseBlock { row, col, d });
        }

        let h2 = H2Matrix { n, kernel, options, topo, points, permutation, row, col, blocks };
        h2.check_shapes()?;
        Ok(h2)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    /// Matrix dimensions agree with the tree and the ranks.
    fn check_shapes(&self) -> Result<()> {
        let t = &self.topo;
        let bad = |what: &str| Err(Error::Format(format!("inconsistent {what}")));
        for basis in [&self.row, &self.col] {
            for i in 0..t.len() {
                let k = basis.ranks[i];
                let leaf = &basis.leaf_bases[i];
                if t.is_leaf(i) && leaf.shape() != (t.size(i), k) {
                    return bad("leaf basis");
                }
                if let Some(p) = t.parent[i] {
                    if basis.transfers[i].shape() != (k, basis.ranks[p]) {
                        return bad("transfer");
                    }
                }
            }
        }
        for blk in &self.blocks.lowrank {
            if blk.s.shape() != (self.row.ranks[blk.row], self.col.ranks[blk.col]) {
                return bad("coupling block");
            }
        }
        for blk in &self.blocks.dense {
            if blk.d.shape() != (t.size(blk.row), t.size(blk.col)) {
                return bad("dense block");
            }
        }
        Ok(())
    }
}
