//! Closed-form counts on a full octree whose `P = 8^g` processes each own one level-`g`
//! cell (process id = Morton index of that cell) and a local subtree of depth `ℓ`.

use super::report::LevelCounts;
use super::{CountingMode, Phase, PhaseCounts};
use crate::error::{Error, Result};
use crate::geometry::{neighbor_offsets, MortonKey};

/// Local tree depth `ℓ`: the smallest level count with `leaf_capacity · 8^ℓ ≥ n_per_process`.
pub fn local_depth(n_per_process: usize, leaf_capacity: usize) -> u32 {
    let mut level = 0;
    let mut cells = leaf_capacity.max(1) as u128;
    while cells < n_per_process as u128 {
        cells *= 8;
        level += 1;
    }
    level
}

/// Cells in a halo of `width` around a `d`-dimensional cube of `side` cells.
pub fn halo_cells(d: u32, side: u64, width: u64) -> u64 {
    (side + 2 * width).pow(d) - side.pow(d)
}

/// Geometry of a uniform run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UniformLayout {
    /// `g` with `P = 8^g`.
    pub global_levels: u32,
    /// `ℓ`.
    pub local_depth: u32,
    pub mode: CountingMode,
}

/// Deepest supported global tree (`P ≤ 8^7`).
const MAX_GLOBAL_LEVELS: u32 = 7;

impl UniformLayout {
    pub fn new(
        processes: usize,
        n_per_process: usize,
        leaf_capacity: usize,
        mode: CountingMode,
    ) -> Result<Self> {
        let g = (0..=MAX_GLOBAL_LEVELS)
            .find(|&g| 8usize.pow(g) == processes)
            .ok_or_else(|| {
                Error::Config(format!(
                    "uniform layout needs P = 8^g with g <= {MAX_GLOBAL_LEVELS}, got {processes}"
                ))
            })?;
        if n_per_process == 0 || leaf_capacity == 0 {
            return Err(Error::Config(
                "particles per process and leaf capacity must be positive".into(),
            ));
        }
        let local = local_depth(n_per_process, leaf_capacity);
        if g + local > crate::geometry::MAX_LEVEL {
            return Err(Error::PrecisionLimit {
                level: g + local,
                max: crate::geometry::MAX_LEVEL,
            });
        }
        Ok(UniformLayout {
            global_levels: g,
            local_depth: local,
            mode,
        })
    }

    pub fn processes(&self) -> usize {
        8usize.pow(self.global_levels)
    }

    fn coords(&self, p: usize) -> [u32; 3] {
        MortonKey::from_raw(p as u64, self.global_levels)
            .expect("process index fits its level")
            .decode()
    }

    /// Offsets of the same-level cells adjacent to `cell` at `level` that are counted.
    fn colleagues(&self, cell: [u32; 3], level: u32) -> impl Iterator<Item = [i32; 3]> + '_ {
        let side = 1i64 << level;
        let periodic = self.mode == CountingMode::Periodic;
        neighbor_offsets().filter(move |o| {
            periodic
                || (0..3).all(|d| (0..side).contains(&(i64::from(cell[d]) + i64::from(o[d]))))
        })
    }

    pub fn global_m2m(&self) -> PhaseCounts {
        let np = self.processes();
        let mut out = PhaseCounts::empty(Phase::GlobalM2M, np);
        for j in 1..=self.global_levels {
            let mut lc = LevelCounts::zeros(j, np);
            lc.partners.fill(7);
            lc.cells_sent.fill(7);
            lc.cells_recv.fill(7);
            lc.max_cells_per_partner = 1;
            out.levels.push(lc);
        }
        finish(&mut out);
        out
    }

    pub fn global_m2l(&self) -> PhaseCounts {
        let np = self.processes();
        let g = self.global_levels;
        let mut out = PhaseCounts::empty(Phase::GlobalM2L, np);
        for j in 1..=g {
            let mut lc = LevelCounts::zeros(j, np);
            for p in 0..np {
                let c = self.coords(p).map(|v| v >> (g - j));
                let k = self.colleagues(c, j).count() as u64;
                lc.partners[p] = k as u32;
                lc.cells_sent[p] = 8 * k;
                lc.cells_recv[p] = 8 * k;
            }
            lc.max_cells_per_partner = 8;
            out.levels.push(lc);
        }
        finish(&mut out);
        out
    }

    /// Halo of `width` cells at local level `i`, split over the neighbouring processes.
    fn halo_level(&self, i: u32, width: u64) -> LevelCounts {
        let np = self.processes();
        let g = self.global_levels;
        let side = 1u64 << i;
        let mut lc = LevelCounts::zeros(g + i, np);
        for p in 0..np {
            let c = self.coords(p);
            let mut partners = 0;
            let mut cells = 0;
            for o in self.colleagues(c, g) {
                let share: u64 = o.iter().map(|&v| if v == 0 { side } else { width }).product();
                partners += 1;
                cells += share;
                lc.max_cells_per_partner = lc.max_cells_per_partner.max(share);
            }
            lc.partners[p] = partners;
            // Pairwise shares are symmetric, so each process sends what it receives.
            lc.cells_sent[p] = cells;
            lc.cells_recv[p] = cells;
        }
        lc
    }

    pub fn local_m2l(&self) -> PhaseCounts {
        let mut out = PhaseCounts::empty(Phase::LocalM2L, self.processes());
        let depth = if self.processes() > 1 { self.local_depth } else { 0 };
        for i in 1..=depth {
            out.levels.push(self.halo_level(i, 2));
        }
        finish(&mut out);
        out
    }

    pub fn local_p2p(&self) -> PhaseCounts {
        let mut out = PhaseCounts::empty(Phase::LocalP2P, self.processes());
        if self.processes() > 1 {
            out.levels.push(self.halo_level(self.local_depth, 1));
        }
        finish(&mut out);
        out
    }

    pub fn phases(&self) -> Vec<PhaseCounts> {
        vec![self.global_m2m(), self.global_m2l(), self.local_m2l(), self.local_p2p()]
    }

    /// Distinct partners over both global phases.
    pub fn global_partners(&self) -> Vec<u32> {
        // Siblings are a subset of the colleagues at every level.
        self.global_m2l().partners
    }
}

/// Sum levels into phase totals; partners at different levels are distinct for the
/// global phases and identical (the neighbouring processes) for the local ones.
fn finish(out: &mut PhaseCounts) {
    for lc in &out.levels {
        for p in 0..out.partners.len() {
            out.cells_sent[p] += lc.cells_sent[p];
            out.cells_recv[p] += lc.cells_recv[p];
            if out.phase.is_global() {
                out.partners[p] += lc.partners[p];
            } else {
                out.partners[p] = out.partners[p].max(lc.partners[p]);
            }
        }
    }
}
