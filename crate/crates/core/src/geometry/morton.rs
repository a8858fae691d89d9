//! Level-tagged Morton (Z-order) keys for octree cells.
//!
//! A key at level `L` packs `3L` interleaved coordinate bits: bit `3b` holds bit `b` of
//! the x cell coordinate, bit `3b + 1` the y bit and bit `3b + 2` the z bit. The level
//! is stored next to the bits, so keys of different levels never collide.
//!
//! 21 levels fill 63 bits of the word. The next level would need 66 bits, so the
//! encoder refuses anything deeper. Double-precision coordinates would run out of
//! significand bits only at level 53, which single-word keys never reach.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Deepest level representable in a single 64-bit key.
pub const MAX_LEVEL: u32 = 21;

const SPREAD_MASKS: [u64; 6] = [
    0x1f_ffff,
    0x1f_0000_0000_ffff,
    0x1f_0000_ff00_00ff,
    0x100f_00f0_0f00_f00f,
    0x10c3_0c30_c30c_30c3,
    0x1249_2492_4924_9249,
];

fn spread(v: u32) -> u64 {
    let mut x = u64::from(v) & SPREAD_MASKS[0];
    x = (x | (x << 32)) & SPREAD_MASKS[1];
    x = (x | (x << 16)) & SPREAD_MASKS[2];
    x = (x | (x << 8)) & SPREAD_MASKS[3];
    x = (x | (x << 4)) & SPREAD_MASKS[4];
    x = (x | (x << 2)) & SPREAD_MASKS[5];
    x
}

fn compact(v: u64) -> u32 {
    let mut x = v & SPREAD_MASKS[5];
    x = (x | (x >> 2)) & SPREAD_MASKS[4];
    x = (x | (x >> 4)) & SPREAD_MASKS[3];
    x = (x | (x >> 8)) & SPREAD_MASKS[2];
    x = (x | (x >> 16)) & SPREAD_MASKS[1];
    x = (x | (x >> 32)) & SPREAD_MASKS[0];
    x as u32
}

/// Octree cell identifier: interleaved coordinate bits plus the refinement level.
///
/// Ordering is Morton pre-order: cells compare by their anchor at [`MAX_LEVEL`], ties
/// (an ancestor and its first descendant) broken with the coarser cell first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MortonKey {
    bits: u64,
    level: u8,
}

impl MortonKey {
    /// The level-0 cell covering the whole unit cube.
    pub const ROOT: MortonKey = MortonKey { bits: 0, level: 0 };

    /// Interleave `coords` into a key at `level`.
    pub fn encode(coords: [u32; 3], level: u32) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(Error::PrecisionLimit {
                level,
                max: MAX_LEVEL,
            });
        }
        let side = 1u64 << level;
        if coords.iter().any(|&c| u64::from(c) >= side) {
            return Err(Error::Config(format!(
                "cell coordinates {coords:?} outside [0, {side}) at level {level}"
            )));
        }
        Ok(Self::encode_unchecked(coords, level))
    }

    pub(crate) fn encode_unchecked(coords: [u32; 3], level: u32) -> Self {
        MortonKey {
            bits: spread(coords[0]) | (spread(coords[1]) << 1) | (spread(coords[2]) << 2),
            level: level as u8,
        }
    }

    /// Rebuild a key from its raw parts, validating that the bits fit the level.
    pub fn from_raw(bits: u64, level: u32) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(Error::PrecisionLimit {
                level,
                max: MAX_LEVEL,
            });
        }
        if level < MAX_LEVEL && bits >> (3 * level) != 0 {
            return Err(Error::Format(format!(
                "key bits {bits:#x} do not fit level {level}"
            )));
        }
        Ok(MortonKey {
            bits,
            level: level as u8,
        })
    }

    /// Integer cell coordinates at this key's level.
    pub fn decode(&self) -> [u32; 3] {
        [
            compact(self.bits),
            compact(self.bits >> 1),
            compact(self.bits >> 2),
        ]
    }

    /// Key of the level-`level` cell containing `position` (half-open cells).
    pub fn from_point(position: [f64; 3], level: u32) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(Error::PrecisionLimit {
                level,
                max: MAX_LEVEL,
            });
        }
        let side = (1u64 << level) as f64;
        let max = (1u32 << level) - 1;
        let mut coords = [0u32; 3];
        for (c, &x) in coords.iter_mut().zip(position.iter()) {
            if !(0.0..1.0).contains(&x) {
                return Err(Error::Config(format!(
                    "position {position:?} outside the half-open unit cube"
                )));
            }
            // floor(x * 2^L) is exact for powers of two, so 0.5 lands in the upper cell.
            *c = ((x * side) as u32).min(max);
        }
        Ok(Self::encode_unchecked(coords, level))
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn level(&self) -> u32 {
        u32::from(self.level)
    }

    /// Key shifted to [`MAX_LEVEL`]: the first-descendant position along the curve.
    pub fn anchor(&self) -> u64 {
        self.bits << (3 * (MAX_LEVEL - self.level()))
    }

    pub fn parent(&self) -> Option<Self> {
        (self.level > 0).then(|| MortonKey {
            bits: self.bits >> 3,
            level: self.level - 1,
        })
    }

    /// Ancestor at `level` (the key itself when `level` equals its own).
    pub fn ancestor(&self, level: u32) -> Option<Self> {
        (level <= self.level()).then(|| MortonKey {
            bits: self.bits >> (3 * (self.level() - level)),
            level: level as u8,
        })
    }

    /// Octant digit of this key within its parent.
    pub fn digit(&self) -> usize {
        (self.bits & 7) as usize
    }

    pub fn child(&self, digit: usize) -> Result<Self> {
        if self.level() >= MAX_LEVEL {
            return Err(Error::PrecisionLimit {
                level: self.level() + 1,
                max: MAX_LEVEL,
            });
        }
        Ok(MortonKey {
            bits: (self.bits << 3) | (digit as u64 & 7),
            level: self.level + 1,
        })
    }

    pub fn children(&self) -> Result<[Self; 8]> {
        let first = self.child(0)?;
        Ok(std::array::from_fn(|d| MortonKey {
            bits: first.bits | d as u64,
            level: first.level,
        }))
    }

    pub fn is_ancestor_of(&self, other: &Self) -> bool {
        other.level >= self.level && other.ancestor(self.level()) == Some(*self)
    }

    /// Same-level cell displaced by `offset` cells, if it lies inside the domain.
    pub fn neighbor(&self, offset: [i32; 3]) -> Option<Self> {
        let side = 1i64 << self.level;
        let c = self.decode();
        let mut out = [0u32; 3];
        for d in 0..3 {
            let v = i64::from(c[d]) + i64::from(offset[d]);
            if !(0..side).contains(&v) {
                return None;
            }
            out[d] = v as u32;
        }
        Some(Self::encode_unchecked(out, self.level()))
    }

    /// Integer bounds `[lo, hi)` of the cell in units of level-21 cells.
    pub fn int_bounds(&self) -> ([u64; 3], [u64; 3]) {
        let size = 1u64 << (MAX_LEVEL - self.level());
        let c = self.decode();
        let lo = [
            u64::from(c[0]) * size,
            u64::from(c[1]) * size,
            u64::from(c[2]) * size,
        ];
        (lo, [lo[0] + size, lo[1] + size, lo[2] + size])
    }

    /// Cell side length in the unit cube.
    pub fn width(&self) -> f64 {
        1.0 / (1u64 << self.level) as f64
    }

    /// Real bounds `[lo, hi)` of the cell in the unit cube.
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let w = self.width();
        let c = self.decode();
        let lo = [c[0] as f64 * w, c[1] as f64 * w, c[2] as f64 * w];
        (lo, [lo[0] + w, lo[1] + w, lo[2] + w])
    }

    pub fn contains_point(&self, p: [f64; 3]) -> bool {
        let (lo, hi) = self.bounds();
        (0..3).all(|d| lo[d] <= p[d] && p[d] < hi[d])
    }

    /// Closed boxes touch (face, edge or corner) while interiors stay disjoint.
    pub fn is_adjacent(&self, other: &Self) -> bool {
        let (alo, ahi) = self.int_bounds();
        let (blo, bhi) = other.int_bounds();
        let mut touching = false;
        for d in 0..3 {
            if alo[d] > bhi[d] || blo[d] > ahi[d] {
                return false;
            }
            if alo[d] == bhi[d] || blo[d] == ahi[d] {
                touching = true;
            }
        }
        touching
    }

    /// Euclidean distance between the closed cell boxes (0 when they touch or overlap).
    pub fn distance(&self, other: &Self) -> f64 {
        let (alo, ahi) = self.int_bounds();
        let (blo, bhi) = other.int_bounds();
        let unit = 1.0 / (1u64 << MAX_LEVEL) as f64;
        let mut sq = 0.0;
        for d in 0..3 {
            let gap = if alo[d] >= bhi[d] {
                alo[d] - bhi[d]
            } else if blo[d] >= ahi[d] {
                blo[d] - ahi[d]
            } else {
                0
            };
            let g = gap as f64 * unit;
            sq += g * g;
        }
        sq.sqrt()
    }

    /// Length of the cell's space diagonal.
    pub fn diameter(&self) -> f64 {
        self.width() * 3f64.sqrt()
    }
}

impl Ord for MortonKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.anchor()
            .cmp(&other.anchor())
            .then(self.level.cmp(&other.level))
    }
}

impl PartialOrd for MortonKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All 26 non-zero offsets of the 3×3×3 stencil.
pub fn neighbor_offsets() -> impl Iterator<Item = [i32; 3]> {
    (-1..=1)
        .flat_map(|x| (-1..=1).flat_map(move |y| (-1..=1).map(move |z| [x, y, z])))
        .filter(|o| *o != [0, 0, 0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn root_encodes_to_zero() {
        let k = MortonKey::encode([0, 0, 0], 0).unwrap();
        assert_eq!(k.bits(), 0);
        assert_eq!(k.level(), 0);
        assert_eq!(k, MortonKey::ROOT);
    }

    #[test]
    fn level_one_round_trip() {
        let k = MortonKey::encode([1, 0, 1], 1).unwrap();
        assert!(k.bits() < 8);
        assert_eq!(k.bits(), 0b101);
        assert_eq!(k.decode(), [1, 0, 1]);
    }

    #[test]
    fn bit_layout() {
        assert_eq!(MortonKey::encode([1, 0, 0], 1).unwrap().bits(), 1);
        assert_eq!(MortonKey::encode([0, 1, 0], 1).unwrap().bits(), 2);
        assert_eq!(MortonKey::encode([0, 0, 1], 1).unwrap().bits(), 4);
        assert_eq!(MortonKey::encode([3, 3, 3], 2).unwrap().bits(), 63);
    }

    #[test]
    fn level_22_is_a_precision_error() {
        match MortonKey::encode([0, 0, 0], 22) {
            Err(Error::PrecisionLimit { level: 22, max: 21 }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(MortonKey::from_point([0.1, 0.2, 0.3], 22).is_err());
        let deepest = MortonKey::encode([0, 0, 0], 21).unwrap();
        assert!(deepest.child(0).is_err());
    }

    #[test]
    fn out_of_range_coords_rejected() {
        assert!(MortonKey::encode([2, 0, 0], 1).is_err());
    }

    #[test]
    fn point_keys() {
        for level in 0..=MAX_LEVEL {
            let k = MortonKey::from_point([0.0, 0.0, 0.0], level).unwrap();
            assert_eq!(k.bits(), 0);
        }
        let k = MortonKey::from_point([0.5, 0.5, 0.5], 1).unwrap();
        assert_eq!(k.decode(), [1, 1, 1]);
        assert!(MortonKey::from_point([1.0, 0.0, 0.0], 3).is_err());
    }

    #[test]
    fn injective_exhaustive_low_levels() {
        for level in 0..=3u32 {
            let side = 1u32 << level;
            let mut seen = std::collections::HashSet::new();
            for x in 0..side {
                for y in 0..side {
                    for z in 0..side {
                        let k = MortonKey::encode([x, y, z], level).unwrap();
                        assert!(seen.insert(k.bits()));
                        assert_eq!(k.decode(), [x, y, z]);
                    }
                }
            }
            assert_eq!(seen.len(), (side as usize).pow(3));
        }
    }

    #[test]
    fn siblings_share_parent() {
        let p = MortonKey::encode([3, 5, 2], 3).unwrap();
        for c in p.children().unwrap() {
            assert_eq!(c.parent(), Some(p));
            assert_eq!(c.bits() >> 3, p.bits());
        }
    }

    #[test]
    fn adjacency_and_distance() {
        let a = MortonKey::encode([1, 1, 1], 2).unwrap();
        assert!(!a.is_adjacent(&a));
        assert_eq!(a.distance(&a), 0.0);
        let face = MortonKey::encode([2, 1, 1], 2).unwrap();
        assert!(a.is_adjacent(&face));
        let corner = MortonKey::encode([2, 2, 2], 2).unwrap();
        assert!(a.is_adjacent(&corner));
        let far = MortonKey::encode([3, 1, 1], 2).unwrap();
        assert!(!a.is_adjacent(&far));
        assert_eq!(far.distance(&a), 0.25);
        // a coarse cell touching a fine one
        let coarse = MortonKey::encode([1, 0, 0], 1).unwrap();
        let fine = MortonKey::encode([3, 0, 0], 2).unwrap();
        assert!(!coarse.is_adjacent(&fine));
        let touching = MortonKey::encode([1, 0, 0], 2).unwrap();
        assert!(coarse.is_adjacent(&touching));
    }

    #[test]
    fn ordering_is_preorder() {
        let root = MortonKey::ROOT;
        let c0 = root.child(0).unwrap();
        let c00 = c0.child(0).unwrap();
        let c1 = root.child(1).unwrap();
        let mut v = vec![c1, c00, root, c0];
        v.sort();
        assert_eq!(v, vec![root, c0, c00, c1]);
    }

    #[test]
    fn offsets_count() {
        assert_eq!(neighbor_offsets().count(), 26);
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(level in 0u32..=21, a in any::<u32>(), b in any::<u32>(), c in any::<u32>()) {
            let mask = if level == 0 { 0 } else { (1u32 << level) - 1 };
            let coords = [a & mask, b & mask, c & mask];
            let k = MortonKey::encode(coords, level).unwrap();
            prop_assert_eq!(k.decode(), coords);
            prop_assert_eq!(MortonKey::from_raw(k.bits(), level).unwrap(), k);
        }

        #[test]
        fn distinct_cells_distinct_keys(level in 4u32..=21, a in any::<[u32; 3]>(), b in any::<[u32; 3]>()) {
            let mask = (1u32 << level) - 1;
            let ca = [a[0] & mask, a[1] & mask, a[2] & mask];
            let cb = [b[0] & mask, b[1] & mask, b[2] & mask];
            let ka = MortonKey::encode(ca, level).unwrap();
            let kb = MortonKey::encode(cb, level).unwrap();
            prop_assert_eq!(ca == cb, ka == kb);
        }

        #[test]
        fn parent_of_point_key(x in 0.0f64..1.0, y in 0.0f64..1.0, z in 0.0f64..1.0, level in 1u32..=21) {
            let p = [x, y, z];
            let fine = MortonKey::from_point(p, level).unwrap();
            let coarse = MortonKey::from_point(p, level - 1).unwrap();
            prop_assert_eq!(fine.parent(), Some(coarse));
            prop_assert!(fine.contains_point(p));
        }
    }
}
