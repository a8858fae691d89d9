use std::collections::{HashMap, HashSet};
use std::ops::Range;

use super::Octree;
use crate::error::{Error, Result};
use crate::geometry::{neighbor_offsets, MortonKey, MAX_LEVEL};

#[derive(Clone)]
struct Cell {
    leaf: bool,
    range: Range<usize>,
}

/// Refine leaves until no two adjacent leaves (26-connectivity) differ by more than
/// one level. Only refinement happens; empty cells stay absent.
pub fn balance_2to1(tree: Octree) -> Result<Octree> {
    let mut cells: HashMap<MortonKey, Cell> = tree
        .nodes()
        .iter()
        .map(|n| (n.key, Cell { leaf: n.is_leaf(), range: n.range.clone() }))
        .collect();
    let mut work: Vec<MortonKey> = tree.leaves().iter().map(|&i| tree.node(i).key).collect();
    let keys = tree.point_keys();
    let mut refined = 0usize;

    while let Some(b) = work.pop() {
        if !cells.get(&b).is_some_and(|c| c.leaf) || b.level() < 2 {
            continue;
        }
        for off in neighbor_offsets() {
            let Some(mut probe) = b.neighbor(off) else { continue };
            // deepest stored cell containing the neighbour position
            let a = loop {
                if let Some(c) = cells.get(&probe) {
                    break c.leaf.then_some(probe);
                }
                probe = probe.parent().expect("root is always stored");
            };
            let Some(a) = a else { continue };
            if a.level() + 1 >= b.level() {
                continue;
            }
            if a.level() >= MAX_LEVEL {
                return Err(Error::PrecisionLimit { level: a.level() + 1, max: MAX_LEVEL });
            }
            let range = cells[&a].range.clone();
            cells.get_mut(&a).expect("present").leaf = false;
            let shift = 3 * (MAX_LEVEL - a.level() - 1);
            let mut start = range.start;
            for digit in 0..8u64 {
                let end = start + keys[start..range.end].partition_point(|&k| (k >> shift) & 7 <= digit);
                if end > start {
                    let child = a.child(digit as usize)?;
                    cells.insert(child, Cell { leaf: true, range: start..end });
                    work.push(child);
                }
                start = end;
            }
            refined += 1;
            // b itself may now see finer cells; revisit it
            work.push(b);
            break;
        }
    }

    log::debug!("2:1 balance refined {refined} leaves");
    let leaves: HashSet<MortonKey> =
        cells.into_iter().filter(|(_, c)| c.leaf).map(|(k, _)| k).collect();
    Ok(tree.with_leaves(&leaves, true))
}

/// Largest level difference between any two adjacent leaves, by an exhaustive pairwise
/// scan. Quadratic; meant for checking small trees.
pub fn max_adjacent_level_gap(tree: &Octree) -> u32 {
    let leaves: Vec<MortonKey> = tree.leaves().iter().map(|&i| tree.node(i).key).collect();
    let mut gap = 0;
    for (i, a) in leaves.iter().enumerate() {
        for b in &leaves[i + 1..] {
            if a.is_adjacent(b) {
                gap = gap.max(a.level().abs_diff(b.level()));
            }
        }
    }
    gap
}
