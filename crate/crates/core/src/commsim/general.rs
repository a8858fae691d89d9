//! Message enumeration on an adaptive octree split by [`partition_sfc`](super::partition_sfc).
//!
//! A cell shared by several processes is served by one representative owner, chosen at the
//! same offset inside the owner range as the requester sits inside its own range. On a full
//! octree with `P = 8^g` this is the offset-mapped partner of the uniform engine.

use super::partition::{GlobalLocalSplit, NodeRole};
use super::report::{count_partners, LevelCounts, Tally};
use super::{Phase, PhaseCounts};
use crate::tree::neighbors::adjacent_leaf_indices;
use crate::tree::Octree;

fn size(range: (usize, usize)) -> usize {
    range.1 - range.0 + 1
}

/// Owner of cell `c` that serves process `p`, whose own range starts at `anchor`.
fn representative(split: &GlobalLocalSplit, c: usize, p: usize, anchor: usize) -> usize {
    let r = split.owners(c);
    r.0 + (p - anchor) % size(r)
}

fn colleagues(tree: &Octree, i: usize) -> Vec<usize> {
    let key = tree.node(i).key;
    crate::geometry::neighbor_offsets()
        .filter_map(|o| key.neighbor(o))
        .filter_map(|k| tree.find(&k))
        .collect()
}

/// Cells a node receives from the colleague `z` of its parent: `z` itself when it is a
/// leaf, otherwise its children; in both cases only those not adjacent to `x`.
fn interaction_cells(tree: &Octree, x: usize, z: usize, out: &mut Vec<usize>) {
    let xk = tree.node(x).key;
    if tree.node(z).is_leaf() {
        if !tree.node(z).key.is_adjacent(&xk) {
            out.push(z);
        }
    } else {
        out.extend(tree.children(z).filter(|&c| !tree.node(c).key.is_adjacent(&xk)));
    }
}

fn global_m2m_tally(tree: &Octree, split: &GlobalLocalSplit) -> Tally {
    let mut tally = Tally::default();
    for g in split.global_nodes() {
        let (lo, hi) = split.owners(g);
        for c in tree.children(g) {
            let level = tree.node(c).level();
            for p in lo..=hi {
                if !split.owns(c, p) {
                    tally.send(level, representative(split, c, p, lo), p, 1);
                }
            }
        }
    }
    tally
}

fn global_m2l_tally(tree: &Octree, split: &GlobalLocalSplit) -> Tally {
    // (receiver, cell, sender, level)
    let mut items: Vec<(usize, usize, usize, u32)> = Vec::new();
    let mut cells = Vec::new();
    for x in 0..tree.len() {
        if split.role(x) == NodeRole::Local {
            continue;
        }
        let (lo, hi) = split.owners(x);
        let level = tree.node(x).level();
        for y in colleagues(tree, x) {
            cells.clear();
            if tree.node(y).is_leaf() {
                cells.push(y);
            } else {
                cells.extend(tree.children(y));
            }
            for p in lo..=hi {
                if split.owns(y, p) {
                    continue;
                }
                let rep = representative(split, y, p, lo);
                items.extend(cells.iter().map(|&c| (p, c, rep, level)));
            }
        }
    }
    items.sort_unstable_by_key(|t| (t.0, t.1));
    items.dedup_by_key(|t| (t.0, t.1));
    let mut tally = Tally::default();
    for (p, _, rep, level) in items {
        tally.send(level, rep, p, 1);
    }
    tally
}

/// Remote `(process, cell)` pairs needed below the local roots, sorted and unique.
fn local_m2l_pairs(tree: &Octree, split: &GlobalLocalSplit) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    let mut cells = Vec::new();
    for q in 0..tree.len() {
        if split.role(q) == NodeRole::Global || tree.node(q).is_leaf() {
            continue;
        }
        let p = split.owners(q).0;
        let remote: Vec<usize> = colleagues(tree, q)
            .into_iter()
            .filter(|&z| !split.owns(z, p))
            .collect();
        if remote.is_empty() {
            continue;
        }
        for x in tree.children(q) {
            cells.clear();
            for &z in &remote {
                interaction_cells(tree, x, z, &mut cells);
            }
            pairs.extend(cells.iter().map(|&c| (p, c)));
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    pairs
}

fn serve(tree: &Octree, split: &GlobalLocalSplit, pairs: &[(usize, usize)]) -> Tally {
    let mut tally = Tally::default();
    for &(p, c) in pairs {
        let r = split.owners(c);
        tally.send(tree.node(c).level(), r.0 + p % size(r), p, 1);
    }
    tally
}

fn p2p_pairs(tree: &Octree, split: &GlobalLocalSplit) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    let mut adj = Vec::new();
    for &leaf in tree.leaves() {
        let p = split.owners(leaf).0;
        adjacent_leaf_indices(tree, leaf, &mut adj);
        pairs.extend(adj.iter().filter(|&&l| split.owners(l).0 != p).map(|&l| (p, l)));
    }
    pairs.sort_unstable();
    pairs.dedup();
    pairs
}

/// Children of each global node fetched from a representative owner.
pub fn sim_global_m2m(tree: &Octree, split: &GlobalLocalSplit) -> PhaseCounts {
    global_m2m_tally(tree, split).finish(Phase::GlobalM2M, split.processes())
}

/// Children of the colleagues of every global node and local root.
pub fn sim_global_m2l(tree: &Octree, split: &GlobalLocalSplit) -> PhaseCounts {
    global_m2l_tally(tree, split).finish(Phase::GlobalM2L, split.processes())
}

/// Remote interaction-list cells of the nodes strictly below the local roots.
pub fn sim_local_m2l(tree: &Octree, split: &GlobalLocalSplit) -> PhaseCounts {
    serve(tree, split, &local_m2l_pairs(tree, split)).finish(Phase::LocalM2L, split.processes())
}

/// Remote leaves adjacent to owned leaves.
pub fn sim_local_p2p(tree: &Octree, split: &GlobalLocalSplit) -> PhaseCounts {
    serve(tree, split, &p2p_pairs(tree, split)).finish(Phase::LocalP2P, split.processes())
}

/// All four hierarchical phases plus the distinct partners over both global phases.
pub(crate) fn simulate_hierarchical(
    tree: &Octree,
    split: &GlobalLocalSplit,
) -> (Vec<PhaseCounts>, Vec<u32>) {
    let np = split.processes();
    let m2m = global_m2m_tally(tree, split);
    let m2l = global_m2l_tally(tree, split);
    let mut global_partners = vec![0; np];
    count_partners(m2m.edges().chain(m2l.edges()), &mut global_partners);
    let phases = vec![
        m2m.finish(Phase::GlobalM2M, np),
        m2l.finish(Phase::GlobalM2L, np),
        sim_local_m2l(tree, split),
        sim_local_p2p(tree, split),
    ];
    (phases, global_partners)
}

/// Local essential tree of every process pulled straight from all owners of each cell:
/// the interaction lists of every node the process touches plus its remote adjacent leaves.
pub fn sim_direct_let(tree: &Octree, split: &GlobalLocalSplit) -> PhaseCounts {
    let np = split.processes();
    let mut pairs: Vec<(u32, u32)> = Vec::new();
    let mut cells = Vec::new();
    let mut remote: Vec<usize> = Vec::new();
    for x in 1..tree.len() {
        let q = tree.node(x).parent.expect("non-root node has a parent");
        let (lo, hi) = split.owners(x);
        cells.clear();
        for z in colleagues(tree, q) {
            interaction_cells(tree, x, z, &mut cells);
        }
        for p in lo..=hi {
            remote.clear();
            remote.extend(cells.iter().filter(|&&c| !split.owns(c, p)));
            pairs.extend(remote.iter().map(|&c| (p as u32, c as u32)));
        }
    }
    pairs.extend(p2p_pairs(tree, split).into_iter().map(|(p, c)| (p as u32, c as u32)));
    pairs.sort_unstable();
    pairs.dedup();

    let levels = tree.depth() as usize + 1;
    let mut per_level: Vec<LevelCounts> =
        (0..levels).map(|l| LevelCounts::zeros(l as u32, np)).collect();
    let mut sent_diff = vec![vec![0i64; np + 1]; levels];
    let mut out = PhaseCounts::empty(Phase::DirectLet, np);
    let mut intervals: Vec<(u32, usize, usize)> = Vec::new();
    let mut start = 0;
    while start < pairs.len() {
        let p = pairs[start].0 as usize;
        let end = start + pairs[start..].partition_point(|t| t.0 as usize == p);
        intervals.clear();
        for &(_, c) in &pairs[start..end] {
            let level = tree.node(c as usize).level();
            let (lo, hi) = split.owners(c as usize);
            intervals.push((level, lo, hi));
            per_level[level as usize].cells_recv[p] += size((lo, hi)) as u64;
            sent_diff[level as usize][lo] += 1;
            sent_diff[level as usize][hi + 1] -= 1;
        }
        intervals.sort_unstable();
        let mut s = 0;
        while s < intervals.len() {
            let level = intervals[s].0;
            let e = s + intervals[s..].partition_point(|t| t.0 == level);
            let (cover, peak) = union_and_peak(intervals[s..e].iter().map(|t| (t.1, t.2)));
            let lc = &mut per_level[level as usize];
            lc.partners[p] = cover as u32;
            lc.max_cells_per_partner = lc.max_cells_per_partner.max(peak);
            s = e;
        }
        let mut all: Vec<(usize, usize)> = intervals.iter().map(|t| (t.1, t.2)).collect();
        all.sort_unstable();
        out.partners[p] = union_and_peak(all.into_iter()).0 as u32;
        start = end;
    }
    for (lc, diff) in per_level.iter_mut().zip(&sent_diff) {
        let mut run = 0i64;
        for p in 0..np {
            run += diff[p];
            lc.cells_sent[p] = run as u64;
        }
    }
    for lc in per_level {
        if lc.cells_recv.iter().any(|&v| v > 0) {
            for p in 0..np {
                out.cells_sent[p] += lc.cells_sent[p];
                out.cells_recv[p] += lc.cells_recv[p];
            }
            out.levels.push(lc);
        }
    }
    out
}

/// Size of the union of inclusive intervals sorted by start, and the largest number of
/// intervals covering one point.
fn union_and_peak(intervals: impl Iterator<Item = (usize, usize)>) -> (usize, u64) {
    let mut cover = 0;
    let mut cur: Option<(usize, usize)> = None;
    let mut events: Vec<(usize, i64)> = Vec::new();
    for (lo, hi) in intervals {
        events.push((lo, 1));
        events.push((hi + 1, -1));
        cur = match cur {
            Some((a, b)) if lo <= b + 1 => Some((a, b.max(hi))),
            Some((a, b)) => {
                cover += b - a + 1;
                Some((lo, hi))
            }
            None => Some((lo, hi)),
        };
    }
    if let Some((a, b)) = cur {
        cover += b - a + 1;
    }
    events.sort_unstable();
    let (mut level, mut peak) = (0i64, 0i64);
    for (_, d) in events {
        level += d;
        peak = peak.max(level);
    }
    (cover, peak as u64)
}
