use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::MortonKey;
use crate::tree::Octree;

/// Contiguous ranges of the Morton-ordered leaves, one per process.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    processes: usize,
    ranges: Vec<Range<usize>>,
    leaf_owner: Vec<usize>,
    particle_counts: Vec<usize>,
}

impl Partition {
    pub fn processes(&self) -> usize {
        self.processes
    }

    /// Positions in [`Octree::leaves`] owned by process `p`.
    pub fn leaf_range(&self, p: usize) -> Range<usize> {
        self.ranges[p].clone()
    }

    /// Owner of the leaf at position `pos` of [`Octree::leaves`].
    pub fn owner_of_leaf(&self, pos: usize) -> usize {
        self.leaf_owner[pos]
    }

    pub fn particle_counts(&self) -> &[usize] {
        &self.particle_counts
    }

    /// Largest over smallest per-process particle count.
    pub fn imbalance(&self) -> f64 {
        let max = self.particle_counts.iter().copied().max().unwrap_or(0);
        let min = self.particle_counts.iter().copied().min().unwrap_or(0);
        if min == 0 {
            f64::INFINITY
        } else {
            max as f64 / min as f64
        }
    }

    /// `(leaf key, process)` for every leaf, in Morton order.
    pub fn assignment(&self, tree: &Octree) -> Vec<(MortonKey, usize)> {
        tree.leaves()
            .iter()
            .zip(&self.leaf_owner)
            .map(|(&i, &p)| (tree.node(i).key, p))
            .collect()
    }
}

/// Split the Morton-ordered leaves into `processes` non-empty contiguous ranges.
///
/// Cuts are placed one after another. Cut `k` may move up to [`CUT_SLACK`] of a share away
/// from `k·N/P` and takes the coarsest cell boundary in that window (closest to the
/// target on ties), so every process stays within a factor 2 of `N/P` while the global
/// tree stays shallow. An empty window falls back to the leaf boundary nearest the target.
pub fn partition_sfc(tree: &Octree, processes: usize) -> Result<Partition> {
    let leaves = tree.leaves();
    if processes == 0 {
        return Err(Error::Config("process count must be at least 1".into()));
    }
    if processes > leaves.len() {
        return Err(Error::InfeasiblePartition {
            processes,
            leaves: leaves.len(),
        });
    }
    // prefix[i] = particles in leaves[..i]
    let mut prefix = Vec::with_capacity(leaves.len() + 1);
    prefix.push(0usize);
    for &l in leaves {
        prefix.push(prefix.last().unwrap() + tree.node(l).len());
    }
    let share = tree.n_particles() as f64 / processes as f64;
    let slack = CUT_SLACK * share;
    let mut starts = vec![0usize];
    for k in 1..processes {
        let lo = starts[k - 1] + 1;
        let hi = leaves.len() - (processes - k);
        let target = k as f64 * share;
        let first = lo.max(prefix.partition_point(|&c| (c as f64) < target - slack));
        let last = hi.min(prefix.partition_point(|&c| (c as f64) <= target + slack));
        let dist = |i: usize| (prefix[i] as f64 - target).abs();
        let cut = if first < last {
            (first..last)
                .min_by(|&a, &b| {
                    boundary_level(tree, a)
                        .cmp(&boundary_level(tree, b))
                        .then(dist(a).total_cmp(&dist(b)))
                })
                .expect("non-empty window")
        } else {
            (lo..=hi)
                .min_by(|&a, &b| dist(a).total_cmp(&dist(b)))
                .expect("feasible cut range")
        };
        starts.push(cut);
    }
    starts.push(leaves.len());
    let ranges: Vec<Range<usize>> = starts.windows(2).map(|w| w[0]..w[1]).collect();
    let mut leaf_owner = vec![0; leaves.len()];
    for (p, r) in ranges.iter().enumerate() {
        leaf_owner[r.clone()].fill(p);
    }
    let particle_counts = ranges.iter().map(|r| prefix[r.end] - prefix[r.start]).collect();
    Ok(Partition {
        processes,
        ranges,
        leaf_owner,
        particle_counts,
    })
}

/// Fraction of `N/P` a cut may move away from its target.
pub const CUT_SLACK: f64 = 1.0 / 6.0;

/// Level of the coarsest cell boundary between leaves `pos - 1` and `pos`: one below
/// their deepest common ancestor.
fn boundary_level(tree: &Octree, pos: usize) -> u32 {
    let a = tree.node(tree.leaves()[pos - 1]).key;
    let b = tree.node(tree.leaves()[pos]).key;
    let mut level = a.level().min(b.level());
    while a.ancestor(level) != b.ancestor(level) {
        level -= 1;
    }
    level + 1
}

/// Ownership role of a tree node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeRole {
    /// Leaves below it belong to more than one process.
    Global,
    /// Single-owner node whose parent is global (or the root itself when `P = 1`).
    LocalRoot,
    Local,
}

/// Tree nodes tagged global / local root / local.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GlobalLocalSplit {
    owners: Vec<(usize, usize)>,
    roles: Vec<NodeRole>,
    local_roots: Vec<Vec<usize>>,
    global_depth: u32,
}

impl GlobalLocalSplit {
    pub fn processes(&self) -> usize {
        self.local_roots.len()
    }

    /// Inclusive range `(lo, hi)` of processes owning leaves below node `i`.
    pub fn owners(&self, i: usize) -> (usize, usize) {
        self.owners[i]
    }

    pub fn owns(&self, i: usize, p: usize) -> bool {
        let (lo, hi) = self.owners[i];
        lo <= p && p <= hi
    }

    pub fn role(&self, i: usize) -> NodeRole {
        self.roles[i]
    }

    pub fn roles(&self) -> &[NodeRole] {
        &self.roles
    }

    /// Local roots of process `p` in Morton order.
    pub fn local_roots(&self, p: usize) -> &[usize] {
        &self.local_roots[p]
    }

    /// Deepest local-root level, i.e. the depth of the global tree.
    pub fn global_depth(&self) -> u32 {
        self.global_depth
    }

    pub fn global_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.roles
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == NodeRole::Global)
            .map(|(i, _)| i)
    }
}

/// Tag each node by the set of processes owning leaves below it.
pub fn split_global_local(tree: &Octree, partition: &Partition) -> GlobalLocalSplit {
    let n = tree.len();
    let mut owners = vec![(usize::MAX, 0usize); n];
    for (pos, &leaf) in tree.leaves().iter().enumerate() {
        let p = partition.owner_of_leaf(pos);
        owners[leaf] = (p, p);
    }
    // Children sit after their parent in the breadth-first arena.
    for i in (0..n).rev() {
        if let Some(parent) = tree.node(i).parent {
            let (lo, hi) = owners[i];
            let o = &mut owners[parent];
            o.0 = o.0.min(lo);
            o.1 = o.1.max(hi);
        }
    }
    let mut roles = vec![NodeRole::Local; n];
    let mut local_roots = vec![Vec::new(); partition.processes()];
    let mut global_depth = 0;
    for i in 0..n {
        let (lo, hi) = owners[i];
        let node = tree.node(i);
        roles[i] = if lo < hi {
            NodeRole::Global
        } else if node.parent.is_none_or(|q| roles[q] == NodeRole::Global) {
            local_roots[lo].push(i);
            global_depth = global_depth.max(node.level());
            NodeRole::LocalRoot
        } else {
            NodeRole::Local
        };
    }
    for roots in &mut local_roots {
        roots.sort_by_key(|&i| tree.node(i).key);
    }
    GlobalLocalSplit {
        owners,
        roles,
        local_roots,
        global_depth,
    }
}
