//! Adaptive octrees over Morton-sorted particles.
//!
//! Nodes live in a breadth-first arena: the children of a node are contiguous and
//! all nodes of one level form a contiguous slice. Empty cells are never stored.

mod balance;
pub(crate) mod neighbors;
mod stats;

use std::collections::{HashMap, HashSet};
use std::ops::Range;

use crate::error::{Error, Result};
use crate::geometry::{MortonKey, Particle, MAX_LEVEL};

pub use balance::{balance_2to1, max_adjacent_level_gap};
pub use neighbors::neighbor_leaves;
pub use stats::{depth_stats, DepthRow, TreeSummary};

/// Maximum particles per leaf used throughout unless configured otherwise.
pub const DEFAULT_LEAF_CAPACITY: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct OctreeNode {
    pub key: MortonKey,
    pub parent: Option<usize>,
    first_child: usize,
    child_count: usize,
    /// Range into the Morton-sorted particle array covered by this cell.
    pub range: Range<usize>,
}

impl OctreeNode {
    pub fn is_leaf(&self) -> bool {
        self.child_count == 0
    }

    pub fn level(&self) -> u32 {
        self.key.level()
    }

    pub fn children(&self) -> Range<usize> {
        self.first_child..self.first_child + self.child_count
    }

    pub fn len(&self) -> usize {
        self.range.len()
    }

    pub fn is_empty(&self) -> bool {
        self.range.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct Octree {
    nodes: Vec<OctreeNode>,
    particles: Vec<Particle>,
    /// Level-21 key bits of each sorted particle.
    point_keys: Vec<u64>,
    /// `permutation[i]` is the input position of sorted particle `i`.
    permutation: Vec<usize>,
    leaf_capacity: usize,
    depth: u32,
    balanced: bool,
    index: HashMap<MortonKey, usize>,
    leaves: Vec<usize>,
    level_offsets: Vec<usize>,
    overfull: Vec<MortonKey>,
}

/// Build an adaptive octree with at most `leaf_capacity` particles per leaf.
pub fn build_tree(particles: Vec<Particle>, leaf_capacity: usize) -> Result<Octree> {
    Octree::build(particles, leaf_capacity)
}

impl Octree {
    pub fn build(particles: Vec<Particle>, leaf_capacity: usize) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::Config("cannot build a tree over zero particles".into()));
        }
        if leaf_capacity == 0 {
            return Err(Error::Config("leaf capacity must be at least 1".into()));
        }
        let mut tagged = Vec::with_capacity(particles.len());
        for (i, p) in particles.iter().enumerate() {
            tagged.push((MortonKey::from_point(p.position, MAX_LEVEL)?.bits(), i));
        }
        tagged.sort_unstable();
        let point_keys: Vec<u64> = tagged.iter().map(|t| t.0).collect();
        let permutation: Vec<usize> = tagged.iter().map(|t| t.1).collect();
        drop(tagged);
        let sorted = permutation.iter().map(|&i| particles[i]).collect();
        drop(particles);
        Ok(Self::assemble(sorted, point_keys, permutation, leaf_capacity, false, |_, count| {
            count > leaf_capacity
        }))
    }

    /// Rebuild over the same sorted particles with exactly the given leaf cells.
    fn with_leaves(self, leaves: &HashSet<MortonKey>, balanced: bool) -> Self {
        let Octree { particles, point_keys, permutation, leaf_capacity, .. } = self;
        Self::assemble(particles, point_keys, permutation, leaf_capacity, balanced, |key, _| {
            !leaves.contains(&key)
        })
    }

    fn assemble(
        particles: Vec<Particle>,
        point_keys: Vec<u64>,
        permutation: Vec<usize>,
        leaf_capacity: usize,
        balanced: bool,
        split: impl Fn(MortonKey, usize) -> bool,
    ) -> Self {
        let n = particles.len();
        let mut nodes = vec![OctreeNode {
            key: MortonKey::ROOT,
            parent: None,
            first_child: 0,
            child_count: 0,
            range: 0..n,
        }];
        let mut overfull = Vec::new();
        let mut next = 0;
        while next < nodes.len() {
            let key = nodes[next].key;
            let range = nodes[next].range.clone();
            if split(key, range.len()) {
                if key.level() == MAX_LEVEL {
                    log::warn!(
                        "leaf {:?} keeps {} coincident particles at the maximum level",
                        key,
                        range.len()
                    );
                    overfull.push(key);
                } else {
                    let first = nodes.len();
                    let shift = 3 * (MAX_LEVEL - key.level() - 1);
                    let mut start = range.start;
                    for digit in 0..8u64 {
                        let end = start
                            + point_keys[start..range.end]
                                .partition_point(|&k| (k >> shift) & 7 <= digit);
                        if end > start {
                            nodes.push(OctreeNode {
                                key: key.child(digit as usize).expect("level checked"),
                                parent: Some(next),
                                first_child: 0,
                                child_count: 0,
                                range: start..end,
                            });
                        }
                        start = end;
                    }
                    nodes[next].first_child = first;
                    nodes[next].child_count = nodes.len() - first;
                }
            }
            next += 1;
        }

        let depth = nodes.last().map(|n| n.level()).unwrap_or(0);
        let mut level_offsets = vec![0; depth as usize + 2];
        for node in &nodes {
            level_offsets[node.level() as usize + 1] += 1;
        }
        for l in 1..level_offsets.len() {
            level_offsets[l] += level_offsets[l - 1];
        }
        let index = nodes.iter().enumerate().map(|(i, n)| (n.key, i)).collect();
        let mut leaves: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].is_leaf()).collect();
        leaves.sort_unstable_by_key(|&i| nodes[i].range.start);

        Octree {
            nodes,
            particles,
            point_keys,
            permutation,
            leaf_capacity,
            depth,
            balanced,
            index,
            leaves,
            level_offsets,
            overfull,
        }
    }

    pub fn nodes(&self) -> &[OctreeNode] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &OctreeNode {
        &self.nodes[i]
    }

    pub fn root(&self) -> &OctreeNode {
        &self.nodes[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Particles in Morton order.
    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn n_particles(&self) -> usize {
        self.particles.len()
    }

    /// Sorted position to input position.
    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn leaf_capacity(&self) -> usize {
        self.leaf_capacity
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn is_balanced(&self) -> bool {
        self.balanced
    }

    /// Leaf node indices in Morton order.
    pub fn leaves(&self) -> &[usize] {
        &self.leaves
    }

    /// Leaves kept above capacity because their particles coincide at level 21.
    pub fn overfull_leaves(&self) -> &[MortonKey] {
        &self.overfull
    }

    pub fn find(&self, key: &MortonKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn children(&self, i: usize) -> Range<usize> {
        self.nodes[i].children()
    }

    /// Node indices at `level` (empty past the depth).
    pub fn level_nodes(&self, level: u32) -> Range<usize> {
        let l = level as usize;
        if l + 1 >= self.level_offsets.len() {
            return self.nodes.len()..self.nodes.len();
        }
        self.level_offsets[l]..self.level_offsets[l + 1]
    }

    /// Node index of the leaf `key`, or a lookup error.
    pub fn leaf_index(&self, key: &MortonKey) -> Result<usize> {
        match self.find(key) {
            Some(i) if self.nodes[i].is_leaf() => Ok(i),
            Some(_) => Err(Error::Lookup(format!("{key:?} is an interior node"))),
            None => Err(Error::Lookup(format!("{key:?} is not in the tree"))),
        }
    }

    pub(crate) fn point_keys(&self) -> &[u64] {
        &self.point_keys
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate, lattice, DistributionKind, DistributionSpec};

    fn cloud(n: usize, seed: u64) -> Vec<Particle> {
        generate(&DistributionSpec::new(DistributionKind::RandomCube, n, seed)).unwrap()
    }

    #[test]
    fn capacity_not_exceeded_gives_single_leaf() {
        let t = build_tree(cloud(16, 1), 16).unwrap();
        assert_eq!(t.depth(), 0);
        assert_eq!(t.len(), 1);
        assert_eq!(t.leaves(), &[0]);
    }

    #[test]
    fn clustered_octant_forces_depth_two() {
        let ps: Vec<Particle> = (0..17)
            .map(|i| Particle::new(i, [0.1 + 0.01 * i as f64, 0.2, 0.3]))
            .collect();
        let t = build_tree(ps, 16).unwrap();
        assert!(t.depth() >= 2);
        assert_eq!(t.node(1).key, MortonKey::encode([0, 0, 0], 1).unwrap());
    }

    #[test]
    fn invariants_on_random_cloud() {
        let ps = cloud(5000, 2);
        let t = build_tree(ps.clone(), 8).unwrap();
        let mut covered = 0;
        for &leaf in t.leaves() {
            let node = t.node(leaf);
            assert_eq!(node.range.start, covered);
            covered = node.range.end;
            assert!(node.len() <= 8);
            for p in &t.particles()[node.range.clone()] {
                assert!(node.key.contains_point(p.position));
            }
        }
        assert_eq!(covered, 5000);
        for (i, node) in t.nodes().iter().enumerate() {
            for c in node.children() {
                assert_eq!(t.node(c).key.parent(), Some(node.key));
                assert_eq!(t.node(c).parent, Some(i));
            }
            assert_eq!(t.find(&node.key), Some(i));
        }
        assert_eq!(t.depth(), t.leaves().iter().map(|&l| t.node(l).level()).max().unwrap());
        // flattening the leaf ranges reproduces the Morton-sorted input
        let mut sorted: Vec<(MortonKey, usize)> = ps
            .iter()
            .enumerate()
            .map(|(i, p)| (MortonKey::from_point(p.position, MAX_LEVEL).unwrap(), i))
            .collect();
        sorted.sort();
        let expected: Vec<usize> = sorted.iter().map(|s| s.1).collect();
        assert_eq!(t.permutation(), &expected[..]);
        for (k, &i) in t.permutation().iter().enumerate() {
            assert_eq!(t.particles()[k], ps[i]);
        }
    }

    #[test]
    fn levels_are_contiguous() {
        let t = build_tree(cloud(3000, 4), 4).unwrap();
        for l in 0..=t.depth() {
            for i in t.level_nodes(l) {
                assert_eq!(t.node(i).level(), l);
            }
        }
        assert!(t.level_nodes(t.depth() + 1).is_empty());
    }

    #[test]
    fn coincident_particles_stop_at_max_level() {
        let ps: Vec<Particle> = (0..20).map(|i| Particle::new(i, [0.3, 0.3, 0.3])).collect();
        let t = build_tree(ps, 16).unwrap();
        assert_eq!(t.depth(), MAX_LEVEL);
        assert_eq!(t.overfull_leaves().len(), 1);
        assert_eq!(t.node(*t.leaves().first().unwrap()).len(), 20);
    }

    #[test]
    fn lattice_gives_full_tree() {
        let t = build_tree(lattice(2, 3).unwrap(), 3).unwrap();
        assert_eq!(t.len(), 1 + 8 + 64);
        assert_eq!(t.leaves().len(), 64);
    }

    #[test]
    fn bad_inputs_rejected() {
        assert!(build_tree(Vec::new(), 16).is_err());
        assert!(build_tree(cloud(4, 1), 0).is_err());
    }

    #[test]
    fn random_65536_depth_fixture() {
        let ps = generate(&DistributionSpec::new(DistributionKind::RandomCube, 65536, 3)).unwrap();
        let t = build_tree(ps, 16).unwrap();
        assert!((4..=8).contains(&t.depth()));
        assert_eq!(t.depth(), RANDOM_65536_SEED3_DEPTH);
    }

    /// Observed depth for (random-cube, 65536, seed 3) at capacity 16.
    const RANDOM_65536_SEED3_DEPTH: u32 = 5;
}
