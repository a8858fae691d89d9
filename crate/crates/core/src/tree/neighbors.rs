use super::Octree;
use crate::error::Result;
use crate::geometry::{neighbor_offsets, MortonKey};

/// All leaves sharing a face, edge or corner with the leaf `leaf`.
pub fn neighbor_leaves(tree: &Octree, leaf: &MortonKey) -> Result<Vec<MortonKey>> {
    let idx = tree.leaf_index(leaf)?;
    let mut out = Vec::new();
    adjacent_leaf_indices(tree, idx, &mut out);
    Ok(out.into_iter().map(|i| tree.node(i).key).collect())
}

/// Node indices of leaves adjacent to node `idx`, sorted and deduplicated into `out`.
pub(crate) fn adjacent_leaf_indices(tree: &Octree, idx: usize, out: &mut Vec<usize>) {
    out.clear();
    let key = tree.node(idx).key;
    for off in neighbor_offsets() {
        let Some(mut probe) = key.neighbor(off) else { continue };
        loop {
            if let Some(i) = tree.find(&probe) {
                if tree.node(i).is_leaf() {
                    out.push(i);
                } else if probe.level() == key.level() {
                    descend(tree, i, &key, out);
                }
                break;
            }
            match probe.parent() {
                Some(p) => probe = p,
                None => break,
            }
        }
    }
    out.sort_unstable();
    out.dedup();
}

fn descend(tree: &Octree, node: usize, target: &MortonKey, out: &mut Vec<usize>) {
    for c in tree.children(node) {
        let n = tree.node(c);
        if !n.key.is_adjacent(target) {
            continue;
        }
        if n.is_leaf() {
            out.push(c);
        } else {
            descend(tree, c, target, out);
        }
    }
}
