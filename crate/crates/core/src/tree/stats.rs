use serde::{Deserialize, Serialize};

use super::{build_tree, Octree};
use crate::error::{Error, Result};
use crate::geometry::{generate, DistributionKind, DistributionSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthRow {
    pub distribution: DistributionKind,
    pub n: usize,
    pub depth: u32,
}

/// Depth of the (unbalanced) adaptive tree for each `n`, drawing `n` particles of
/// `spec.kind` with `spec.seed`. `spec.n` is ignored.
pub fn depth_stats(
    spec: &DistributionSpec,
    n_values: &[usize],
    leaf_capacity: usize,
) -> Result<Vec<DepthRow>> {
    if n_values.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("n values must be ascending".into()));
    }
    n_values
        .iter()
        .map(|&n| {
            let ps = generate(&DistributionSpec::new(spec.kind, n, spec.seed))?;
            let tree = build_tree(ps, leaf_capacity)?;
            Ok(DepthRow { distribution: spec.kind, n, depth: tree.depth() })
        })
        .collect()
}

/// JSON-friendly tree description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeSummary {
    pub n: usize,
    pub leaf_capacity: usize,
    pub depth: u32,
    pub balanced: bool,
    pub nodes: usize,
    pub leaves: usize,
    pub nodes_per_level: Vec<usize>,
    pub leaves_per_level: Vec<usize>,
    pub max_leaf_particles: usize,
    pub overfull_leaves: usize,
}

impl Octree {
    pub fn summary(&self) -> TreeSummary {
        let levels = self.depth as usize + 1;
        let mut nodes_per_level = vec![0; levels];
        let mut leaves_per_level = vec![0; levels];
        for n in &self.nodes {
            nodes_per_level[n.level() as usize] += 1;
            if n.is_leaf() {
                leaves_per_level[n.level() as usize] += 1;
            }
        }
        TreeSummary {
            n: self.n_particles(),
            leaf_capacity: self.leaf_capacity,
            depth: self.depth,
            balanced: self.balanced,
            nodes: self.nodes.len(),
            leaves: self.leaves.len(),
            nodes_per_level,
            leaves_per_level,
            max_leaf_particles: self.leaves.iter().map(|&i| self.nodes[i].len()).max().unwrap_or(0),
            overfull_leaves: self.overfull.len(),
        }
    }
}
