//! Particles, distributions and Morton keys on the unit cube `[0,1)^3`.

mod distribution;
pub mod io;
mod morton;

use serde::{Deserialize, Serialize};

pub use distribution::{
    generate, lattice, normalize, sample_raw, DistributionKind, DistributionSpec,
    PLUMMER_TRUNCATION,
};
pub use morton::{neighbor_offsets, MortonKey, MAX_LEVEL};

/// A source/target point of the N-body problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub position: [f64; 3],
    pub index: u64,
    pub charge: f64,
}

impl Particle {
    /// Unit-charge particle.
    pub fn new(index: u64, position: [f64; 3]) -> Self {
        Particle { position, index, charge: 1.0 }
    }

    pub fn key(&self, level: u32) -> crate::Result<MortonKey> {
        MortonKey::from_point(self.position, level)
    }
}
