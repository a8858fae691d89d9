//! Algebraic fast multipole machinery.
//!
//! * [`geometry`]: particle distributions, the unit-cube domain and Morton keys.
//! * [`tree`]: adaptive octrees, 2:1 balance refinement and depth statistics.
//! * [`h2core`]: kernel matrices, H²-matrix compression and the O(N) matvec.
//! * [`commsim`]: virtual-process partitioning and communication counting for the
//!   distributed FMM / H² matvec, plus scaling fits.
//! * [`verify`]: the end-to-end acceptance checks, shared by the test suite and the CLI.

pub mod commsim;
pub mod error;
pub mod geometry;
pub mod h2core;
pub mod tree;
pub mod verify;

pub use error::{Error, Result};
pub use geometry::{DistributionKind, DistributionSpec, MortonKey, Particle};
pub use h2core::{CompressOptions, H2Matrix, KernelKind, KernelSpec};
pub use tree::Octree;

/// Version tag written into every file format and report produced by the crate.
pub const FORMAT_VERSION: u32 = 1;
