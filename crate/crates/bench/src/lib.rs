//! Shared fixtures for the criterion benches.

use h2fmm::geometry::{generate, DistributionKind, DistributionSpec, Particle};

/// Seeded particle set used by every bench.
pub fn particles(kind: DistributionKind, n: usize) -> Vec<Particle> {
    generate(&DistributionSpec::new(kind, n, 42)).expect("n > 0")
}
