//! Seeded particle distributions.
//!
//! Every sampler draws from `ChaCha8Rng::seed_from_u64(seed)` (crate `rand_chacha`),
//! which is portable across platforms, so a `(kind, n, seed)` triple always yields
//! the same particle set.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Particle;
use crate::error::{Error, Result};

/// Plummer radii beyond this (in units of the softening radius) are resampled.
pub const PLUMMER_TRUNCATION: f64 = 10.0;

/// Largest double below 1.0; normalised coordinates are clamped to it.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistributionKind {
    /// Uniform in the unit cube.
    RandomCube,
    /// Uniform on the surface of a sphere.
    SphereSurface,
    /// Plummer model, concentrated towards the centre.
    Plummer,
}

impl DistributionKind {
    pub const ALL: [DistributionKind; 3] = [
        DistributionKind::RandomCube,
        DistributionKind::SphereSurface,
        DistributionKind::Plummer,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DistributionKind::RandomCube => "random",
            DistributionKind::SphereSurface => "surface",
            DistributionKind::Plummer => "plummer",
        }
    }
}

impl fmt::Display for DistributionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistributionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" | "random-cube" => Ok(DistributionKind::RandomCube),
            "surface" | "sphere-surface" => Ok(DistributionKind::SphereSurface),
            "plummer" => Ok(DistributionKind::Plummer),
            other => Err(Error::Config(format!(
                "unsupported distribution kind '{other}' (expected random, surface or plummer)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub kind: DistributionKind,
    pub n: usize,
    pub seed: u64,
}

impl DistributionSpec {
    pub fn new(kind: DistributionKind, n: usize, seed: u64) -> Self {
        DistributionSpec { kind, n, seed }
    }
}

fn unit_direction(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let z: f64 = 2.0 * rng.random::<f64>() - 1.0;
    let phi = 2.0 * PI * rng.random::<f64>();
    let s = (1.0 - z * z).max(0.0).sqrt();
    [s * phi.cos(), s * phi.sin(), z]
}

/// Plummer radius by inverting the cumulative mass `r^3 / (1 + r^2)^{3/2}` (unit softening).
fn plummer_radius(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u <= 0.0 {
            continue;
        }
        let r = 1.0 / (u.powf(-2.0 / 3.0) - 1.0).sqrt();
        if r.is_finite() && r <= PLUMMER_TRUNCATION {
            return r;
        }
    }
}

/// Draw positions before normalisation: the unit cube for `random`, the unit sphere
/// centred at the origin for `surface`, and a truncated Plummer sphere for `plummer`.
pub fn sample_raw(spec: &DistributionSpec) -> Result<Vec<[f64; 3]>> {
    if spec.n == 0 {
        return Err(Error::Config("particle count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let points = match spec.kind {
        DistributionKind::RandomCube => (0..spec.n)
            .map(|_| [rng.random(), rng.random(), rng.random()])
            .collect(),
        DistributionKind::SphereSurface => (0..spec.n).map(|_| unit_direction(&mut rng)).collect(),
        DistributionKind::Plummer => (0..spec.n)
            .map(|_| {
                let r = plummer_radius(&mut rng);
                let d = unit_direction(&mut rng);
                [r * d[0], r * d[1], r * d[2]]
            })
            .collect(),
    };
    Ok(points)
}

/// Map points into `[0,1)^3` by their bounding cube: the longest axis spans the unit
/// interval, shorter axes are centred, and the upper face is clamped inside.
pub fn normalize(points: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for d in 0..3 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let extent = (0..3).map(|d| hi[d] - lo[d]).fold(0.0, f64::max);
    if !(extent > 0.0) {
        return vec![[0.5; 3]; points.len()];
    }
    let center: [f64; 3] = std::array::from_fn(|d| 0.5 * (lo[d] + hi[d]));
    points
        .iter()
        .map(|p| std::array::from_fn(|d| ((p[d] - center[d]) / extent + 0.5).clamp(0.0, BELOW_ONE)))
        .collect()
}

/// Generate `spec.n` particles in the half-open unit cube with unit charge.
pub fn generate(spec: &DistributionSpec) -> Result<Vec<Particle>> {
    let raw = sample_raw(spec)?;
    let positions = match spec.kind {
        DistributionKind::RandomCube => raw,
        _ => normalize(&raw),
    };
    Ok(positions
        .into_iter()
        .enumerate()
        .map(|(i, position)| Particle::new(i as u64, position))
        .collect())
}

/// `per_cell` particles in every cell of a full level-`level` grid, so an octree with
/// leaf capacity `per_cell` is the complete tree of depth `level`.
pub fn lattice(level: u32, per_cell: usize) -> Result<Vec<Particle>> {
    if level > 10 {
        return Err(Error::Config(format!("lattice level {level} is too large")));
    }
    if per_cell == 0 {
        return Err(Error::Config("lattice needs at least one particle per cell".into()));
    }
    let side = 1usize << level;
    let w = 1.0 / side as f64;
    let mut out = Vec::with_capacity(side * side * side * per_cell);
    for z in 0..side {
        for y in 0..side {
            for x in 0..side {
                for t in 0..per_cell {
                    // spread along the cell diagonal
                    let f = (t as f64 + 0.5) / per_cell as f64;
                    let p = [
                        (x as f64 + f) * w,
                        (y as f64 + f) * w,
                        (z as f64 + f) * w,
                    ];
                    out.push(Particle::new(out.len() as u64, p));
                }
            }
        }
    }
    Ok(out)
}
