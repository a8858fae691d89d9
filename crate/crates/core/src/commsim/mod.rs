//! Communication counting for a distributed FMM / H² matvec over `P` virtual processes.
//!
//! Two engines share one report type:
//!
//! * [`uniform`] evaluates the halo arithmetic of a full octree with `P = 8^g` processes
//!   in closed form, in either [`CountingMode`].
//! * [`general`] enumerates actual messages on an adaptive [`Octree`](crate::Octree)
//!   partitioned along the Morton curve. Counting there is always truncated.
//!
//! Volumes are counted in cell units (one multipole or basis payload per cell).

mod experiment;
mod fit;
pub mod general;
mod partition;
mod report;
pub mod uniform;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub use experiment::{
    fit_sweep, run_comm, run_comm_experiment, CommConfig, CommLayout, PhaseFit, SweepAxis,
};
pub use fit::{fit_scaling, ScalingFit};
pub use general::{
    sim_direct_let, sim_global_m2l, sim_global_m2m, sim_local_m2l, sim_local_p2p,
};
pub use partition::{
    partition_sfc, split_global_local, GlobalLocalSplit, NodeRole, Partition, CUT_SLACK,
};
pub use report::{
    CommReport, LevelCounts, LevelSummary, PhaseCounts, PhaseSummary, ReportSummary, RunMeta,
    CSV_HEADER,
};
pub use uniform::{local_depth, UniformLayout};

/// Communication phase of the distributed evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "global-M2M")]
    GlobalM2M,
    #[serde(rename = "global-M2L")]
    GlobalM2L,
    #[serde(rename = "local-M2L")]
    LocalM2L,
    #[serde(rename = "local-P2P")]
    LocalP2P,
    /// Every cell of the local essential tree pulled straight from its owners.
    #[serde(rename = "direct-LET")]
    DirectLet,
}

impl Phase {
    pub const HIERARCHICAL: [Phase; 4] =
        [Phase::GlobalM2M, Phase::GlobalM2L, Phase::LocalM2L, Phase::LocalP2P];

    pub fn name(&self) -> &'static str {
        match self {
            Phase::GlobalM2M => "global-M2M",
            Phase::GlobalM2L => "global-M2L",
            Phase::LocalM2L => "local-M2L",
            Phase::LocalP2P => "local-P2P",
            Phase::DirectLet => "direct-LET",
        }
    }

    pub fn is_global(&self) -> bool {
        matches!(self, Phase::GlobalM2M | Phase::GlobalM2L)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How processes on the domain boundary are counted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountingMode {
    /// Every process behaves as an interior one (full 26-neighbour stencils).
    Periodic,
    /// Neighbours outside the unit cube do not exist.
    Truncated,
}

impl CountingMode {
    pub fn name(&self) -> &'static str {
        match self {
            CountingMode::Periodic => "periodic",
            CountingMode::Truncated => "truncated",
        }
    }
}

impl FromStr for CountingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "periodic" => Ok(CountingMode::Periodic),
            "truncated" => Ok(CountingMode::Truncated),
            _ => Err(Error::Config(format!("unknown counting mode '{s}'"))),
        }
    }
}

impl fmt::Display for CountingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Communication scheme being counted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommModel {
    /// Global/local split with redundancy-exploiting global exchanges.
    #[serde(rename = "hier")]
    Hierarchical,
    /// No aggregation: each process pulls its local essential tree from the owners.
    Direct,
}

impl CommModel {
    pub fn name(&self) -> &'static str {
        match self {
            CommModel::Hierarchical => "hier",
            CommModel::Direct => "direct",
        }
    }
}

impl FromStr for CommModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "hier" | "hierarchical" => Ok(CommModel::Hierarchical),
            "direct" => Ok(CommModel::Direct),
            _ => Err(Error::Config(format!("unknown communication model '{s}'"))),
        }
    }
}

impl fmt::Display for CommModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
