use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::fit::{fit_scaling, ScalingFit};
use super::general::{sim_direct_let, simulate_hierarchical};
use super::partition::{partition_sfc, split_global_local};
use super::report::{CommReport, RunMeta};
use super::uniform::UniformLayout;
use super::{CommModel, CountingMode, Phase};
use crate::error::{Error, Result};
use crate::geometry::{generate, lattice, DistributionKind, DistributionSpec};
use crate::tree::{balance_2to1, build_tree, Octree, DEFAULT_LEAF_CAPACITY};

/// Particle layout of a communication run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommLayout {
    /// Full octree, one level-`g` cell per process (`P = 8^g`).
    Uniform,
    /// Sampled particles on an adaptive tree.
    Particles(DistributionKind),
}

impl CommLayout {
    pub fn name(&self) -> &'static str {
        match self {
            CommLayout::Uniform => "uniform",
            CommLayout::Particles(k) => k.name(),
        }
    }
}

impl FromStr for CommLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "uniform" {
            Ok(CommLayout::Uniform)
        } else {
            s.parse().map(CommLayout::Particles)
        }
    }
}

impl fmt::Display for CommLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommConfig {
    pub layout: CommLayout,
    pub processes: usize,
    pub n_per_process: usize,
    pub leaf_capacity: usize,
    pub mode: CountingMode,
    pub model: CommModel,
    pub seed: u64,
    /// 2:1-balance adaptive trees before partitioning.
    pub balance: bool,
}

impl CommConfig {
    pub fn new(layout: CommLayout, processes: usize, n_per_process: usize) -> Self {
        CommConfig {
            layout,
            processes,
            n_per_process,
            leaf_capacity: DEFAULT_LEAF_CAPACITY,
            mode: CountingMode::Truncated,
            model: CommModel::Hierarchical,
            seed: 0,
            balance: true,
        }
    }

    pub fn with_mode(mut self, mode: CountingMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_model(mut self, model: CommModel) -> Self {
        self.model = model;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Largest full tree built for direct-model runs on the uniform layout.
const MAX_LATTICE_LEVEL: u32 = 7;

/// Count one configuration.
pub fn run_comm(cfg: &CommConfig) -> Result<CommReport> {
    if cfg.processes == 0 || cfg.n_per_process == 0 {
        return Err(Error::Config("P and N/P must be positive".into()));
    }
    let mut meta = RunMeta {
        distribution: cfg.layout.name().to_string(),
        n: cfg.processes * cfg.n_per_process,
        processes: cfg.processes,
        n_per_process: cfg.n_per_process,
        leaf_capacity: cfg.leaf_capacity,
        mode: cfg.mode,
        model: cfg.model,
        seed: cfg.seed,
        balanced: cfg.balance,
        global_depth: 0,
        local_depth: None,
    };
    if cfg.layout == CommLayout::Uniform {
        let lay = UniformLayout::new(cfg.processes, cfg.n_per_process, cfg.leaf_capacity, cfg.mode)?;
        meta.global_depth = lay.global_levels;
        meta.local_depth = Some(lay.local_depth);
        meta.balanced = true;
        if cfg.model == CommModel::Hierarchical {
            return Ok(CommReport {
                meta,
                phases: lay.phases(),
                global_partners: lay.global_partners(),
            });
        }
    }
    if cfg.mode != CountingMode::Truncated {
        return Err(Error::Config(format!(
            "periodic counting is only defined for the hierarchical model on the uniform layout (got {} / {})",
            cfg.layout, cfg.model
        )));
    }
    let tree = build_comm_tree(cfg)?;
    let split = split_global_local(&tree, &partition_sfc(&tree, cfg.processes)?);
    meta.global_depth = split.global_depth();
    let (phases, global_partners) = match cfg.model {
        CommModel::Hierarchical => simulate_hierarchical(&tree, &split),
        CommModel::Direct => {
            let d = sim_direct_let(&tree, &split);
            let partners = d.partners.clone();
            (vec![d], partners)
        }
    };
    Ok(CommReport {
        meta,
        phases,
        global_partners,
    })
}

fn build_comm_tree(cfg: &CommConfig) -> Result<Octree> {
    match cfg.layout {
        CommLayout::Uniform => {
            let lay = UniformLayout::new(cfg.processes, cfg.n_per_process, cfg.leaf_capacity, cfg.mode)?;
            let level = lay.global_levels + lay.local_depth;
            if level > MAX_LATTICE_LEVEL {
                return Err(Error::Config(format!(
                    "uniform direct runs build a full level-{level} tree; at most level {MAX_LATTICE_LEVEL} is supported"
                )));
            }
            build_tree(lattice(level, 1)?, 1)
        }
        CommLayout::Particles(kind) => {
            let spec = DistributionSpec::new(kind, cfg.processes * cfg.n_per_process, cfg.seed);
            let tree = build_tree(generate(&spec)?, cfg.leaf_capacity)?;
            if cfg.balance {
                balance_2to1(tree)
            } else {
                Ok(tree)
            }
        }
    }
}

/// Every `(P, N/P)` combination of the two lists, in order.
pub fn run_comm_experiment(
    base: &CommConfig,
    p_values: &[usize],
    np_values: &[usize],
) -> Result<Vec<CommReport>> {
    let mut out = Vec::with_capacity(p_values.len() * np_values.len());
    for &p in p_values {
        for &np in np_values {
            let cfg = CommConfig {
                processes: p,
                n_per_process: np,
                ..base.clone()
            };
            log::info!("commsim {} P={p} N/P={np}", cfg.layout);
            out.push(run_comm(&cfg)?);
        }
    }
    Ok(out)
}

/// Quantity varied along a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    Processes,
    ParticlesPerProcess,
}

/// Fit of one max-over-processes quantity along a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseFit {
    /// A phase name, `global` (both global phases) or `global-partners`.
    pub quantity: String,
    pub axis: SweepAxis,
    pub series: Vec<(f64, f64)>,
    pub fit: ScalingFit,
}

/// Power-law and base-8 logarithmic fits of the per-phase max cells received, the summed
/// global volume and the global partner count. Quantities that vanish somewhere are skipped.
pub fn fit_sweep(reports: &[CommReport], axis: SweepAxis) -> Result<Vec<PhaseFit>> {
    let x = |r: &CommReport| match axis {
        SweepAxis::Processes => r.meta.processes as f64,
        SweepAxis::ParticlesPerProcess => r.meta.n_per_process as f64,
    };
    let mut sorted: Vec<&CommReport> = reports.iter().collect();
    sorted.sort_by(|a, b| x(a).total_cmp(&x(b)));
    let mut quantities: Vec<(String, Vec<f64>)> = Vec::new();
    let phases: Vec<Phase> = sorted
        .first()
        .map(|r| r.phases.iter().map(|p| p.phase).collect())
        .unwrap_or_default();
    for ph in phases {
        let ys = sorted
            .iter()
            .map(|r| r.phase(ph).map_or(0.0, |p| p.max_recv() as f64))
            .collect();
        quantities.push((ph.name().to_string(), ys));
    }
    quantities.push((
        "global".into(),
        sorted.iter().map(|r| r.max_global_recv() as f64).collect(),
    ));
    quantities.push((
        "global-partners".into(),
        sorted.iter().map(|r| r.max_global_partners() as f64).collect(),
    ));
    let xs: Vec<f64> = sorted.iter().map(|r| x(r)).collect();
    let mut out = Vec::new();
    for (name, ys) in quantities {
        if ys.iter().any(|&y| y <= 0.0) {
            continue;
        }
        let series: Vec<(f64, f64)> = xs.iter().copied().zip(ys).collect();
        let fit = fit_scaling(&series, 8.0)?;
        out.push(PhaseFit {
            quantity: name,
            axis,
            series,
            fit,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_global_sweep_is_logarithmic() {
        let base = CommConfig::new(CommLayout::Uniform, 1, 4096).with_mode(CountingMode::Periodic);
        let reports = run_comm_experiment(&base, &[8, 64, 512, 4096, 32768], &[4096]).unwrap();
        let fits = fit_sweep(&reports, SweepAxis::Processes).unwrap();
        let m2m = fits.iter().find(|f| f.quantity == "global-M2M").unwrap();
        assert!((m2m.fit.log_slope - 7.0).abs() < 1e-9);
        assert!(m2m.fit.log_r2 > 0.999999);
    }

    #[test]
    fn uniform_local_p2p_exponent_approaches_two_thirds() {
        let base = CommConfig::new(CommLayout::Uniform, 64, 1);
        let nps: Vec<usize> = (5..=8).map(|k| 8usize.pow(k)).collect();
        let reports = run_comm_experiment(&base, &[64], &nps).unwrap();
        let fits = fit_sweep(&reports, SweepAxis::ParticlesPerProcess).unwrap();
        let p2p = fits.iter().find(|f| f.quantity == "local-P2P").unwrap();
        assert!((0.62..=0.72).contains(&p2p.fit.exponent), "{}", p2p.fit.exponent);
    }

    #[test]
    fn periodic_rejected_outside_uniform_hierarchy() {
        let cfg = CommConfig::new(CommLayout::Particles(DistributionKind::Plummer), 8, 100)
            .with_mode(CountingMode::Periodic);
        assert!(matches!(run_comm(&cfg), Err(Error::Config(_))));
        let cfg = CommConfig::new(CommLayout::Uniform, 8, 100)
            .with_mode(CountingMode::Periodic)
            .with_model(CommModel::Direct);
        assert!(matches!(run_comm(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn uniform_direct_matches_lattice_size() {
        let cfg = CommConfig::new(CommLayout::Uniform, 64, 128).with_model(CommModel::Direct);
        let r = run_comm(&cfg).unwrap();
        assert_eq!(r.meta.local_depth, Some(1));
        assert_eq!(r.phases.len(), 1);
        assert!(r.is_conserved());
        assert!(r.max_global_partners() <= 63);
    }

    #[test]
    fn layout_names_round_trip() {
        for s in ["uniform", "random", "surface", "plummer"] {
            assert_eq!(s.parse::<CommLayout>().unwrap().name(), s);
        }
        assert!("lattice".parse::<CommLayout>().is_err());
    }
}
