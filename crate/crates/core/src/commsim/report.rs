use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{CommModel, CountingMode, Phase};
use crate::error::Result;

pub const CSV_HEADER: [&str; 9] = [
    "phase",
    "distribution",
    "N",
    "P",
    "mode",
    "process",
    "partners",
    "cells_sent",
    "cells_recv",
];

/// Per-process counts at one tree level.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelCounts {
    pub level: u32,
    pub partners: Vec<u32>,
    pub cells_sent: Vec<u64>,
    pub cells_recv: Vec<u64>,
    /// Largest number of cells travelling between one (sender, receiver) pair.
    pub max_cells_per_partner: u64,
}

impl LevelCounts {
    pub fn zeros(level: u32, processes: usize) -> Self {
        LevelCounts {
            level,
            partners: vec![0; processes],
            cells_sent: vec![0; processes],
            cells_recv: vec![0; processes],
            max_cells_per_partner: 0,
        }
    }
}

/// Per-process counts of one phase, with the per-level breakdown.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhaseCounts {
    pub phase: Phase,
    pub levels: Vec<LevelCounts>,
    /// Distinct partners over all levels of the phase.
    pub partners: Vec<u32>,
    pub cells_sent: Vec<u64>,
    pub cells_recv: Vec<u64>,
}

impl PhaseCounts {
    pub fn empty(phase: Phase, processes: usize) -> Self {
        PhaseCounts {
            phase,
            levels: Vec::new(),
            partners: vec![0; processes],
            cells_sent: vec![0; processes],
            cells_recv: vec![0; processes],
        }
    }

    pub fn processes(&self) -> usize {
        self.partners.len()
    }

    pub fn level(&self, level: u32) -> Option<&LevelCounts> {
        self.levels.iter().find(|l| l.level == level)
    }

    pub fn total_sent(&self) -> u64 {
        self.cells_sent.iter().sum()
    }

    pub fn total_recv(&self) -> u64 {
        self.cells_recv.iter().sum()
    }

    pub fn max_partners(&self) -> u32 {
        self.partners.iter().copied().max().unwrap_or(0)
    }

    pub fn max_recv(&self) -> u64 {
        self.cells_recv.iter().copied().max().unwrap_or(0)
    }

    pub fn max_sent(&self) -> u64 {
        self.cells_sent.iter().copied().max().unwrap_or(0)
    }

    pub fn mean_partners(&self) -> f64 {
        mean(self.partners.iter().map(|&v| v as f64))
    }

    pub fn mean_recv(&self) -> f64 {
        mean(self.cells_recv.iter().map(|&v| v as f64))
    }

    pub fn summary(&self) -> PhaseSummary {
        PhaseSummary {
            phase: self.phase,
            max_partners: self.max_partners(),
            mean_partners: self.mean_partners(),
            max_cells_recv: self.max_recv(),
            mean_cells_recv: self.mean_recv(),
            max_cells_sent: self.max_sent(),
            total_cells_sent: self.total_sent(),
            total_cells_recv: self.total_recv(),
            levels: self
                .levels
                .iter()
                .map(|l| LevelSummary {
                    level: l.level,
                    max_partners: l.partners.iter().copied().max().unwrap_or(0),
                    max_cells_recv: l.cells_recv.iter().copied().max().unwrap_or(0),
                    max_cells_per_partner: l.max_cells_per_partner,
                    total_cells_recv: l.cells_recv.iter().sum(),
                })
                .collect(),
        }
    }
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len();
    if n == 0 {
        0.0
    } else {
        values.sum::<f64>() / n as f64
    }
}

/// Message log of one phase: `(level, sender, receiver, cells)`.
#[derive(Default)]
pub(crate) struct Tally {
    msgs: Vec<(u32, u32, u32, u64)>,
}

impl Tally {
    pub fn send(&mut self, level: u32, from: usize, to: usize, cells: u64) {
        if from != to && cells > 0 {
            self.msgs.push((level, from as u32, to as u32, cells));
        }
    }

    /// Merge repeated pairs and reduce to per-process counts.
    pub fn finish(mut self, phase: Phase, processes: usize) -> PhaseCounts {
        self.msgs.sort_unstable();
        let mut merged: Vec<(u32, u32, u32, u64)> = Vec::with_capacity(self.msgs.len());
        for m in self.msgs {
            match merged.last_mut() {
                Some(last) if (last.0, last.1, last.2) == (m.0, m.1, m.2) => last.3 += m.3,
                _ => merged.push(m),
            }
        }
        let mut out = PhaseCounts::empty(phase, processes);
        let mut start = 0;
        while start < merged.len() {
            let level = merged[start].0;
            let end = start + merged[start..].partition_point(|m| m.0 == level);
            let msgs = &merged[start..end];
            let mut lc = LevelCounts::zeros(level, processes);
            for &(_, s, r, c) in msgs {
                lc.cells_sent[s as usize] += c;
                lc.cells_recv[r as usize] += c;
                lc.max_cells_per_partner = lc.max_cells_per_partner.max(c);
            }
            count_partners(msgs.iter().map(|m| (m.1, m.2)), &mut lc.partners);
            for p in 0..processes {
                out.cells_sent[p] += lc.cells_sent[p];
                out.cells_recv[p] += lc.cells_recv[p];
            }
            out.levels.push(lc);
            start = end;
        }
        count_partners(merged.iter().map(|m| (m.1, m.2)), &mut out.partners);
        out
    }

    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.msgs.iter().map(|m| (m.1, m.2))
    }
}

/// Distinct communication partners (either direction) per process.
pub(crate) fn count_partners(edges: impl Iterator<Item = (u32, u32)>, out: &mut [u32]) {
    let mut pairs: Vec<(u32, u32)> = edges.flat_map(|(a, b)| [(a, b), (b, a)]).collect();
    pairs.sort_unstable();
    pairs.dedup();
    out.iter_mut().for_each(|v| *v = 0);
    for (a, _) in pairs {
        out[a as usize] += 1;
    }
}

/// Run parameters stored alongside every report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub distribution: String,
    pub n: usize,
    pub processes: usize,
    pub n_per_process: usize,
    pub leaf_capacity: usize,
    pub mode: CountingMode,
    pub model: CommModel,
    pub seed: u64,
    pub balanced: bool,
    pub global_depth: u32,
    /// Local tree depth `ℓ` (uniform layout only).
    pub local_depth: Option<u32>,
}

/// Counts of every phase of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct CommReport {
    pub meta: RunMeta,
    pub phases: Vec<PhaseCounts>,
    /// Distinct partners over all global phases (or over the whole pull for the direct model).
    pub global_partners: Vec<u32>,
}

impl CommReport {
    pub fn phase(&self, phase: Phase) -> Option<&PhaseCounts> {
        self.phases.iter().find(|p| p.phase == phase)
    }

    /// Largest per-process sum of cells received over the global phases.
    pub fn max_global_recv(&self) -> u64 {
        let mut per = vec![0u64; self.meta.processes];
        for ph in self.phases.iter().filter(|p| p.phase.is_global()) {
            for (acc, v) in per.iter_mut().zip(&ph.cells_recv) {
                *acc += v;
            }
        }
        per.into_iter().max().unwrap_or(0)
    }

    pub fn max_global_partners(&self) -> u32 {
        self.global_partners.iter().copied().max().unwrap_or(0)
    }

    /// Every phase sends exactly what it receives.
    pub fn is_conserved(&self) -> bool {
        self.phases.iter().all(|p| p.total_sent() == p.total_recv())
    }

    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            meta: self.meta.clone(),
            max_global_partners: self.max_global_partners(),
            max_global_cells_recv: self.max_global_recv(),
            phases: self.phases.iter().map(PhaseCounts::summary).collect(),
        }
    }

    /// One row per (phase, process), without header.
    pub fn write_csv_rows<W: Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        let m = &self.meta;
        for ph in &self.phases {
            for p in 0..ph.processes() {
                w.write_record([
                    ph.phase.name().to_string(),
                    m.distribution.clone(),
                    m.n.to_string(),
                    m.processes.to_string(),
                    m.mode.name().to_string(),
                    p.to_string(),
                    ph.partners[p].to_string(),
                    ph.cells_sent[p].to_string(),
                    ph.cells_recv[p].to_string(),
                ])?;
            }
        }
        Ok(())
    }
}

/// Serializable aggregates of one phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub phase: Phase,
    pub max_partners: u32,
    pub mean_partners: f64,
    pub max_cells_recv: u64,
    pub mean_cells_recv: f64,
    pub max_cells_sent: u64,
    pub total_cells_sent: u64,
    pub total_cells_recv: u64,
    pub levels: Vec<LevelSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: u32,
    pub max_partners: u32,
    pub max_cells_recv: u64,
    pub max_cells_per_partner: u64,
    pub total_cells_recv: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub meta: RunMeta,
    pub max_global_partners: u32,
    pub max_global_cells_recv: u64,
    pub phases: Vec<PhaseSummary>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tally_merges_pairs_and_counts_partners() {
        let mut t = Tally::default();
        t.send(1, 0, 1, 2);
        t.send(1, 0, 1, 3);
        t.send(1, 2, 0, 1);
        t.send(2, 1, 0, 4);
        t.send(2, 1, 1, 9);
        let pc = t.finish(Phase::LocalM2L, 3);
        assert_eq!(pc.cells_sent, vec![5, 4, 1]);
        assert_eq!(pc.cells_recv, vec![5, 5, 0]);
        assert_eq!(pc.partners, vec![2, 1, 1]);
        let l1 = pc.level(1).unwrap();
        assert_eq!(l1.max_cells_per_partner, 5);
        assert_eq!(l1.partners, vec![2, 1, 1]);
        assert_eq!(pc.level(2).unwrap().partners, vec![1, 1, 0]);
        assert_eq!(pc.total_sent(), pc.total_recv());
    }
}
