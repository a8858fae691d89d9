use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use h2fmm::commsim::{
    fit_sweep, run_comm_experiment, CommConfig, CommLayout, CommModel, CountingMode, PhaseFit,
    ReportSummary, SweepAxis, CSV_HEADER,
};
use h2fmm::geometry::generate;
use h2fmm::geometry::io::{read_binary, read_csv, write_binary, write_csv, PARTICLE_MAGIC};
use h2fmm::h2core::{compress as build_h2, dense_matvec, oracle_max, BuildSummary};
use h2fmm::tree::{balance_2to1, build_tree, depth_stats, DEFAULT_LEAF_CAPACITY};
use h2fmm::verify::{run_criterion, CriterionOutcome};
use h2fmm::{
    CompressOptions, DistributionKind, DistributionSpec, H2Matrix, KernelKind, KernelSpec,
    Particle,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::output::{open, write_json, write_sidecar, Meta};
use crate::{CmdResult, Failure, Format, GlobalOpts};

fn parse_kind(s: &str) -> Result<DistributionKind, String> {
    s.parse().map_err(|e: h2fmm::Error| e.to_string())
}

fn parse_kernel(s: &str) -> Result<KernelKind, String> {
    s.parse().map_err(|e: h2fmm::Error| e.to_string())
}

fn parse_layout(s: &str) -> Result<CommLayout, String> {
    s.parse().map_err(|e: h2fmm::Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<CountingMode, String> {
    s.parse().map_err(|e: h2fmm::Error| e.to_string())
}

fn parse_model(s: &str) -> Result<CommModel, String> {
    s.parse().map_err(|e: h2fmm::Error| e.to_string())
}

fn format_or(g: &GlobalOpts, default: Format, allowed: &[Format], command: &str) -> Result<Format, Failure> {
    let f = g.format.unwrap_or(default);
    if allowed.contains(&f) {
        Ok(f)
    } else {
        Err(Failure::Usage(format!("{command} does not support --format {f:?}")))
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct GenArgs {
    #[arg(long, value_parser = parse_kind)]
    pub dist: DistributionKind,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
}

pub fn gen(g: &GlobalOpts, a: &GenArgs) -> CmdResult {
    let format = format_or(g, Format::Csv, &[Format::Csv, Format::Bin], "gen")?;
    let ps = generate(&DistributionSpec::new(a.dist, a.n as usize, g.seed))?;
    let w = open(g.out.as_deref())?;
    match format {
        Format::Bin => write_binary(w, &ps)?,
        _ => {
            write_csv(w, &ps)?;
            write_sidecar(g.out.as_deref(), &Meta::new("gen", g, a))?;
        }
    }
    Ok(())
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TreeStatsArgs {
    /// Distributions to sweep; all three when omitted.
    #[arg(long, value_parser = parse_kind, value_delimiter = ',')]
    pub dist: Vec<DistributionKind>,
    /// Explicit particle counts, ascending.
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,
    /// Smallest `log2 N` when `--n` is omitted.
    #[arg(long, default_value_t = 10)]
    pub log2_min: u32,
    /// Largest `log2 N` when `--n` is omitted.
    #[arg(long, default_value_t = 16)]
    pub log2_max: u32,
    #[arg(long, default_value_t = DEFAULT_LEAF_CAPACITY)]
    pub capacity: usize,
}

pub fn tree_stats(g: &GlobalOpts, a: &TreeStatsArgs) -> CmdResult {
    let format = format_or(g, Format::Csv, &[Format::Csv, Format::Json], "tree-stats")?;
    let kinds = if a.dist.is_empty() { DistributionKind::ALL.to_vec() } else { a.dist.clone() };
    let ns: Vec<usize> = if a.n.is_empty() {
        if a.log2_min > a.log2_max || a.log2_max > 40 {
            return Err(Failure::Usage("need log2-min <= log2-max <= 40".into()));
        }
        (a.log2_min..=a.log2_max).map(|k| 1usize << k).collect()
    } else {
        a.n.clone()
    };
    if ns.contains(&0) {
        return Err(Failure::Usage("particle counts must be positive".into()));
    }
    let mut rows = Vec::new();
    for kind in kinds {
        rows.extend(depth_stats(&DistributionSpec::new(kind, 0, g.seed), &ns, a.capacity)?);
    }
    if format == Format::Json {
        #[derive(Serialize)]
        struct Report<'a, M: Serialize, R: Serialize> {
            meta: M,
            rows: &'a [R],
        }
        return write_json(g.out.as_deref(), &Report { meta: Meta::new("tree-stats", g, a), rows: &rows });
    }
    let mut w = csv::Writer::from_writer(open(g.out.as_deref())?);
    w.write_record(["distribution", "n", "depth"])?;
    for r in &rows {
        w.write_record([r.distribution.name().to_string(), r.n.to_string(), r.depth.to_string()])?;
    }
    w.flush()?;
    write_sidecar(g.out.as_deref(), &Meta::new("tree-stats", g, a))
}

/// Particle source and build parameters shared by `compress` and `matvec`.
#[derive(Args, Debug, Clone, Serialize)]
pub struct BuildArgs {
    /// Particle file (CSV or binary); overrides `--dist` and `--n`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_parser = parse_kind, default_value = "random")]
    pub dist: DistributionKind,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..), default_value_t = 2048)]
    pub n: u64,
    #[arg(long, value_parser = parse_kernel, default_value = "laplace3d")]
    pub kernel: KernelKind,
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub max_rank: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_LEAF_CAPACITY)]
    pub capacity: usize,
    /// Skip 2:1 balancing of the tree.
    #[arg(long)]
    pub no_balance: bool,
}

fn read_particles(path: &Path) -> Result<Vec<Particle>, Failure> {
    let mut f = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    let is_binary = f.read(&mut magic)? == 4 && magic == PARTICLE_MAGIC;
    f.rewind()?;
    Ok(if is_binary { read_binary(f)? } else { read_csv(f)? })
}

impl BuildArgs {
    fn particles(&self, seed: u64) -> Result<Vec<Particle>, Failure> {
        match &self.input {
            Some(p) => read_particles(p),
            None => Ok(generate(&DistributionSpec::new(self.dist, self.n as usize, seed))?),
        }
    }

    fn options(&self) -> CompressOptions {
        let mut o = CompressOptions::new(self.eps);
        if let Some(eta) = self.eta {
            o.eta = eta;
        }
        if let Some(r) = self.max_rank {
            o.max_rank = r;
        }
        o
    }

    fn build(&self, particles: Vec<Particle>) -> Result<H2Matrix, Failure> {
        let mut tree = build_tree(particles, self.capacity)?;
        if !self.no_balance {
            tree = balance_2to1(tree)?;
        }
        Ok(build_h2(&tree, &KernelSpec::new(self.kernel), &self.options())?)
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CompressArgs {
    #[command(flatten)]
    pub build: BuildArgs,
}

#[derive(Serialize)]
struct CompressReport<'a, M: Serialize> {
    meta: M,
    summary: BuildSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    build_seconds: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    container: Option<&'a Path>,
}

pub fn compress(g: &GlobalOpts, a: &CompressArgs) -> CmdResult {
    let format = format_or(g, Format::Bin, &[Format::Bin, Format::Json], "compress")?;
    let ps = a.build.particles(g.seed)?;
    let start = Instant::now();
    let h2 = a.build.build(ps)?;
    let secs = start.elapsed().as_secs_f64();
    let mut report = CompressReport {
        meta: Meta::new("compress", g, a),
        summary: h2.summary(),
        build_seconds: (!g.deterministic).then_some(secs),
        container: None,
    };
    if format == Format::Json {
        return write_json(g.out.as_deref(), &report);
    }
    let Some(out) = g.out.as_deref() else {
        return Err(Failure::Usage("compress writes a binary container and needs --out".into()));
    };
    h2.write_to(BufWriter::new(File::create(out)?))?;
    report.container = Some(out);
    write_sidecar(Some(out), &report)
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct MatvecArgs {
    /// H2 container written by `compress`; built from particles when omitted.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[command(flatten)]
    pub build: BuildArgs,
    /// Skip the dense comparison.
    #[arg(long)]
    pub no_oracle: bool,
    /// Write the product vector here, one value per line (binary little-endian with `--format bin`).
    #[arg(long)]
    pub y_out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Timings {
    build: f64,
    matvec: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<f64>,
}

#[derive(Serialize)]
struct MatvecReport<M: Serialize> {
    meta: M,
    n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    rel_error: Option<f64>,
    oracle_max: usize,
    y_norm: f64,
    summary: BuildSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    timings: Option<Timings>,
}

pub fn matvec(g: &GlobalOpts, a: &MatvecArgs) -> CmdResult {
    let y_format = format_or(g, Format::Json, &[Format::Json, Format::Csv, Format::Bin], "matvec")?;
    let guard = oracle_max();
    let start = Instant::now();
    let h2 = match &a.matrix {
        Some(p) => H2Matrix::read_from(BufReader::new(File::open(p)?))?,
        None => {
            let ps = a.build.particles(g.seed)?;
            if !a.no_oracle && ps.len() > guard {
                return Err(h2fmm::Error::OracleGuard { n: ps.len(), max: guard }.into());
            }
            a.build.build(ps)?
        }
    };
    let build = start.elapsed().as_secs_f64();
    let n = h2.n();
    if !a.no_oracle && n > guard {
        return Err(h2fmm::Error::OracleGuard { n, max: guard }.into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let start = Instant::now();
    let y = h2.matvec(&x)?;
    let mv = start.elapsed().as_secs_f64();
    let (rel_error, oracle) = if a.no_oracle {
        (None, None)
    } else {
        let start = Instant::now();
        let particles: Vec<Particle> = h2
            .points()
            .into_iter()
            .enumerate()
            .map(|(i, p)| Particle::new(i as u64, p))
            .collect();
        let exact = dense_matvec(&particles, h2.kernel(), &x)?;
        let num: f64 = y.iter().zip(&exact).map(|(a, b)| (a - b) * (a - b)).sum();
        let den: f64 = exact.iter().map(|b| b * b).sum();
        (Some((num / den).sqrt()), Some(start.elapsed().as_secs_f64()))
    };
    if let Some(path) = &a.y_out {
        let mut w = BufWriter::new(File::create(path)?);
        if y_format == Format::Bin {
            for v in &y {
                w.write_all(&v.to_le_bytes())?;
            }
        } else {
            for v in &y {
                writeln!(w, "{v:?}")?;
            }
        }
        w.flush()?;
    }
    let report = MatvecReport {
        meta: Meta::new("matvec", g, a),
        n,
        rel_error,
        oracle_max: guard,
        y_norm: y.iter().map(|v| v * v).sum::<f64>().sqrt(),
        summary: h2.summary(),
        timings: (!g.deterministic).then_some(Timings { build, matvec: mv, oracle }),
    };
    write_json(g.out.as_deref(), &report)
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CommsimArgs {
    /// `uniform` or a particle distribution.
    #[arg(long, value_parser = parse_layout, default_value = "uniform")]
    pub dist: CommLayout,
    /// Process counts.
    #[arg(long = "P", value_delimiter = ',', default_values_t = [64usize])]
    pub processes: Vec<usize>,
    /// Particles per process.
    #[arg(long, value_delimiter = ',', default_values_t = [4096usize])]
    pub n_per_p: Vec<usize>,
    #[arg(long, value_parser = parse_mode, default_value = "truncated")]
    pub mode: CountingMode,
    #[arg(long, value_parser = parse_model, default_value = "hier")]
    pub model: CommModel,
    #[arg(long, default_value_t = DEFAULT_LEAF_CAPACITY)]
    pub capacity: usize,
    #[arg(long)]
    pub no_balance: bool,
    /// Payload size used to convert cell counts into bytes in the summary.
    #[arg(long, default_value_t = 8)]
    pub bytes_per_cell: u64,
}

#[derive(Serialize)]
struct CommsimSummary<M: Serialize> {
    meta: M,
    runs: Vec<RunSummary>,
    fits: Vec<PhaseFit>,
}

#[derive(Serialize)]
struct RunSummary {
    #[serde(flatten)]
    report: ReportSummary,
    conserved: bool,
    max_global_bytes_recv: u64,
}

/// Fits along `P` for each fixed `N/P`, and along `N/P` for each fixed `P`, wherever the
/// sweep has at least four points.
fn sweep_fits(reports: &[h2fmm::commsim::CommReport], a: &CommsimArgs) -> Result<Vec<PhaseFit>, Failure> {
    let mut fits = Vec::new();
    if a.processes.len() >= 4 {
        for &np in &a.n_per_p {
            let group: Vec<_> = reports.iter().filter(|r| r.meta.n_per_process == np).cloned().collect();
            fits.extend(fit_sweep(&group, SweepAxis::Processes)?);
        }
    }
    if a.n_per_p.len() >= 4 {
        for &p in &a.processes {
            let group: Vec<_> = reports.iter().filter(|r| r.meta.processes == p).cloned().collect();
            fits.extend(fit_sweep(&group, SweepAxis::ParticlesPerProcess)?);
        }
    }
    Ok(fits)
}

fn ascending_distinct(v: &[usize]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

pub fn commsim(g: &GlobalOpts, a: &CommsimArgs) -> CmdResult {
    let format = format_or(g, Format::Csv, &[Format::Csv, Format::Json], "commsim")?;
    if !ascending_distinct(&a.processes) || !ascending_distinct(&a.n_per_p) {
        return Err(Failure::Usage("--P and --n-per-p must be strictly ascending".into()));
    }
    let base = CommConfig {
        leaf_capacity: a.capacity,
        balance: !a.no_balance,
        ..CommConfig::new(a.dist, 1, 1).with_mode(a.mode).with_model(a.model).with_seed(g.seed)
    };
    let reports = run_comm_experiment(&base, &a.processes, &a.n_per_p)?;
    let summary = CommsimSummary {
        meta: Meta::new("commsim", g, a),
        runs: reports
            .iter()
            .map(|r| RunSummary {
                report: r.summary(),
                conserved: r.is_conserved(),
                max_global_bytes_recv: r.max_global_recv() * a.bytes_per_cell,
            })
            .collect(),
        fits: sweep_fits(&reports, a)?,
    };
    if summary.runs.iter().any(|r| !r.conserved) {
        return Err(Failure::Internal("sent and received cell totals differ".into()));
    }
    if format == Format::Json {
        return write_json(g.out.as_deref(), &summary);
    }
    let mut w = csv::Writer::from_writer(open(g.out.as_deref())?);
    w.write_record(CSV_HEADER)?;
    for r in &reports {
        r.write_csv_rows(&mut w)?;
    }
    w.flush()?;
    write_sidecar(g.out.as_deref(), &summary)
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct VerifyArgs {
    /// Criteria to run (1-10); all when omitted.
    #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(u32).range(1..=10))]
    pub criterion: Vec<u32>,
}

pub fn verify(g: &GlobalOpts, a: &VerifyArgs) -> CmdResult {
    let format = format_or(g, Format::Csv, &[Format::Csv, Format::Json], "verify")?;
    let ids: Vec<u32> = if a.criterion.is_empty() { (1..=10).collect() } else { a.criterion.clone() };
    let mut outcomes: Vec<CriterionOutcome> = Vec::new();
    for id in ids {
        let o = run_criterion(id)?;
        eprintln!("{o}");
        outcomes.push(o);
    }
    if format == Format::Json {
        write_json(g.out.as_deref(), &outcomes)?;
    } else {
        let mut w = open(g.out.as_deref())?;
        for o in &outcomes {
            writeln!(w, "{o}")?;
        }
        w.flush()?;
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if failed > 0 {
        return Err(Failure::Internal(format!("{failed} criteria failed")));
    }
    Ok(())
}
