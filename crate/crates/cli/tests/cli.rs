use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn h2fmm(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_h2fmm"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let out = h2fmm(args, dir);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).expect("valid JSON")
}

#[test]
fn gen_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.csv", "b.csv"] {
        ok(&["gen", "--dist", "random", "--n", "1000", "--seed", "1", "--out", name], dir.path());
    }
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
    let meta = json(&std::fs::read(dir.path().join("a.csv.meta.json")).unwrap());
    assert_eq!(meta["format_version"], 1);
    assert_eq!(meta["config"]["n"], 1000);
}

#[test]
fn gen_zero_particles_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = h2fmm(&["gen", "--dist", "plummer", "--n", "0"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_writes_header_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["gen", "--dist", "surface", "--n", "4096"], dir.path());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("index,x,y,z,charge"));
    assert_eq!(lines.count(), 4096);
}

#[test]
fn gen_binary_round_trips_through_matvec_input() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["gen", "--dist", "plummer", "--n", "600", "--format", "bin", "--out", "p.bin"], dir.path());
    let out = ok(&["matvec", "--input", "p.bin", "--eps", "1e-6", "--deterministic"], dir.path());
    let report = json(&out.stdout);
    assert_eq!(report["n"], 600);
    assert!(report["rel_error"].as_f64().unwrap() <= 1e-5);
}

#[test]
fn tree_stats_rows_and_default_capacity() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["tree-stats", "--log2-min", "10", "--log2-max", "13", "--out", "d.csv"], dir.path());
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(dir.path().join("d.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("distribution,n,depth"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 4 * 3);
    let random: Vec<u32> =
        rows.iter().filter(|r| r[0] == "random").map(|r| r[2].parse().unwrap()).collect();
    assert!(random.windows(2).all(|w| w[0] <= w[1]));
    let meta = json(&std::fs::read(dir.path().join("d.csv.meta.json")).unwrap());
    assert_eq!(meta["config"]["capacity"], 16);
}

#[test]
fn matvec_reports_error_against_dense_product() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["matvec", "--n", "2048", "--kernel", "laplace3d", "--eps", "1e-6"], dir.path());
    let report = json(&out.stdout);
    assert!(report["rel_error"].as_f64().unwrap() <= 1e-5, "{}", report["rel_error"]);
    assert!(report["timings"]["matvec"].is_number());
    assert!(report["summary"]["storage"]["total"].as_u64().unwrap() > 0);
}

#[test]
fn matvec_without_oracle_omits_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["matvec", "--n", "30000", "--eps", "1e-3", "--no-oracle"], dir.path());
    let report = json(&out.stdout);
    assert!(report.get("rel_error").is_none());
    assert_eq!(report["n"], 30000);
}

#[test]
fn oracle_above_guard_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_h2fmm"))
        .args(["matvec", "--n", "600"])
        .env("H2FMM_ORACLE_MAX", "500")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("H2FMM_ORACLE_MAX"));
}

#[test]
fn deterministic_matvec_is_bit_identical() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        ok(
            &["matvec", "--dist", "plummer", "--n", "3000", "--eps", "1e-5", "--seed", "4",
              "--deterministic", "--y-out", "y.txt", "--out", "r.json"],
            dir.path(),
        );
    }
    for name in ["y.txt", "r.json"] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
    let y = std::fs::read_to_string(dirs[0].path().join("y.txt")).unwrap();
    assert_eq!(y.lines().count(), 3000);
}

#[test]
fn compress_container_feeds_matvec() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["compress", "--n", "1500", "--eps", "1e-6", "--out", "m.h2"], dir.path());
    let meta = json(&std::fs::read(dir.path().join("m.h2.meta.json")).unwrap());
    assert_eq!(meta["summary"]["n"], 1500);
    let out = ok(&["matvec", "--matrix", "m.h2"], dir.path());
    assert!(json(&out.stdout)["rel_error"].as_f64().unwrap() <= 1e-5);
    let missing = h2fmm(&["compress", "--n", "100"], dir.path());
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn commsim_uniform_periodic_m2m_slope() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["commsim", "--dist", "uniform", "--P", "8,64,512,4096,32768", "--n-per-p", "4096",
          "--mode", "periodic", "--out", "c.csv"],
        dir.path(),
    );
    let summary = json(&std::fs::read(dir.path().join("c.csv.meta.json")).unwrap());
    let fits = summary["fits"].as_array().unwrap();
    let m2m = fits.iter().find(|f| f["quantity"] == "global-M2M").unwrap();
    let slope = m2m["fit"]["log_slope"].as_f64().unwrap();
    assert!((slope - 7.0).abs() <= 0.7, "{slope}");
    let csv = std::fs::read_to_string(dir.path().join("c.csv")).unwrap();
    assert!(csv.starts_with("phase,distribution,N,P,mode,process,partners,cells_sent,cells_recv\n"));
}

#[test]
fn commsim_local_p2p_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(
        &["commsim", "--P", "64", "--n-per-p", "262144,2097152,16777216,134217728", "--format", "json"],
        dir.path(),
    );
    let summary = json(&out.stdout);
    let p2p = summary["fits"]
        .as_array()
        .unwrap()
        .iter()
        .find(|f| f["quantity"] == "local-P2P")
        .unwrap();
    let e = p2p["fit"]["exponent"].as_f64().unwrap();
    assert!((0.62..=0.72).contains(&e), "{e}");
}

#[test]
fn commsim_models_share_metadata_columns() {
    let dir = tempfile::tempdir().unwrap();
    for model in ["hier", "direct"] {
        let out = format!("{model}.csv");
        ok(
            &["commsim", "--dist", "plummer", "--P", "8,27", "--n-per-p", "256", "--model", model,
              "--seed", "3", "--out", &out],
            dir.path(),
        );
    }
    let cols = |name: &str| -> Vec<Vec<String>> {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        let mut rows: Vec<Vec<String>> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').skip(1).take(5).map(String::from).collect())
            .collect();
        rows.sort();
        rows.dedup();
        rows
    };
    let (h, d) = (cols("hier.csv"), cols("direct.csv"));
    assert!(!h.is_empty());
    assert_eq!(h, d);
    let header = |name: &str| std::fs::read_to_string(dir.path().join(name)).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header("hier.csv"), header("direct.csv"));
}

#[test]
fn commsim_rejects_unordered_sweeps_and_bad_modes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(h2fmm(&["commsim", "--P", "64,8"], dir.path()).status.code(), Some(2));
    assert_eq!(h2fmm(&["commsim", "--mode", "sideways"], dir.path()).status.code(), Some(2));
    let out = h2fmm(&["commsim", "--dist", "plummer", "--P", "8", "--n-per-p", "100", "--mode", "periodic"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_runs_a_single_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["verify", "--criterion", "1"], dir.path());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("C1  PASS"), "{text}");
}
