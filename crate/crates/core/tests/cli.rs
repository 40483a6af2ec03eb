use std::path::Path;
use std::process::{Command, Output};

use jacobi_tipping::report::{read_histogram_csv, read_json, read_stats_csv, read_sweep_rows_csv, read_trajectories_csv, RunSummary};

fn jacobi_tip(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jacobi-tip")).args(args).output().unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small grid so the end-to-end tests stay quick.
const FAST: [&str; 6] = ["--h", "0.002", "--steps", "5000", "--seed", "7"];

#[test]
fn classify_verdicts() {
    for (r, sigma, verdict) in [
        ("0.5", "0.2", "confined"),
        ("0.95", "0.5", "upper boundary attainable"),
        ("0.05", "0.5", "lower boundary attainable"),
    ] {
        let out = jacobi_tip(&["classify", "--r", r, "--sigma", sigma]);
        assert!(out.status.success());
        let text = String::from_utf8(out.stdout).unwrap();
        assert_eq!(text.lines().next(), Some(verdict));
    }
}

#[test]
fn paths_reach_or_avoid_the_boundary() {
    let dir = tempfile::tempdir().unwrap();
    let tip = dir.path().join("tip.csv");
    let out = jacobi_tip(&[&["paths", "--sigma", "0.2", "--R", "0.1", "--n", "5", "--out", path_str(&tip)], &FAST[..]].concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_trajectories_csv(std::fs::File::open(&tip).unwrap()).unwrap();
    let ids: std::collections::BTreeSet<u64> = rows.iter().map(|r| r.path_id).collect();
    assert_eq!(ids.len(), 5);
    assert!(rows.iter().any(|r| r.x == 1.0));

    let safe = dir.path().join("safe.csv");
    let out = jacobi_tip(&[&["paths", "--sigma", "0.2", "--R", "0.5", "--n", "5", "--out", path_str(&safe)], &FAST[..]].concat());
    assert!(out.status.success());
    let rows = read_trajectories_csv(std::fs::File::open(&safe).unwrap()).unwrap();
    assert!(rows.iter().all(|r| r.x < 1.0));
}

#[test]
fn noise_free_paths_ignore_the_seed() {
    let a = jacobi_tip(&["paths", "--sigma", "0", "--n", "1", "--preset", "desk", "--seed", "1"]);
    let b = jacobi_tip(&["paths", "--sigma", "0", "--n", "1", "--preset", "desk", "--seed", "2"]);
    assert!(a.status.success() && b.status.success());
    assert!(a.stdout.starts_with(b"t,X,Y,path_id\n"));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn escape_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("escape.csv");
    let json = dir.path().join("escape.json");
    let args = [
        &["escape", "--sigma", "0.4", "--R", "0.2", "--n-paths", "400", "--out", path_str(&csv), "--json", path_str(&json)][..],
        &FAST[..],
    ]
    .concat();
    let out = jacobi_tip(&args);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());

    let rows = read_sweep_rows_csv(std::fs::File::open(&csv).unwrap()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].n_paths, 400);
    let summary: RunSummary = read_json(std::fs::File::open(&json).unwrap()).unwrap();
    assert_eq!(summary.seed, Some(7));
    assert_eq!(summary.results["n_escaped"], rows[0].n_escaped);
    assert!(String::from_utf8(out.stderr).unwrap().contains("p = "));

    // identical flags, identical bytes
    let csv_again = std::fs::read(&csv).unwrap();
    let json_again = std::fs::read(&json).unwrap();
    assert!(jacobi_tip(&args).status.success());
    assert_eq!(std::fs::read(&csv).unwrap(), csv_again);
    assert_eq!(std::fs::read(&json).unwrap(), json_again);
}

#[test]
fn sweep_layout_is_r_major() {
    let out = jacobi_tip(&[&["sweep", "--sigma", "0.4,0.8", "--R", "0.2,0.3,0.4", "--n-paths", "200"], &FAST[..]].concat());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("R,sigma,p_hat,ci_low,ci_high,n_paths,n_escaped\n"));
    let rows = read_sweep_rows_csv(text.as_bytes()).unwrap();
    let order: Vec<(f64, f64)> = rows.iter().map(|r| (r.rate, r.sigma)).collect();
    assert_eq!(order, vec![(0.2, 0.4), (0.2, 0.8), (0.3, 0.4), (0.3, 0.8), (0.4, 0.4), (0.4, 0.8)]);
    for r in &rows {
        assert!(r.ci_low <= r.p_hat && r.p_hat <= r.ci_high);
    }
}

#[test]
fn hist_and_stats_outputs() {
    let out = jacobi_tip(&[&["hist", "--sigma", "0.8", "--R", "0.1", "--n-paths", "300", "--bins", "20"], &FAST[..]].concat());
    assert!(out.status.success());
    let hist = read_histogram_csv(out.stdout.as_slice()).unwrap();
    assert_eq!(hist.n_bins(), 20);
    assert_eq!(hist.bin_edges[0], 0.0);
    assert_eq!(*hist.bin_edges.last().unwrap(), 10.0);
    assert!(hist.n_total > 250);

    let out = jacobi_tip(&[&["stats", "--sigma", "0.2", "--R", "0.5", "--n-paths", "50", "--points", "25"], &FAST[..]].concat());
    assert!(out.status.success());
    let stats = read_stats_csv(out.stdout.as_slice()).unwrap();
    assert_eq!(stats.times.len(), 26);
    assert_eq!(stats.mean[0], 0.1);
    assert_eq!(stats.std[0], 0.0);
}

#[test]
fn critical_rate_json() {
    let out = jacobi_tip(&["critical-rate", "--horizon", "10,20"]);
    assert!(out.status.success());
    let summary: RunSummary = serde_json::from_slice(&out.stdout).unwrap();
    let results = summary.results.as_array().unwrap();
    assert_eq!(results.len(), 2);
    for r in results {
        let (lo, hi) = (r["r_low"].as_f64().unwrap(), r["r_high"].as_f64().unwrap());
        assert!(lo > 0.1 && hi < 0.2 && hi - lo <= 1e-4);
    }

    let bad = jacobi_tip(&["critical-rate", "--r-min", "0.5"]);
    assert!(!bad.status.success());
    assert!(String::from_utf8(bad.stderr).unwrap().contains("bracket"));
}

#[test]
fn bad_input_fails_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("never.csv");
    for args in [
        vec!["escape", "--n-paths", "0", "--out", path_str(&csv)],
        vec!["escape", "--sigma", "abc", "--out", path_str(&csv)],
        vec!["escape", "--delta", "1.5", "--out", path_str(&csv)],
        vec!["sweep", "--x0", "0", "--out", path_str(&csv)],
        vec!["stats", "--ci-level", "2", "--out", path_str(&csv)],
    ] {
        let out = jacobi_tip(&args);
        assert!(!out.status.success(), "{args:?}");
        assert!(!out.stderr.is_empty());
        assert!(out.stdout.is_empty());
        assert!(!csv.exists(), "{args:?} wrote output");
    }
    let usage = jacobi_tip(&["escape", "--n-paths", "0"]);
    assert_eq!(usage.status.code(), Some(2));
    assert!(String::from_utf8(usage.stderr).unwrap().contains("--n-paths"));
}

#[test]
fn unwritable_destination_is_an_error() {
    let out = jacobi_tip(&[&["escape", "--n-paths", "10", "--out", "/nonexistent-dir/x.csv"], &FAST[..]].concat());
    assert_eq!(out.status.code(), Some(1));
}
