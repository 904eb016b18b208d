use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use scsolve_bench::mm::{read_matrix_market, write_matrix_market, write_vector};
use scsolve_core::linalg::svd_truncated;
use scsolve_core::matgen::{generate, make_consistent_system, ClusterSpec};
use scsolve_core::{build_constraint, DenseVector, DEFAULT_RANK_TOL};

fn scsolve(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scsolve"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = scsolve(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A generated system written to `dir` as `a.mtx` and `b.txt`.
fn system(dir: &Path, spec: &ClusterSpec) -> (PathBuf, PathBuf) {
    let g = generate::<f64>(spec).unwrap();
    let sys = make_consistent_system(&g.a, spec.seed, DEFAULT_RANK_TOL).unwrap();
    let a = dir.join("a.mtx");
    let b = dir.join("b.txt");
    write_matrix_market(&a, &g.a, None).unwrap();
    write_vector(&b, &sys.b).unwrap();
    (a, b)
}

fn small_spec() -> ClusterSpec {
    ClusterSpec::with_default_ranges(60, 12, 12, 2, 2, 2.0, 5)
}

fn field(stdout: &str, key: &str) -> String {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")))
        .unwrap_or_else(|| panic!("no {key} in {stdout}"))
        .to_string()
}

#[test]
fn matgen_writes_matrix_and_metadata_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let gen = |name: &str| {
        let out = dir.path().join(name);
        ok(&[
            "matgen", "--m", "1024", "--n", "128", "--r", "128", "--nl", "16", "--ns", "16", "--kappa-m", "2",
            "--seed", "9", "--out", s(&out),
        ]);
        out
    };
    let a = gen("a.mtx");
    let b = gen("b.mtx");
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let meta_a = fs::read(dir.path().join("a.mtx.json")).unwrap();
    assert_eq!(meta_a, fs::read(dir.path().join("b.mtx.json")).unwrap());
    let m = read_matrix_market(&a).unwrap();
    assert_eq!(m.shape(), (1024, 128));
    let meta: serde_json::Value = serde_json::from_slice(&meta_a).unwrap();
    assert_eq!(meta["spec"]["seed"], 9);
    assert_eq!(meta["spec"]["r_m"], serde_json::json!([300.0, 400.0]));
    assert_eq!(meta["singular_value_sampling"], "uniform");
    assert_eq!(meta["sigma"].as_array().unwrap().len(), 128);
}

#[test]
fn matgen_rejects_a_degenerate_spec() {
    let dir = tempfile::tempdir().unwrap();
    let out = scsolve(&[
        "matgen", "--m", "20", "--n", "10", "--r", "4", "--nl", "2", "--ns", "2", "--kappa-m", "2", "--out",
        s(&dir.path().join("a.mtx")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("middle cluster"));
    let out = scsolve(&["matgen", "--m", "20"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn select_documents() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ClusterSpec::with_default_ranges(400, 60, 60, 6, 6, 2.0, 1);
    let (a, _) = system(dir.path(), &spec);
    let doc_path = dir.path().join("sel.json");
    ok(&["select", "--in", s(&a), "--method", "sqnorm", "--mp", "150", "--seed", "4", "--out", s(&doc_path)]);
    let doc: serde_json::Value = serde_json::from_slice(&fs::read(&doc_path).unwrap()).unwrap();
    let mut ix: Vec<u64> = doc["indices"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    assert_eq!(ix.len(), 150);
    ix.sort_unstable();
    ix.dedup();
    assert_eq!(ix.len(), 150);
    assert!(doc["achieved_id_error"].as_f64().unwrap() >= 0.0);

    let first = ok(&["select", "--in", s(&a), "--method", "cpqr", "--mp", "20"]);
    let second = ok(&["select", "--in", s(&a), "--method", "cpqr", "--mp", "20"]);
    assert_eq!(first, second);

    let out = scsolve(&["select", "--in", s(&a), "--method", "cpqr", "--mp", "401"]);
    assert_eq!(out.status.code(), Some(2));
    let out = scsolve(&["select", "--in", s(&dir.path().join("missing.mtx")), "--method", "cpqr", "--mp", "2"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn solve_reports_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = system(dir.path(), &small_spec());
    let trace = dir.path().join("t.csv");
    let stdout = ok(&[
        "solve", "--matrix", s(&a), "--rhs", s(&b), "--ip", "none", "--algo", "krylov", "--ell", "10", "--sampler",
        "partition", "--q", "6", "--trace", s(&trace),
    ]);
    assert_eq!(field(&stdout, "status"), "converged");
    let k: usize = field(&stdout, "iterations").parse().unwrap();
    let full: f64 = field(&stdout, "full_iterations").parse().unwrap();
    assert_eq!(full, k as f64 * 6.0 / 60.0);
    assert!(field(&stdout, "final_rse").parse::<f64>().unwrap() < 1e-12);
    let csv = fs::read_to_string(&trace).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("trial,k,rse,residual_norm"));
    assert_eq!(lines.count(), k + 1);

    let out = scsolve(&["solve", "--matrix", s(&a), "--rhs", s(&b), "--sampler", "partition"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solve_max_iters_still_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = system(dir.path(), &small_spec());
    let stdout = ok(&[
        "solve", "--matrix", s(&a), "--rhs", s(&b), "--algo", "scrim", "--sampler", "single_row", "--max-iters", "5",
    ]);
    assert_eq!(field(&stdout, "status"), "max_iters");
    assert_eq!(field(&stdout, "iterations"), "5");
}

#[test]
fn krylov_ell_one_matches_scrim_trace() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = system(dir.path(), &small_spec());
    let ip = dir.path().join("ip.txt");
    fs::write(&ip, "0\n7\n19\n33\n").unwrap();
    let run = |algo: &[&str], name: &str| {
        let t = dir.path().join(name);
        let mut args = vec![
            "solve", "--matrix", s(&a), "--rhs", s(&b), "--ip", s(&ip), "--sampler", "partition", "--q", "8",
            "--seed", "21", "--max-iters", "400", "--trace", s(&t),
        ];
        args.extend_from_slice(algo);
        ok(&args);
        fs::read(&t).unwrap()
    };
    let k = run(&["--algo", "krylov", "--ell", "1"], "k.csv");
    let sc = run(&["--algo", "scrim", "--zeta", "1"], "s.csv");
    assert_eq!(k, sc);
}

#[test]
fn rate_closed_forms() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ClusterSpec::with_default_ranges(30, 8, 8, 1, 1, 2.0, 3);
    let (a, b) = system(dir.path(), &spec);
    let ip = dir.path().join("ip.txt");
    fs::write(&ip, "2\n11\n").unwrap();
    let report = |extra: &[&str]| -> serde_json::Value {
        let mut args = vec!["rate", "--matrix", s(&a), "--rhs", s(&b)];
        args.extend_from_slice(extra);
        serde_json::from_str(&ok(&args)).unwrap()
    };

    let am = read_matrix_market(&a).unwrap();
    let bv = scsolve_bench::mm::read_vector(&b).unwrap();
    let factor = build_constraint(&am, &bv, &[2, 11], DEFAULT_RANK_TOL).unwrap();
    let a_ir_p = factor.project_rows(&am.select_rows(factor.partition().i_r()).unwrap()).unwrap();
    let f = svd_truncated(&a_ir_p, DEFAULT_RANK_TOL).unwrap();
    let s_min = f.sigma_min().unwrap();
    let fro2 = a_ir_p.frobenius_norm_sq();

    let r = report(&["--ip", s(&ip), "--sampler", "single_row"]);
    let rho = r["rho"].as_f64().unwrap();
    let expect = 1.0 - s_min * s_min / fro2;
    assert!((rho - expect).abs() <= 1e-10, "{rho} vs {expect}");
    assert!(r["rho_tilde"].as_f64().unwrap() > 0.0);

    let r = report(&["--ip", s(&ip), "--sampler", "partition", "--q", "28"]);
    let expect = 1.0 - (s_min / f.sigma_max()).powi(2);
    assert!((r["rho"].as_f64().unwrap() - expect).abs() <= 1e-10);

    let r = report(&["--ip", "none", "--sampler", "partition", "--q", "5"]);
    assert_eq!(r["rho"], r["rho_tilde"]);
    let rho = r["rho"].as_f64().unwrap();
    assert!(rho > 0.0 && rho < 1.0);
}

fn bench_config(dir: &Path, trials: usize, extra_selection: &str) -> PathBuf {
    let cfg = format!(
        r#"{{
            "matrix": {{"generate": {{"m": 80, "n": 16, "r": 16, "n_l": 2, "n_s": 2, "kappa_m": 2.0,
                       "r_s": [50, 150], "r_m": [300, 400], "r_l": [900, 1000], "seed": 11}}}},
            "rhs": {{"generate": {{"seed": 12}}}},
            "selection": {extra_selection},
            "sampler": {{"kind": "partition", "q": 8}},
            "algorithm": {{"algo": "krylov", "ell": 4}},
            "trials": {trials},
            "rse_tol": 1e-12,
            "max_iters": 3000,
            "base_seed": 100
        }}"#
    );
    let p = dir.join(format!("cfg{trials}.json"));
    fs::write(&p, cfg).unwrap();
    p
}

fn read_aggregate(path: &Path) -> Vec<[f64; 6]> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,min,q25,median,q75,max"));
    lines
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|t| t.parse().unwrap()).collect();
            [v[0], v[1], v[2], v[3], v[4], v[5]]
        })
        .collect()
}

#[test]
fn bench_single_trial_columns_coincide() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bench_config(dir.path(), 1, r#""none""#);
    let out = dir.path().join("out");
    ok(&["bench", "--config", s(&cfg), "--out", s(&out)]);
    for row in read_aggregate(&out.join("aggregate.csv")) {
        assert!(row[1..].iter().all(|&v| v == row[1]));
    }
}

#[test]
fn bench_outputs_are_ordered_and_summarized() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bench_config(dir.path(), 6, r#"{"strategy": {"method": "sqnorm", "m_p": 8, "seed": 1}}"#);
    let out = dir.path().join("out");
    let stdout = ok(&["bench", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(field(&stdout, "trials"), "6");
    let rows = read_aggregate(&out.join("aggregate.csv"));
    assert!(!rows.is_empty());
    for r in &rows {
        assert!(r[1] <= r[2] && r[2] <= r[3] && r[3] <= r[4] && r[4] <= r[5], "{r:?}");
    }
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["metric"], "rse");
    assert_eq!(summary["config"]["reference_size_cap"], 2_000_000);
    let trials = summary["trials"].as_array().unwrap();
    assert_eq!(trials.len(), 6);
    for (t, tr) in trials.iter().enumerate() {
        assert_eq!(tr["trial"], t);
        assert_eq!(tr["seed"], 100 + t as u64);
        assert_eq!(tr["m_p"], 8);
    }
    let iters: Vec<f64> = trials.iter().map(|t| t["iterations"].as_f64().unwrap()).collect();
    let mean = iters.iter().sum::<f64>() / 6.0;
    assert!((summary["mean_iterations"].as_f64().unwrap() - mean).abs() < 1e-12);
    let full = summary["mean_full_iterations"].as_f64().unwrap();
    assert!((full - mean * 8.0 / 72.0).abs() < 1e-9);
}

#[test]
fn bench_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bench_config(dir.path(), 8, r#"{"strategy": {"method": "rbrp", "m_p": 6, "block_size": 3, "seed": 2}}"#);
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        ok(&["bench", "--config", s(&cfg), "--out", s(&out), "--threads", threads]);
        (fs::read(out.join("trace.csv")).unwrap(), fs::read(out.join("aggregate.csv")).unwrap())
    };
    let one = run("o1", "1");
    assert_eq!(one, run("o2", "1"));
    assert_eq!(one, run("o4", "4"));
}

#[test]
fn bench_trial_failure_leaves_partial_results() {
    let dir = tempfile::tempdir().unwrap();
    // A right-hand side outside the range of A makes every trial fail its
    // consistency check.
    let (a, _) = system(dir.path(), &small_spec());
    let b = dir.path().join("bad.txt");
    write_vector(&b, &DenseVector::from_fn(60, |i| (i % 7) as f64 - 3.0)).unwrap();
    let cfg = format!(
        r#"{{"matrix": {{"file": "{}"}}, "rhs": {{"file": "{}"}}, "selection": "none",
            "sampler": {{"kind": "single_row"}}, "algorithm": {{"algo": "scrim", "zeta": 1.0}},
            "trials": 2, "rse_tol": 1e-10, "max_iters": 100, "base_seed": 0}}"#,
        s(&a),
        s(&b)
    );
    let p = dir.path().join("cfg.json");
    fs::write(&p, cfg).unwrap();
    let out = dir.path().join("out");
    let res = scsolve(&["bench", "--config", s(&p), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("partial.json"));
    let partial: serde_json::Value = serde_json::from_slice(&fs::read(out.join("partial.json")).unwrap()).unwrap();
    assert_eq!(partial["failed_trial"], 0);
}

#[test]
fn bench_rejects_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("cfg.json");
    fs::write(&p, r#"{"trials": 0}"#).unwrap();
    let res = scsolve(&["bench", "--config", s(&p), "--out", s(dir.path())]);
    assert_eq!(res.status.code(), Some(2));
    let res = scsolve(&["bench", "--config", s(&dir.path().join("none.json")), "--out", s(dir.path())]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn malformed_matrix_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.mtx");
    fs::write(&a, "%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n").unwrap();
    let res = scsolve(&["rate", "--matrix", s(&a), "--sampler", "single_row"]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("complex"));
}
