use irk_precond_cli::{run, CliError};
use serde_json::Value;

fn run_ok(args: &[&str]) -> String {
    let mut out = Vec::new();
    let mut full = vec!["irk-precond"];
    full.extend_from_slice(args);
    run(full, &mut out).unwrap_or_else(|e| panic!("{args:?}: {e}"));
    String::from_utf8(out).unwrap()
}

fn run_err(args: &[&str]) -> CliError {
    let mut out = Vec::new();
    let mut full = vec!["irk-precond"];
    full.extend_from_slice(args);
    run(full, &mut out).expect_err("command should fail")
}

#[test]
fn tableau_json_matches_two_stage_radau() {
    let v: Value = serde_json::from_str(&run_ok(&["tableau", "-q", "2", "--format", "json"])).unwrap();
    let a: Vec<Vec<f64>> = serde_json::from_value(v["A"].clone()).unwrap();
    let expected = [[5.0 / 12.0, -1.0 / 12.0], [0.75, 0.25]];
    for i in 0..2 {
        for j in 0..2 {
            assert!((a[i][j] - expected[i][j]).abs() < 1e-14);
        }
    }
    let c: Vec<f64> = serde_json::from_value(v["c"].clone()).unwrap();
    assert!((c[0] - 1.0 / 3.0).abs() < 1e-14 && (c[1] - 1.0).abs() < 1e-15);
}

#[test]
fn factor_json_has_unit_upper_factor() {
    let v: Value = serde_json::from_str(&run_ok(&["factor", "-q", "3"])).unwrap();
    let u: Vec<Vec<f64>> = serde_json::from_value(v["U"].clone()).unwrap();
    for (i, row) in u.iter().enumerate() {
        assert_eq!(row[i], 1.0);
        for x in &row[..i] {
            assert_eq!(*x, 0.0);
        }
    }
    assert!(v["norms"]["uhat_2"].as_f64().unwrap() > 0.0);
}

#[test]
fn test1_reproduces_cluster_counts() {
    let v: Value = serde_json::from_str(&run_ok(&["test1", "-q", "3", "--n-side", "5,9,17", "--format", "json"])).unwrap();
    let counts: Vec<Vec<u64>> = v["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["counts"].as_array().unwrap().iter().map(|c| c["count"].as_u64().unwrap()).collect())
        .collect();
    assert_eq!(counts, vec![vec![75, 69, 59], vec![243, 240, 229], vec![866, 861, 853]]);
}

#[test]
fn radius_matches_closed_form() {
    let v: Value = serde_json::from_str(&run_ok(&["radius", "-q", "2", "--format", "json"])).unwrap();
    let six = 6f64.sqrt();
    let exact = 3.0 * six / (11.0 * six + 24.0);
    assert!((v["radius"].as_f64().unwrap() - exact).abs() < 1e-10);
    assert!((v["mu_star"].as_f64().unwrap() - six).abs() < 1e-4);
}

#[test]
fn usage_errors_exit_with_two() {
    for args in [
        vec!["nope"],
        vec!["test1", "--eps", ""],
        vec!["radius", "--mu-min", "-1"],
        vec!["tableau", "-q", "x"],
        vec!["fem", "--emit", "matrix-market"],
        vec!["spectrum", "--bc", "periodic"],
    ] {
        assert_eq!(run_err(&args).exit_code(), 2, "{args:?}");
    }
}

#[test]
fn numerical_errors_exit_with_three() {
    assert_eq!(run_err(&["tableau", "-q", "11"]).exit_code(), 3);
    assert_eq!(run_err(&["solve", "--n-side", "9", "--max-iter", "1"]).exit_code(), 3);
}

#[test]
fn spectrum_csv_header_and_row_count() {
    let csv = run_ok(&["spectrum", "-q", "2", "--n-side", "5"]);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("re,im,branch_index,mu"));
    assert_eq!(lines.count(), 2 * 25);
}

#[test]
fn dense_and_structured_spectra_agree() {
    let parse = |mode: &str| -> Vec<(f64, f64)> {
        let v: Value =
            serde_json::from_str(&run_ok(&["spectrum", "-q", "2", "--n-side", "4", "--mode", mode, "--format", "json"]))
                .unwrap();
        let mut z: Vec<(f64, f64)> = v["eigenvalues"]
            .as_array()
            .unwrap()
            .iter()
            .map(|z| (z[0].as_f64().unwrap(), z[1].as_f64().unwrap()))
            .collect();
        z.sort_by(|a, b| a.partial_cmp(b).unwrap());
        z
    };
    let (s, d) = (parse("structured"), parse("dense"));
    assert_eq!(s.len(), d.len());
    for (a, b) in s.iter().zip(&d) {
        assert!((a.0 - b.0).abs() < 1e-8 && (a.1 - b.1).abs() < 1e-8, "{a:?} vs {b:?}");
    }
}

#[test]
fn file_output_is_atomic_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e1e2.csv");
    let p = path.to_str().unwrap();
    run_ok(&["test2", "-q", "2", "--n-side", "9", "--out", p]);
    let first = std::fs::read(&path).unwrap();
    run_ok(&["test2", "-q", "2", "--n-side", "9", "--out", p]);
    assert_eq!(first, std::fs::read(&path).unwrap());
    assert!(first.starts_with(b"index,E1,E2\n"));
    let leftovers = std::fs::read_dir(dir.path()).unwrap().count();
    assert_eq!(leftovers, 1);
}

#[test]
fn matrix_market_files_written() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("q1");
    let listing = run_ok(&["fem", "--n-side", "4", "--emit", "matrix-market", "--out", prefix.to_str().unwrap()]);
    assert_eq!(listing.lines().count(), 2);
    for name in ["q1_mass.mtx", "q1_stiffness.mtx"] {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert!(text.starts_with("%%MatrixMarket matrix coordinate real"));
    }
}

#[test]
fn solve_reports_convergence() {
    let v: Value = serde_json::from_str(&run_ok(&["solve", "-q", "2", "--n-side", "9"])).unwrap();
    assert_eq!(v["converged"], Value::Bool(true));
    assert!(v["max_error"].as_f64().unwrap() < 1e-7);
    let steps: Value = serde_json::from_str(&run_ok(&["solve", "-q", "2", "--n-side", "9", "--steps", "2"])).unwrap();
    assert_eq!(steps["iterations"].as_array().unwrap().len(), 2);
}

#[test]
fn help_goes_to_stdout() {
    let text = run_ok(&["--help"]);
    assert!(text.contains("distribution"));
}
