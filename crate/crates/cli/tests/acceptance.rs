//! CLI acceptance: byte-determinism of every output path (criterion 12)
//! plus golden-file checks of the CSV schema over three fixture sweeps.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tailbound"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> Vec<u8> {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

/// Criterion 12: identical invocations produce byte-identical CSV/JSON,
/// including seeded Monte Carlo paths.
#[test]
fn criterion_12_byte_determinism() {
    let start = std::time::Instant::now();
    let dir = tempfile::tempdir().unwrap();

    // CSV sweep, run twice into different files.
    let csv_args = |path: &Path| {
        vec![
            "compare".to_string(),
            "--methods".into(),
            "exact1,chernoff,hoeffding,variational".into(),
            "--mu".into(),
            "0.3".into(),
            "--n".into(),
            "2".into(),
            "--t-grid".into(),
            "0:0.6:0.05".into(),
            "--out".into(),
            path.display().to_string(),
        ]
    };
    let a_path = dir.path().join("a.csv");
    let b_path = dir.path().join("b.csv");
    for (path, _) in [(&a_path, 0), (&b_path, 1)] {
        let args: Vec<String> = csv_args(path);
        let out = bin().args(&args).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = std::fs::read(&a_path).unwrap();
    let b = std::fs::read(&b_path).unwrap();
    assert_eq!(a, b, "CSV outputs differ between identical runs");

    // Monte Carlo verification twice: identical bytes.
    let mc = [
        "verify", "--method", "exact1", "--oracle", "mc", "--mu", "0.3", "--t", "0.3",
        "--samples", "10000", "--seed", "1",
    ];
    assert_eq!(run_ok(&mc), run_ok(&mc), "MC verify output differs between identical runs");

    // Product-search oracle path.
    let product = [
        "verify", "--method", "variational", "--oracle", "product", "--n", "2", "--mu", "0.3",
        "--t", "0.1", "--seed", "7",
    ];
    assert_eq!(run_ok(&product), run_ok(&product));

    // Extremal JSON.
    let extremal = ["extremal", "--method", "variational", "--n", "2", "--mu", "0.3", "--t", "0.1"];
    assert_eq!(run_ok(&extremal), run_ok(&extremal));

    println!(
        "ACCEPTANCE 12 PASS ({:.2}s): byte-identical CSV/JSON across repeated invocations",
        start.elapsed().as_secs_f64()
    );
}

#[test]
fn bound_line_format() {
    let out = run_ok(&["bound", "--method", "exact1", "--mu", "0.3", "--t", "0.3"]);
    assert_eq!(String::from_utf8(out).unwrap(), "exact1,0.5,0.5,optimal\n");
}

#[test]
fn invalid_input_exits_2() {
    let out = run(&["bound", "--method", "exact1", "--mu", "1.5", "--t", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["bound", "--method", "nonsense", "--mu", "0.3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn empty_grid_writes_header_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    let out = run(&[
        "compare",
        "--methods",
        "exact1",
        "--mu",
        "0.3",
        "--t-grid",
        "0.5:0.1:0.1",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let content = std::fs::read_to_string(&path).unwrap();
    assert_eq!(content, "t,method,value,status\n");
}

fn parse_csv(content: &str) -> Vec<(f64, String, f64, String)> {
    content
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("t,"))
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            (
                cols[0].parse().unwrap(),
                cols[1].to_string(),
                cols[2].parse().unwrap(),
                cols[3].to_string(),
            )
        })
        .collect()
}

/// Fixture sweep 1: exact vs separable vs Hoeffding, the first-figure
/// ordering. Golden bytes plus the pointwise ordering.
#[test]
fn golden_sweep_univariate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    run_ok(&[
        "compare",
        "--methods",
        "exact1,chernoff,hoeffding",
        "--mu",
        "0.3",
        "--t-grid",
        "0:0.7:0.05",
        "--out",
        path.to_str().unwrap(),
    ]);
    let content = std::fs::read_to_string(&path).unwrap();
    let golden = include_str!("golden/sweep_univariate.csv");
    assert_eq!(content, golden, "golden CSV drifted");

    let rows = parse_csv(&content);
    // exact1 <= chernoff pointwise, both nonincreasing in t.
    let series = |name: &str| -> Vec<f64> {
        rows.iter().filter(|r| r.1 == name).map(|r| r.2).collect()
    };
    let exact = series("exact1");
    let chern = series("chernoff");
    for (e, c) in exact.iter().zip(&chern) {
        assert!(e <= &(c + 1e-12));
    }
    for s in [&exact, &chern] {
        for w in s.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }
}

/// Fixture sweep 2: variational vs separable for ten i.i.d. variables;
/// the two meet at large deviations.
#[test]
fn golden_sweep_variational_n10() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    run_ok(&[
        "compare",
        "--methods",
        "variational,chernoff",
        "--mu",
        "0.6",
        "--n",
        "10",
        "--t-grid",
        "0:0.35:0.05",
        "--out",
        path.to_str().unwrap(),
    ]);
    let content = std::fs::read_to_string(&path).unwrap();
    let golden = include_str!("golden/sweep_variational_n10.csv");
    assert_eq!(content, golden, "golden CSV drifted");

    let rows = parse_csv(&content);
    let var: Vec<f64> = rows.iter().filter(|r| r.1 == "variational").map(|r| r.2).collect();
    let chern: Vec<f64> = rows.iter().filter(|r| r.1 == "chernoff").map(|r| r.2).collect();
    for (v, c) in var.iter().zip(&chern) {
        assert!(v <= &(c + 1e-9), "variational above separable");
    }
    // Large-t agreement within 5e-2.
    let (v, c) = (var.last().unwrap(), chern.last().unwrap());
    assert!((v - c).abs() <= 5e-2, "variational {v} vs chernoff {c} at the grid end");
}

/// Fixture sweep 3: second-moment instances on the symmetric interval.
#[test]
fn golden_sweep_bernstein_sos() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    run_ok(&[
        "compare",
        "--methods",
        "sos,bernstein",
        "--mu",
        "-0.3",
        "--mu2",
        "0.1",
        "--n",
        "2",
        "--support",
        "-1,1",
        "--level",
        "2",
        "--t-grid",
        "0.1:0.5:0.1",
        "--out",
        path.to_str().unwrap(),
    ]);
    let content = std::fs::read_to_string(&path).unwrap();
    let golden = include_str!("golden/sweep_bernstein_sos.csv");
    assert_eq!(content, golden, "golden CSV drifted");

    let rows = parse_csv(&content);
    assert!(rows.iter().all(|r| r.3 == "optimal"));
}
