use std::process::Command;

use normeq::cli::{compare_runs, run, RunConfig, RunReport, SolverKind};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_normeq"))
}

fn config(ranks: usize, solver: SolverKind) -> RunConfig {
    RunConfig {
        n: 64,
        data: 2000,
        ranks,
        solver,
        ..RunConfig::default()
    }
}

#[test]
fn direct_run_has_small_residual() {
    let report = run(&config(4, SolverKind::Direct)).unwrap();
    assert!(report.solve.relative_residual <= 1e-8);
    assert_eq!(report.solve.retained_pairs, Some(64));
    assert_eq!(report.assembly.cells_evaluated, 64 * 65 / 2);
}

#[test]
fn rank_count_does_not_change_solution() {
    let one = run(&config(1, SolverKind::Direct)).unwrap();
    let eight = run(&config(8, SolverKind::Direct)).unwrap();
    let rows = compare_runs(&one, &eight).unwrap();
    assert!(rows.iter().all(|r| r.mean_percent <= 1e-10));
    assert_eq!(one.solution_digest, eight.solution_digest);
}

#[test]
fn iterative_run_reports_true_residual() {
    let report = run(&RunConfig {
        tol: 1e-4,
        ..config(2, SolverKind::Iterative)
    })
    .unwrap();
    assert_eq!(report.solve.converged, Some(true));
    assert!(report.solve.iterations.unwrap() >= 1);
    assert!(report.solve.relative_residual <= 1e-4);
}

#[test]
fn direct_versus_iterative_agree() {
    let direct = run(&config(2, SolverKind::Direct)).unwrap();
    let iterative = run(&config(2, SolverKind::Iterative)).unwrap();
    let rows = compare_runs(&direct, &iterative).unwrap();
    assert!(rows.iter().all(|r| r.mean_percent <= 0.5), "{rows:?}");
}

#[test]
fn binary_writes_report_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("run.json");
    let csv_dir = dir.path().join("tables");
    let dumps = dir.path().join("dumps");
    let status = bin()
        .args(["--n", "24", "--data", "400", "--ranks", "3", "--solver", "direct", "--threshold", "0"])
        .arg("--report")
        .arg(&report)
        .arg("--csv-dir")
        .arg(&csv_dir)
        .arg("--dump-matrix")
        .arg(&dumps)
        .status()
        .unwrap();
    assert!(status.success());
    let parsed = RunReport::load(&report).unwrap();
    assert_eq!(parsed.config.n, 24);
    assert!(csv_dir.join("spectrum.csv").exists());
    assert_eq!(std::fs::read_dir(&dumps).unwrap().count(), 3);

    let gathered = dir.path().join("matrix.csv");
    let out = bin().arg("gather").arg(&dumps).arg("-o").arg(&gathered).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("24 x 24"));

    // Second run against the first as baseline.
    let second = dir.path().join("second.json");
    let status = bin()
        .args(["--n", "24", "--data", "400", "--ranks", "1", "--solver", "split"])
        .arg("--report")
        .arg(&second)
        .arg("--baseline")
        .arg(&report)
        .arg("--csv-dir")
        .arg(&csv_dir)
        .status()
        .unwrap();
    assert!(status.success());
    let second_report = RunReport::load(&second).unwrap();
    let diffs = second_report.differences.unwrap();
    assert!(diffs.iter().all(|r| r.mean_percent <= 0.1));
    assert!(csv_dir.join("differences.csv").exists());

    let out = bin().arg("compare").arg(&report).arg(&second).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("coefficients") && text.contains("fit"));
}

#[test]
fn bench_flag_produces_csv() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["--n", "8", "--data", "50", "--bench-kernel", "--bench-size", "64", "--bench-repetitions", "1"])
        .arg("--csv-dir")
        .arg(dir.path())
        .arg("--report")
        .arg(dir.path().join("r.json"))
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("variant,distance,median_ns,iterations,machine_id"));
    assert_eq!(lines.count(), 8);
}

#[test]
fn bad_flags_exit_with_usage_error() {
    let out = bin().args(["--n", "4", "--ranks", "9"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--ranks"));
}

#[test]
fn reports_are_reproducible() {
    let cfg = RunConfig {
        threads: 4,
        deterministic_reduction: true,
        ..config(4, SolverKind::Direct)
    };
    let a = run(&cfg).unwrap();
    let b = run(&cfg).unwrap();
    assert_eq!(a.deterministic_payload().unwrap(), b.deterministic_payload().unwrap());
}

#[test]
fn grid_subcommand() {
    let out = bin().args(["grid", "--n", "6"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("####..  4"));
    assert_eq!(text.matches('#').count(), 21);
}
