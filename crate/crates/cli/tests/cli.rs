use std::fs;
use std::path::Path;
use std::process::Command;

use rsde_cli::config::{parse_config, ExperimentKind};
use rsde_cli::runner::{run_experiment, RunOptions, TestDriver, EXIT_INVARIANT, EXIT_OK, EXIT_RUNTIME};

fn run(kind: ExperimentKind, text: &str, dir: &Path, driver: Option<TestDriver>) -> rsde_cli::RunReport {
    let cfg = parse_config(text, Some(kind)).unwrap();
    let opts = RunOptions { out_dir: Some(dir.to_path_buf()), seed: None, test_driver: driver };
    run_experiment(&cfg, &opts)
}

fn csv_rows(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse::<f64>().unwrap_or(f64::NAN)).collect())
        .collect()
}

const INTERVAL: &str = "\
domain.kind = interval
domain.lo = 0
domain.hi = 1
driver.N = 5
driver.seed = 11
driver.x0 = 0.3
";

#[test]
fn zero_driver_gives_constant_rows() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(ExperimentKind::Simulate, INTERVAL, dir.path(), Some(TestDriver::Zero));
    assert_eq!(r.exit_code, EXIT_OK, "{}", r.text);
    let rows = csv_rows(&dir.path().join("trajectory_00000.csv"));
    assert_eq!(rows.len(), 32 * 64 + 1);
    for row in rows {
        // t, x1, l1, lvar
        assert_eq!(&row[1..], &[0.3, 0.0, 0.0]);
    }
}

#[test]
fn ramp_driver_pins_to_the_wall() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(ExperimentKind::Simulate, INTERVAL, dir.path(), Some(TestDriver::Ramp(2.0)));
    assert_eq!(r.exit_code, EXIT_OK, "{}", r.text);
    let rows = csv_rows(&dir.path().join("trajectory_00000.csv"));
    let last = rows.last().unwrap();
    assert!((last[1] - 1.0).abs() < 1e-12);
    // Pushed back by 2 - 0.7 over the unit horizon.
    assert!((last[2] + 1.3).abs() < 1e-9, "{last:?}");
}

#[test]
fn triangle_synchronous_coupling_passes() {
    let dir = tempfile::tempdir().unwrap();
    let text = "\
domain.kind = triangle
driver.N = 6
driver.seed = 5
driver.x0 = 1 0.2
coupling.kind = synchronous
coupling.y0 = 2 0.2
ensemble.paths = 10
invariant.lower = -0.3217505543966422
invariant.upper = 0.7853981633974483
";
    let r = run(ExperimentKind::Couple, text, dir.path(), None);
    assert_eq!(r.exit_code, EXIT_OK, "{}", r.text);
    for i in 0..10 {
        assert!(dir.path().join(format!("coupling_{i:05}.csv")).exists());
    }
    let inv = fs::read_to_string(dir.path().join("invariant_report.txt")).unwrap();
    assert!(inv.contains("PASS"), "{inv}");
    let header = fs::read_to_string(dir.path().join("coupling_00000.csv")).unwrap();
    assert!(header.starts_with("t,x1,x2,y1,y2,theta,coalesced\n"));
}

#[test]
fn violated_bounds_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = "\
domain.kind = triangle
driver.N = 4
driver.seed = 5
driver.x0 = 1 0.2
coupling.y0 = 2 0.2
ensemble.paths = 4
invariant.lower = 0.1
invariant.upper = 0.2
";
    let r = run(ExperimentKind::Couple, text, dir.path(), None);
    assert_eq!(r.exit_code, EXIT_INVARIANT, "{}", r.text);
    assert!(r.text.contains("status: invariant violations"));
}

#[test]
fn mirror_coupling_in_lip_domain() {
    let dir = tempfile::tempdir().unwrap();
    let text = "\
domain.kind = lip
driver.N = 5
driver.seed = 9
driver.x0 = 0.2 0.05
coupling.kind = mirror
coupling.y0 = 0.6 0.05
ensemble.paths = 8
";
    let r = run(ExperimentKind::Couple, text, dir.path(), None);
    assert_eq!(r.exit_code, EXIT_OK, "{}", r.text);
}

#[test]
fn converge_writes_ladder_table() {
    let dir = tempfile::tempdir().unwrap();
    let text = "\
domain.kind = half_line
driver.N = 3
driver.seed = 1
driver.x0 = 0
driver.substeps = 16
ensemble.paths = 200
converge.levels = 3 4 5
converge.f = min:2
";
    let r = run(ExperimentKind::Converge, text, dir.path(), None);
    assert_eq!(r.exit_code, EXIT_OK, "{}", r.text);
    let text = fs::read_to_string(dir.path().join("ladder.csv")).unwrap();
    assert!(text.starts_with("level,mean,std_err,delta,delta_se\n"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn converge_rejects_test_drivers() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{INTERVAL}converge.levels = 3 4\nensemble.paths = 100\n");
    let r = run(ExperimentKind::Converge, &text, dir.path(), Some(TestDriver::Zero));
    assert_eq!(r.exit_code, EXIT_RUNTIME);
    assert!(r.text.contains("error:"));
    assert!(dir.path().join("report.txt").exists());
}

#[test]
fn diagnose_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{INTERVAL}ensemble.paths = 100\noutput.stride = 64\n");
    let r = run(ExperimentKind::Diagnose, &text, dir.path(), None);
    assert_eq!(r.exit_code, EXIT_OK, "{}", r.text);
    for f in ["summary.csv", "moments.csv", "holder_tail.csv", "variation_growth.csv", "report.txt"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    assert_eq!(csv_rows(&dir.path().join("moments.csv")).len(), 5);
}

#[test]
fn reruns_reproduce_every_csv() {
    let text = "\
domain.kind = disc
driver.N = 5
driver.seed = 21
driver.x0 = 0.5 0
field.kind = rotation
ensemble.paths = 6
output.stride = 8
";
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run(ExperimentKind::Simulate, text, a.path(), None);
    let rb = run(ExperimentKind::Simulate, text, b.path(), None);
    assert_eq!(ra.exit_code, EXIT_OK);
    let csvs: Vec<_> = ra.files.iter().filter(|p| p.extension().is_some_and(|e| e == "csv")).collect();
    assert_eq!(csvs.len(), 7);
    for p in csvs {
        let name = p.file_name().unwrap();
        assert_eq!(fs::read(p).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name:?}");
    }
    assert_eq!(rb.files.len(), ra.files.len());
}

#[test]
fn binary_reports_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "domain.kind = disc\ndriver.N = 25\ndriver.x0 = 0 0\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_rsde"))
        .args(["simulate", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("driver.N") && err.contains("driver.seed") && err.contains("line 2"), "{err}");
}

#[test]
fn binary_runs_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.cfg");
    fs::write(&cfg, INTERVAL).unwrap();
    let out_dir = dir.path().join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_rsde"))
        .args(["simulate", "--seed", "99", "--test-driver", "ramp:-1", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report = fs::read_to_string(out_dir.join("report.txt")).unwrap();
    assert!(report.contains("master seed = 99"));
    let rows = csv_rows(&out_dir.join("trajectory_00000.csv"));
    assert!(rows.last().unwrap()[1].abs() < 1e-12);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        parse_config(&text, None).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert_eq!(n, 5);
}
