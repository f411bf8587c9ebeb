use std::path::Path;
use std::process::{Command, Output};

use potlab_cli::{Report, RunConfig};

fn potlab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_potlab"))
        .args(args)
        .env_remove("POTLAB_OUT")
        .arg("--output")
        .arg(out)
        .output()
        .expect("potlab runs")
}

fn read_report(path: &Path) -> Report {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = potlab(&["bogus"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[grid]\ncells = 16\nbogus = 1\n").unwrap();
    let out = potlab(&["verify", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = potlab(&["verify", "--field", "no-such-field"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = potlab(&["verify", "--cells", "4"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn numerical_failure_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[scheme]\ndiscretization = \"central\"\n").unwrap();
    let out = potlab(&["invariant", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_on_laplace_passes_and_prints_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let out = potlab(&["verify", "--field", "laplace", "--cells", "16"], dir.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    for identity in ["green-row-sum-equals-exit-time", "green-duality", "capacity-energy-flux-mass", "equilibrium-representation", "maximum-principle"] {
        assert!(stdout.contains(identity), "{identity} missing from\n{stdout}");
    }
    let report = read_report(&dir.path().join("verify.json"));
    assert!(report.body.passed);
    assert_eq!(report.body.config.grid.cells, 16);
}

#[test]
fn single_object_commands_write_reports_and_fields() {
    let dir = tempfile::tempdir().unwrap();
    for (cmd, files) in [
        ("invariant", vec!["invariant.json", "invariant_density.csv", "invariant_density_slice.dat"]),
        ("exit-time", vec!["exit-time.json", "exit_time.csv", "exit_time_slice.dat"]),
        ("green", vec!["green.json", "green.csv"]),
        ("capacity", vec!["capacity.json", "harmonic_extension.csv", "equilibrium_measure.csv"]),
    ] {
        let out = potlab(&[cmd, "--field", "shear-drift", "--cells", "16"], dir.path());
        assert_eq!(out.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        for f in files {
            assert!(dir.path().join(f).exists(), "{cmd} did not write {f}");
        }
    }
    let csv = std::fs::read_to_string(dir.path().join("exit_time.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 16 * 16 * 16);
    let report = read_report(&dir.path().join("capacity.json"));
    assert!(report.body.result["capacity"].as_f64().unwrap() > 0.0);
    assert!(report.body.result["mismatch"].as_f64().unwrap() < 1e-8);
}

#[test]
fn condition_scans_report_constants() {
    let dir = tempfile::tempdir().unwrap();
    let out = potlab(&["check", "c", "--cells", "16"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let report = read_report(&dir.path().join("check-c.json"));
    let rows = report.body.result["report"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 15);
    let out = potlab(&["check", "e", "--dual", "--field", "rotation-drift", "--cells", "16"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("check-e.json").exists());
}

#[test]
fn monte_carlo_agrees_with_the_lattice() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("mc.toml");
    std::fs::write(&cfg, "[grid]\ncells = 32\n[condenser]\ninner = 0.1\nouter = 0.2\n[mc]\ntrajectories = 4000\n").unwrap();
    let out = potlab(&["mc", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report = read_report(&dir.path().join("mc.json"));
    assert_eq!(report.body.result["comparisons"][0]["estimate"]["provenance"], "mc");
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_potlab"))
        .args(["invariant", "--cells", "8"])
        .env("POTLAB_OUT", &target)
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(target.join("invariant.json").exists());
}

#[test]
fn config_subcommand_prints_resolved_toml() {
    let dir = tempfile::tempdir().unwrap();
    let out = potlab(&["config", "--field", "gradient-drift", "--seed", "9"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let cfg = RunConfig::from_toml(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(cfg.seed, 9);
    assert_eq!(cfg.field.family, "gradient-drift");
    assert_eq!(cfg.clone().resolve().unwrap(), cfg);
}

#[test]
fn report_bodies_repeat_exactly() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        // same relative output path, so the embedded config matches too
        let out = Command::new(env!("CARGO_BIN_EXE_potlab"))
            .args(["report", "--field", "shear-drift", "--cells", "16", "--output", "out"])
            .env_remove("POTLAB_OUT")
            .current_dir(d.path())
            .output()
            .unwrap();
        assert!(matches!(out.status.code(), Some(0) | Some(1)));
    }
    let ra = read_report(&a.path().join("out/report.json"));
    let rb = read_report(&b.path().join("out/report.json"));
    assert_eq!(serde_json::to_string(&ra.body).unwrap(), serde_json::to_string(&rb.body).unwrap());
}
