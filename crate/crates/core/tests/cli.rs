use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn examples() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples")
}

fn thermovisco(args: &[&str], out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_thermovisco"));
    cmd.current_dir(examples()).args(args);
    if let Some(dir) = out {
        cmd.arg("--out").arg(dir);
    }
    cmd.output().expect("binary runs")
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap_or_else(|| panic!("no column {name}"));
    lines.map(|l| l.split(',').nth(i).unwrap().parse().unwrap()).collect()
}

#[test]
fn zero_scenario_runs_clean_with_zero_fields() {
    let dir = tempfile::tempdir().unwrap();
    let out = thermovisco(&["run", "--config", "zero.cfg"], Some(dir.path()));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}{}", String::from_utf8_lossy(&out.stderr));
    assert!(!stdout.contains("FAIL"));
    for file in ["diagnostics.csv", "states.csv", "checks.csv", "energy.csv", "report.json", "plots.gp", "fields_0000.vtk"] {
        assert!(dir.path().join(file).is_file(), "{file} missing");
    }
    let diag = fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
    for col in ["energy", "dissipation", "theta_l1", "modular_m"] {
        assert!(column(&diag, col).iter().all(|v| *v == 0.0), "{col} not zero");
    }
    assert!(dir.path().join("renormheat/tail.csv").is_file());
    let leftovers: Vec<_> = fs::read_dir(dir.path()).unwrap().filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".tmp")).collect();
    assert!(leftovers.is_empty());
}

#[test]
fn kl_sweep_writes_subdirectories_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = thermovisco(&["sweep", "--sweep-axis", "kl", "--config", "norton_hoff_p2.cfg"], Some(dir.path()));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    for sub in ["kl_4_4", "kl_8_8", "kl_16_16"] {
        assert!(dir.path().join(sub).join("diagnostics.csv").is_file());
    }
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let header = summary.lines().next().unwrap();
    let i = header.split(',').position(|h| h == "energy_indicator").unwrap();
    let ind: Vec<f64> = summary.lines().skip(2).map(|l| l.split(',').nth(i).unwrap().parse().unwrap()).collect();
    assert_eq!(ind.len(), 2);
    assert!(ind[1] < ind[0]);
}

#[test]
fn invalid_config_exits_with_two_and_lists_violations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "[mesh]\nlx = 1.0\nly = 1.0\nnx = 1\nny = 4\n[discretization]\nk = 0\nl = 2\nK = -1.0\ndt = 0.1\nt_final = 1.0\n").unwrap();
    let out = thermovisco(&["run", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for field in ["mesh.nx", "discretization.k", "discretization.K"] {
        assert!(err.contains(field), "{field} not reported in: {err}");
    }
}

#[test]
fn parse_error_reports_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("broken.cfg");
    fs::write(&cfg, "name = \"x\"\n[mesh]\nnx = = 4\n").unwrap();
    let out = thermovisco(&["run", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn missing_config_is_an_error() {
    let out = thermovisco(&["renormheat", "--config", "does_not_exist.cfg"], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_check_set_is_rejected() {
    let out = thermovisco(&["run", "--config", "zero.cfg", "--checks", "everything"], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failing_check_exits_with_one() {
    // A stiff p = 6 flow with huge initial strain and a coarse step: the
    // integrator gives up and the completion check fails.
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("fail.cfg");
    fs::write(
        &cfg,
        "name = \"stiff\"\n[mesh]\nlx = 1.0\nly = 1.0\nnx = 4\nny = 4\n[orlicz]\nexponent = 6\n\
         [initial]\neps_p0 = [\"50\", \"-50\", \"0\", \"0\"]\n[discretization]\nk = 4\nl = 4\ndt = 0.5\nt_final = 1\n",
    )
    .unwrap();
    let out = thermovisco(&["run", "--checks", "energy", "--config", cfg.to_str().unwrap()], None);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(1), "{stdout}{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains("FAIL"));
}

#[test]
fn dump_basis_writes_eigenvalues() {
    let dir = tempfile::tempdir().unwrap();
    let out = thermovisco(&["dump-basis", "--config", "zero.cfg"], Some(dir.path()));
    assert_eq!(out.status.code(), Some(0));
    let eig = fs::read_to_string(dir.path().join("eigenvalues.csv")).unwrap();
    assert_eq!(eig.lines().count(), 1 + 4 + 4);
    assert!(dir.path().join("basis.vtk").is_file());
}
