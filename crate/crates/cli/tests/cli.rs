use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const GRID: &str = "[domain]\nLx = 1.0\nLy = 1.0\nnx = 6\nny = 6\n\n[time]\nT = 0.5\nnt = 4\n";

fn slipctl(args: &[&str], config: &str, dir: &Path) -> (Output, PathBuf) {
    let cfg = dir.join("run.toml");
    fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    let output = Command::new(env!("CARGO_BIN_EXE_slipctl"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    (output, out)
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

#[test]
fn null_solve_writes_zero_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = slipctl(&["solve"], &format!("{GRID}[initial]\nkind = \"zero\"\n"), dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = json(&out.join("summary.json"));
    assert_eq!(summary["max_l2"], 0.0);
    let manifest = json(&out.join("trajectory/manifest.json"));
    assert_eq!(manifest["velocity"].as_array().unwrap().len(), 5);
    let bytes = fs::read(out.join("trajectory/y_00004.bin")).unwrap();
    let body = &bytes[bytes.iter().position(|&b| b == b'\n').unwrap() + 1..];
    assert!(body.iter().all(|&b| b == 0));
    assert!(out.join("config.toml").exists());
    assert_eq!(json(&out.join("run.json"))["config_hash"], summary["config_hash"]);
    assert!(o.stdout.is_empty());
}

#[test]
fn shear_config_is_steady() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/shear.toml"))
        .unwrap()
        .replace("nx = 16", "nx = 8")
        .replace("ny = 16", "ny = 8")
        .replace("nt = 32", "nt = 4");
    let (o, out) = slipctl(&["solve"], &cfg, dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&out.join("summary.json"));
    let (max, last) = (s["max_l2"].as_f64().unwrap(), s["final_l2"].as_f64().unwrap());
    assert!((max - last).abs() < 1e-9 && max > 0.1);
    assert!(s["max_energy_imbalance"].as_f64().unwrap() < 1e-9);
}

#[test]
fn net_flux_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let (o, _) = slipctl(&["solve"], &format!("{GRID}[control.a]\nleft = 0.5\n"), dir.path());
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("flux") && err.contains("balance"), "{err}");
    assert!(!err.contains("(1."), "{err}");
}

#[test]
fn malformed_configs_and_flags_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (o, _) = slipctl(&["solve"], "[domain]\nLx = 1.0\n", dir.path());
    assert_eq!(code(&o), 1);
    let (o, _) = slipctl(&["solve", "--workers", "0"], GRID, dir.path());
    assert_eq!(code(&o), 1);
    let (o, _) = slipctl(&["teleport"], GRID, dir.path());
    assert_eq!(code(&o), 1);
    let (o, _) = slipctl(&["optimize"], GRID, dir.path());
    assert_eq!(code(&o), 1, "optimize without a target");
}

#[test]
fn stationary_optimize_stops_at_once() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{GRID}[initial]\nkind = \"zero\"\n[control]\nlambda1 = 1.0\n[target]\nkind = \"zero\"\n");
    let (o, out) = slipctl(&["optimize"], &cfg, dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&out.join("report.json"));
    assert_eq!(r["iterations"], 0);
    assert_eq!(r["termination"], "converged");
    assert!(out.join("history.csv").exists() && out.join("controls.json").exists());
    assert!(out.join("gradient/G_normal.csv").exists());
}

#[test]
fn unreachable_tolerance_exhausts_the_budget() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        "{GRID}[initial]\nkind = \"zero\"\n[control]\nR = 100.0\n[target]\nkind = \"control\"\nrandom = {{ amplitude = 1.0, seed = 4 }}\n[optimizer]\ntol = 0.0\nmax_iters = 3\n"
    );
    let (o, out) = slipctl(&["optimize"], &cfg, dir.path());
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let history = fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 1 + 4);
    assert!(history.starts_with("iter,J,grad_norm,residual,step\n"));
}

#[test]
fn grad_check_passes_and_catches_a_corrupted_adjoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        "{GRID}[initial]\nkind = \"zero\"\n[control]\nR = 100.0\nlambda1 = 0.1\nlambda2 = 0.3\nrandom = {{ amplitude = 0.5 }}\n[target]\nkind = \"control\"\nrandom = {{ amplitude = 1.0, seed = 8 }}\n[grad_check]\ndirections = 2\n"
    );
    let (o, out) = slipctl(&["grad-check"], &cfg, dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&out.join("grad_check.json"));
    assert!(r["max_relative_error"].as_f64().unwrap() <= 1e-6);
    assert!(r["max_duality_residual"].as_f64().unwrap() <= 1e-9);

    let corrupt = format!("{cfg}[debug]\ncorrupt_adjoint = true\n");
    let (o, out) = slipctl(&["grad-check"], &corrupt, dir.path());
    assert_eq!(code(&o), 4);
    assert_eq!(json(&out.join("grad_check.json"))["pass"], false);
}

#[test]
fn penalty_only_grad_check_is_exact() {
    // target driven by the same control, so the tracking source vanishes
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        "{GRID}[initial]\nkind = \"zero\"\n[control]\nR = 100.0\nlambda1 = 0.5\nlambda2 = 0.5\nrandom = {{ amplitude = 0.5, seed = 2 }}\n[target]\nkind = \"control\"\nrandom = {{ amplitude = 0.5, seed = 2 }}\n[grad_check]\ndirections = 2\n"
    );
    let (o, out) = slipctl(&["grad-check"], &cfg, dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&out.join("grad_check.json"));
    for row in r["rows"].as_array().unwrap() {
        assert_eq!(row["duality_interior"], 0.0);
        assert!(row["relative_error"].as_f64().unwrap() < 1e-9);
    }
}

#[test]
fn lift_of_zero_data_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = slipctl(&["lift"], GRID, dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&out.join("lift.json"));
    assert_eq!(r["grad_h_l2"], 0.0);
    assert_eq!(r["pass"], true);
}

#[test]
fn verify_prints_the_table_on_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{GRID}[verify]\nnx = 6\nny = 6\nnt = 4\nsamples = 3\n");
    let (o, out) = slipctl(&["verify"], &cfg, dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.starts_with("check"));
    assert_eq!(table.lines().count(), 13);
    assert_eq!(json(&out.join("verify.json")).as_array().unwrap().len(), 12);
}

#[test]
fn seed_flag_changes_the_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = slipctl(&["lift", "--seed", "17"], GRID, dir.path());
    assert_eq!(code(&o), 0);
    let resolved = fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(resolved.starts_with("seed = 17\n"));
    assert_eq!(json(&out.join("run.json"))["seed"], 17);
}
