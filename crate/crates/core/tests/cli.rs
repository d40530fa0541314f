use std::path::Path;
use std::process::{Command, Output};

use onsager_lab::io::read_snapshot;
use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_onsager-lab"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn uniform_config() -> Value {
    json!({
        "schema_version": 1,
        "eos": { "kind": "IdealGas", "alpha": 2.5 },
        "transport": {
            "eta": { "model": "Constant", "value": 1.0 },
            "zeta": { "model": "Constant", "value": 0.0 },
            "kappa": { "model": "Constant", "value": 4.666666666666667 },
            "eps": 0.0
        },
        "grid": { "nx": 32, "dx": 0.03125, "bc": { "kind": "Periodic" }, "cfl": 0.5 },
        "schedule": { "t_end": 0.1, "snapshot_dt": 0.025 },
        "init": { "kind": "Uniform", "state": { "rho": 1.2, "v": 0.3, "p": 0.8 } }
    })
}

fn riemann_config() -> Value {
    let mut c = uniform_config();
    c["grid"] = json!({ "nx": 256, "dx": 0.00390625, "bc": { "kind": "Periodic" }, "cfl": 0.5, "c_ref": 2.0 });
    c["schedule"] = json!({ "t_end": 0.08, "snapshot_dt": 0.001953125 });
    c["init"] = json!({
        "kind": "Riemann",
        "left": { "rho": 1.0, "v": 0.0, "p": 1.0 },
        "right": { "rho": 0.125, "v": 0.0, "p": 0.1 },
        "x_split": 0.5
    });
    c["analysis"] = json!({
        "ells": [0.03, 0.04, 0.05],
        "test_functions": [{ "name": "phi", "x": 0.5, "t": 0.04, "half_x": 0.2, "half_t": 0.01 }],
        "subdomains": [{ "name": "mid", "x": [0.3, 0.7], "t": [0.035, 0.045] }],
        "fit_range": [0.008, 0.05]
    });
    c
}

fn write_config(dir: &Path, name: &str, v: &Value) -> String {
    let p = dir.join(name);
    std::fs::write(&p, v.to_string()).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn rh_oracle_prints_the_jump() {
    let o = run(&["oracle", "rh", "--mach", "2", "--alpha", "2.5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    let rho = doc["jump"]["downstream"]["rho"].as_f64().unwrap();
    let p = doc["jump"]["downstream"]["p"].as_f64().unwrap();
    assert!((rho - 8.0 / 3.0).abs() < 1e-12 && (p - 4.5).abs() < 1e-12);
    assert!(doc["provenance"]["config_hash"].is_string());
}

#[test]
fn rh_oracle_reads_a_shock_config() {
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/shock.json");
    let o = run(&["oracle", "rh", "--config", cfg]);
    assert_eq!(code(&o), 0);
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((doc["jump"]["downstream"]["rho"].as_f64().unwrap() - 8.0 / 3.0).abs() < 1e-12);
}

#[test]
fn subsonic_oracle_is_a_numerical_failure() {
    let o = run(&["oracle", "rh", "--mach", "0.5"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut bad = uniform_config();
    bad["grid"]["dx"] = json!(-0.1);
    let path = write_config(dir.path(), "bad.json", &bad);
    let o = run(&["simulate", "--config", &path, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid.dx"));
    assert_eq!(code(&run(&["simulate"])), 2);
    assert_eq!(code(&run(&["simulate", "--config", "/nonexistent/cfg.json"])), 2);
    assert_eq!(code(&run(&["no-such-command"])), 2);
    assert_eq!(code(&run(&["oracle", "rh", "--pressure", "-1"])), 2);
}

#[test]
fn single_viscosity_scan_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = uniform_config();
    c["analysis"] = json!({ "eps_list": [0.01] });
    let path = write_config(dir.path(), "c.json", &c);
    let o = run(&["scan-eps", "--config", &path, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 3);
}

#[test]
fn uniform_simulation_writes_constant_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "u.json", &uniform_config());
    let out = dir.path().join("out");
    let o = run(&["simulate", "--config", &path, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (_, b) = read_snapshot(&out.join("snapshot.osgf")).unwrap();
    assert_eq!(b.grid.nt, 5);
    let u0 = 2.5 * 0.8;
    for p in b.grid.full_box().iter() {
        assert!((b.rho.at(p) - 1.2).abs() < 1e-12 && (b.v[0].at(p) - 0.3).abs() < 1e-12 && (b.u.at(p) - u0).abs() < 1e-12);
    }
    let meta: Value = serde_json::from_slice(&std::fs::read(out.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["diagnostics"]["snapshot_times"].as_array().unwrap().len(), 5);
}

#[test]
fn outputs_are_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "r.json", &riemann_config());
    let mut files = Vec::new();
    for (tag, threads) in [("a", "1"), ("b", "1"), ("c", "2")] {
        let out = dir.path().join(tag);
        let o = run(&["simulate", "--config", &path, "--out", out.to_str().unwrap(), "--threads", threads]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let o = run(&[
            "besov",
            "--config",
            &path,
            "--out",
            out.to_str().unwrap(),
            "--threads",
            threads,
            "--data",
            out.join("snapshot.osgf").to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        files.push([
            std::fs::read(out.join("snapshot.osgf")).unwrap(),
            std::fs::read(out.join("metadata.json")).unwrap(),
            std::fs::read(out.join("besov.csv")).unwrap(),
            std::fs::read(out.join("besov.json")).unwrap(),
        ]);
    }
    let doc: Value = serde_json::from_slice(&files[0][3]).unwrap();
    let fit = &doc["results"][0]["fits"]["space:rho"];
    assert!(fit["sigma"].is_number() && fit["lattice_spacing"][0].is_number() && fit["shifts"].is_array(), "{fit}");
    assert!(files[0] == files[1], "repeat run differs");
    assert!(files[0] == files[2], "thread count changes the output");
}

#[test]
fn scale_scan_on_stored_data() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "r.json", &riemann_config());
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&run(&["simulate", "--config", &path, "--out", out])), 0);
    let snap = dir.path().join("snapshot.osgf");
    let o = run(&["scan-ell", "--config", &path, "--out", out, "--data", snap.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("scan_ell.csv")).unwrap();
    assert!(csv.starts_with("ell,equation,term,test_fn,value,config_hash,version\n"));
    assert!(csv.lines().count() > 10);
    let doc: Value = serde_json::from_slice(&std::fs::read(dir.path().join("scan_ell.json")).unwrap()).unwrap();
    assert_eq!(doc["ells"].as_array().unwrap().len(), 3);
}

#[test]
fn snapshot_with_another_eos_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "r.json", &riemann_config());
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&run(&["simulate", "--config", &path, "--out", out])), 0);
    let mut other = riemann_config();
    other["eos"]["alpha"] = json!(1.5);
    let path2 = write_config(dir.path(), "o.json", &other);
    let snap = dir.path().join("snapshot.osgf");
    let o = run(&["besov", "--config", &path2, "--out", out, "--data", snap.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}
