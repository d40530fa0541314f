use std::ffi::{CStr, CString};
use std::ptr;

use onsager_lab_ffi::*;

const UNIFORM: &str = r#"{
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
}"#;

const SOD: &str = r#"{
    "schema_version": 1,
    "eos": { "kind": "IdealGas", "alpha": 2.5 },
    "transport": {
        "eta": { "model": "Constant", "value": 1.0 },
        "zeta": { "model": "Constant", "value": 0.0 },
        "kappa": { "model": "Constant", "value": 4.666666666666667 },
        "eps": 0.0
    },
    "grid": { "nx": 128, "dx": 0.0078125, "bc": { "kind": "Periodic" }, "cfl": 0.5, "c_ref": 2.0 },
    "schedule": { "t_end": 0.08, "snapshot_dt": 0.00390625 },
    "init": {
        "kind": "Riemann",
        "left": { "rho": 1.0, "v": 0.0, "p": 1.0 },
        "right": { "rho": 0.125, "v": 0.0, "p": 0.1 },
        "x_split": 0.5
    },
    "analysis": {
        "test_functions": [{ "name": "phi", "x": 0.5, "t": 0.04, "half_x": 0.2, "half_t": 0.01 }],
        "subdomains": [{ "name": "mid", "x": [0.1, 0.9] }]
    }
}"#;

fn last_error() -> String {
    let p = ol_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn simulate(config: &str) -> *mut OlSession {
    let c = CString::new(config).unwrap();
    let mut s = ptr::null_mut();
    let st = unsafe { ol_session_simulate(c.as_ptr(), &mut s) };
    assert_eq!(st, OlStatus::Ok, "{}", last_error());
    assert!(!s.is_null());
    s
}

#[test]
fn rh_jump_through_the_abi() {
    let mut r = OlRhResult::default();
    assert_eq!(unsafe { ol_rh_jump(2.5, 2.0, 1.0, 1.0, &mut r) }, OlStatus::Ok);
    assert!((r.rho_down / r.rho_up - 8.0 / 3.0).abs() < 1e-12);
    assert!((r.p_down / r.p_up - 4.5).abs() < 1e-12);
    assert!((r.mass_flux - r.rho_up * r.v_up).abs() < 1e-14);
    assert!(r.anomaly_entropy > 0.0 && r.flux_mismatch < 1e-12);
}

#[test]
fn bad_arguments_set_status_and_message() {
    assert_eq!(unsafe { ol_rh_jump(2.5, 2.0, 1.0, 1.0, ptr::null_mut()) }, OlStatus::NullPointer);
    assert!(last_error().contains("out"));
    let mut r = OlRhResult::default();
    assert_eq!(unsafe { ol_rh_jump(2.5, 0.5, 1.0, 1.0, &mut r) }, OlStatus::Config);
    assert_eq!(unsafe { ol_rh_jump(-1.0, 2.0, 1.0, 1.0, &mut r) }, OlStatus::Config);
    assert_eq!(unsafe { ol_session_simulate(ptr::null(), &mut ptr::null_mut()) }, OlStatus::NullPointer);
    let bad = CString::new("{ not json").unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { ol_session_simulate(bad.as_ptr(), &mut s) }, OlStatus::Config);
    assert!(s.is_null());
    let (mut nx, mut nt) = (0usize, 0usize);
    assert_eq!(unsafe { ol_session_dims(ptr::null(), &mut nx, &mut nt) }, OlStatus::NullPointer);
    unsafe { ol_session_free(ptr::null_mut()) };
}

#[test]
fn version_is_the_package_version() {
    let v = unsafe { CStr::from_ptr(ol_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn session_fields_save_and_load() {
    let s = simulate(UNIFORM);
    let (mut nx, mut nt) = (0usize, 0usize);
    assert_eq!(unsafe { ol_session_dims(s, &mut nx, &mut nt) }, OlStatus::Ok);
    assert_eq!((nx, nt), (32, 5));
    let name = CString::new("rho").unwrap();
    let mut short = vec![0.0; nx * nt - 1];
    assert_eq!(unsafe { ol_session_field(s, name.as_ptr(), short.as_mut_ptr(), short.len()) }, OlStatus::BufferTooSmall);
    let mut rho = vec![0.0; nx * nt];
    assert_eq!(unsafe { ol_session_field(s, name.as_ptr(), rho.as_mut_ptr(), rho.len()) }, OlStatus::Ok);
    assert!(rho.iter().all(|v| (v - 1.2).abs() < 1e-12));
    let other = CString::new("pressure").unwrap();
    assert_eq!(unsafe { ol_session_field(s, other.as_ptr(), rho.as_mut_ptr(), rho.len()) }, OlStatus::Config);

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("u.osgf").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { ol_session_save(s, path.as_ptr()) }, OlStatus::Ok);
    let cfg = CString::new(UNIFORM).unwrap();
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { ol_session_load(cfg.as_ptr(), path.as_ptr(), &mut back) }, OlStatus::Ok, "{}", last_error());
    let mut v1 = vec![0.0; nx * nt];
    let mut v2 = vec![0.0; nx * nt];
    let u = CString::new("u").unwrap();
    unsafe {
        assert_eq!(ol_session_field(s, u.as_ptr(), v1.as_mut_ptr(), v1.len()), OlStatus::Ok);
        assert_eq!(ol_session_field(back, u.as_ptr(), v2.as_mut_ptr(), v2.len()), OlStatus::Ok);
    }
    assert!(v1.iter().zip(&v2).all(|(a, b)| a.to_bits() == b.to_bits()));

    let missing = CString::new(dir.path().join("absent").to_str().unwrap()).unwrap();
    let mut none = ptr::null_mut();
    assert_eq!(unsafe { ol_session_load(cfg.as_ptr(), missing.as_ptr(), &mut none) }, OlStatus::Io);
    let garbage = dir.path().join("garbage");
    std::fs::write(&garbage, b"not a snapshot").unwrap();
    let garbage = CString::new(garbage.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { ol_session_load(cfg.as_ptr(), garbage.as_ptr(), &mut none) }, OlStatus::Format);
    unsafe {
        ol_session_free(back);
        ol_session_free(s);
    }
}

#[test]
fn analysis_entry_points() {
    let s = simulate(SOD);
    let (eq, term) = (CString::new("resolved_ke").unwrap(), CString::new("Q_flux").unwrap());
    let mut v = f64::NAN;
    let st = unsafe { ol_session_smeared_term(s, 0.03, eq.as_ptr(), term.as_ptr(), 0, &mut v) };
    assert_eq!(st, OlStatus::Ok, "{}", last_error());
    assert!(v.is_finite());
    assert_eq!(unsafe { ol_session_smeared_term(s, 0.03, eq.as_ptr(), term.as_ptr(), 3, &mut v) }, OlStatus::Config);
    let bogus = CString::new("nope").unwrap();
    assert_ne!(unsafe { ol_session_smeared_term(s, 0.03, eq.as_ptr(), bogus.as_ptr(), 0, &mut v) }, OlStatus::Ok);

    let rho = CString::new("rho").unwrap();
    let mut sigma = f64::NAN;
    let st = unsafe { ol_session_exponent(s, rho.as_ptr(), 0, 3.0, 0.04, 0.2, &mut sigma) };
    assert_eq!(st, OlStatus::Ok, "{}", last_error());
    assert!(sigma > 0.0 && sigma < 1.2, "{sigma}");
    assert_eq!(unsafe { ol_session_exponent(s, rho.as_ptr(), 0, 3.0, 0.2, 0.04, &mut sigma) }, OlStatus::Config);
    unsafe { ol_session_free(s) };
}
