//! C interface to the onsager-lab analysis library.
//!
//! Every entry point returns an [`OlStatus`]; on failure the message is kept
//! per thread and read back with [`ol_last_error_message`]. Sessions are
//! opaque handles owning a run configuration and its space-time data.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use onsager_lab::besov::{fit_exponent, scale_ladder, structure_function, StructureMode};
use onsager_lab::budgets::{compute_budgets, smear, BudgetOptions};
use onsager_lab::fields::{FieldBlock, Subdomain};
use onsager_lab::filter::{build_kernel, Engine};
use onsager_lab::io::{read_snapshot, write_snapshot, RunConfig};
use onsager_lab::solver::{integrate_with, preflight, rh_jump, ShockSetup};
use onsager_lab::thermo::EosSpec;
use onsager_lab::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OlStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Numerical = 3,
    Format = 4,
    Io = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Upstream and downstream states of a stationary shock.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct OlRhResult {
    pub rho_up: f64,
    pub v_up: f64,
    pub p_up: f64,
    pub rho_down: f64,
    pub v_down: f64,
    pub p_down: f64,
    pub mass_flux: f64,
    pub anomaly_entropy: f64,
    pub flux_mismatch: f64,
}

/// Run configuration plus the data it produced or loaded.
pub struct OlSession {
    config: RunConfig,
    block: FieldBlock,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> OlStatus {
    match e {
        Error::Config { .. } | Error::InvalidInput(_) => OlStatus::Config,
        Error::Format(_) => OlStatus::Format,
        Error::Io(_) => OlStatus::Io,
        _ => OlStatus::Numerical,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (OlStatus, String)>) -> OlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OlStatus::Ok,
        Ok(Err((s, m))) => {
            set_error(m);
            s
        }
        Err(_) => {
            set_error("panic inside onsager-lab".into());
            OlStatus::Panic
        }
    }
}

fn lib<T>(r: onsager_lab::Result<T>) -> Result<T, (OlStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (OlStatus, String) {
    (OlStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, (OlStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (OlStatus::Config, format!("`{what}` is not UTF-8")))
}

unsafe fn session<'a>(s: *const OlSession) -> Result<&'a OlSession, (OlStatus, String)> {
    s.as_ref().ok_or_else(|| null("session"))
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ol_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ol_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Rankine-Hugoniot states for an ideal gas with `γ = 1 + 1/alpha`.
///
/// # Safety
/// `out` must point to writable memory for one `OlRhResult`.
#[no_mangle]
pub unsafe extern "C" fn ol_rh_jump(alpha: f64, mach: f64, rho: f64, pressure: f64, out: *mut OlRhResult) -> OlStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let eos = EosSpec::ideal_gas(alpha);
        lib(eos.validate())?;
        if !(mach > 1.0 && rho > 0.0 && pressure > 0.0) {
            return Err((OlStatus::Config, "need mach > 1, rho > 0, pressure > 0".into()));
        }
        let rh = lib(rh_jump(&ShockSetup::stationary(rho, pressure, mach, &eos), &eos))?;
        *out = OlRhResult {
            rho_up: rh.upstream.rho,
            v_up: rh.upstream.v,
            p_up: rh.upstream.p,
            rho_down: rh.downstream.rho,
            v_down: rh.downstream.v,
            p_down: rh.downstream.p,
            mass_flux: rh.mass_flux,
            anomaly_entropy: rh.anomaly_entropy,
            flux_mismatch: rh.flux_mismatch,
        };
        Ok(())
    })
}

/// Parses a JSON run configuration and integrates it.
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out` must be writable.
/// The session must be released with [`ol_session_free`].
#[no_mangle]
pub unsafe extern "C" fn ol_session_simulate(config_json: *const c_char, out: *mut *mut OlSession) -> OlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let config = lib(RunConfig::from_json(text(config_json, "config_json")?))?;
        let ns = config.ns_config();
        lib(preflight(&ns))?;
        let block = lib(integrate_with(&ns, &config.schedule))?.block;
        *out = Box::into_raw(Box::new(OlSession { config, block }));
        Ok(())
    })
}

/// Pairs a JSON run configuration with data read from a snapshot file.
///
/// # Safety
/// Both strings must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ol_session_load(config_json: *const c_char, snapshot_path: *const c_char, out: *mut *mut OlSession) -> OlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let config = lib(RunConfig::from_json(text(config_json, "config_json")?))?;
        let (header, block) = lib(read_snapshot(Path::new(text(snapshot_path, "snapshot_path")?)))?;
        if header.eos != config.eos {
            return Err((OlStatus::Config, "snapshot was written with a different equation of state".into()));
        }
        *out = Box::into_raw(Box::new(OlSession { config, block }));
        Ok(())
    })
}

/// # Safety
/// `s` must be a live session; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ol_session_save(s: *const OlSession, path: *const c_char) -> OlStatus {
    guard(|| {
        let s = session(s)?;
        lib(write_snapshot(Path::new(text(path, "path")?), &s.block, &s.config.eos))
    })
}

/// Spatial points and snapshot count of the session data.
///
/// # Safety
/// `s` must be a live session; `nx` and `nt` writable.
#[no_mangle]
pub unsafe extern "C" fn ol_session_dims(s: *const OlSession, nx: *mut usize, nt: *mut usize) -> OlStatus {
    guard(|| {
        let s = session(s)?;
        *nx.as_mut().ok_or_else(|| null("nx"))? = s.block.grid.nx[0];
        *nt.as_mut().ok_or_else(|| null("nt"))? = s.block.grid.nt;
        Ok(())
    })
}

/// Copies field `name` (`rho`, `u` or `v_x`) into `buf`, time-major with x
/// fastest. `len` must be at least `nx * nt`.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ol_session_field(s: *const OlSession, name: *const c_char, buf: *mut f64, len: usize) -> OlStatus {
    guard(|| {
        let s = session(s)?;
        let f = match text(name, "name")? {
            "rho" => &s.block.rho,
            "u" => &s.block.u,
            "v_x" => &s.block.v[0],
            other => return Err((OlStatus::Config, format!("unknown field `{other}`"))),
        };
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len < f.data.len() {
            return Err((OlStatus::BufferTooSmall, format!("need {} values, got {len}", f.data.len())));
        }
        std::ptr::copy_nonoverlapping(f.data.as_ptr(), buf, f.data.len());
        Ok(())
    })
}

/// Budget term `term` of balance `equation` at scale `ell`, smeared against
/// the configured test function number `test_fn`.
///
/// # Safety
/// Strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ol_session_smeared_term(
    s: *const OlSession,
    ell: f64,
    equation: *const c_char,
    term: *const c_char,
    test_fn: usize,
    out: *mut f64,
) -> OlStatus {
    guard(|| {
        let s = session(s)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let spec = s.config.analysis.test_functions.get(test_fn).ok_or_else(|| (OlStatus::Config, format!("no test function {test_fn}")))?;
        let phi = lib(spec.build(&s.block.grid))?;
        let k = lib(build_kernel(s.config.analysis.kernel, ell, &s.block.grid))?;
        let opts = BudgetOptions { region: Some(phi.support), require_viscous: false, engine: Engine::Auto };
        let set = lib(compute_budgets(&s.block, &k, &s.config.eos, &s.config.transport, &opts))?;
        let f = lib(set.term(text(equation, "equation")?, text(term, "term")?))?;
        *out = lib(smear(f, &phi))?;
        Ok(())
    })
}

/// Space-only `L^p` exponent of field `name` over the configured subdomain
/// `subdomain`, fitted on twelve scales in `[lo, hi]`.
///
/// # Safety
/// `name` NUL-terminated; `sigma` writable.
#[no_mangle]
pub unsafe extern "C" fn ol_session_exponent(
    s: *const OlSession,
    name: *const c_char,
    subdomain: usize,
    p: f64,
    lo: f64,
    hi: f64,
    sigma: *mut f64,
) -> OlStatus {
    guard(|| {
        let s = session(s)?;
        let sigma = sigma.as_mut().ok_or_else(|| null("sigma"))?;
        let f = match text(name, "name")? {
            "rho" => &s.block.rho,
            "u" => &s.block.u,
            "v_x" => &s.block.v[0],
            other => return Err((OlStatus::Config, format!("unknown field `{other}`"))),
        };
        let g = s.block.grid;
        let sd = s.config.analysis.subdomains.get(subdomain).ok_or_else(|| (OlStatus::Config, format!("no subdomain {subdomain}")))?;
        let o = lib(Subdomain::new(&g, lib(sd.index_box(&g))?, &g.full_box()))?;
        if !(lo > 0.0 && hi > lo) {
            return Err((OlStatus::Config, "need 0 < lo < hi".into()));
        }
        let ells = scale_ladder(g.dx[0], lo, hi, 12);
        let sf = lib(structure_function(f, &o, p, &ells, StructureMode::SpaceOnly, &sd.name))?;
        *sigma = lib(fit_exponent(&sf, [lo, hi]))?.sigma;
        Ok(())
    })
}

/// Releases a session; null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ol_session_free(s: *mut OlSession) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}
