//! C ABI over `pme-lab`.
//!
//! Every fallible function returns a [`PmeStatus`]. On failure the message is kept per
//! thread and can be read with [`pme_last_error`]. Handles are opaque and must be released
//! with their matching `*_free` function; strings returned to the caller are released
//! with [`pme_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use pme_lab::config::{default_epsilon, ExperimentConfig};
use pme_lab::estimates::{bound_value, regime_valid, Case};
use pme_lab::martingale::{beta_roots, z2_drift_super, Functional};
use pme_lab::report::{self, RunReport};
use pme_lab::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    RegimeInvalid = 3,
    Config = 4,
    Runtime = 5,
    Utf8 = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmeCase {
    Thm1Case1 = 1,
    Thm1Case2 = 2,
    Thm1Case3 = 3,
    Thm1Case4 = 4,
    Est1 = 5,
    Thm3 = 6,
    E671 = 7,
    Thm6 = 8,
}

impl From<PmeCase> for Case {
    fn from(c: PmeCase) -> Self {
        match c {
            PmeCase::Thm1Case1 => Case::Thm1Case1,
            PmeCase::Thm1Case2 => Case::Thm1Case2,
            PmeCase::Thm1Case3 => Case::Thm1Case3,
            PmeCase::Thm1Case4 => Case::Thm1Case4,
            PmeCase::Est1 => Case::Est1,
            PmeCase::Thm3 => Case::Thm3,
            PmeCase::E671 => Case::E671,
            PmeCase::Thm6 => Case::Thm6,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmeFunctional {
    Z2 = 0,
    MOverU = 1,
}

impl From<PmeFunctional> for Functional {
    fn from(f: PmeFunctional) -> Self {
        match f {
            PmeFunctional::Z2 => Functional::Z2,
            PmeFunctional::MOverU => Functional::MOverU,
        }
    }
}

/// A parsed and resolved experiment config.
pub struct PmeConfig {
    inner: ExperimentConfig,
}

/// The result of running a config.
pub struct PmeReport {
    inner: RunReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> PmeStatus {
    match e {
        Error::Regime(_) => PmeStatus::RegimeInvalid,
        Error::Config { .. } => PmeStatus::Config,
        Error::InvalidParameter { .. } | Error::OutOfRange(_) => PmeStatus::InvalidArgument,
        _ => PmeStatus::Runtime,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (PmeStatus, String)>) -> PmeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            PmeStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside pme-lab");
            PmeStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (PmeStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (PmeStatus, String) {
    (PmeStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (PmeStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (PmeStatus::Utf8, format!("`{what}`: {e}")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (PmeStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pme_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn pme_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn pme_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse and resolve a JSON config.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out_config` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pme_config_from_json(
    json: *const c_char,
    out_config: *mut *mut PmeConfig,
) -> PmeStatus {
    guard(|| {
        let slot = out(out_config, "out_config")?;
        *slot = ptr::null_mut();
        let text = read_str(json, "json")?;
        let inner = ExperimentConfig::from_json(text)
            .and_then(ExperimentConfig::resolve)
            .map_err(lib_err)?;
        *slot = Box::into_raw(Box::new(PmeConfig { inner }));
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a handle from [`pme_config_from_json`].
#[no_mangle]
pub unsafe extern "C" fn pme_config_free(config: *mut PmeConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Number of checks in a config, or 0 for a null handle.
///
/// # Safety
/// `config` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pme_config_check_count(config: *const PmeConfig) -> usize {
    config.as_ref().map_or(0, |c| c.inner.checks.len())
}

/// Run every check of `config`.
///
/// # Safety
/// `config` must be a live handle and `out_report` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pme_run(
    config: *const PmeConfig,
    parallel: bool,
    out_report: *mut *mut PmeReport,
) -> PmeStatus {
    guard(|| {
        let slot = out(out_report, "out_report")?;
        *slot = ptr::null_mut();
        let cfg = config.as_ref().ok_or_else(|| null("config"))?;
        let inner = report::run(&cfg.inner, parallel);
        *slot = Box::into_raw(Box::new(PmeReport { inner }));
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a handle from [`pme_run`].
#[no_mangle]
pub unsafe extern "C" fn pme_report_free(report: *mut PmeReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Process exit code the CLI would return for this report, or -1 for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pme_report_exit_code(report: *const PmeReport) -> i32 {
    report.as_ref().map_or(-1, |r| r.inner.exit_code())
}

/// The report as JSON. `include_timing = false` drops the timing section.
///
/// # Safety
/// `report` must be a live handle and `out_json` a valid pointer. Free the string with
/// [`pme_string_free`].
#[no_mangle]
pub unsafe extern "C" fn pme_report_json(
    report: *const PmeReport,
    include_timing: bool,
    out_json: *mut *mut c_char,
) -> PmeStatus {
    guard(|| {
        let slot = out(out_json, "out_json")?;
        *slot = ptr::null_mut();
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        let value = if include_timing {
            serde_json::to_value(&r.inner).map_err(|e| (PmeStatus::Runtime, e.to_string()))?
        } else {
            r.inner.numeric_json().map_err(lib_err)?
        };
        let text =
            serde_json::to_string(&value).map_err(|e| (PmeStatus::Runtime, e.to_string()))?;
        *slot = CString::new(text)
            .map_err(|e| (PmeStatus::Runtime, e.to_string()))?
            .into_raw();
        Ok(())
    })
}

/// Write `report.json` and the per-check CSV files under `dir`.
///
/// # Safety
/// `report` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pme_report_write(
    report: *const PmeReport,
    dir: *const c_char,
) -> PmeStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        let dir = read_str(dir, "dir")?;
        report::write(&r.inner, Path::new(dir)).map_err(lib_err)
    })
}

/// Both roots of `H(β) = 0` for `0 < m ≤ 1`.
///
/// # Safety
/// `beta1` and `beta2` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn pme_beta_roots(
    m: f64,
    n: usize,
    beta1: *mut f64,
    beta2: *mut f64,
) -> PmeStatus {
    guard(|| {
        let b1 = out(beta1, "beta1")?;
        let b2 = out(beta2, "beta2")?;
        let (r1, r2) = beta_roots(m, n).map_err(lib_err)?;
        *b1 = r1;
        *b2 = r2;
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn pme_z2_drift_super(m: f64, n: usize, delta: f64) -> f64 {
    z2_drift_super(m, n, delta)
}

/// Tilt under which `functional` is a submartingale.
///
/// # Safety
/// `out_eps` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pme_default_epsilon(
    functional: PmeFunctional,
    m: f64,
    n: usize,
    out_eps: *mut f64,
) -> PmeStatus {
    guard(|| {
        let slot = out(out_eps, "out_eps")?;
        *slot = default_epsilon(functional.into(), m, n).map_err(lib_err)?;
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn pme_regime_valid(case: PmeCase, m: f64, n: usize) -> bool {
    regime_valid(case.into(), m, n)
}

/// Right-hand side of an estimate at time `t` for input norm `norm`.
///
/// # Safety
/// `out_bound` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pme_bound_value(
    case: PmeCase,
    m: f64,
    n: usize,
    norm: f64,
    t: f64,
    out_bound: *mut f64,
) -> PmeStatus {
    guard(|| {
        let slot = out(out_bound, "out_bound")?;
        *slot = bound_value(case.into(), m, n, norm, t).map_err(lib_err)?;
        Ok(())
    })
}
