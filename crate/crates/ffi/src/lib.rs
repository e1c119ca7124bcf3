//! C ABI over the groupext engine.
//!
//! A system is created from configuration JSON and used through an opaque
//! handle. Every entry point returns an integer status (`GX_OK` on success);
//! the message for the last failure on the calling thread is available from
//! `gx_last_error`. Strings returned through out-parameters are owned by the
//! caller and released with `gx_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use groupext::config::{parse_config, SystemConfig};
use groupext::dimension::{decay_check, find_delta};
use groupext::output::{self, envelope, render};
use groupext::patterson::{classify_ergodicity, Calibration};
use groupext::transfer::zcount;
use groupext::validate::validate;
use groupext::Error;

pub const GX_OK: i32 = 0;
pub const GX_ERR_NULL: i32 = 1;
pub const GX_ERR_UTF8: i32 = 2;
pub const GX_ERR_CONFIG: i32 = 3;
pub const GX_ERR_INPUT: i32 = 4;
pub const GX_ERR_STRUCTURAL: i32 = 5;
pub const GX_ERR_UNSUPPORTED: i32 = 6;
pub const GX_ERR_RESOURCE: i32 = 7;
pub const GX_ERR_INSUFFICIENT_DATA: i32 = 8;
pub const GX_ERR_DOMAIN: i32 = 9;
pub const GX_ERR_BUFFER: i32 = 10;
pub const GX_ERR_UNKNOWN_COMMAND: i32 = 11;
pub const GX_ERR_PANIC: i32 = 12;

/// Opaque handle to a parsed system configuration.
pub struct GxSystem {
    cfg: SystemConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(i32, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config { .. } => GX_ERR_CONFIG,
            Error::Input(_) => GX_ERR_INPUT,
            Error::Structural(_) => GX_ERR_STRUCTURAL,
            Error::Unsupported(_) => GX_ERR_UNSUPPORTED,
            Error::Resource(_) => GX_ERR_RESOURCE,
            Error::InsufficientData(_) => GX_ERR_INSUFFICIENT_DATA,
            Error::Domain(_) => GX_ERR_DOMAIN,
        };
        Failure(code, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(GX_ERR_NULL, format!("null pointer for `{what}`"))
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GX_OK,
        Ok(Err(Failure(code, msg))) => {
            set_last_error(msg);
            code
        }
        Err(_) => {
            set_last_error("internal panic".into());
            GX_ERR_PANIC
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(GX_ERR_UTF8, format!("`{what}` is not valid UTF-8")))
}

unsafe fn system<'a>(p: *const GxSystem) -> Result<&'a GxSystem, Failure> {
    p.as_ref().ok_or_else(|| null("system"))
}

/// Message for the most recent failure on this thread; empty when none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gx_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses configuration JSON into a new system handle written to `out`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gx_system_new(json: *const c_char, out: *mut *mut GxSystem) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = parse_config(text(json, "json")?)?;
        *out = Box::into_raw(Box::new(GxSystem { cfg }));
        Ok(())
    })
}

/// Releases a handle from `gx_system_new`. Null is ignored.
///
/// # Safety
/// `sys` must come from `gx_system_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gx_system_free(sys: *mut GxSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Writes log Z^n for n = 0..=n_max into `log_z`, which must hold at least
/// n_max + 1 values. Levels with Z^n = 0 are −∞.
///
/// # Safety
/// `sys` must be a live handle and `log_z` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gx_zcount(sys: *const GxSystem, n_max: usize, log_z: *mut f64, len: usize) -> i32 {
    guard(|| {
        let s = system(sys)?;
        if log_z.is_null() {
            return Err(null("log_z"));
        }
        if len < n_max + 1 {
            return Err(Failure(GX_ERR_BUFFER, format!("buffer holds {len} values, {} needed", n_max + 1)));
        }
        let ext = &s.cfg.ext;
        let table = zcount(ext, &ext.default_xi(), n_max, false)?;
        std::slice::from_raw_parts_mut(log_z, n_max + 1).copy_from_slice(&table.log_z[..=n_max]);
        Ok(())
    })
}

/// Estimates the spectral radius, the polynomial correction exponent and the
/// standard error of the radius from Z^n up to `n_max`. Null outputs are skipped.
///
/// # Safety
/// `sys` must be a live handle; non-null outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn gx_spectrum(sys: *const GxSystem, n_max: usize, rho: *mut f64, beta: *mut f64, stderr: *mut f64) -> i32 {
    guard(|| {
        let s = system(sys)?;
        let ext = &s.cfg.ext;
        let cal = Calibration::new(ext, &ext.default_xi(), n_max)?;
        for (p, v) in [(rho, cal.est.rho_hat), (beta, cal.est.beta), (stderr, cal.est.stderr)] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Runs `command` ("spectrum", "classify", "dimension" or "validate") with the
/// configured numerics and writes the JSON document to `out`. A failed
/// validation still returns `GX_OK`; its document has `"passed": false`.
///
/// # Safety
/// `sys` must be a live handle, `command` a NUL-terminated string and `out` a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gx_run_json(sys: *const GxSystem, command: *const c_char, out: *mut *mut c_char) -> i32 {
    guard(|| {
        let s = system(sys)?;
        let command = text(command, "command")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = &s.cfg;
        let ext = &cfg.ext;
        let n_max = cfg.numerics.n_max;
        let result = match command {
            "spectrum" => output::spectral_json(&Calibration::new(ext, &ext.default_xi(), n_max)?.est),
            "classify" => {
                let cal = Calibration::new(ext, &ext.default_xi(), n_max)?;
                output::verdict_json(&classify_ergodicity(&cal.table, &cal.est))
            }
            "dimension" => {
                let r = find_delta(ext, (0.0, 4.0), cfg.numerics.tol, n_max.min(24))?;
                let decay = decay_check(ext, &r, 200, 100, cfg.numerics.seed)?;
                output::dimension_json(&r, Some(&decay))
            }
            "validate" => output::validation_json(&validate(cfg)?),
            other => return Err(Failure(GX_ERR_UNKNOWN_COMMAND, format!("unknown command `{other}`"))),
        };
        let doc = render(&envelope(command, &cfg.hash, cfg.numerics.seed, result));
        *out = CString::new(doc).map_err(|_| Failure(GX_ERR_UTF8, "output contains NUL".into()))?.into_raw();
        Ok(())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gx_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
