//! C ABI for running simulations and checking traces.
//!
//! Every function returns an [`AtlasStatus`]; on failure the message is
//! available from [`atlas_last_error_message`] on the same thread. Handles
//! are opaque and must be released with their matching `_free` function.
//! Strings returned through out-parameters are released with
//! [`atlas_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use atlas::sim::{SimConfig, Trace};
use atlas::types::{next_ballot, Ballot, ProcessId};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AtlasStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    MalformedTrace = 4,
    Internal = 5,
}

/// A validated simulation configuration.
pub struct AtlasConfig(SimConfig);

/// A complete run trace.
pub struct AtlasTrace(Trace);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

type FfiResult = Result<(), (AtlasStatus, String)>;

/// Runs `body`, clearing the last error first and turning panics into
/// `Internal`.
fn guard(body: impl FnOnce() -> FfiResult) -> AtlasStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => AtlasStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            AtlasStatus::Internal
        }
    }
}

fn null(what: &str) -> (AtlasStatus, String) {
    (AtlasStatus::NullArgument, format!("{what} is null"))
}

unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, (AtlasStatus, String)> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s).to_str().map_err(|e| (AtlasStatus::InvalidUtf8, format!("{what}: {e}")))
}

fn to_c_string(s: String) -> Result<*mut c_char, (AtlasStatus, String)> {
    CString::new(s).map(CString::into_raw).map_err(|e| (AtlasStatus::Internal, e.to_string()))
}

/// Parses and validates a JSON configuration.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn atlas_config_from_json(json: *const c_char, out: *mut *mut AtlasConfig) -> AtlasStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = read_str(json, "json")?;
        let cfg = SimConfig::from_json(text).map_err(|e| (AtlasStatus::InvalidConfig, e.to_string()))?;
        *out = Box::into_raw(Box::new(AtlasConfig(cfg)));
        Ok(())
    })
}

/// Overrides the seed of a configuration.
///
/// # Safety
/// `config` must come from [`atlas_config_from_json`].
#[no_mangle]
pub unsafe extern "C" fn atlas_config_set_seed(config: *mut AtlasConfig, seed: u64) -> AtlasStatus {
    guard(|| {
        let cfg = config.as_mut().ok_or_else(|| null("config"))?;
        cfg.0.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `config` must come from [`atlas_config_from_json`] or be null.
#[no_mangle]
pub unsafe extern "C" fn atlas_config_free(config: *mut AtlasConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Simulates the configuration to completion.
///
/// # Safety
/// `config` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn atlas_run(config: *const AtlasConfig, out: *mut *mut AtlasTrace) -> AtlasStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let cfg = config.as_ref().ok_or_else(|| null("config"))?;
        let trace = atlas::run(&cfg.0).map_err(|e| (AtlasStatus::InvalidConfig, e.to_string()))?;
        *out = Box::into_raw(Box::new(AtlasTrace(trace)));
        Ok(())
    })
}

/// Encodes a trace as JSON lines.
///
/// # Safety
/// `trace` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn atlas_trace_to_jsonl(trace: *const AtlasTrace, out: *mut *mut c_char) -> AtlasStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let trace = trace.as_ref().ok_or_else(|| null("trace"))?;
        *out = to_c_string(trace.0.to_jsonl())?;
        Ok(())
    })
}

/// Parses a JSON-lines trace.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn atlas_trace_from_jsonl(text: *const c_char, out: *mut *mut AtlasTrace) -> AtlasStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = read_str(text, "text")?;
        let trace = Trace::from_jsonl(text).map_err(|e| (AtlasStatus::MalformedTrace, e.to_string()))?;
        *out = Box::into_raw(Box::new(AtlasTrace(trace)));
        Ok(())
    })
}

/// Runs every checker. Writes the JSON report to `report` and whether all
/// checks passed to `all_passed`; either may be null if unwanted.
///
/// # Safety
/// `trace` must be a live handle; non-null out-parameters must be writable.
#[no_mangle]
pub unsafe extern "C" fn atlas_trace_check(
    trace: *const AtlasTrace,
    report: *mut *mut c_char,
    all_passed: *mut bool,
) -> AtlasStatus {
    guard(|| {
        if !report.is_null() {
            *report = ptr::null_mut();
        }
        let trace = trace.as_ref().ok_or_else(|| null("trace"))?;
        let r = atlas::check_all(&trace.0);
        if !all_passed.is_null() {
            *all_passed = r.all_passed();
        }
        if !report.is_null() {
            let json = serde_json::to_string(&r).map_err(|e| (AtlasStatus::Internal, e.to_string()))?;
            *report = to_c_string(json)?;
        }
        Ok(())
    })
}

/// # Safety
/// `trace` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn atlas_trace_free(trace: *mut AtlasTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// # Safety
/// `s` must be a string returned by this library or null.
#[no_mangle]
pub unsafe extern "C" fn atlas_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// The smallest ballot owned by process `proc` that exceeds `current`.
#[no_mangle]
pub extern "C" fn atlas_next_ballot(proc: u32, current: u64, n: u32) -> u64 {
    next_ballot(ProcessId(proc), Ballot(current), n).0
}

/// The message of the last failed call on this thread, or an empty string.
/// Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn atlas_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}
