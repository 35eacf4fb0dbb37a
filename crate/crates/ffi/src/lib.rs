//! C ABI for the consensus simulator.
//!
//! Configurations live behind an opaque `RclConfig` handle. Every entry
//! point returns an `RclStatus`; results come back as JSON strings that the
//! caller releases with `rcl_string_free`. When a call fails,
//! `rcl_last_error` describes why.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rcl_core::harness::{deviation_gain, expost_exhibit, fairness_test, monte_carlo, ExperimentConfig, HarnessError};
use rcl_core::types::{Context, UtilityParams};
use rcl_core::{run, DeviationSpec};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RclStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidJson = 3,
    InvalidConfig = 4,
    SimulationFailed = 5,
    Unsupported = 6,
    Panic = 7,
}

/// Opaque experiment configuration.
pub struct RclConfig {
    inner: ExperimentConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

type Failure = (RclStatus, String);

fn set_error(message: Option<String>) {
    let c = message.map(|m| CString::new(m.replace('\0', " ")).expect("no interior nul"));
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

fn harness_failure(e: HarnessError) -> Failure {
    let status = match e {
        HarnessError::Json(_) => RclStatus::InvalidJson,
        HarnessError::Config(_) | HarnessError::Model(_) | HarnessError::Deviation(_) => RclStatus::InvalidConfig,
        HarnessError::Sim(_) => RclStatus::SimulationFailed,
        HarnessError::Unsupported(_) => RclStatus::Unsupported,
    };
    (status, e.to_string())
}

/// Runs `body`, records any failure and converts panics into `Panic`.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> RclStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error(None);
            RclStatus::Ok
        }
        Ok(Err((status, message))) => {
            set_error(Some(message));
            status
        }
        Err(_) => {
            set_error(Some("internal panic".into()));
            RclStatus::Panic
        }
    }
}

/// # Safety
/// `s` must be null or a valid nul-terminated string.
unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err((RclStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| (RclStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

/// # Safety
/// `handle` must be null or a live pointer from `rcl_config_from_json`.
unsafe fn config<'a>(handle: *const RclConfig) -> Result<&'a ExperimentConfig, Failure> {
    handle
        .as_ref()
        .map(|h| &h.inner)
        .ok_or((RclStatus::NullPointer, "config handle is null".into()))
}

/// # Safety
/// `out` must be null or valid for one pointer write.
unsafe fn emit_json<T: serde::Serialize>(out: *mut *mut c_char, value: &T) -> Result<(), Failure> {
    if out.is_null() {
        return Err((RclStatus::NullPointer, "output pointer is null".into()));
    }
    let text = serde_json::to_string(value).map_err(|e| (RclStatus::InvalidJson, e.to_string()))?;
    *out = CString::new(text).expect("JSON has no nul").into_raw();
    Ok(())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn rcl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into the library from this thread.
#[no_mangle]
pub extern "C" fn rcl_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Frees a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rcl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses and validates an experiment configuration.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rcl_config_from_json(json: *const c_char, out: *mut *mut RclConfig) -> RclStatus {
    guard(|| {
        if out.is_null() {
            return Err((RclStatus::NullPointer, "output pointer is null".into()));
        }
        let text = read_str(json, "config JSON")?;
        let inner = ExperimentConfig::from_json(text).map_err(harness_failure)?;
        *out = Box::into_raw(Box::new(RclConfig { inner }));
        Ok(())
    })
}

/// Releases a configuration. NULL is ignored.
///
/// # Safety
/// `handle` must be null or a live pointer from `rcl_config_from_json`.
#[no_mangle]
pub unsafe extern "C" fn rcl_config_free(handle: *mut RclConfig) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// # Safety
/// `handle` must be null or a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn rcl_config_set_seed(handle: *mut RclConfig, seed: u64) -> RclStatus {
    guard(|| {
        let h = handle.as_mut().ok_or((RclStatus::NullPointer, "config handle is null".into()))?;
        h.inner.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `handle` must be null or a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn rcl_config_set_trials(handle: *mut RclConfig, trials: u64) -> RclStatus {
    guard(|| {
        let h = handle.as_mut().ok_or((RclStatus::NullPointer, "config handle is null".into()))?;
        h.inner.trials = trials;
        Ok(())
    })
}

/// Replaces the deviation; NULL clears it.
///
/// # Safety
/// `handle` must be a live configuration handle and `json` null or a
/// nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rcl_config_set_deviation(handle: *mut RclConfig, json: *const c_char) -> RclStatus {
    guard(|| {
        let h = handle.as_mut().ok_or((RclStatus::NullPointer, "config handle is null".into()))?;
        let spec = if json.is_null() {
            None
        } else {
            let spec: DeviationSpec = serde_json::from_str(read_str(json, "deviation JSON")?).map_err(|e| (RclStatus::InvalidJson, e.to_string()))?;
            spec.validate(h.inner.n, h.inner.f).map_err(|e| (RclStatus::InvalidConfig, e.to_string()))?;
            Some(spec)
        };
        h.inner.deviation = spec;
        Ok(())
    })
}

/// Serialises the configuration.
///
/// # Safety
/// `handle` must be a live configuration handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rcl_config_to_json(handle: *const RclConfig, out: *mut *mut c_char) -> RclStatus {
    guard(|| emit_json(out, config(handle)?))
}

/// One run of `trial`; writes the run record as JSON.
///
/// # Safety
/// `handle` must be a live configuration handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rcl_run(handle: *const RclConfig, trial: u64, out: *mut *mut c_char) -> RclStatus {
    guard(|| {
        let cfg = config(handle)?;
        let ctx = cfg.trial_context(trial).map_err(harness_failure)?;
        let rec = run(&ctx, &cfg.profile(), cfg.run_seed(trial, 0), &cfg.run_options()).map_err(|e| harness_failure(e.into()))?;
        emit_json(out, &rec)
    })
}

/// # Safety
/// `handle` must be a live configuration handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rcl_monte_carlo(handle: *const RclConfig, out: *mut *mut c_char) -> RclStatus {
    guard(|| emit_json(out, &monte_carlo(config(handle)?).map_err(harness_failure)?))
}

/// Fairness report for `context_json`, or for trial 0's context when NULL.
///
/// # Safety
/// `handle` must be a live configuration handle, `context_json` null or a
/// nul-terminated string, and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rcl_fairness(handle: *const RclConfig, context_json: *const c_char, out: *mut *mut c_char) -> RclStatus {
    guard(|| {
        let cfg = config(handle)?;
        let ctx = if context_json.is_null() {
            cfg.trial_context(0).map_err(harness_failure)?
        } else {
            Context::from_json(read_str(context_json, "context JSON")?).map_err(|e| (RclStatus::InvalidConfig, e.to_string()))?
        };
        emit_json(out, &fairness_test(cfg, &ctx).map_err(harness_failure)?)
    })
}

/// # Safety
/// `handle` must be a live configuration handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rcl_deviation_gain(handle: *const RclConfig, out: *mut *mut c_char) -> RclStatus {
    guard(|| emit_json(out, &deviation_gain(config(handle)?).map_err(harness_failure)?))
}

/// Exact ex-post exhibit with the default utilities; writes `null` when
/// `f` is zero.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rcl_expost_exhibit(n: usize, f: usize, seed: u64, out: *mut *mut c_char) -> RclStatus {
    guard(|| emit_json(out, &expost_exhibit(n, f, UtilityParams::default(), seed).map_err(harness_failure)?))
}
