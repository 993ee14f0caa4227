//! C ABI for the analyzer: parse a factory and a policy from JSON text,
//! run the pipeline, and hand the findings report back as a JSON string.
//!
//! Conventions:
//! - Every function is safe to call with NULL pointers; it reports
//!   [`RsStatus::NullArgument`] instead of crashing.
//! - Results travel through an opaque [`RsAnalysis`] handle. Strings
//!   borrowed from a handle stay valid until [`rs_analysis_free`].
//! - On any failure, [`rs_last_error`] returns a thread-local message
//!   describing what went wrong (valid until the thread's next API call).
//! - Panics never unwind across the boundary; they come back as
//!   [`RsStatus::Internal`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use rolescan::pipeline::{analyze_factory, AnalysisOptions, PipelineError};
use rolescan::report::emit_json;
use rolescan::{parse_factory, parse_policy};

/// Result of every fallible API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was NULL.
    NullArgument = 1,
    /// An input string was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The factory or policy JSON failed to parse.
    ParseError = 3,
    /// The factory parsed but has blocking structural violations.
    InvalidFactory = 4,
    /// The analysis itself failed.
    AnalysisError = 5,
    /// An internal invariant broke; file a bug with the last error text.
    Internal = 6,
}

/// Analysis tuning knobs. Zero-initialize and call
/// `rs_options_default`, then override individual fields.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RsOptions {
    /// Largest condition (in distinct atoms) enumerated exactly.
    pub max_atoms: u32,
    /// Cap on recorded call paths per candidate.
    pub max_paths: u32,
    /// Cap on memoized traversal states per candidate.
    pub max_summary_states: u32,
    /// Worker threads; 0 means one per available CPU.
    pub jobs: u32,
}

/// Opaque handle to one completed analysis.
pub struct RsAnalysis {
    report_json: CString,
    finding_count: u64,
    warning_count: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let owned = CString::new(message.replace('\0', "\u{FFFD}"))
        .unwrap_or_else(|_| CString::new("error message unavailable").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(owned));
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

/// Message for the most recent failure on this thread, or NULL when the
/// last call succeeded. The pointer is valid until this thread's next
/// API call.
#[no_mangle]
pub extern "C" fn rs_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |msg| msg.as_ptr())
    })
}

/// The library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Fills `options` with the default limits.
#[no_mangle]
pub extern "C" fn rs_options_default(options: *mut RsOptions) -> RsStatus {
    let Some(options) = (unsafe { options.as_mut() }) else {
        set_error("options pointer is NULL".into());
        return RsStatus::NullArgument;
    };
    let defaults = AnalysisOptions::default();
    *options = RsOptions {
        max_atoms: defaults.max_atoms as u32,
        max_paths: defaults.max_paths as u32,
        max_summary_states: defaults.max_summary_states as u32,
        jobs: 0,
    };
    clear_error();
    RsStatus::Ok
}

fn utf8_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, RsStatus> {
    if ptr.is_null() {
        set_error(format!("{name} pointer is NULL"));
        return Err(RsStatus::NullArgument);
    }
    match unsafe { CStr::from_ptr(ptr) }.to_str() {
        Ok(text) => Ok(text),
        Err(err) => {
            set_error(format!("{name} is not valid UTF-8: {err}"));
            Err(RsStatus::InvalidUtf8)
        }
    }
}

fn run_analysis(
    factory_json: &str,
    policy_json: &str,
    options: Option<&RsOptions>,
) -> Result<RsAnalysis, RsStatus> {
    let factory = parse_factory(factory_json).map_err(|err| {
        set_error(format!("factory: {err}"));
        RsStatus::ParseError
    })?;
    let policy = parse_policy(policy_json, &factory).map_err(|err| {
        set_error(format!("policy: {err}"));
        RsStatus::ParseError
    })?;

    let mut analysis_options = AnalysisOptions::default();
    if let Some(options) = options {
        analysis_options.max_atoms = options.max_atoms as usize;
        analysis_options.max_paths = options.max_paths as usize;
        analysis_options.max_summary_states = options.max_summary_states as usize;
        analysis_options.jobs = if options.jobs == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            options.jobs as usize
        };
    }

    let run = analyze_factory(&factory, &policy, &analysis_options).map_err(|err| {
        match &err {
            PipelineError::Invalid(violations) => {
                let lines: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
                set_error(lines.join("\n"));
                RsStatus::InvalidFactory
            }
            other => {
                set_error(other.to_string());
                RsStatus::AnalysisError
            }
        }
    })?;

    let report_json = CString::new(emit_json(&run.report)).map_err(|_| {
        set_error("report JSON contained an interior NUL byte".into());
        RsStatus::Internal
    })?;
    Ok(RsAnalysis {
        report_json,
        finding_count: run.report.summary.total_findings,
        warning_count: run.warnings.len() as u64,
    })
}

/// Analyzes `factory_json` against `policy_json` and stores a new handle
/// in `*out`. `options` may be NULL for defaults. On success `*out` is
/// non-NULL and must be released with `rs_analysis_free`; on failure
/// `*out` is NULL and `rs_last_error` explains why.
#[no_mangle]
pub extern "C" fn rs_analyze(
    factory_json: *const c_char,
    policy_json: *const c_char,
    options: *const RsOptions,
    out: *mut *mut RsAnalysis,
) -> RsStatus {
    let Some(out) = (unsafe { out.as_mut() }) else {
        set_error("out pointer is NULL".into());
        return RsStatus::NullArgument;
    };
    *out = std::ptr::null_mut();

    let factory_json = match utf8_arg(factory_json, "factory_json") {
        Ok(text) => text,
        Err(status) => return status,
    };
    let policy_json = match utf8_arg(policy_json, "policy_json") {
        Ok(text) => text,
        Err(status) => return status,
    };
    let options = unsafe { options.as_ref() };

    let outcome = catch_unwind(AssertUnwindSafe(|| {
        run_analysis(factory_json, policy_json, options)
    }));
    match outcome {
        Ok(Ok(analysis)) => {
            *out = Box::into_raw(Box::new(analysis));
            clear_error();
            RsStatus::Ok
        }
        Ok(Err(status)) => status,
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {message}"));
            RsStatus::Internal
        }
    }
}

/// The findings report as NUL-terminated JSON, borrowed from the handle.
/// Returns NULL when `analysis` is NULL.
#[no_mangle]
pub extern "C" fn rs_analysis_report_json(analysis: *const RsAnalysis) -> *const c_char {
    unsafe { analysis.as_ref() }
        .map_or(std::ptr::null(), |analysis| analysis.report_json.as_ptr())
}

/// Total findings in the report; 0 when `analysis` is NULL.
#[no_mangle]
pub extern "C" fn rs_analysis_finding_count(analysis: *const RsAnalysis) -> u64 {
    unsafe { analysis.as_ref() }.map_or(0, |analysis| analysis.finding_count)
}

/// Non-blocking validation warnings the analysis carried along; 0 when
/// `analysis` is NULL.
#[no_mangle]
pub extern "C" fn rs_analysis_warning_count(analysis: *const RsAnalysis) -> u64 {
    unsafe { analysis.as_ref() }.map_or(0, |analysis| analysis.warning_count)
}

/// Releases a handle. NULL is a no-op. The handle and every pointer
/// borrowed from it are invalid afterwards.
#[no_mangle]
pub extern "C" fn rs_analysis_free(analysis: *mut RsAnalysis) {
    if !analysis.is_null() {
        drop(unsafe { Box::from_raw(analysis) });
    }
}
