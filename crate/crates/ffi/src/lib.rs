//! C ABI for the `cbs_rv` engine.
//!
//! Systems are opaque handles created by `cbs_system_parse` or
//! `cbs_system_builtin` and released with `cbs_system_free`. Every fallible
//! call returns a [`CbsStatus`]; on failure the message is available from
//! `cbs_last_error_message` on the same thread. Strings handed out by the
//! library are NUL-terminated UTF-8 and must be released with
//! `cbs_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::time::Duration;

use cbs_rv::cli::{cmd_transform, cmd_witness, execute_run, system_for_mode, verify_system, CliError, Mode, Stage};
use cbs_rv::model::{builtin_readers_writers, builtin_task, from_json, parse_model, render, to_json};
use cbs_rv::monitor::parse_monitor;
use cbs_rv::semantics::{BusyDelay, EngineConfig};
use cbs_rv::trace_io::{read_trace, write_trace, write_witness};
use cbs_rv::{CompositeSystem, RgtVariant};

/// Result of a call. The values match the exit codes of the `cbs-rv` tool
/// where they overlap.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CbsStatus {
    Ok = 0,
    /// Null pointer, invalid UTF-8 or out-of-range option.
    InvalidArgument = 1,
    /// The model, monitor or trace is invalid, or the run failed.
    Invalid = 2,
    /// The systems are not weakly bisimilar, or the check was inconclusive.
    NotEquivalent = 3,
    /// Internal error; the library state is unaffected.
    Panic = 4,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CbsMode {
    Global = 0,
    Partial = 1,
    Monitored = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CbsStage {
    Partial = 0,
    Transformed = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CbsRgtVariant {
    Default = 0,
    UnguardedNew = 1,
    UnguardedUpd = 2,
    UnguardedBoth = 3,
}

impl From<CbsRgtVariant> for RgtVariant {
    fn from(v: CbsRgtVariant) -> Self {
        match v {
            CbsRgtVariant::Default => RgtVariant::Default,
            CbsRgtVariant::UnguardedNew => RgtVariant::UnguardedNew,
            CbsRgtVariant::UnguardedUpd => RgtVariant::UnguardedUpd,
            CbsRgtVariant::UnguardedBoth => RgtVariant::UnguardedBoth,
        }
    }
}

/// Options of `cbs_run`; start from `cbs_run_options_default`.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct CbsRunOptions {
    pub mode: CbsMode,
    pub seed: u64,
    /// Number of interactions to execute.
    pub steps: u64,
    /// Complete pending computations at the end.
    pub drain: bool,
    /// Real worker threads instead of seeded virtual time.
    pub real_time: bool,
    pub threads: u32,
    /// Busy time of each computation in real-time mode.
    pub busy_delay_us: u64,
    pub rgt_variant: CbsRgtVariant,
}

/// Opaque system handle.
pub struct CbsSystem {
    sys: CompositeSystem,
}

struct Failure(CbsStatus, String);

impl From<CliError> for Failure {
    fn from(e: CliError) -> Self {
        let status = match e {
            CliError::Usage(_) | CliError::Io(_) => CbsStatus::InvalidArgument,
            CliError::Invalid(_) => CbsStatus::Invalid,
            CliError::Verification(_) => CbsStatus::NotEquivalent,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(e: impl ToString) -> Failure {
    Failure(CbsStatus::Invalid, e.to_string())
}

fn bad_arg(msg: &str) -> Failure {
    Failure(CbsStatus::InvalidArgument, msg.to_string())
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, records failures and panics, and maps them to a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CbsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CbsStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            CbsStatus::Panic
        }
    }
}

/// # Safety
/// `s` is null or a valid NUL-terminated string.
unsafe fn str_arg<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(bad_arg(&format!("`{what}` is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| bad_arg(&format!("`{what}` is not UTF-8")))
}

/// # Safety
/// `s` is null or a valid NUL-terminated string.
unsafe fn opt_str_arg<'a>(s: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if s.is_null() {
        Ok(None)
    } else {
        str_arg(s, what).map(Some)
    }
}

/// # Safety
/// `sys` is null or a live handle.
unsafe fn sys_arg<'a>(sys: *const CbsSystem) -> Result<&'a CompositeSystem, Failure> {
    sys.as_ref().map(|h| &h.sys).ok_or_else(|| bad_arg("`system` is null"))
}

/// # Safety
/// `out` is null or valid for writes.
unsafe fn put_string(out: *mut *mut c_char, s: String) {
    if !out.is_null() {
        *out = CString::new(s.replace('\0', " ")).expect("no interior NUL").into_raw();
    }
}

/// # Safety
/// `out` is valid for writes.
unsafe fn put_system(out: *mut *mut CbsSystem, sys: CompositeSystem) -> Result<(), Failure> {
    if out.is_null() {
        return Err(bad_arg("`out` is null"));
    }
    *out = Box::into_raw(Box::new(CbsSystem { sys }));
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cbs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` is null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cbs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses and validates a model in the text or JSON format.
///
/// # Safety
/// `text` is a NUL-terminated string; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cbs_system_parse(text: *const c_char, out: *mut *mut CbsSystem) -> CbsStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let sys = if text.trim_start().starts_with('{') {
            from_json(text)
        } else {
            parse_model(text)
        }
        .map_err(invalid)?;
        put_system(out, sys)
    })
}

/// A bundled model: `"task"` or `"readers-writers"`.
///
/// # Safety
/// `name` is a NUL-terminated string; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cbs_system_builtin(name: *const c_char, out: *mut *mut CbsSystem) -> CbsStatus {
    guard(|| {
        let sys = match str_arg(name, "name")? {
            "task" => builtin_task(),
            "readers-writers" => builtin_readers_writers(),
            other => return Err(bad_arg(&format!("unknown builtin model `{other}`"))),
        };
        put_system(out, sys)
    })
}

/// Releases a system handle. Null is ignored.
///
/// # Safety
/// `sys` is null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cbs_system_free(sys: *mut CbsSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Renders a system in the text format, or as JSON when `json` is set.
///
/// # Safety
/// `sys` is a live handle; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cbs_system_render(sys: *const CbsSystem, json: bool, out: *mut *mut c_char) -> CbsStatus {
    guard(|| {
        let sys = sys_arg(sys)?;
        put_string(out, if json { to_json(sys) } else { render(sys) });
        Ok(())
    })
}

/// Builds the transformed system. With a monitor (spec text, may be null)
/// only the variables it reads are reconstructed and the monitor is
/// attached.
///
/// # Safety
/// `sys` is a live handle; `monitor` is null or a NUL-terminated string;
/// `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cbs_system_transform(
    sys: *const CbsSystem,
    monitor: *const c_char,
    variant: CbsRgtVariant,
    out: *mut *mut CbsSystem,
) -> CbsStatus {
    guard(|| {
        let sys = sys_arg(sys)?;
        let spec = opt_str_arg(monitor, "monitor")?
            .map(parse_monitor)
            .transpose()
            .map_err(invalid)?;
        put_system(out, cmd_transform(sys, spec.as_ref(), variant.into())?)
    })
}

/// Default run options: partial mode, seed 0, 100 steps, drained, virtual
/// time, one thread.
#[no_mangle]
pub extern "C" fn cbs_run_options_default() -> CbsRunOptions {
    CbsRunOptions {
        mode: CbsMode::Partial,
        seed: 0,
        steps: 100,
        drain: true,
        real_time: false,
        threads: 1,
        busy_delay_us: 0,
        rgt_variant: CbsRgtVariant::Default,
    }
}

/// Executes a system. The report is written as JSON to `report_json` and
/// the trace in the line format to `trace`; either may be null.
/// `monitor` (spec text) is used in monitored mode and may be null when
/// the model carries its own monitor.
///
/// # Safety
/// `sys` is a live handle; `opts` points to valid options; `monitor` is
/// null or a NUL-terminated string; the outputs are null or valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn cbs_run(
    sys: *const CbsSystem,
    opts: *const CbsRunOptions,
    monitor: *const c_char,
    report_json: *mut *mut c_char,
    trace: *mut *mut c_char,
) -> CbsStatus {
    guard(|| {
        let sys = sys_arg(sys)?;
        let opts = opts.as_ref().ok_or_else(|| bad_arg("`opts` is null"))?;
        if opts.threads == 0 {
            return Err(bad_arg("`threads` must be at least 1"));
        }
        let mode = match opts.mode {
            CbsMode::Global => Mode::Global,
            CbsMode::Partial => Mode::Partial,
            CbsMode::Monitored => Mode::Monitored,
        };
        if opts.real_time && mode == Mode::Global {
            return Err(bad_arg("real time applies to partial and monitored modes"));
        }
        let spec = opt_str_arg(monitor, "monitor")?
            .map(parse_monitor)
            .transpose()
            .map_err(invalid)?;
        let staged = system_for_mode(sys, mode, spec.as_ref(), opts.rgt_variant.into())?;
        let cfg = EngineConfig {
            drain: opts.drain,
            real_time: opts.real_time,
            threads: opts.threads as usize,
            busy_delay: match opts.busy_delay_us {
                0 => BusyDelay::Zero,
                us => BusyDelay::Fixed(Duration::from_micros(us)),
            },
            ..EngineConfig::seeded(opts.seed, usize::try_from(opts.steps).unwrap_or(usize::MAX))
        };
        let (rep, file) = execute_run(&staged, mode, &cfg)?;
        put_string(report_json, serde_json::to_string(&rep).expect("report serializes"));
        put_string(trace, write_trace(&file));
        Ok(())
    })
}

/// Reconstructs the global witness of a trace (text or JSON trace format).
/// With a system handle the trace is first checked to be a run of it.
///
/// # Safety
/// `trace` is a NUL-terminated string; `sys` is null or a live handle;
/// `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cbs_witness(trace: *const c_char, sys: *const CbsSystem, out: *mut *mut c_char) -> CbsStatus {
    guard(|| {
        let t = read_trace(str_arg(trace, "trace")?).map_err(invalid)?;
        let model = if sys.is_null() { None } else { Some(sys_arg(sys)?) };
        let w = cmd_witness(&t, model, None)?;
        put_string(out, write_witness(&t.layout, &w));
        Ok(())
    })
}

/// Checks weak bisimilarity at `stage`, exploring at most `bound` states
/// per system. The JSON report (state counts, counterexample) goes to
/// `report_json`, which may be null. Returns `NotEquivalent` when the
/// systems differ or the bound is hit.
///
/// # Safety
/// `sys` is a live handle; `report_json` is null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cbs_verify_equivalence(
    sys: *const CbsSystem,
    stage: CbsStage,
    bound: u64,
    variant: CbsRgtVariant,
    report_json: *mut *mut c_char,
) -> CbsStatus {
    guard(|| {
        let sys = sys_arg(sys)?;
        let stage = match stage {
            CbsStage::Partial => Stage::Partial,
            CbsStage::Transformed => Stage::Transformed,
        };
        let bound = usize::try_from(bound).unwrap_or(usize::MAX);
        let (rep, res) = verify_system(sys, stage, variant.into(), bound)?;
        put_string(report_json, serde_json::to_string(&rep).expect("report serializes"));
        if res.equivalent {
            Ok(())
        } else {
            let why = res
                .counterexample
                .map_or_else(|| "not weakly bisimilar".into(), |c| c.to_string());
            Err(Failure(CbsStatus::NotEquivalent, why))
        }
    })
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn cbs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
