//! C interface to the simulator.
//!
//! Handles are opaque pointers owned by the caller and released with the
//! matching `_free` function. Every fallible call returns an [`SvocStatus`];
//! on failure the message is kept per thread and can be read back with
//! [`svoc_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use svoc_core::controller::{ControllerConfig, GridController, Measurement};
use svoc_core::runner::acceptance::canonical_suite;
use svoc_core::runner::output::write_run;
use svoc_core::runner::{build_controller, run_scenario, ControllerKind, RunResult, Scenario};
use svoc_core::svoc::PowerSetpoints;
use svoc_core::{SimError, ThreePhase};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvocStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Simulation = 4,
    Io = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvocControllerKind {
    Svoc = 0,
    DvocBaseline = 1,
}

impl From<SvocControllerKind> for ControllerKind {
    fn from(k: SvocControllerKind) -> Self {
        match k {
            SvocControllerKind::Svoc => ControllerKind::Svoc,
            SvocControllerKind::DvocBaseline => ControllerKind::DvocBaseline,
        }
    }
}

/// One logged sample. Arrays are indexed a, b, c.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SvocSample {
    pub t: f64,
    pub v: [f64; 3],
    pub i: [f64; 3],
    pub p: [f64; 3],
    pub q: [f64; 3],
    pub irms: [f64; 3],
    pub irms_grid: [f64; 3],
    pub fault: [u8; 3],
    pub amp: [f64; 3],
}

pub struct SvocScenario(Scenario);

pub struct SvocRun(RunResult);

pub struct SvocController(Box<dyn GridController>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &SimError) -> SvocStatus {
    match e {
        SimError::AtTime { source, .. } => status_of(source),
        SimError::Config(_) | SimError::OverlappingEvents { .. } | SimError::MissingScenario(_) => {
            SvocStatus::Config
        }
        SimError::Io(_) => SvocStatus::Io,
        _ => SvocStatus::Simulation,
    }
}

fn fail(e: SimError) -> SvocStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

fn guard(f: impl FnOnce() -> SvocStatus) -> SvocStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| {
        set_error("panic inside the simulator");
        SvocStatus::Panic
    })
}

unsafe fn str_arg<'a>(s: *const c_char, what: &str) -> Result<&'a str, SvocStatus> {
    if s.is_null() {
        set_error(format!("{what} is null"));
        return Err(SvocStatus::NullPointer);
    }
    CStr::from_ptr(s).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        SvocStatus::InvalidArgument
    })
}

macro_rules! nonnull {
    ($p:expr) => {
        if $p.is_null() {
            set_error(concat!(stringify!($p), " is null"));
            return SvocStatus::NullPointer;
        }
    };
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Copies the last error of this thread into `buf` (NUL terminated,
/// truncated to `len - 1` bytes). Returns the full message length, or 0 if
/// there is no error.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn svoc_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Parses a scenario from TOML text.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn svoc_scenario_from_toml(
    toml: *const c_char,
    out: *mut *mut SvocScenario,
) -> SvocStatus {
    guard(|| {
        nonnull!(out);
        let text = tri!(str_arg(toml, "toml"));
        match Scenario::from_toml(text).and_then(|s| s.validate().map(|_| s)) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(SvocScenario(s)));
                SvocStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Looks up one of the built-in acceptance scenarios by name.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn svoc_scenario_canonical(
    name: *const c_char,
    out: *mut *mut SvocScenario,
) -> SvocStatus {
    guard(|| {
        nonnull!(out);
        let name = tri!(str_arg(name, "name"));
        match canonical_suite().into_iter().find(|s| s.name == name) {
            Some(s) => {
                *out = Box::into_raw(Box::new(SvocScenario(s)));
                SvocStatus::Ok
            }
            None => {
                set_error(format!("no canonical scenario named {name}"));
                SvocStatus::InvalidArgument
            }
        }
    })
}

/// # Safety
/// `s` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn svoc_scenario_free(s: *mut SvocScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Runs a scenario to completion. A run that stops early still yields a
/// handle holding the partial result; the call then returns the error status.
///
/// # Safety
/// `s` must be a live scenario handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn svoc_run(s: *const SvocScenario, out: *mut *mut SvocRun) -> SvocStatus {
    guard(|| {
        nonnull!(s);
        nonnull!(out);
        match run_scenario(&(&*s).0) {
            Ok(r) => {
                let status = match &r.error {
                    Some(msg) => {
                        set_error(msg.clone());
                        SvocStatus::Simulation
                    }
                    None => SvocStatus::Ok,
                };
                *out = Box::into_raw(Box::new(SvocRun(r)));
                status
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `r` must be null or a live run handle.
#[no_mangle]
pub unsafe extern "C" fn svoc_run_sample_count(r: *const SvocRun) -> usize {
    r.as_ref().map_or(0, |r| r.0.samples.len())
}

/// # Safety
/// `r` must be a live run handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn svoc_run_sample(
    r: *const SvocRun,
    index: usize,
    out: *mut SvocSample,
) -> SvocStatus {
    guard(|| {
        nonnull!(r);
        nonnull!(out);
        let Some(s) = (&*r).0.samples.get(index) else {
            set_error(format!("sample index {index} out of range"));
            return SvocStatus::InvalidArgument;
        };
        *out = SvocSample {
            t: s.t,
            v: s.v,
            i: s.i,
            p: s.p,
            q: s.q,
            irms: s.irms,
            irms_grid: s.irms_grid,
            fault: s.fault.map(u8::from),
            amp: s.amp,
        };
        SvocStatus::Ok
    })
}

/// Highest sliding rms current seen on each phase.
///
/// # Safety
/// `r` must be a live run handle and `out` must point to 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn svoc_run_peak_irms(r: *const SvocRun, out: *mut f64) -> SvocStatus {
    guard(|| {
        nonnull!(r);
        nonnull!(out);
        ptr::copy_nonoverlapping((&*r).0.peak_irms.as_ptr(), out, 3);
        SvocStatus::Ok
    })
}

/// Writes `<name>.csv` and `<name>.events.log` into `dir`.
///
/// # Safety
/// `r` must be a live run handle and `dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn svoc_run_write(r: *const SvocRun, dir: *const c_char) -> SvocStatus {
    guard(|| {
        nonnull!(r);
        let dir = tri!(str_arg(dir, "dir"));
        match write_run(&(&*r).0, Path::new(dir)) {
            Ok(_) => SvocStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `r` must be null or a live run handle.
#[no_mangle]
pub unsafe extern "C" fn svoc_run_free(r: *mut SvocRun) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Creates a controller with default settings and the given rms current
/// limit, synchronized with a nominal grid at phase angle zero.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn svoc_controller_new(
    kind: SvocControllerKind,
    i_max: f64,
    out: *mut *mut SvocController,
) -> SvocStatus {
    guard(|| {
        nonnull!(out);
        let mut s = Scenario::new("ffi", 1.0);
        s.controller = kind.into();
        s.control = ControllerConfig {
            i_max,
            ..ControllerConfig::default()
        };
        match build_controller(&s) {
            Ok(c) => {
                *out = Box::into_raw(Box::new(SvocController(c)));
                SvocStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Advances the controller by one sampling period (50 µs by default).
/// `v_pcc`, `i_inv`, `p_star`, `q_star` and `v_cmd` each point to 3 doubles.
///
/// # Safety
/// All pointers must be valid for 3 doubles and `c` a live handle.
#[no_mangle]
pub unsafe extern "C" fn svoc_controller_step(
    c: *mut SvocController,
    v_pcc: *const f64,
    i_inv: *const f64,
    p_star: *const f64,
    q_star: *const f64,
    v_cmd: *mut f64,
) -> SvocStatus {
    guard(|| {
        nonnull!(c);
        nonnull!(v_pcc);
        nonnull!(i_inv);
        nonnull!(p_star);
        nonnull!(q_star);
        nonnull!(v_cmd);
        let three = |p: *const f64| {
            let s = std::slice::from_raw_parts(p, 3);
            ThreePhase::new(s[0], s[1], s[2])
        };
        let m = Measurement {
            v_pcc: three(v_pcc),
            i_inv: three(i_inv),
        };
        let sp = PowerSetpoints {
            p_star: three(p_star),
            q_star: three(q_star),
        };
        if ![m.v_pcc, m.i_inv, sp.p_star, sp.q_star]
            .iter()
            .all(|x| x.iter().all(|v| v.is_finite()))
        {
            set_error("non-finite input");
            return SvocStatus::InvalidArgument;
        }
        match (&mut *c).0.tick(&m, &sp) {
            Ok(cmd) => {
                ptr::copy_nonoverlapping([cmd.a, cmd.b, cmd.c].as_ptr(), v_cmd, 3);
                SvocStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Fault flags from the latest step, one byte per phase.
///
/// # Safety
/// `c` must be a live handle and `out` must point to 3 bytes.
#[no_mangle]
pub unsafe extern "C" fn svoc_controller_faults(
    c: *const SvocController,
    out: *mut u8,
) -> SvocStatus {
    guard(|| {
        nonnull!(c);
        nonnull!(out);
        let f = (&*c).0.telemetry().faulty;
        ptr::copy_nonoverlapping([f.a, f.b, f.c].map(u8::from).as_ptr(), out, 3);
        SvocStatus::Ok
    })
}

/// # Safety
/// `c` must be null or a live controller handle.
#[no_mangle]
pub unsafe extern "C" fn svoc_controller_free(c: *mut SvocController) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}
