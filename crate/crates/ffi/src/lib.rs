//! C ABI for `huberloc`.
//!
//! Scenarios are opaque handles created by `hl_scenario_*` constructors and
//! released with [`hl_scenario_free`]. Every fallible call returns an
//! [`HlStatus`]; on failure a message is kept per thread and can be copied
//! out with [`hl_last_error_message`]. Positions are exchanged as row-major
//! `node_count * dim` arrays of doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use huberloc::gossip::{ActivationSequence, AsyncOptions, AsyncSolver};
use huberloc::huber::huber_loss;
use huberloc::netmodel::{generate_geometric_network, GeometricNetworkConfig, Points, Scenario};
use huberloc::run::{Init, TraceRow};
use huberloc::sync::{SyncOptions, SyncSolver};
use huberloc::Error;

/// Result codes of the C interface.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidScenario = 3,
    Io = 4,
    Parse = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Opaque scenario handle.
pub struct HlScenario {
    inner: Scenario,
}

/// Summary of a solver run.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HlSolveInfo {
    /// Synchronous rounds or asynchronous activations.
    pub iterations: usize,
    /// Scalar deliveries between neighbors.
    pub messages: u64,
    pub final_cost: f64,
    pub converged: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn fail(status: HlStatus, msg: impl Into<String>) -> HlStatus {
    set_error(msg.into());
    status
}

fn status_of(err: &Error) -> HlStatus {
    match err {
        Error::InvalidArgument(_) => HlStatus::InvalidArgument,
        Error::InvalidScenario(_) | Error::Generation { .. } | Error::NoAnchors => HlStatus::InvalidScenario,
        Error::Io { .. } => HlStatus::Io,
        Error::Parse(_) | Error::Csv(_) => HlStatus::Parse,
    }
}

fn guard(body: impl FnOnce() -> Result<(), HlStatus>) -> HlStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => HlStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(HlStatus::Panic, "internal panic"),
    }
}

fn lift<T>(result: huberloc::Result<T>) -> Result<T, HlStatus> {
    result.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, HlStatus> {
    if s.is_null() {
        return Err(fail(HlStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(HlStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn scenario<'a>(s: *const HlScenario) -> Result<&'a Scenario, HlStatus> {
    s.as_ref()
        .map(|h| &h.inner)
        .ok_or_else(|| fail(HlStatus::NullPointer, "scenario handle is null"))
}

unsafe fn hand_out(out: *mut *mut HlScenario, inner: Scenario) -> Result<(), HlStatus> {
    *out = Box::into_raw(Box::new(HlScenario { inner }));
    Ok(())
}

fn null_out(out: *mut *mut HlScenario) -> Result<(), HlStatus> {
    if out.is_null() {
        Err(fail(HlStatus::NullPointer, "output handle pointer is null"))
    } else {
        Ok(())
    }
}

/// Copies the calling thread's last error message into `buf` (truncated and
/// NUL-terminated) and returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn hl_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Huber function `h_R(t)`.
#[no_mangle]
pub extern "C" fn hl_huber_loss(t: f64, radius: f64) -> f64 {
    huber_loss(t, radius)
}

/// Parses a scenario JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hl_scenario_from_json(json: *const c_char, out: *mut *mut HlScenario) -> HlStatus {
    guard(|| {
        null_out(out)?;
        let s = lift(Scenario::from_json(text(json, "json")?))?;
        hand_out(out, s)
    })
}

/// Loads a scenario JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hl_scenario_load(path: *const c_char, out: *mut *mut HlScenario) -> HlStatus {
    guard(|| {
        null_out(out)?;
        let s = lift(Scenario::load(text(path, "path")?))?;
        hand_out(out, s)
    })
}

/// Noiseless random network in the unit square with corner anchors.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hl_scenario_generate(
    nodes: usize,
    comm_radius: f64,
    huber_radius: f64,
    seed: u64,
    out: *mut *mut HlScenario,
) -> HlStatus {
    guard(|| {
        null_out(out)?;
        let mut cfg = GeometricNetworkConfig::unit_square(nodes, comm_radius, seed);
        cfg.huber_radius = huber_radius;
        let s = lift(generate_geometric_network(&cfg))?;
        hand_out(out, s)
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `s` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hl_scenario_free(s: *mut HlScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Number of sensors, or 0 for a null handle.
///
/// # Safety
/// `s` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hl_scenario_node_count(s: *const HlScenario) -> usize {
    s.as_ref().map_or(0, |h| h.inner.node_count())
}

/// Spatial dimension, or 0 for a null handle.
///
/// # Safety
/// `s` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hl_scenario_dim(s: *const HlScenario) -> usize {
    s.as_ref().map_or(0, |h| h.inner.dim())
}

/// Lipschitz constant of the relaxed cost gradient.
///
/// # Safety
/// `s` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hl_scenario_lipschitz(s: *const HlScenario, out: *mut f64) -> HlStatus {
    guard(|| {
        let s = scenario(s)?;
        if out.is_null() {
            return Err(fail(HlStatus::NullPointer, "output pointer is null"));
        }
        *out = lift(SyncSolver::new(s))?.lipschitz();
        Ok(())
    })
}

/// Copies the true sensor positions into `positions`.
///
/// # Safety
/// `s` must be a live handle; `positions` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hl_scenario_truth(s: *const HlScenario, positions: *mut f64, len: usize) -> HlStatus {
    guard(|| {
        let s = scenario(s)?;
        write_positions(s.truth(), positions, len)
    })
}

unsafe fn write_positions(p: &Points, out: *mut f64, len: usize) -> Result<(), HlStatus> {
    if out.is_null() {
        return Err(fail(HlStatus::NullPointer, "position buffer is null"));
    }
    let src = p.as_slice();
    if len < src.len() {
        return Err(fail(
            HlStatus::BufferTooSmall,
            format!("position buffer holds {len} doubles, {} needed", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

unsafe fn write_info(info: *mut HlSolveInfo, last: &TraceRow, converged: bool) {
    if let Some(info) = info.as_mut() {
        *info = HlSolveInfo {
            iterations: last.iter,
            messages: last.messages_cumulative,
            final_cost: last.cost,
            converged,
        };
    }
}

/// Runs the synchronous solver from a random start drawn with `init_seed`
/// and writes the estimates into `positions`. `info` may be null.
///
/// # Safety
/// `s` must be a live handle; `positions` must hold `len` doubles; `info`
/// must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn hl_solve_sync(
    s: *const HlScenario,
    init_seed: u64,
    max_iters: usize,
    tol: f64,
    positions: *mut f64,
    len: usize,
    info: *mut HlSolveInfo,
) -> HlStatus {
    guard(|| {
        let s = scenario(s)?;
        if !(tol > 0.0) {
            return Err(fail(HlStatus::InvalidArgument, "tolerance must be positive"));
        }
        let opts = SyncOptions { max_iters, tol, ..SyncOptions::default() };
        let out = lift(lift(SyncSolver::new(s))?.run(&Init::Random { seed: init_seed }, &opts))?;
        write_positions(&out.positions, positions, len)?;
        write_info(info, out.trace.last().expect("trace has the starting row"), out.converged);
        Ok(())
    })
}

/// Runs the asynchronous solver with uniform activations drawn with
/// `activation_seed`. `message_budget` of 0 means no budget.
///
/// # Safety
/// As for [`hl_solve_sync`].
#[no_mangle]
pub unsafe extern "C" fn hl_solve_async(
    s: *const HlScenario,
    init_seed: u64,
    activation_seed: u64,
    max_steps: usize,
    tol: f64,
    message_budget: u64,
    positions: *mut f64,
    len: usize,
    info: *mut HlSolveInfo,
) -> HlStatus {
    guard(|| {
        let s = scenario(s)?;
        let opts = AsyncOptions {
            max_steps,
            tol,
            message_budget: (message_budget > 0).then_some(message_budget),
            ..AsyncOptions::default()
        };
        let mut seq = lift(ActivationSequence::uniform(s.node_count(), activation_seed))?;
        let solver = lift(AsyncSolver::new(s))?;
        let out = lift(solver.run(&Init::Random { seed: init_seed }, &mut seq, &opts))?;
        write_positions(&out.positions, positions, len)?;
        write_info(info, out.trace.last().expect("trace has the starting row"), out.converged);
        Ok(())
    })
}

