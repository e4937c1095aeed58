//! C ABI for the `obo` library.
//!
//! Every fallible function returns an [`OboStatus`]; on failure a message is
//! available from [`obo_last_error`] on the same thread. Handles are opaque
//! and must be released with their `_free` function. Vectors and matrices are
//! passed as `double` buffers with explicit lengths; matrices are row-major.
//! Panics never cross the boundary; they are reported as `OBO_STATUS_PANIC`.

// Negated comparisons like `!(x > 0.0)` are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use obo::config::Domain;
use obo::linear_solver::{q_at, solve_cg, solve_fixed_step, QSchedule};
use obo::optimizers::{project, step, IterateState, OracleWindow, StepLog};
use obo::problems::ProblemStream;
use obo::runner::{initial_point, run_experiment, ExperimentConfig};
use obo::{Matrix, OboError, Vector};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OboStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The experiment configuration was rejected.
    Config = 3,
    /// An argument was out of range or had the wrong dimension.
    Argument = 4,
    /// A non-finite value or solver breakdown.
    Numerical = 5,
    Io = 6,
    /// The session has already completed its last round.
    Finished = 7,
    /// Any other library error.
    Runtime = 8,
    Panic = 9,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &OboError) -> OboStatus {
    match e {
        OboError::Config(_) => OboStatus::Config,
        OboError::Argument(_) | OboError::Dimension { .. } | OboError::Domain(_) => OboStatus::Argument,
        OboError::Numerical { .. } | OboError::SolverBreakdown { .. } | OboError::Convergence { .. } => {
            OboStatus::Numerical
        }
        OboError::Io(_) => OboStatus::Io,
        _ => OboStatus::Runtime,
    }
}

struct Failure(OboStatus, String);

impl From<OboError> for Failure {
    fn from(e: OboError) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn fail(status: OboStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

/// Runs `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> OboStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            OboStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            OboStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(fail(OboStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    non_null(p, what)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(OboStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, what)?;
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    non_null(p, what)?;
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn write_out<T>(p: *mut T, value: T, what: &str) -> Result<(), Failure> {
    non_null(p, what)?;
    p.write(value);
    Ok(())
}

/// Message for the last failed call on this thread, or null after a
/// successful call. Valid until the next `obo_*` call on this thread.
#[no_mangle]
pub extern "C" fn obo_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn obo_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---------------------------------------------------------------------------
// Experiments

/// A parsed and validated experiment configuration.
pub struct OboExperiment {
    cfg: ExperimentConfig,
}

/// Summary numbers of a completed run. Metrics that were disabled or could
/// not be computed are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct OboRunResult {
    pub rounds_completed: usize,
    pub horizon: usize,
    pub final_blr_cumulative: f64,
    pub mean_hg_error_last_10pct: f64,
    /// Round at which the run stopped on an error, or 0 if it finished.
    pub failed_round: usize,
}

fn new_experiment(cfg: ExperimentConfig, out: *mut *mut OboExperiment) -> Result<(), Failure> {
    cfg.validate()?;
    let handle = Box::into_raw(Box::new(OboExperiment { cfg }));
    unsafe { write_out(out, handle, "out") }
}

/// Parses and validates a TOML configuration.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn obo_experiment_from_toml(toml: *const c_char, out: *mut *mut OboExperiment) -> OboStatus {
    guard(|| {
        non_null(out, "out")?;
        let cfg = ExperimentConfig::from_toml_str(str_arg(toml, "toml")?)?;
        new_experiment(cfg, out)
    })
}

/// Reads, parses and validates a TOML configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn obo_experiment_from_file(path: *const c_char, out: *mut *mut OboExperiment) -> OboStatus {
    guard(|| {
        non_null(out, "out")?;
        let cfg = ExperimentConfig::from_file(std::path::Path::new(str_arg(path, "path")?))?;
        new_experiment(cfg, out)
    })
}

/// Overrides the master seed.
///
/// # Safety
/// `exp` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn obo_experiment_set_seed(exp: *mut OboExperiment, seed: u64) -> OboStatus {
    guard(|| {
        non_null(exp, "experiment")?;
        (*exp).cfg.seed = seed;
        Ok(())
    })
}

/// Runs the experiment and writes `<run_id>.csv` and `<run_id>.summary.json`
/// into `output_dir`, or into the configured directory when it is null.
///
/// A run that stops on a numerical failure still writes its artifacts and
/// returns `OBO_STATUS_OK`; check `failed_round` in the result.
///
/// # Safety
/// `exp` must be a live handle, `output_dir` null or a NUL-terminated string,
/// and `result` null or writable.
#[no_mangle]
pub unsafe extern "C" fn obo_experiment_run(
    exp: *const OboExperiment,
    output_dir: *const c_char,
    result: *mut OboRunResult,
) -> OboStatus {
    guard(|| {
        non_null(exp, "experiment")?;
        let mut cfg = (*exp).cfg.clone();
        if !output_dir.is_null() {
            cfg.output_dir = PathBuf::from(str_arg(output_dir, "output_dir")?);
        }
        let outcome = run_experiment(&cfg)?;
        let s = &outcome.data.summary;
        if !result.is_null() {
            result.write(OboRunResult {
                rounds_completed: s.rounds_completed,
                horizon: s.horizon,
                final_blr_cumulative: s.final_blr_cumulative.unwrap_or(f64::NAN),
                mean_hg_error_last_10pct: s.mean_hg_error_last_10pct.unwrap_or(f64::NAN),
                failed_round: s.error.as_ref().map_or(0, |e| e.round),
            });
        }
        Ok(())
    })
}

/// Releases an experiment handle. Null is ignored.
///
/// # Safety
/// `exp` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn obo_experiment_free(exp: *mut OboExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

// ---------------------------------------------------------------------------
// Sessions

/// An experiment advanced one round at a time, without metrics or output.
/// It starts from the same initial point and produces the same iterates as a
/// full run of the same configuration.
pub struct OboSession {
    cfg: ExperimentConfig,
    stream: Box<dyn ProblemStream>,
    state: Option<IterateState>,
    past: OracleWindow,
    last: Option<StepLog>,
}

/// Starts a session at round 1.
///
/// # Safety
/// `exp` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn obo_session_new(exp: *const OboExperiment, out: *mut *mut OboSession) -> OboStatus {
    guard(|| {
        non_null(exp, "experiment")?;
        non_null(out, "out")?;
        let cfg = (*exp).cfg.clone();
        let stream = cfg.validate()?;
        let (x1, y1) = initial_point(&cfg, stream.dim_x(), stream.dim_y());
        let state = IterateState::new(x1, y1, &cfg.optimizer_cfg)?;
        let session = OboSession {
            past: OracleWindow::new(cfg.optimizer_cfg.k_window),
            cfg,
            stream,
            state: Some(state),
            last: None,
        };
        out.write(Box::into_raw(Box::new(session)));
        Ok(())
    })
}

fn live_state(s: &OboSession) -> Result<&IterateState, Failure> {
    s.state
        .as_ref()
        .ok_or_else(|| fail(OboStatus::Runtime, "session stopped after a failed round"))
}

/// Runs the next round. Returns `OBO_STATUS_FINISHED` once every round of the
/// horizon has run. After any other failure the session cannot continue.
///
/// # Safety
/// `session` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn obo_session_step(session: *mut OboSession) -> OboStatus {
    guard(|| {
        non_null(session, "session")?;
        let s = &mut *session;
        let t = live_state(s)?.t;
        if t > s.stream.horizon() {
            return Err(fail(OboStatus::Finished, format!("all {} rounds done", s.stream.horizon())));
        }
        let oracle = s.stream.oracle(t)?;
        let state = s.state.take().expect("checked above");
        let (next, log) = step(s.cfg.optimizer, state, &oracle, &mut s.past, &s.cfg.optimizer_cfg)?;
        s.state = Some(next);
        s.last = Some(log);
        Ok(())
    })
}

/// The round the next call to `obo_session_step` will run (1-based).
///
/// # Safety
/// `session` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn obo_session_round(session: *const OboSession, out: *mut usize) -> OboStatus {
    guard(|| {
        non_null(session, "session")?;
        write_out(out, live_state(&*session)?.t, "out")
    })
}

/// Writes the horizon, the outer dimension and the inner dimension.
///
/// # Safety
/// `session` must be a live handle; each output pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn obo_session_shape(
    session: *const OboSession,
    horizon: *mut usize,
    dim_x: *mut usize,
    dim_y: *mut usize,
) -> OboStatus {
    guard(|| {
        non_null(session, "session")?;
        let stream = &(*session).stream;
        for (p, v) in [(horizon, stream.horizon()), (dim_x, stream.dim_x()), (dim_y, stream.dim_y())] {
            if !p.is_null() {
                p.write(v);
            }
        }
        Ok(())
    })
}

unsafe fn copy_vector(v: &Vector, out: *mut f64, len: usize) -> Result<(), Failure> {
    if len != v.len() {
        return Err(fail(
            OboStatus::Argument,
            format!("buffer holds {len} values, vector has {}", v.len()),
        ));
    }
    slice_out(out, len, "out")?.copy_from_slice(v.as_slice());
    Ok(())
}

/// Copies the current outer iterate into `out`, which must hold exactly
/// `dim_x` values.
///
/// # Safety
/// `session` must be a live handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn obo_session_x(session: *const OboSession, out: *mut f64, len: usize) -> OboStatus {
    guard(|| {
        non_null(session, "session")?;
        copy_vector(&live_state(&*session)?.x, out, len)
    })
}

/// Copies the current inner iterate into `out`, which must hold exactly
/// `dim_y` values.
///
/// # Safety
/// `session` must be a live handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn obo_session_y(session: *const OboSession, out: *mut f64, len: usize) -> OboStatus {
    guard(|| {
        non_null(session, "session")?;
        copy_vector(&live_state(&*session)?.y, out, len)
    })
}

/// Copies the hypergradient estimate of the most recent round into `out`
/// (`dim_x` values). Fails before the first step.
///
/// # Safety
/// `session` must be a live handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn obo_session_last_hypergrad(
    session: *const OboSession,
    out: *mut f64,
    len: usize,
) -> OboStatus {
    guard(|| {
        non_null(session, "session")?;
        let log = (*session)
            .last
            .as_ref()
            .ok_or_else(|| fail(OboStatus::Runtime, "no round has run yet"))?;
        copy_vector(&log.record.grad, out, len)
    })
}

/// Releases a session handle. Null is ignored.
///
/// # Safety
/// `session` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn obo_session_free(session: *mut OboSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

// ---------------------------------------------------------------------------
// Stateless helpers

unsafe fn square_matrix(h: *const f64, n: usize) -> Result<Matrix, Failure> {
    let entries = slice_arg(h, n * n, "matrix")?;
    Ok(Matrix::from_row_slice(n, n, entries))
}

unsafe fn start_vector(v0: *const f64, n: usize) -> Result<Vector, Failure> {
    if v0.is_null() {
        Ok(Vector::zeros(n))
    } else {
        Ok(Vector::from_column_slice(slice_arg(v0, n, "v0")?))
    }
}

/// `q` fixed-step iterations `v ← v − λ (H v − b)` on the `n × n` row-major
/// matrix `h`. `v0` may be null to start from zero. Writes `n` values to `out`.
///
/// # Safety
/// `h` must hold `n*n` values, `b` and `out` `n` values, `v0` null or `n` values.
#[no_mangle]
pub unsafe extern "C" fn obo_solve_fixed_step(
    h: *const f64,
    n: usize,
    b: *const f64,
    v0: *const f64,
    lambda: f64,
    q: usize,
    out: *mut f64,
) -> OboStatus {
    guard(|| {
        let h = square_matrix(h, n)?;
        let b = Vector::from_column_slice(slice_arg(b, n, "b")?);
        let v = solve_fixed_step(&h, &b, &start_vector(v0, n)?, lambda, q)?;
        slice_out(out, n, "out")?.copy_from_slice(v.as_slice());
        Ok(())
    })
}

/// Conjugate gradient on the `n × n` row-major SPD matrix `h`, stopping once
/// `‖r‖ <= tol ‖b‖` or after `max_iters` iterations. `v0` may be null.
/// `iterations` and `residual_norm` may be null.
///
/// # Safety
/// `h` must hold `n*n` values, `b` and `out` `n` values, `v0` null or `n` values.
#[no_mangle]
pub unsafe extern "C" fn obo_solve_cg(
    h: *const f64,
    n: usize,
    b: *const f64,
    v0: *const f64,
    max_iters: usize,
    tol: f64,
    out: *mut f64,
    iterations: *mut usize,
    residual_norm: *mut f64,
) -> OboStatus {
    guard(|| {
        let h = square_matrix(h, n)?;
        let b = Vector::from_column_slice(slice_arg(b, n, "b")?);
        let sol = solve_cg(&h, &b, &start_vector(v0, n)?, max_iters, tol)?;
        slice_out(out, n, "out")?.copy_from_slice(sol.solution.as_slice());
        if !iterations.is_null() {
            iterations.write(sol.iterations);
        }
        if !residual_norm.is_null() {
            residual_norm.write(sol.residual_norm);
        }
        Ok(())
    })
}

unsafe fn project_in_place(x: *mut f64, n: usize, domain: &Domain) -> Result<(), Failure> {
    let buf = slice_out(x, n, "x")?;
    let projected = project(&Vector::from_column_slice(buf), domain)?;
    buf.copy_from_slice(projected.as_slice());
    Ok(())
}

/// Projects `x` (length `n`) in place onto the Euclidean ball of the given
/// radius around `center`; a null `center` means the origin.
///
/// # Safety
/// `x` must hold `n` values and `center` be null or hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn obo_project_ball(x: *mut f64, n: usize, center: *const f64, radius: f64) -> OboStatus {
    guard(|| {
        let center = if center.is_null() {
            vec![0.0]
        } else {
            slice_arg(center, n, "center")?.to_vec()
        };
        project_in_place(x, n, &Domain::Ball { center, radius })
    })
}

/// Clamps `x` (length `n`) in place to `[lo_i, hi_i]` coordinate-wise.
///
/// # Safety
/// `x`, `lo` and `hi` must each hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn obo_project_box(x: *mut f64, n: usize, lo: *const f64, hi: *const f64) -> OboStatus {
    guard(|| {
        let lo = slice_arg(lo, n, "lo")?.to_vec();
        let hi = slice_arg(hi, n, "hi")?.to_vec();
        project_in_place(x, n, &Domain::Box { lo, hi })
    })
}

/// Solver budget `min(q_max, q0 + ceil((t - 1) * q_increment))` at round `t >= 1`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn obo_q_at(q0: usize, q_increment: f64, q_max: usize, t: usize, out: *mut usize) -> OboStatus {
    guard(|| {
        if !(q_increment >= 0.0) {
            return Err(fail(OboStatus::Argument, format!("q_increment must be >= 0, got {q_increment}")));
        }
        let q = q_at(&QSchedule { q0, q_increment, q_max }, t)?;
        write_out(out, q, "out")
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_are_contained() {
        let status = guard(|| panic!("boom"));
        assert_eq!(status, OboStatus::Panic);
        let msg = unsafe { CStr::from_ptr(obo_last_error()) }.to_str().unwrap();
        assert_eq!(msg, "panic: boom");
    }

    #[test]
    fn success_clears_the_last_error() {
        set_error("stale");
        assert_eq!(guard(|| Ok(())), OboStatus::Ok);
        assert!(obo_last_error().is_null());
    }

    #[test]
    fn error_kinds_map_to_statuses() {
        assert_eq!(status_of(&OboError::Config("x".into())), OboStatus::Config);
        assert_eq!(status_of(&OboError::Domain("x".into())), OboStatus::Argument);
        assert_eq!(
            status_of(&OboError::SolverBreakdown {
                iteration: 1,
                curvature: 0.0
            }),
            OboStatus::Numerical
        );
        assert_eq!(status_of(&OboError::EmptyWindow), OboStatus::Runtime);
    }

    #[test]
    fn interior_nul_in_messages_is_replaced() {
        set_error("a\0b");
        let msg = unsafe { CStr::from_ptr(obo_last_error()) }.to_str().unwrap();
        assert_eq!(msg, "a b");
    }

    #[test]
    fn version_matches_the_crate() {
        let v = unsafe { CStr::from_ptr(obo_version()) }.to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }
}
