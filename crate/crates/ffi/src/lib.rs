//! C ABI for the solvers, the test problems and recorded traces.
//!
//! Every function returns an [`IrermStatus`]; on failure a message for the
//! calling thread is available from [`irerm_last_error`]. Objects are opaque
//! handles created by `*_new`/[`irerm_run`] and released by the matching
//! `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use irerm::harness::{trace_csv, SolverSettings};
use irerm::oracle::{NoiseSpec, NoisyLeastSquares};
use irerm::problems::{by_id, LeastSquaresProblem};
use irerm::trace::{RunTrace, SolverKind, Variant};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IrermStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    UnknownProblem = 3,
    Config = 4,
    Solver = 5,
    Io = 6,
    OutOfRange = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IrermSolver {
    Irerm = 0,
    Storm = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IrermVariant {
    V1 = 1,
    V2 = 2,
}

/// Scalars of one iteration. Quantities a solver does not define are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrermRecord {
    pub k: u64,
    pub delta: f64,
    pub theta: f64,
    pub h: f64,
    pub gnorm: f64,
    pub pred: f64,
    pub ared: f64,
    pub success: bool,
    pub samples_charged: u64,
    pub cost_after: u64,
    pub exact_f: f64,
    pub exact_gradnorm: f64,
}

/// A benchmark problem.
pub struct IrermProblem {
    inner: Box<dyn LeastSquaresProblem>,
}

/// Solver kind, variant and parameters.
pub struct IrermConfig {
    inner: SolverSettings,
}

/// The result of one run.
pub struct IrermTrace {
    inner: RunTrace,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(IrermStatus, String);

impl Failure {
    fn new(status: IrermStatus, msg: impl Into<String>) -> Self {
        Self(status, msg.into())
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> IrermStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            IrermStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".to_string());
            IrermStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(IrermStatus::NullPointer, format!("{what} is null")))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure::new(IrermStatus::NullPointer, format!("{what} is null")))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(IrermStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(IrermStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(Failure::new(IrermStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(Failure::new(IrermStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn check_len(len: usize, expected: usize, what: &str) -> Result<(), Failure> {
    if len == expected {
        Ok(())
    } else {
        Err(Failure::new(
            IrermStatus::InvalidArgument,
            format!("{what} has length {len}, expected {expected}"),
        ))
    }
}

/// Message describing the last failure on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn irerm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates problem `id` (`"p1"` … `"p17"` or `"quad"`) of dimension `n`.
///
/// # Safety
/// `id` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn irerm_problem_new(id: *const c_char, n: usize, out: *mut *mut IrermProblem) -> IrermStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let id = string(id, "id")?;
        let inner = by_id(id, n).map_err(|e| Failure::new(IrermStatus::UnknownProblem, e.to_string()))?;
        *out = Box::into_raw(Box::new(IrermProblem { inner }));
        Ok(())
    })
}

/// # Safety
/// `problem` must come from [`irerm_problem_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn irerm_problem_free(problem: *mut IrermProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// # Safety
/// `problem` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn irerm_problem_dim(problem: *const IrermProblem, out: *mut usize) -> IrermStatus {
    guard(|| {
        *deref_mut(out, "out")? = deref(problem, "problem")?.inner.dim();
        Ok(())
    })
}

/// Writes the starting point into `x[0..len]`; `len` must equal the dimension.
///
/// # Safety
/// `x` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn irerm_problem_initial_point(
    problem: *const IrermProblem,
    x: *mut f64,
    len: usize,
) -> IrermStatus {
    guard(|| {
        let p = &deref(problem, "problem")?.inner;
        check_len(len, p.dim(), "x")?;
        slice_mut(x, len, "x")?.copy_from_slice(&p.initial_point());
        Ok(())
    })
}

/// Exact objective `Σ f_i(x)²`.
///
/// # Safety
/// `x` must point to `len` doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn irerm_problem_value(
    problem: *const IrermProblem,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> IrermStatus {
    guard(|| {
        let p = &deref(problem, "problem")?.inner;
        check_len(len, p.dim(), "x")?;
        *deref_mut(out, "out")? = p.value(slice(x, len, "x")?);
        Ok(())
    })
}

/// Exact gradient, written into `g[0..len]`.
///
/// # Safety
/// `x` and `g` must each point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn irerm_problem_gradient(
    problem: *const IrermProblem,
    x: *const f64,
    g: *mut f64,
    len: usize,
) -> IrermStatus {
    guard(|| {
        let p = &deref(problem, "problem")?.inner;
        check_len(len, p.dim(), "x")?;
        let grad = p.gradient(slice(x, len, "x")?);
        slice_mut(g, len, "g")?.copy_from_slice(&grad);
        Ok(())
    })
}

/// Default configuration of `solver`/`variant` for dimension `n`, including
/// the default budget.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn irerm_config_new(
    solver: IrermSolver,
    variant: IrermVariant,
    n: usize,
    out: *mut *mut IrermConfig,
) -> IrermStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let solver = match solver {
            IrermSolver::Irerm => SolverKind::Irerm,
            IrermSolver::Storm => SolverKind::Storm,
        };
        let variant = match variant {
            IrermVariant::V1 => Variant::V1,
            IrermVariant::V2 => Variant::V2,
        };
        *out = Box::into_raw(Box::new(IrermConfig {
            inner: SolverSettings::new(solver, variant, n),
        }));
        Ok(())
    })
}

/// Sets one parameter, e.g. `("eta1", "0.2")` or `("budget", "5000")`.
/// The whole configuration is validated before the call returns; on failure
/// it is left unchanged.
///
/// # Safety
/// `key` and `value` must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn irerm_config_set(
    config: *mut IrermConfig,
    key: *const c_char,
    value: *const c_char,
) -> IrermStatus {
    guard(|| {
        let config = deref_mut(config, "config")?;
        let key = string(key, "key")?;
        let value = string(value, "value")?;
        let mut next = config.inner.clone();
        next.set(key, value)
            .and_then(|_| next.validate())
            .map_err(|e| Failure::new(IrermStatus::Config, e.to_string()))?;
        config.inner = next;
        Ok(())
    })
}

/// # Safety
/// `config` must come from [`irerm_config_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn irerm_config_free(config: *mut IrermConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs the configured solver on `problem` with multiplicative noise of
/// amplitude `sigma` and the random stream seeded by `seed`.
///
/// # Safety
/// All pointers must be valid; `out` receives a new trace handle.
#[no_mangle]
pub unsafe extern "C" fn irerm_run(
    problem: *const IrermProblem,
    config: *const IrermConfig,
    sigma: f64,
    seed: u64,
    out: *mut *mut IrermTrace,
) -> IrermStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let p = &deref(problem, "problem")?.inner;
        let settings = &deref(config, "config")?.inner;
        let noise =
            NoiseSpec::new(sigma, seed).map_err(|e| Failure::new(IrermStatus::InvalidArgument, e.to_string()))?;
        let oracle = NoisyLeastSquares::new(p.as_ref(), noise);
        let trace = settings
            .run(&oracle, p.id(), seed)
            .map_err(|e| Failure::new(IrermStatus::Solver, e.to_string()))?;
        *out = Box::into_raw(Box::new(IrermTrace { inner: trace }));
        Ok(())
    })
}

/// # Safety
/// `trace` must come from [`irerm_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn irerm_trace_free(trace: *mut IrermTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// # Safety
/// `trace` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn irerm_trace_iterations(trace: *const IrermTrace, out: *mut usize) -> IrermStatus {
    guard(|| {
        *deref_mut(out, "out")? = deref(trace, "trace")?.inner.iterations();
        Ok(())
    })
}

/// Exact objective at the final iterate.
///
/// # Safety
/// `trace` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn irerm_trace_final_f(trace: *const IrermTrace, out: *mut f64) -> IrermStatus {
    guard(|| {
        *deref_mut(out, "out")? = deref(trace, "trace")?.inner.final_exact_f();
        Ok(())
    })
}

/// Samples charged over the whole run.
///
/// # Safety
/// `trace` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn irerm_trace_final_cost(trace: *const IrermTrace, out: *mut u64) -> IrermStatus {
    guard(|| {
        *deref_mut(out, "out")? = deref(trace, "trace")?.inner.final_cost();
        Ok(())
    })
}

/// # Safety
/// `x` must point to `len` writable doubles; `len` must equal the dimension.
#[no_mangle]
pub unsafe extern "C" fn irerm_trace_final_x(trace: *const IrermTrace, x: *mut f64, len: usize) -> IrermStatus {
    guard(|| {
        let last = &deref(trace, "trace")?.inner.last.x;
        check_len(len, last.len(), "x")?;
        slice_mut(x, len, "x")?.copy_from_slice(last);
        Ok(())
    })
}

/// Scalars of iteration `k`.
///
/// # Safety
/// `trace` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn irerm_trace_record(trace: *const IrermTrace, k: usize, out: *mut IrermRecord) -> IrermStatus {
    guard(|| {
        let records = &deref(trace, "trace")?.inner.records;
        let out = deref_mut(out, "out")?;
        let r = records.get(k).ok_or_else(|| {
            Failure::new(
                IrermStatus::OutOfRange,
                format!("iteration {k} out of range, trace has {}", records.len()),
            )
        })?;
        *out = IrermRecord {
            k: r.k as u64,
            delta: r.delta,
            theta: r.theta.unwrap_or(f64::NAN),
            h: r.h_k.unwrap_or(f64::NAN),
            gnorm: r.gnorm,
            pred: r.pred.unwrap_or(f64::NAN),
            ared: r.ared.unwrap_or(f64::NAN),
            success: r.success,
            samples_charged: r.samples_charged,
            cost_after: r.cost_after,
            exact_f: r.exact_f,
            exact_gradnorm: r.exact_gradnorm,
        };
        Ok(())
    })
}

/// Number of invariant violations of `trace` under `config`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn irerm_trace_check(
    trace: *const IrermTrace,
    config: *const IrermConfig,
    out: *mut usize,
) -> IrermStatus {
    guard(|| {
        let trace = &deref(trace, "trace")?.inner;
        let settings = &deref(config, "config")?.inner;
        *deref_mut(out, "out")? = settings.check(trace).len();
        Ok(())
    })
}

/// Writes the per-iteration CSV the benchmark harness produces.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn irerm_trace_write_csv(trace: *const IrermTrace, path: *const c_char) -> IrermStatus {
    guard(|| {
        let trace = &deref(trace, "trace")?.inner;
        let path = string(path, "path")?;
        std::fs::write(path, trace_csv(trace)).map_err(|e| Failure::new(IrermStatus::Io, format!("{path}: {e}")))
    })
}
