//! C ABI for the idarr solvers.
//!
//! Operators and solutions are opaque handles owned by the caller and
//! released with the matching `*_free` function. Every fallible call returns
//! an [`IdarrStatus`]; on failure [`idarr_last_error`] describes the error
//! for the calling thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;
use std::sync::Arc;

use idarr::harness::{run_method, Method};
use idarr::linops::{DenseMap, DiagonalMap, LinearMap, PsfConvolutionMap};
use idarr::problems::{make_fredholm, KernelId, TestProblem};
use idarr::solver::{CornerRule, SolveStatus, StopRule};
use idarr::{Error, RkhsGeometry};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdarrStatus {
    Ok = 0,
    NullPointer = 1,
    Dimension = 2,
    InvalidArgument = 3,
    Numerical = 4,
    Io = 5,
    State = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdarrMethod {
    Idarr = 0,
    /// LSQR in the Euclidean norm.
    IrL2Euclidean = 1,
    /// LSQR in the `x^T B x` norm.
    IrL2Basis = 2,
    L2Direct = 3,
    BasisDirect = 4,
    Dartr = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdarrStopKind {
    Lcurve = 0,
    Discrepancy = 1,
    Fixed = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdarrKernel {
    ExpDecay = 0,
    PolyDecay = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdarrSolveStatus {
    Stopped = 0,
    Terminated = 1,
    NotConverged = 2,
    WeakCorner = 3,
    /// Direct methods.
    Direct = 4,
}

/// Stopping rule. Fields not used by `kind` are ignored.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdarrStopRule {
    pub kind: IdarrStopKind,
    pub min_iters: usize,
    pub max_iters: usize,
    /// Iteration count for `Fixed`.
    pub k: usize,
    /// `||w||_2` for `Discrepancy`.
    pub noise_norm: f64,
    pub tau: f64,
    /// Nonzero selects the three-point max-curvature corner.
    pub max_curvature: i32,
}

/// Forward operator plus its basis weights.
pub struct IdarrOperator {
    map: Arc<dyn LinearMap>,
    basis: Option<Vec<f64>>,
}

/// Result of [`idarr_solve`].
pub struct IdarrSolution {
    x: Vec<f64>,
    k_stop: usize,
    status: IdarrSolveStatus,
    residuals: Vec<f64>,
    norms: Vec<f64>,
    lambda: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> IdarrStatus {
    match err {
        Error::Dimension { .. } => IdarrStatus::Dimension,
        Error::Io { .. } | Error::Format { .. } => IdarrStatus::Io,
        Error::State(_) | Error::InsufficientHistory(_) => IdarrStatus::State,
        e if e.is_numerical() => IdarrStatus::Numerical,
        _ => IdarrStatus::InvalidArgument,
    }
}

/// Runs `f`, records failures and converts panics.
fn guard(f: impl FnOnce() -> Result<(), (IdarrStatus, String)>) -> IdarrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IdarrStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            IdarrStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (IdarrStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (IdarrStatus, String) {
    (IdarrStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `p` must be null or point to `len` readable values.
unsafe fn input<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (IdarrStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

fn emit_operator(out: *mut *mut IdarrOperator, map: Arc<dyn LinearMap>) -> Result<(), (IdarrStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    let handle = Box::new(IdarrOperator { map, basis: None });
    // SAFETY: checked non-null above; the caller provides writable storage.
    unsafe { *out = Box::into_raw(handle) };
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn idarr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn idarr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default L-curve rule (10 to 30 iterations, adaptive pruning corner).
#[no_mangle]
pub extern "C" fn idarr_stop_default() -> IdarrStopRule {
    IdarrStopRule {
        kind: IdarrStopKind::Lcurve,
        min_iters: StopRule::DEFAULT_MIN_ITERS,
        max_iters: StopRule::DEFAULT_MAX_ITERS,
        k: 0,
        noise_norm: 0.0,
        tau: idarr::harness::DP_TAU,
        max_curvature: 0,
    }
}

/// Dense `rows x cols` operator from row-major entries.
///
/// # Safety
/// `entries` must point to `rows * cols` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn idarr_operator_dense(
    rows: usize,
    cols: usize,
    entries: *const f64,
    out: *mut *mut IdarrOperator,
) -> IdarrStatus {
    guard(|| {
        let len = rows.checked_mul(cols).ok_or((IdarrStatus::Dimension, "size overflow".into()))?;
        let data = input(entries, len, "entries")?.to_vec();
        let map = DenseMap::from_row_major(rows, cols, data).map_err(lib_err)?;
        emit_operator(out, Arc::new(map))
    })
}

/// Diagonal operator.
///
/// # Safety
/// `diag` must point to `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn idarr_operator_diagonal(
    n: usize,
    diag: *const f64,
    out: *mut *mut IdarrOperator,
) -> IdarrStatus {
    guard(|| {
        let d = input(diag, n, "diag")?.to_vec();
        let map = DiagonalMap::new(d).map_err(lib_err)?;
        emit_operator(out, Arc::new(map))
    })
}

/// Discretized Fredholm operator of the benchmark kernels on `m`
/// observation and `n` source points.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn idarr_operator_fredholm(
    kernel: IdarrKernel,
    m: usize,
    n: usize,
    out: *mut *mut IdarrOperator,
) -> IdarrStatus {
    guard(|| {
        let kernel = match kernel {
            IdarrKernel::ExpDecay => KernelId::ExpDecay,
            IdarrKernel::PolyDecay => KernelId::PolyDecay,
        };
        let setup = make_fredholm(kernel, m, n).map_err(lib_err)?;
        emit_operator(out, setup.dense)
    })
}

/// Zero-boundary Gaussian blur of a `side x side` image.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn idarr_operator_gaussian_blur(
    side: usize,
    width: f64,
    out: *mut *mut IdarrOperator,
) -> IdarrStatus {
    guard(|| {
        let map = PsfConvolutionMap::gaussian(side, width).map_err(lib_err)?;
        emit_operator(out, Arc::new(map))
    })
}

/// Releases an operator. Null is ignored.
///
/// # Safety
/// `op` must come from an `idarr_operator_*` constructor and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn idarr_operator_free(op: *mut IdarrOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// Rows of the operator, 0 for null.
///
/// # Safety
/// `op` must be null or a live operator handle.
#[no_mangle]
pub unsafe extern "C" fn idarr_operator_rows(op: *const IdarrOperator) -> usize {
    op.as_ref().map_or(0, |o| o.map.rows())
}

/// Columns of the operator, 0 for null.
///
/// # Safety
/// `op` must be null or a live operator handle.
#[no_mangle]
pub unsafe extern "C" fn idarr_operator_cols(op: *const IdarrOperator) -> usize {
    op.as_ref().map_or(0, |o| o.map.cols())
}

/// Replaces the exploration weights with a caller-supplied positive
/// diagonal `B`.
///
/// # Safety
/// `op` must be a live operator handle and `weights` point to `n` values.
#[no_mangle]
pub unsafe extern "C" fn idarr_operator_set_basis(
    op: *mut IdarrOperator,
    weights: *const f64,
    n: usize,
) -> IdarrStatus {
    guard(|| {
        let op = op.as_mut().ok_or_else(|| null("op"))?;
        let w = input(weights, n, "weights")?.to_vec();
        RkhsGeometry::with_basis(Arc::clone(&op.map), w.clone()).map_err(lib_err)?;
        op.basis = Some(w);
        Ok(())
    })
}

/// `y = A x`.
///
/// # Safety
/// `x` must hold `cols` values and `y` room for `rows` values.
#[no_mangle]
pub unsafe extern "C" fn idarr_operator_apply(
    op: *const IdarrOperator,
    x: *const f64,
    x_len: usize,
    y: *mut f64,
    y_len: usize,
) -> IdarrStatus {
    guard(|| {
        let op = op.as_ref().ok_or_else(|| null("op"))?;
        let x = input(x, x_len, "x")?;
        let out = op.map.apply(x).map_err(lib_err)?;
        write_out(&out, y, y_len)
    })
}

fn write_out(src: &[f64], dst: *mut f64, len: usize) -> Result<(), (IdarrStatus, String)> {
    if len != src.len() {
        return Err(lib_err(Error::Dimension {
            context: "output buffer",
            expected: src.len(),
            got: len,
        }));
    }
    if len == 0 {
        return Ok(());
    }
    if dst.is_null() {
        return Err(null("output buffer"));
    }
    // SAFETY: the caller promises `len` writable values at `dst`.
    unsafe { ptr::copy_nonoverlapping(src.as_ptr(), dst, len) };
    Ok(())
}

fn stop_rule(rule: &IdarrStopRule) -> StopRule {
    match rule.kind {
        IdarrStopKind::Lcurve => StopRule::LCurve {
            min_iters: rule.min_iters,
            max_iters: rule.max_iters,
            corner: if rule.max_curvature != 0 {
                CornerRule::MaxCurvature
            } else {
                CornerRule::AdaptivePruning
            },
        },
        IdarrStopKind::Discrepancy => StopRule::Discrepancy {
            noise_norm: rule.noise_norm,
            tau: rule.tau,
            max_iters: rule.max_iters,
        },
        IdarrStopKind::Fixed => StopRule::FixedIters(rule.k),
    }
}

/// Solves `A x = b` with `method`. A null `stop` selects
/// [`idarr_stop_default`]. Direct methods ignore the stopping rule.
///
/// # Safety
/// `op` must be a live operator handle, `b` must point to `b_len` values,
/// `stop` must be null or valid, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn idarr_solve(
    op: *const IdarrOperator,
    method: IdarrMethod,
    b: *const f64,
    b_len: usize,
    stop: *const IdarrStopRule,
    out: *mut *mut IdarrSolution,
) -> IdarrStatus {
    guard(|| {
        let op = op.as_ref().ok_or_else(|| null("op"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let b = input(b, b_len, "b")?.to_vec();
        let rule = stop_rule(&stop.as_ref().copied().unwrap_or_else(|| idarr_stop_default()));
        let method = match method {
            IdarrMethod::Idarr => Method::Idarr,
            IdarrMethod::IrL2Euclidean => Method::IrL2Euclidean,
            IdarrMethod::IrL2Basis => Method::IrL2Basis,
            IdarrMethod::L2Direct => Method::L2Direct,
            IdarrMethod::BasisDirect => Method::BasisDirect,
            IdarrMethod::Dartr => Method::Dartr,
        };
        let geom = match &op.basis {
            Some(w) => RkhsGeometry::with_basis(Arc::clone(&op.map), w.clone()),
            None => RkhsGeometry::exploration(Arc::clone(&op.map)),
        }
        .map_err(lib_err)?;
        if b.len() != geom.rows() {
            return Err(lib_err(Error::Dimension {
                context: "observation length",
                expected: geom.rows(),
                got: b.len(),
            }));
        }
        let problem = TestProblem {
            x_true: vec![0.0; geom.cols()],
            b_clean: b.clone(),
            b,
            sigma: 0.0,
            dt: 1.0,
            nsr: 0.0,
            seed: 0,
            geom,
        };
        let run = run_method(method, &problem, rule).map_err(lib_err)?;
        let status = match run.status {
            None => IdarrSolveStatus::Direct,
            Some(SolveStatus::Stopped) => IdarrSolveStatus::Stopped,
            Some(SolveStatus::Terminated) => IdarrSolveStatus::Terminated,
            Some(SolveStatus::NotConverged) => IdarrSolveStatus::NotConverged,
            Some(SolveStatus::WeakCorner) => IdarrSolveStatus::WeakCorner,
        };
        let sol = IdarrSolution {
            k_stop: run.k_stop,
            status,
            residuals: run.history.iter().map(|h| h.residual_norm).collect(),
            norms: run.history.iter().map(|h| h.solution_norm).collect(),
            lambda: run.lambda.unwrap_or(f64::NAN),
            x: run.x,
        };
        *out = Box::into_raw(Box::new(sol));
        Ok(())
    })
}

/// Releases a solution. Null is ignored.
///
/// # Safety
/// `sol` must come from [`idarr_solve`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn idarr_solution_free(sol: *mut IdarrSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// Length of the estimate, 0 for null.
///
/// # Safety
/// `sol` must be null or a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn idarr_solution_len(sol: *const IdarrSolution) -> usize {
    sol.as_ref().map_or(0, |s| s.x.len())
}

/// Copies the estimate into `x`, which must hold exactly
/// [`idarr_solution_len`] values.
///
/// # Safety
/// `sol` must be a live solution handle and `x` writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn idarr_solution_copy_x(
    sol: *const IdarrSolution,
    x: *mut f64,
    len: usize,
) -> IdarrStatus {
    guard(|| {
        let sol = sol.as_ref().ok_or_else(|| null("sol"))?;
        write_out(&sol.x, x, len)
    })
}

/// Selected iteration; 0 for direct methods or null.
///
/// # Safety
/// `sol` must be null or a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn idarr_solution_k_stop(sol: *const IdarrSolution) -> usize {
    sol.as_ref().map_or(0, |s| s.k_stop)
}

/// # Safety
/// `sol` must be a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn idarr_solution_status(sol: *const IdarrSolution) -> IdarrSolveStatus {
    sol.as_ref().map_or(IdarrSolveStatus::Direct, |s| s.status)
}

/// Number of recorded iterations (0 for direct methods).
///
/// # Safety
/// `sol` must be null or a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn idarr_solution_iterations(sol: *const IdarrSolution) -> usize {
    sol.as_ref().map_or(0, |s| s.residuals.len())
}

/// `||A x_k - b||_2` of iteration `k` (1-based), NaN when out of range.
///
/// # Safety
/// `sol` must be null or a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn idarr_solution_residual(sol: *const IdarrSolution, k: usize) -> f64 {
    sol.as_ref()
        .and_then(|s| k.checked_sub(1).and_then(|i| s.residuals.get(i)).copied())
        .unwrap_or(f64::NAN)
}

/// Solution norm in the method's own metric at iteration `k` (1-based),
/// NaN when out of range.
///
/// # Safety
/// `sol` must be null or a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn idarr_solution_norm(sol: *const IdarrSolution, k: usize) -> f64 {
    sol.as_ref()
        .and_then(|s| k.checked_sub(1).and_then(|i| s.norms.get(i)).copied())
        .unwrap_or(f64::NAN)
}

/// Tikhonov parameter picked by a direct method, NaN otherwise.
///
/// # Safety
/// `sol` must be null or a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn idarr_solution_lambda(sol: *const IdarrSolution) -> f64 {
    sol.as_ref().map_or(f64::NAN, |s| s.lambda)
}
