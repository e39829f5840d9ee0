//! C ABI over `splitstoch`.
//!
//! Objects are opaque heap handles created by `ss_*_new` style functions and
//! released by the matching `ss_*_free`. Every fallible call returns an
//! [`SsStatus`]; the message of the most recent failure on the calling
//! thread is available from [`ss_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ndarray::{Array1, Array2};
use splitstoch::problems::{self, Transform};
use splitstoch::{
    validate_config, AgentSpec, Error, Hyperplane, IterateState, LogisticBlock, Nonsmooth, ParticipationPolicy,
    ProblemInstance, Smooth, Solver, SolverConfig, TraceRecord,
};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    EmptyParameterWindow = 4,
    NonFiniteIterate = 5,
    MaxItersExceeded = 6,
    IndexOutOfRange = 7,
    InvalidShape = 8,
    NoConvergence = 9,
    Panic = 10,
    Other = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsNonsmoothKind {
    Zero = 0,
    L1 = 1,
    Hyperplane = 2,
    Point = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsSmoothKind {
    Zero = 0,
    Quadratic = 1,
    Logistic = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsTransform {
    Dct = 0,
    DftReal = 1,
}

/// One agent `(f_i, g_i)`. Vector fields point at `n` doubles; `rows` is a
/// row-major `row_count x n` matrix and `labels` holds `row_count` values
/// in `{-1, +1}`. Fields unused by the selected kinds may be null.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SsAgentDesc {
    pub nonsmooth: SsNonsmoothKind,
    /// `L1` weight.
    pub l1_weight: f64,
    /// Hyperplane normal or the point of a `Point` indicator.
    pub vector: *const f64,
    /// Hyperplane offset `b` in `a^T x = b`.
    pub offset: f64,
    pub smooth: SsSmoothKind,
    /// Quadratic centre.
    pub center: *const f64,
    /// Quadratic curvature or logistic weight.
    pub weight: f64,
    pub rows: *const f64,
    pub labels: *const f64,
    pub row_count: usize,
}

/// Per-iteration metrics. `lyapunov` is NaN when no certificate is attached.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SsTraceRecord {
    pub k: u64,
    pub stopping_error: f64,
    pub consensus_max: f64,
    pub phi: f64,
    pub h_value: f64,
    pub lyapunov: f64,
    pub participants: u64,
    pub prox_calls: u64,
    pub grad_calls: u64,
}

impl From<&TraceRecord> for SsTraceRecord {
    fn from(r: &TraceRecord) -> Self {
        Self {
            k: r.k as u64,
            stopping_error: r.stopping_error,
            consensus_max: r.consensus_max,
            phi: r.phi,
            h_value: r.h_value,
            lyapunov: r.lyapunov.unwrap_or(f64::NAN),
            participants: r.participants as u64,
            prox_calls: r.prox_calls,
            grad_calls: r.grad_calls,
        }
    }
}

/// Agents collected before a problem is finalized.
pub struct SsProblemBuilder {
    n: usize,
    agents: Vec<AgentSpec>,
}

pub struct SsProblem {
    inner: ProblemInstance,
}

pub struct SsConfig {
    inner: SolverConfig,
}

/// Owns copies of the problem and configuration plus the current state.
pub struct SsSolver {
    problem: ProblemInstance,
    config: SolverConfig,
    state: IterateState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> SsStatus {
    match err {
        Error::DimensionMismatch { .. } => SsStatus::DimensionMismatch,
        Error::EmptyParameterWindow { .. } => SsStatus::EmptyParameterWindow,
        Error::InvalidArgument(_) | Error::ZeroNormal | Error::ZeroProbability(_) => SsStatus::InvalidArgument,
        Error::NonFiniteIterate { .. } => SsStatus::NonFiniteIterate,
        Error::MaxItersExceeded(_) => SsStatus::MaxItersExceeded,
        Error::IndexOutOfRange { .. } => SsStatus::IndexOutOfRange,
        Error::InvalidShape(_) | Error::EmptyBlock { .. } => SsStatus::InvalidShape,
        Error::NoConvergence { .. } => SsStatus::NoConvergence,
        _ => SsStatus::Other,
    }
}

fn fail(err: Error) -> SsStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

fn fail_with(status: SsStatus, msg: impl Into<String>) -> SsStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, turning panics into [`SsStatus::Panic`].
fn guard(f: impl FnOnce() -> SsStatus) -> SsStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail_with(SsStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

unsafe fn vector(p: *const f64, len: usize, what: &str) -> Result<Array1<f64>, SsStatus> {
    if p.is_null() {
        return Err(fail_with(SsStatus::NullPointer, format!("{what} is null")));
    }
    Ok(Array1::from(std::slice::from_raw_parts(p, len).to_vec()))
}

fn store<T>(out: *mut *mut T, value: T) -> SsStatus {
    unsafe { *out = Box::into_raw(Box::new(value)) };
    SsStatus::Ok
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail_with(SsStatus::NullPointer, concat!(stringify!($p), " is null"));
        })+
    };
}

/// Copies the last error message of this thread into `buf` (NUL
/// terminated, truncated to `len`) and returns the full message length
/// without the terminator; 0 when there is no error.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ss_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match &*e.borrow() {
        None => {
            if !buf.is_null() && len > 0 {
                *buf = 0;
            }
            0
        }
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ss_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

// ------------------------------------------------------------ problems

/// Starts a problem over `R^n`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ss_problem_builder_new(n: usize, out: *mut *mut SsProblemBuilder) -> SsStatus {
    guard(|| {
        non_null!(out);
        if n == 0 {
            return fail_with(SsStatus::InvalidArgument, "dimension must be positive");
        }
        store(out, SsProblemBuilder { n, agents: Vec::new() })
    })
}

unsafe fn agent_from_desc(n: usize, d: &SsAgentDesc) -> Result<AgentSpec, SsStatus> {
    let nonsmooth = match d.nonsmooth {
        SsNonsmoothKind::Zero => Nonsmooth::Zero,
        SsNonsmoothKind::L1 => {
            if !(d.l1_weight >= 0.0) {
                return Err(fail_with(SsStatus::InvalidArgument, "l1 weight must be >= 0"));
            }
            Nonsmooth::L1 { weight: d.l1_weight }
        }
        SsNonsmoothKind::Hyperplane => {
            let a = vector(d.vector, n, "hyperplane normal")?;
            Nonsmooth::Hyperplane(Hyperplane::new(a, d.offset).map_err(fail)?)
        }
        SsNonsmoothKind::Point => Nonsmooth::Point(vector(d.vector, n, "point")?),
    };
    let smooth = match d.smooth {
        SsSmoothKind::Zero => Smooth::Zero,
        SsSmoothKind::Quadratic => {
            if !(d.weight >= 0.0) {
                return Err(fail_with(SsStatus::InvalidArgument, "quadratic weight must be >= 0"));
            }
            Smooth::Quadratic {
                center: vector(d.center, n, "quadratic centre")?,
                weight: d.weight,
            }
        }
        SsSmoothKind::Logistic => {
            if d.rows.is_null() || d.labels.is_null() {
                return Err(fail_with(SsStatus::NullPointer, "logistic rows or labels are null"));
            }
            let rows = std::slice::from_raw_parts(d.rows, d.row_count * n).to_vec();
            let rows = Array2::from_shape_vec((d.row_count, n), rows)
                .map_err(|e| fail_with(SsStatus::InvalidShape, e.to_string()))?;
            let labels = Array1::from(std::slice::from_raw_parts(d.labels, d.row_count).to_vec());
            Smooth::Logistic(LogisticBlock::new(rows, labels, d.weight).map_err(fail)?)
        }
    };
    Ok(AgentSpec::new(nonsmooth, smooth))
}

/// Appends an agent. The last agent added becomes the server.
///
/// # Safety
/// `builder` and `desc` must be valid; the arrays referenced by `desc` must
/// have the lengths documented on [`SsAgentDesc`].
#[no_mangle]
pub unsafe extern "C" fn ss_problem_builder_add_agent(
    builder: *mut SsProblemBuilder,
    desc: *const SsAgentDesc,
) -> SsStatus {
    guard(|| {
        non_null!(builder, desc);
        let b = &mut *builder;
        match agent_from_desc(b.n, &*desc) {
            Ok(a) => {
                b.agents.push(a);
                SsStatus::Ok
            }
            Err(s) => s,
        }
    })
}

/// Consumes `builder` (also on failure) and produces a problem.
///
/// # Safety
/// `builder` must come from [`ss_problem_builder_new`] and not be used
/// afterwards; `name` must be null or a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ss_problem_builder_finish(
    builder: *mut SsProblemBuilder,
    name: *const c_char,
    out: *mut *mut SsProblem,
) -> SsStatus {
    guard(|| {
        non_null!(builder, out);
        let b = Box::from_raw(builder);
        let name = if name.is_null() {
            "problem".to_string()
        } else {
            CStr::from_ptr(name).to_string_lossy().into_owned()
        };
        match ProblemInstance::new(name, b.n, b.agents) {
            Ok(p) => store(out, SsProblem { inner: p }),
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `builder` must be null or come from [`ss_problem_builder_new`].
#[no_mangle]
pub unsafe extern "C" fn ss_problem_builder_free(builder: *mut SsProblemBuilder) {
    if !builder.is_null() {
        drop(Box::from_raw(builder));
    }
}

/// The one-dimensional toy `|x| + (x - 2)^2 / 2`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ss_problem_toy1d(out: *mut *mut SsProblem) -> SsStatus {
    guard(|| {
        non_null!(out);
        store(
            out,
            SsProblem {
                inner: problems::toy1d().problem,
            },
        )
    })
}

/// A seeded compressed-sensing instance with `p` measurement users. When
/// `x_true` is non-null it receives the planted signal (`n` doubles).
///
/// # Safety
/// `out` must be valid; `x_true` null or writable for `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn ss_problem_compressed_sensing(
    n: usize,
    p: usize,
    sparsity: f64,
    transform: SsTransform,
    seed: u64,
    x_true: *mut f64,
    out: *mut *mut SsProblem,
) -> SsStatus {
    guard(|| {
        non_null!(out);
        let t = match transform {
            SsTransform::Dct => Transform::Dct,
            SsTransform::DftReal => Transform::DftReal,
        };
        match problems::build_compressed_sensing(n, p, sparsity, t, seed) {
            Ok((cs, problem)) => {
                if !x_true.is_null() {
                    ptr::copy_nonoverlapping(cs.x_true.as_ptr(), x_true, n);
                }
                store(out, SsProblem { inner: problem })
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ss_problem_free(problem: *mut SsProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Dimension `n`, or 0 for a null handle.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ss_problem_dimension(problem: *const SsProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.inner.n)
}

/// Number of agents `m` including the server, or 0 for a null handle.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ss_problem_agents(problem: *const SsProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.inner.m())
}

/// `Phi(x)` for `n` doubles at `x`; `+inf` outside the domain.
///
/// # Safety
/// `problem` live, `x` readable for `n` doubles, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ss_problem_objective(problem: *const SsProblem, x: *const f64, out: *mut f64) -> SsStatus {
    guard(|| {
        non_null!(problem, x, out);
        let p = &(*problem).inner;
        let v = std::slice::from_raw_parts(x, p.n);
        *out = splitstoch::diagnostics::eval_phi(p, ndarray::ArrayView1::from(v));
        SsStatus::Ok
    })
}

// ------------------------------------------------------------ configs

/// Default configuration with uniform `alpha`, fixed-fraction
/// participation `rho` and step sizes inside their windows.
///
/// # Safety
/// `problem` live, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ss_config_default(
    problem: *const SsProblem,
    alpha: f64,
    sigma: f64,
    rho: f64,
    out: *mut *mut SsConfig,
) -> SsStatus {
    guard(|| {
        non_null!(problem, out);
        let p = &(*problem).inner;
        let policy = ParticipationPolicy::FixedFraction { rho };
        if let Err(e) = policy.validate(p.users()) {
            return fail(e);
        }
        match SolverConfig::with_defaults(p, alpha, sigma, policy) {
            Ok(c) => store(out, SsConfig { inner: c }),
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `config` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ss_config_free(config: *mut SsConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Sets `gamma` and resets every `lambda_i` to its default for that step.
///
/// # Safety
/// Both handles live.
#[no_mangle]
pub unsafe extern "C" fn ss_config_set_gamma(config: *mut SsConfig, problem: *const SsProblem, gamma: f64) -> SsStatus {
    guard(|| {
        non_null!(config, problem);
        if !(gamma > 0.0) {
            return fail_with(SsStatus::InvalidArgument, "gamma must be > 0");
        }
        let c = &mut (*config).inner;
        *c = c.clone().with_gamma(&(*problem).inner, gamma);
        SsStatus::Ok
    })
}

/// # Safety
/// `config` live.
#[no_mangle]
pub unsafe extern "C" fn ss_config_set_seed(config: *mut SsConfig, seed: u64) -> SsStatus {
    guard(|| {
        non_null!(config);
        (*config).inner.seed = seed;
        SsStatus::Ok
    })
}

/// Sets `K` and the tolerance of the stopping test.
///
/// # Safety
/// `config` live.
#[no_mangle]
pub unsafe extern "C" fn ss_config_set_stopping(config: *mut SsConfig, max_iters: usize, tolerance: f64) -> SsStatus {
    guard(|| {
        non_null!(config);
        if !(tolerance >= 0.0) {
            return fail_with(SsStatus::InvalidArgument, "tolerance must be >= 0");
        }
        let c = &mut (*config).inner;
        c.max_iters = max_iters;
        c.tolerance = tolerance;
        SsStatus::Ok
    })
}

/// Independent participation with probability `p[i]` for user `i`.
///
/// # Safety
/// `config` live, `p` readable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ss_config_set_bernoulli(config: *mut SsConfig, p: *const f64, len: usize) -> SsStatus {
    guard(|| {
        non_null!(config, p);
        let c = &mut (*config).inner;
        let policy = ParticipationPolicy::Bernoulli {
            p: std::slice::from_raw_parts(p, len).to_vec(),
        };
        if let Err(e) = policy.validate(c.alpha.len()) {
            return fail(e);
        }
        c.participation = policy;
        SsStatus::Ok
    })
}

/// # Safety
/// `config` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn ss_config_gamma(config: *const SsConfig) -> f64 {
    config.as_ref().map_or(f64::NAN, |c| c.inner.gamma)
}

/// Checks the parameter windows. On success `gamma_upper` (if non-null)
/// receives the step-size bound, `+inf` when unbounded.
///
/// # Safety
/// Handles live; `gamma_upper` null or writable.
#[no_mangle]
pub unsafe extern "C" fn ss_config_validate(
    problem: *const SsProblem,
    config: *const SsConfig,
    gamma_upper: *mut f64,
) -> SsStatus {
    guard(|| {
        non_null!(problem, config);
        let c = &(*config).inner;
        match validate_config(&(*problem).inner, c) {
            Ok(report) => {
                if !gamma_upper.is_null() {
                    *gamma_upper = report.gamma_upper;
                }
                if report.is_valid() {
                    SsStatus::Ok
                } else {
                    fail_with(SsStatus::EmptyParameterWindow, report.describe(c))
                }
            }
            Err(e) => fail(e),
        }
    })
}

// ------------------------------------------------------------ solver

/// A solver at the all-zero start. Problem and config are copied, so both
/// handles may be freed afterwards.
///
/// # Safety
/// Handles live, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ss_solver_new(
    problem: *const SsProblem,
    config: *const SsConfig,
    out: *mut *mut SsSolver,
) -> SsStatus {
    guard(|| {
        non_null!(problem, config, out);
        let problem = (*problem).inner.clone();
        let config = (*config).inner.clone();
        if let Err(e) = Solver::new(&problem, &config) {
            return fail(e);
        }
        let state = IterateState::zeros(&problem);
        store(out, SsSolver { problem, config, state })
    })
}

/// # Safety
/// `solver` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn ss_solver_free(solver: *mut SsSolver) {
    if !solver.is_null() {
        drop(Box::from_raw(solver));
    }
}

/// One iteration; `record` (if non-null) receives its metrics.
///
/// # Safety
/// `solver` live, `record` null or writable.
#[no_mangle]
pub unsafe extern "C" fn ss_solver_step(solver: *mut SsSolver, record: *mut SsTraceRecord) -> SsStatus {
    guard(|| {
        non_null!(solver);
        let s = &mut *solver;
        let engine = match Solver::new(&s.problem, &s.config) {
            Ok(e) => e,
            Err(e) => return fail(e),
        };
        match engine.advance(&mut s.state) {
            Ok(rep) => {
                if !record.is_null() {
                    *record = SsTraceRecord::from(&rep.record);
                }
                SsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Runs the stopping loop from the current state. On
/// [`SsStatus::MaxItersExceeded`] the state is still advanced to the cap and
/// `record` holds its final metrics.
///
/// # Safety
/// `solver` live, `record` null or writable.
#[no_mangle]
pub unsafe extern "C" fn ss_solver_run(solver: *mut SsSolver, record: *mut SsTraceRecord) -> SsStatus {
    guard(|| {
        non_null!(solver);
        let s = &mut *solver;
        let engine = match Solver::new(&s.problem, &s.config) {
            Ok(e) => e,
            Err(e) => return fail(e),
        };
        let init = s.state.clone();
        match engine.run(Some(init)) {
            Ok(out) => {
                if !record.is_null() {
                    if let Some(last) = out.trace.last() {
                        *record = SsTraceRecord::from(last);
                    }
                }
                s.state = out.state;
                SsStatus::Ok
            }
            Err(Error::MaxItersExceeded(out)) => {
                if !record.is_null() {
                    if let Some(last) = out.trace.last() {
                        *record = SsTraceRecord::from(last);
                    }
                }
                let k = out.state.k;
                s.state = out.state;
                fail_with(SsStatus::MaxItersExceeded, format!("iteration cap reached after {k} iterations"))
            }
            Err(e) => fail(e),
        }
    })
}

/// Current iteration counter, or 0 for a null handle.
///
/// # Safety
/// `solver` null or live.
#[no_mangle]
pub unsafe extern "C" fn ss_solver_iteration(solver: *const SsSolver) -> u64 {
    solver.as_ref().map_or(0, |s| s.state.k as u64)
}

/// Copies the server iterate `x^k` into `out` (`len` must equal `n`).
///
/// # Safety
/// `solver` live, `out` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ss_solver_x(solver: *const SsSolver, out: *mut f64, len: usize) -> SsStatus {
    guard(|| {
        non_null!(solver, out);
        let s = &*solver;
        if len != s.problem.n {
            return fail(Error::DimensionMismatch {
                what: "output buffer",
                expected: s.problem.n,
                got: len,
            });
        }
        ptr::copy_nonoverlapping(s.state.x.as_ptr(), out, len);
        SsStatus::Ok
    })
}

/// Oracle-call counters so far, including the warm-up.
///
/// # Safety
/// `solver` live; outputs null or writable.
#[no_mangle]
pub unsafe extern "C" fn ss_solver_calls(solver: *const SsSolver, prox_calls: *mut u64, grad_calls: *mut u64) -> SsStatus {
    guard(|| {
        non_null!(solver);
        let s = &*solver;
        if !prox_calls.is_null() {
            *prox_calls = s.state.prox_calls;
        }
        if !grad_calls.is_null() {
            *grad_calls = s.state.grad_calls;
        }
        SsStatus::Ok
    })
}

/// Returns to the all-zero start.
///
/// # Safety
/// `solver` live.
#[no_mangle]
pub unsafe extern "C" fn ss_solver_reset(solver: *mut SsSolver) -> SsStatus {
    guard(|| {
        non_null!(solver);
        let s = &mut *solver;
        s.state = IterateState::zeros(&s.problem);
        SsStatus::Ok
    })
}
