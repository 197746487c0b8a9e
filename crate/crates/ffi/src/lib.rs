//! C ABI over `ou-lab`.
//!
//! Operators live behind the opaque `OuOperator` handle. Every function
//! returns an `OuStatus`; on failure the message is available from
//! `ou_last_error` on the same thread until the next failure. Matrices are
//! dense and row-major. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use ou_lab::jordan::jordan_real_form;
use ou_lab::operator::{kalman_rank, spectral_bound};
use ou_lab::semigroup::{decay_norm, gramian, transition};
use ou_lab::{Config, GramianMethod, LabError, Mat, OperatorSpec, Stability, Vector};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OuStatus {
    Ok = 0,
    /// A required pointer was null.
    NullPointer = 1,
    /// Malformed input, a violated precondition or an unsupported request.
    InvalidInput = 2,
    /// Overflow, non-convergence or an ambiguous Jordan structure.
    Numerical = 3,
    /// The output buffer is shorter than the result.
    BufferTooSmall = 4,
    /// An internal panic was caught.
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OuStability {
    StrictlyStable = 0,
    Critical = 1,
    Unstable = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OuGramianMethod {
    BlockExp = 0,
    LyapunovOde = 1,
    Quadrature = 2,
}

/// An operator `L = 1/2 tr(Q D^2) + <Ax, D>` with its tolerance set.
pub struct OuOperator {
    spec: OperatorSpec,
    cfg: Config,
}

enum Failure {
    Null(&'static str),
    Buffer { what: &'static str, needed: usize, got: usize },
    Lab(LabError),
}

impl From<LabError> for Failure {
    fn from(e: LabError) -> Self {
        Failure::Lab(e)
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &LabError) -> OuStatus {
    match e {
        LabError::NumericalFailure(_)
        | LabError::Range(_)
        | LabError::AmbiguousStructure { .. }
        | LabError::Evaluation { .. } => OuStatus::Numerical,
        LabError::InvalidOperator(_)
        | LabError::InvalidArgument(_)
        | LabError::Precondition(_)
        | LabError::UnsupportedEngine(_)
        | LabError::Parse(_)
        | LabError::Io(_) => OuStatus::InvalidInput,
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> OuStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OuStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("null pointer: {what}"));
            OuStatus::NullPointer
        }
        Ok(Err(Failure::Buffer { what, needed, got })) => {
            set_last_error(format!("{what}: buffer holds {got} values, {needed} needed"));
            OuStatus::BufferTooSmall
        }
        Ok(Err(Failure::Lab(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {msg}"));
            OuStatus::Panic
        }
    }
}

unsafe fn operator<'a>(op: *const OuOperator) -> Result<&'a OuOperator, Failure> {
    op.as_ref().ok_or(Failure::Null("operator"))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, needed: usize, what: &'static str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    if len < needed {
        return Err(Failure::Buffer { what, needed, got: len });
    }
    Ok(std::slice::from_raw_parts_mut(p, needed))
}

unsafe fn write<T>(p: *mut T, value: T, what: &'static str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    p.write(value);
    Ok(())
}

unsafe fn string<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Lab(LabError::InvalidArgument(format!("{what} is not valid UTF-8"))))
}

fn copy_row_major(m: &Mat, out: &mut [f64]) {
    let n = m.ncols();
    for (k, v) in out.iter_mut().enumerate() {
        *v = m[(k / n, k % n)];
    }
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ou_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ou_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// New operator from row-major `dim x dim` matrices `q` and `a`.
///
/// # Safety
/// `q` and `a` must point to `dim * dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ou_operator_new(dim: usize, q: *const f64, a: *const f64, out: *mut *mut OuOperator) -> OuStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let len = dim.checked_mul(dim).ok_or(LabError::InvalidArgument(format!("dimension {dim} is too large")))?;
        let q = Mat::from_row_slice(dim, dim, slice(q, len, "q")?);
        let a = Mat::from_row_slice(dim, dim, slice(a, len, "a")?);
        let cfg = Config::default();
        let spec = OperatorSpec::new(q, a, &cfg)?;
        out.write(Box::into_raw(Box::new(OuOperator { spec, cfg })));
        Ok(())
    })
}

/// New operator from an operator document (`dim`, `Q`, `A` keys).
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ou_operator_from_toml(text: *const c_char, out: *mut *mut OuOperator) -> OuStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let cfg = Config::default();
        let spec = ou_lab::io::parse_operator(string(text, "text")?, &cfg)?;
        out.write(Box::into_raw(Box::new(OuOperator { spec, cfg })));
        Ok(())
    })
}

/// Release an operator; null is ignored.
///
/// # Safety
/// `op` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ou_operator_free(op: *mut OuOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// Dimension of the operator, 0 for null.
///
/// # Safety
/// `op` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ou_operator_dim(op: *const OuOperator) -> usize {
    op.as_ref().map_or(0, |o| o.spec.dim())
}

/// Override one tolerance by its short name (`resid`, `kwapien`, ...).
///
/// # Safety
/// `op` must be a live handle; `name` and `value` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ou_operator_set_tolerance(op: *mut OuOperator, name: *const c_char, value: *const c_char) -> OuStatus {
    guard(|| {
        let o = op.as_mut().ok_or(Failure::Null("operator"))?;
        o.cfg.set(string(name, "name")?, string(value, "value")?)?;
        Ok(())
    })
}

/// Rank of the controllability matrix and whether it is full.
///
/// # Safety
/// `op` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn ou_kalman_rank(op: *const OuOperator, rank: *mut usize, hypoelliptic: *mut bool) -> OuStatus {
    guard(|| {
        let o = operator(op)?;
        let k = kalman_rank(&o.spec, &o.cfg)?;
        write(rank, k.rank, "rank")?;
        write(hypoelliptic, k.hypoelliptic, "hypoelliptic")
    })
}

/// `s(A)` and its classification.
///
/// # Safety
/// `op` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn ou_spectral_bound(op: *const OuOperator, bound: *mut f64, stability: *mut OuStability) -> OuStatus {
    guard(|| {
        let o = operator(op)?;
        let s = spectral_bound(o.spec.a(), &o.cfg)?;
        write(bound, s.spectral_bound, "bound")?;
        let class = match s.classification {
            Stability::StrictlyStable => OuStability::StrictlyStable,
            Stability::Critical => OuStability::Critical,
            Stability::Unstable => OuStability::Unstable,
        };
        write(stability, class, "stability")
    })
}

/// Controllability Gramian `Q_t`, row-major into `out` (`len >= dim^2`).
///
/// # Safety
/// `op` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ou_gramian(op: *const OuOperator, t: f64, method: OuGramianMethod, out: *mut f64, len: usize) -> OuStatus {
    guard(|| {
        let o = operator(op)?;
        let n = o.spec.dim();
        let out = out_slice(out, len, n * n, "out")?;
        let method = match method {
            OuGramianMethod::BlockExp => GramianMethod::BlockExp,
            OuGramianMethod::LyapunovOde => GramianMethod::LyapunovOde,
            OuGramianMethod::Quadrature => GramianMethod::Quadrature,
        };
        copy_row_major(&gramian(&o.spec, t, method, &o.cfg)?.qt, out);
        Ok(())
    })
}

/// `|Q_t^{-1/2} e^{tA}|_2`.
///
/// # Safety
/// `op` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ou_decay_norm(op: *const OuOperator, t: f64, out: *mut f64) -> OuStatus {
    guard(|| {
        let o = operator(op)?;
        write(out, decay_norm(&o.spec, t, &o.cfg)?.value, "out")
    })
}

/// Law of `X_t` started at `x`: mean (`dim` values) and covariance
/// (`dim^2`, row-major).
///
/// # Safety
/// `op` must be a live handle; `x` and `mean` hold `dim` doubles, `cov`
/// holds `dim * dim`.
#[no_mangle]
pub unsafe extern "C" fn ou_transition(op: *const OuOperator, x: *const f64, t: f64, mean: *mut f64, cov: *mut f64) -> OuStatus {
    guard(|| {
        let o = operator(op)?;
        let n = o.spec.dim();
        let x = Vector::from_column_slice(slice(x, n, "x")?);
        let mean = out_slice(mean, n, n, "mean")?;
        let cov = out_slice(cov, n * n, n * n, "cov")?;
        let m = transition(&o.spec, &x, t, &o.cfg)?;
        mean.copy_from_slice(m.mean.as_slice());
        copy_row_major(&m.cov, cov);
        Ok(())
    })
}

/// `n` exact samples of `X_t` started at `x`, one row of `dim` values per
/// sample (`len >= n * dim`). Deterministic in `seed`.
///
/// # Safety
/// `op` must be a live handle; `x` holds `dim` doubles, `out` holds `len`.
#[no_mangle]
pub unsafe extern "C" fn ou_sample_endpoints(
    op: *const OuOperator,
    x: *const f64,
    t: f64,
    n: usize,
    seed: u64,
    out: *mut f64,
    len: usize,
) -> OuStatus {
    guard(|| {
        let o = operator(op)?;
        let dim = o.spec.dim();
        let x = Vector::from_column_slice(slice(x, dim, "x")?);
        let needed = n.checked_mul(dim).ok_or(LabError::InvalidArgument(format!("{n} samples overflow")))?;
        let out = out_slice(out, len, needed, "out")?;
        let ys = ou_lab::sde::sample_endpoint(&o.spec, &x, t, n, seed, &o.cfg)?;
        for (row, y) in out.chunks_mut(dim.max(1)).zip(&ys) {
            row.copy_from_slice(y.as_slice());
        }
        Ok(())
    })
}

/// One-line summary of the real Jordan blocks, NUL-terminated into `buf`.
/// `needed` receives the size including the NUL, also when `cap` is short.
///
/// # Safety
/// `op` must be a live handle; `buf` holds `cap` bytes; `needed` writable.
#[no_mangle]
pub unsafe extern "C" fn ou_jordan_summary(op: *const OuOperator, buf: *mut c_char, cap: usize, needed: *mut usize) -> OuStatus {
    guard(|| {
        let o = operator(op)?;
        let text = jordan_real_form(o.spec.a(), &o.cfg)?.summary();
        let size = text.len() + 1;
        write(needed, size, "needed")?;
        if buf.is_null() {
            return Err(Failure::Null("buf"));
        }
        if cap < size {
            return Err(Failure::Buffer { what: "buf", needed: size, got: cap });
        }
        std::ptr::copy_nonoverlapping(text.as_ptr(), buf.cast::<u8>(), text.len());
        buf.add(text.len()).write(0);
        Ok(())
    })
}
