//! C ABI over `mclab`. Objects cross the boundary as opaque pointers that the
//! caller releases with the matching `*_free` function. Every fallible call
//! returns an [`MclabStatus`]; the message for the most recent failure on the
//! calling thread is available from [`mclab_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use mclab::exact::Method;
use mclab::expcli::{self, CompareOptions, ExperimentConfig, Overrides, RawConfig, RunStatus};
use mclab::krylov::KrylovSize;
use mclab::reservoir::{generate, GeneratorKind, GeneratorSpec, LinearESN};
use mclab::McError;
use nalgebra::{DMatrix, DVector};

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MclabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    EspViolation = 3,
    NotRescalable = 4,
    IllConditioned = 5,
    NotDiagonalizable = 6,
    Config = 7,
    Io = 8,
    /// A computation failed for every requested method.
    Failed = 9,
    Panic = 10,
}

/// A linear reservoir `x_t = A x_{t-1} + C z_t`.
pub struct MclabSystem(LinearESN);

/// A memory curve `MC_0 … MC_{len-1}`.
pub struct MclabCurve {
    values: Vec<f64>,
    total: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(err: &McError) -> MclabStatus {
    match err {
        McError::InvalidArgument(_) => MclabStatus::InvalidArgument,
        McError::EspViolation { .. } => MclabStatus::EspViolation,
        McError::NotRescalable(_) => MclabStatus::NotRescalable,
        McError::Singular { .. } | McError::StandardizationInfeasible { .. } | McError::NotPositiveSemidefinite { .. } => {
            MclabStatus::IllConditioned
        }
        McError::NotDiagonalizable { .. } => MclabStatus::NotDiagonalizable,
        McError::Config(_) => MclabStatus::Config,
        McError::Io(_) | McError::Json(_) => MclabStatus::Io,
        _ => MclabStatus::Failed,
    }
}

fn guard(f: impl FnOnce() -> Result<(), MclabStatus>) -> MclabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MclabStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            MclabStatus::Panic
        }
    }
}

fn fail(err: McError) -> MclabStatus {
    let s = status_of(&err);
    set_error(err.to_string());
    s
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, MclabStatus> {
    if p.is_null() {
        set_error(format!("{what} is null"));
        return Err(MclabStatus::NullPointer);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        MclabStatus::InvalidArgument
    })
}

fn check_out<T>(out: *mut *mut T) -> Result<(), MclabStatus> {
    if out.is_null() {
        set_error("output pointer is null");
        return Err(MclabStatus::NullPointer);
    }
    Ok(())
}

/// Message for the last failed call on this thread, or an empty string.
/// The pointer stays valid until the next `mclab_*` call on the same thread.
#[no_mangle]
pub extern "C" fn mclab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Generates a reservoir. `kind` is one of `gaussian`, `uniform`,
/// `sparse_gaussian`, `orthogonal_gaussian`, `cyclic`, `delay_shift`,
/// `conditioned_sparse_gaussian`. A NaN `rho` keeps the raw normalization.
///
/// # Safety
/// `kind` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mclab_system_generate(
    kind: *const c_char,
    n: usize,
    rho: f64,
    seed: u64,
    out: *mut *mut MclabSystem,
) -> MclabStatus {
    guard(|| {
        check_out(out)?;
        let kind: GeneratorKind = str_arg(kind, "kind")?.parse().map_err(fail)?;
        let rho = (!rho.is_nan()).then_some(rho);
        let spec = GeneratorSpec::new(kind, n, rho, seed);
        let sys = spec.validate().and_then(|_| generate(&spec)).map_err(fail)?;
        *out = Box::into_raw(Box::new(MclabSystem(sys)));
        Ok(())
    })
}

/// Builds a system from a row-major `n × n` matrix and a length-`n` mask.
///
/// # Safety
/// `a` must point to `n * n` doubles, `c` to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn mclab_system_from_parts(
    n: usize,
    a: *const f64,
    c: *const f64,
    out: *mut *mut MclabSystem,
) -> MclabStatus {
    guard(|| {
        check_out(out)?;
        if a.is_null() || c.is_null() {
            set_error("matrix or mask pointer is null");
            return Err(MclabStatus::NullPointer);
        }
        if n == 0 {
            return Err(fail(McError::InvalidArgument("dimension must be positive".into())));
        }
        let a = DMatrix::from_row_slice(n, n, std::slice::from_raw_parts(a, n * n));
        let c = DVector::from_column_slice(std::slice::from_raw_parts(c, n));
        let sys = LinearESN::new(a, c).map_err(fail)?;
        *out = Box::into_raw(Box::new(MclabSystem(sys)));
        Ok(())
    })
}

/// # Safety
/// `sys` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mclab_system_free(sys: *mut MclabSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// State dimension, or 0 for a null handle.
///
/// # Safety
/// `sys` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mclab_system_dim(sys: *const MclabSystem) -> usize {
    sys.as_ref().map_or(0, |s| s.0.n())
}

/// Spectral radius of `A`, or NaN for a null handle.
///
/// # Safety
/// `sys` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mclab_system_spectral_radius(sys: *const MclabSystem) -> f64 {
    sys.as_ref().map_or(f64::NAN, |s| s.0.spectral_radius())
}

/// Serializes the system to JSON. Release the string with [`mclab_string_free`].
///
/// # Safety
/// `sys` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mclab_system_to_json(sys: *const MclabSystem, out: *mut *mut c_char) -> MclabStatus {
    guard(|| {
        check_out(out)?;
        let sys = sys.as_ref().ok_or_else(|| {
            set_error("system handle is null");
            MclabStatus::NullPointer
        })?;
        let json = sys.0.to_json().map_err(fail)?;
        *out = CString::new(json).map_err(|_| MclabStatus::Failed)?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mclab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Memory curve of `sys` for lags `0 … tau_max-1` by one method: `naive`,
/// `eigen_neutral`, `osm`, `osm_plus`, `montecarlo`, `stationary` or
/// `oracle`. `m = 0` selects the automatic Krylov size; `l` is the OSM+ mask
/// count and `t` the Monte Carlo sample length.
///
/// # Safety
/// `sys` must be a live handle, `method` a NUL-terminated string and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn mclab_capacity(
    sys: *const MclabSystem,
    method: *const c_char,
    tau_max: usize,
    m: usize,
    l: usize,
    t: usize,
    seed: u64,
    out: *mut *mut MclabCurve,
) -> MclabStatus {
    guard(|| {
        check_out(out)?;
        let sys = sys.as_ref().ok_or_else(|| {
            set_error("system handle is null");
            MclabStatus::NullPointer
        })?;
        let method: Method = str_arg(method, "method")?.parse().map_err(fail)?;
        let size = if m == 0 { KrylovSize::Auto } else { KrylovSize::Fixed(m) };
        let mask = match sys.0.meta.kind {
            Some(k) => GeneratorSpec::new(k, sys.0.n(), None, 0).effective_mask(),
            None => Default::default(),
        };
        let opts = CompareOptions { m: size, l, seed, t, mask };
        let table = expcli::compare_methods(&sys.0, tau_max, &[method], &opts).map_err(fail)?;
        match table.columns.into_iter().next().map(|(_, c)| c) {
            Some(Ok(values)) => {
                let total = values.iter().sum();
                *out = Box::into_raw(Box::new(MclabCurve { values, total }));
                Ok(())
            }
            Some(Err(msg)) => {
                set_error(msg);
                Err(MclabStatus::Failed)
            }
            None => Err(MclabStatus::Failed),
        }
    })
}

/// # Safety
/// `curve` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mclab_curve_len(curve: *const MclabCurve) -> usize {
    curve.as_ref().map_or(0, |c| c.values.len())
}

/// # Safety
/// `curve` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mclab_curve_total(curve: *const MclabCurve) -> f64 {
    curve.as_ref().map_or(f64::NAN, |c| c.total)
}

/// Copies up to `len` values into `buf`; returns the number copied.
///
/// # Safety
/// `buf` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mclab_curve_values(curve: *const MclabCurve, buf: *mut f64, len: usize) -> usize {
    let Some(c) = curve.as_ref() else { return 0 };
    if buf.is_null() {
        return 0;
    }
    let k = len.min(c.values.len());
    std::ptr::copy_nonoverlapping(c.values.as_ptr(), buf, k);
    k
}

/// # Safety
/// `curve` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mclab_curve_free(curve: *mut MclabCurve) {
    if !curve.is_null() {
        drop(Box::from_raw(curve));
    }
}

/// Runs an experiment from a JSON config string, writing into `out_dir`
/// (null keeps the config's own `out_dir`).
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out_dir` null or one.
#[no_mangle]
pub unsafe extern "C" fn mclab_run_config_json(config_json: *const c_char, out_dir: *const c_char) -> MclabStatus {
    guard(|| {
        let text = str_arg(config_json, "config")?;
        let out_dir = if out_dir.is_null() { None } else { Some(PathBuf::from(str_arg(out_dir, "out_dir")?)) };
        let raw: RawConfig = serde_json::from_str(text).map_err(|e| fail(McError::Config(e.to_string())))?;
        let cfg = ExperimentConfig::resolve(raw, &Overrides { out_dir, ..Default::default() }).map_err(fail)?;
        let manifest = expcli::run(&cfg).map_err(fail)?;
        if manifest.status == RunStatus::Failed {
            set_error(manifest.failures.first().map_or_else(String::new, |f| f.message.clone()));
            return Err(MclabStatus::Failed);
        }
        Ok(())
    })
}
