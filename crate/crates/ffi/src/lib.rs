//! C bindings for `hokme`.
//!
//! Every fallible function returns a `HokmeStatus`; on failure the message is
//! available from `hokme_last_error_message` on the same thread. Ensembles are
//! opaque handles owned by the caller and released with `hokme_ensemble_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hokme::condind::{hs_conditional_criterion, CiConfig};
use hokme::dataset::read_jsonl;
use hokme::mmdtest::two_sample_test_with;
use hokme::sigkernel::first_order_gram_terminal;
use hokme::{Ensemble, Error, HigherOrderConfig, Path, PdeSolver, Scheme, Variant};

/// Result codes. `Ok` is zero.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HokmeStatus {
    Ok = 0,
    InvalidPath = 1,
    GridMismatch = 2,
    InvalidArgument = 3,
    IndexOutOfRange = 4,
    Numeric = 5,
    Parse = 6,
    Io = 7,
    NullPointer = 8,
    Panic = 9,
}

/// Opaque ensemble of sample paths on a shared time grid.
pub struct HokmeEnsemble(Ensemble);

/// Estimator settings. `scheme`: 0 = series, 1 = explicit. Time augmentation
/// is applied when `time_augment > 0`.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct HokmeConfig {
    pub order: u32,
    pub lambda: f64,
    pub refinement: u32,
    pub scheme: u32,
    pub time_augment: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct HokmeTestSummary {
    pub statistic: f64,
    pub p_value: f64,
    /// 1 when the null of equal laws is rejected.
    pub reject: u8,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> HokmeStatus {
    match e {
        Error::InvalidPath(_) => HokmeStatus::InvalidPath,
        Error::GridMismatch(_) => HokmeStatus::GridMismatch,
        Error::InvalidArgument(_) => HokmeStatus::InvalidArgument,
        Error::IndexOutOfRange { .. } => HokmeStatus::IndexOutOfRange,
        Error::Numeric(_) => HokmeStatus::Numeric,
        Error::Parse(_) => HokmeStatus::Parse,
        Error::Io(_) => HokmeStatus::Io,
    }
}

enum Fail {
    Lib(Error),
    Null(&'static str),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> HokmeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            HokmeStatus::Ok
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Null(name))) => {
            set_error(format!("null pointer: {name}"));
            HokmeStatus::NullPointer
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            HokmeStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(name))
}

fn to_config(c: &HokmeConfig) -> Result<HigherOrderConfig, Fail> {
    let scheme = match c.scheme {
        0 => Scheme::Series,
        1 => Scheme::Explicit,
        s => return Err(Error::InvalidArgument(format!("unknown scheme {s}")).into()),
    };
    let cfg = HigherOrderConfig {
        order: c.order as usize,
        lambda: c.lambda,
        refinement: c.refinement as usize,
        scheme,
        time_augment: (c.time_augment > 0.0).then_some(c.time_augment),
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library on this thread.
#[no_mangle]
pub extern "C" fn hokme_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// order 1, lambda 1e-3, refinement 2, series scheme, no time augmentation.
#[no_mangle]
pub extern "C" fn hokme_config_default() -> HokmeConfig {
    let d = HigherOrderConfig::default();
    HokmeConfig {
        order: d.order as u32,
        lambda: d.lambda,
        refinement: d.refinement as u32,
        scheme: 0,
        time_augment: 0.0,
    }
}

/// Builds an ensemble of `n_paths` paths sharing `times[0..grid_len]`.
/// `values` is path-major, then time, then coordinate
/// (`n_paths * grid_len * dim` doubles).
///
/// # Safety
/// The arrays must hold the stated number of doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hokme_ensemble_from_flat(
    n_paths: usize,
    grid_len: usize,
    dim: usize,
    times: *const f64,
    values: *const f64,
    out: *mut *mut HokmeEnsemble,
) -> HokmeStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        if times.is_null() || values.is_null() {
            return Err(Fail::Null("times/values"));
        }
        let t = std::slice::from_raw_parts(times, grid_len);
        let stride = grid_len
            .checked_mul(dim)
            .ok_or_else(|| Error::InvalidArgument("size overflow".into()))?;
        let total = stride
            .checked_mul(n_paths)
            .ok_or_else(|| Error::InvalidArgument("size overflow".into()))?;
        let v = std::slice::from_raw_parts(values, total);
        let paths = (0..n_paths)
            .map(|i| Path::from_flat(t.to_vec(), v[i * stride..(i + 1) * stride].to_vec(), dim))
            .collect::<hokme::Result<Vec<_>>>()?;
        *out = Box::into_raw(Box::new(HokmeEnsemble(Ensemble::new(paths)?)));
        Ok(())
    })
}

/// Reads a JSON-lines dataset.
///
/// # Safety
/// `file` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hokme_ensemble_from_jsonl(file: *const c_char, out: *mut *mut HokmeEnsemble) -> HokmeStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let name = deref(file, "file")?;
        let name = CStr::from_ptr(name)
            .to_str()
            .map_err(|e| Error::InvalidArgument(format!("file name is not UTF-8: {e}")))?;
        *out = Box::into_raw(Box::new(HokmeEnsemble(read_jsonl(name)?)));
        Ok(())
    })
}

/// Releases an ensemble. Null is ignored.
///
/// # Safety
/// `e` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn hokme_ensemble_free(e: *mut HokmeEnsemble) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// Number of paths; 0 for null.
///
/// # Safety
/// `e` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hokme_ensemble_len(e: *const HokmeEnsemble) -> usize {
    e.as_ref().map_or(0, |e| e.0.len())
}

/// # Safety
/// `e` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hokme_ensemble_dim(e: *const HokmeEnsemble) -> usize {
    e.as_ref().map_or(0, |e| e.0.dim())
}

/// # Safety
/// `e` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hokme_ensemble_grid_len(e: *const HokmeEnsemble) -> usize {
    e.as_ref().map_or(0, |e| e.0.grid_len())
}

/// Signature kernel Gram matrix `k(x_i, y_j)`, row-major into
/// `out[0..len(x)*len(y)]`. Uses the solver and time augmentation of `cfg`.
///
/// # Safety
/// Handles must be live; `out` must hold `len(x) * len(y)` doubles.
#[no_mangle]
pub unsafe extern "C" fn hokme_sig_kernel_gram(
    x: *const HokmeEnsemble,
    y: *const HokmeEnsemble,
    cfg: *const HokmeConfig,
    out: *mut f64,
) -> HokmeStatus {
    guard(|| {
        let (x, y, c) = (deref(x, "x")?, deref(y, "y")?, to_config(deref(cfg, "cfg")?)?);
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let solver = PdeSolver::new(c.scheme, c.refinement)?;
        let g = first_order_gram_terminal(&c.prepare(&x.0)?, &c.prepare(&y.0)?, &solver)?;
        let dst = std::slice::from_raw_parts_mut(out, g.nrows() * g.ncols());
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                dst[i * g.ncols() + j] = g[(i, j)];
            }
        }
        Ok(())
    })
}

fn variant_of(v: u32) -> Result<Variant, Fail> {
    match v {
        0 => Ok(Variant::Unbiased),
        1 => Ok(Variant::Biased),
        _ => Err(Error::InvalidArgument(format!("unknown variant {v}")).into()),
    }
}

/// Squared MMD of order `cfg.order`. `variant`: 0 = unbiased, 1 = biased.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hokme_mmd(
    x: *const HokmeEnsemble,
    y: *const HokmeEnsemble,
    cfg: *const HokmeConfig,
    variant: u32,
    out: *mut f64,
) -> HokmeStatus {
    guard(|| {
        let (x, y, c) = (deref(x, "x")?, deref(y, "y")?, to_config(deref(cfg, "cfg")?)?);
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        *out = hokme::higherorder::higher_order_mmd(&x.0, &y.0, &c, variant_of(variant)?)?.value_squared;
        Ok(())
    })
}

/// Permutation two-sample test.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hokme_two_sample_test(
    x: *const HokmeEnsemble,
    y: *const HokmeEnsemble,
    cfg: *const HokmeConfig,
    variant: u32,
    level: f64,
    permutations: usize,
    seed: u64,
    out: *mut HokmeTestSummary,
) -> HokmeStatus {
    guard(|| {
        let (x, y, c) = (deref(x, "x")?, deref(y, "y")?, to_config(deref(cfg, "cfg")?)?);
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let r = two_sample_test_with(&x.0, &y.0, &c, variant_of(variant)?, level, permutations, seed)?;
        *out = HokmeTestSummary { statistic: r.statistic, p_value: r.p_value, reject: r.reject as u8 };
        Ok(())
    })
}

/// Conditional-independence statistic of X and Y given Z (`z` may be null
/// for the unconditional version). Uses `cfg.refinement`, `cfg.scheme` and
/// `cfg.time_augment`; the other fields are ignored.
///
/// # Safety
/// Non-null handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hokme_ci_statistic(
    x: *const HokmeEnsemble,
    y: *const HokmeEnsemble,
    z: *const HokmeEnsemble,
    cfg: *const HokmeConfig,
    epsilon: f64,
    out: *mut f64,
) -> HokmeStatus {
    guard(|| {
        let (x, y) = (deref(x, "x")?, deref(y, "y")?);
        let c = deref(cfg, "cfg")?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let h = to_config(&HokmeConfig { order: 1, lambda: 1.0, ..*c })?;
        let ci = CiConfig {
            epsilon,
            solver: PdeSolver::new(h.scheme, h.refinement)?,
            time_augment: h.time_augment,
            product_kernel: false,
        };
        *out = hs_conditional_criterion(&x.0, &y.0, z.as_ref().map(|z| &z.0), &ci)?;
        Ok(())
    })
}
