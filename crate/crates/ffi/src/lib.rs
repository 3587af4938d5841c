//! C ABI over a trained SASANet checkpoint.
//!
//! Every call returns a [`SasanetStatus`]; on failure the message is kept in
//! a thread-local slot readable with [`sasanet_last_error`]. Handles are
//! opaque, created by [`sasanet_model_load`] and released by
//! [`sasanet_model_free`]. A handle may be shared by threads for concurrent
//! read-only calls.

use sasanet::model::SasanetModel;
use sasanet::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SasanetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Checkpoint = 4,
    Runtime = 5,
    Panic = 6,
}

/// A loaded model.
pub struct SasanetHandle {
    model: SasanetModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SasanetStatus {
    match e {
        Error::InvalidArgument(_)
        | Error::Validation(_)
        | Error::Schema(_)
        | Error::SchemaMismatch(_)
        | Error::MissingValue { .. }
        | Error::TooManyFeatures { .. } => SasanetStatus::InvalidArgument,
        Error::Io(_) | Error::Path { .. } => SasanetStatus::Io,
        Error::Checkpoint(_) | Error::Json(_) => SasanetStatus::Checkpoint,
        _ => SasanetStatus::Runtime,
    }
}

struct Failure(SasanetStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SasanetStatus::NullPointer, format!("`{what}` is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SasanetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SasanetStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            SasanetStatus::Panic
        }
    }
}

unsafe fn handle<'a>(h: *const SasanetHandle) -> Result<&'a SasanetHandle, Failure> {
    h.as_ref().ok_or_else(|| null("model"))
}

/// Reads `len` elements, allowing a null pointer only when `len` is zero.
unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn check_input(h: &SasanetHandle, x: &[f64]) -> Result<(), Failure> {
    let n = h.model.n_features();
    if x.len() != n {
        return Err(Failure(
            SasanetStatus::InvalidArgument,
            format!("x has {} values, the model expects {n}", x.len()),
        ));
    }
    Ok(())
}

/// Loads a checkpoint written by `sasanet train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer to
/// writable storage for one handle pointer.
#[no_mangle]
pub unsafe extern "C" fn sasanet_model_load(
    path: *const c_char,
    out: *mut *mut SasanetHandle,
) -> SasanetStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = std::ptr::null_mut();
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path).to_str().map_err(|_| {
            Failure(
                SasanetStatus::InvalidArgument,
                "path is not valid UTF-8".into(),
            )
        })?;
        let model = SasanetModel::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(SasanetHandle { model }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must come from [`sasanet_model_load`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn sasanet_model_free(model: *mut SasanetHandle) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of features `N` the model was trained on.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sasanet_model_num_features(
    model: *const SasanetHandle,
    out: *mut usize,
) -> SasanetStatus {
    guard(|| {
        let h = handle(model)?;
        *out.as_mut().ok_or_else(|| null("out"))? = h.model.n_features();
        Ok(())
    })
}

/// The bias `φ₀`, the output on the empty subset (link units).
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sasanet_model_bias(
    model: *const SasanetHandle,
    out: *mut f64,
) -> SasanetStatus {
    guard(|| {
        let h = handle(model)?;
        *out.as_mut().ok_or_else(|| null("out"))? = h.model.phi0();
        Ok(())
    })
}

/// Self-attribution of the observed features `subset` of `x`.
///
/// `x` holds all `N` feature values; entries outside `subset` are ignored.
/// `phi_out` receives `N` values, zero for unobserved features. If
/// `f_out` is non-null it receives the output `φ₀ + Σ φ_i` in link units.
///
/// # Safety
/// `x` must hold `n_x` values, `subset` `n_subset` ids and `phi_out` room
/// for `N` values.
#[no_mangle]
pub unsafe extern "C" fn sasanet_attribute(
    model: *const SasanetHandle,
    x: *const f64,
    n_x: usize,
    subset: *const usize,
    n_subset: usize,
    phi_out: *mut f64,
    f_out: *mut f64,
) -> SasanetStatus {
    guard(|| {
        let h = handle(model)?;
        let x = slice(x, n_x, "x")?;
        check_input(h, x)?;
        let subset = slice(subset, n_subset, "subset")?;
        let n = h.model.n_features();
        if phi_out.is_null() && n > 0 {
            return Err(null("phi_out"));
        }
        let a = h.model.attribution(x, subset)?;
        slice_mut(phi_out, n, "phi_out")?.copy_from_slice(&a.dense(n));
        if let Some(f) = f_out.as_mut() {
            *f = a.f;
        }
        Ok(())
    })
}

/// Prediction on the observed features `subset` of `x`, after the link
/// (a probability for classification models).
///
/// # Safety
/// As for [`sasanet_attribute`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sasanet_predict(
    model: *const SasanetHandle,
    x: *const f64,
    n_x: usize,
    subset: *const usize,
    n_subset: usize,
    out: *mut f64,
) -> SasanetStatus {
    guard(|| {
        let h = handle(model)?;
        let x = slice(x, n_x, "x")?;
        check_input(h, x)?;
        let subset = slice(subset, n_subset, "subset")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = h.model.predict(x, subset)?;
        Ok(())
    })
}

/// Cumulative outputs `φ₀, φ₀ + Δ_1, …` of the sequential module while
/// features join in `order`; `out` receives `n_order + 1` values.
///
/// # Safety
/// `x` must hold `n_x` values, `order` `n_order` ids and `out` room for
/// `n_order + 1` values.
#[no_mangle]
pub unsafe extern "C" fn sasanet_prefix_values(
    model: *const SasanetHandle,
    x: *const f64,
    n_x: usize,
    order: *const usize,
    n_order: usize,
    out: *mut f64,
) -> SasanetStatus {
    guard(|| {
        let h = handle(model)?;
        let x = slice(x, n_x, "x")?;
        check_input(h, x)?;
        let order = slice(order, n_order, "order")?;
        let values = h.model.prefix_values(x, order)?;
        slice_mut(out, n_order + 1, "out")?.copy_from_slice(&values);
        Ok(())
    })
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `len > 0`) and returns the full message length
/// excluding the NUL. Returns 0 when the last call succeeded.
///
/// # Safety
/// `buf` must have room for `len` bytes, or be null with `len == 0`.
#[no_mangle]
pub unsafe extern "C" fn sasanet_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            if !buf.is_null() && len > 0 {
                *buf = 0;
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let k = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, k);
            *buf.add(k) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sasanet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
