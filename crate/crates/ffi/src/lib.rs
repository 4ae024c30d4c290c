//! C ABI over `sinedelta`.
//!
//! Objects cross the boundary as opaque handles created by `sd_*_new`-style
//! constructors and released with the matching `sd_*_free`. Every fallible
//! call returns an [`SdStatus`]; on failure the message is available from
//! [`sd_last_error_message`] on the same thread. Outputs are written through
//! caller-supplied pointers only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sinedelta::adapter::{memory_footprint, reconstruct_quantized_delta, Flavor};
use sinedelta::bd::{compare, Interpolator, RDCurve};
use sinedelta::codec::{load_compressed, read_compressed, save_compressed, write_compressed, CompressedAdapter};
use sinedelta::quantizer::{dequantize, quantize_matrix, QuantizedTensor};
use sinedelta::tensor::{matmul, sigma_max, stable_rank, Matrix};
use sinedelta::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    InvalidInput = 2,
    Domain = 3,
    Numeric = 4,
    CorruptData = 5,
    Io = 6,
    /// The library panicked; the handle arguments should be considered unusable.
    Panic = 7,
}

/// Delta activation.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdFlavor {
    Plain = 0,
    Sine = 1,
}

/// Interpolation scheme for Bjøntegaard-Delta metrics.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdInterpolator {
    Akima = 0,
    CubicFit = 1,
}

/// Dense row-major matrix of doubles.
pub struct SdMatrix(Matrix);

/// One tensor quantized against its own codebook.
pub struct SdQuantized(QuantizedTensor);

/// Compressed adapter container.
pub struct SdAdapter(CompressedAdapter);

/// Both BD metrics for one pair of curves.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SdBdResult {
    /// Percent rate change at equal quality.
    pub bd_rate: f64,
    /// Mean quality change at equal rate.
    pub bd_quality: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SdStatus {
    match e {
        Error::InvalidInput(_) => SdStatus::InvalidInput,
        Error::Domain(_) => SdStatus::Domain,
        Error::Numeric { .. } => SdStatus::Numeric,
        Error::CorruptData { .. } => SdStatus::CorruptData,
        Error::Io(_) => SdStatus::Io,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type FfiResult<T> = Result<T, Failure>;

fn guard(f: impl FnOnce() -> FfiResult<()>) -> SdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SdStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("null pointer: {what}"));
            SdStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            SdStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &'static str) -> FfiResult<&'a T> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &'static str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Lib(Error::InvalidInput(format!("{what} is not valid UTF-8"))))
}

fn flavor(f: SdFlavor) -> Flavor {
    match f {
        SdFlavor::Plain => Flavor::Plain,
        SdFlavor::Sine => Flavor::Sine,
    }
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Message of the most recent failure on this thread, or null if none.
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn sd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `rows * cols` row-major values into a new matrix.
///
/// # Safety
/// `data` must point to `rows * cols` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_matrix_new(
    rows: usize,
    cols: usize,
    data: *const f64,
    out: *mut *mut SdMatrix,
) -> SdStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::InvalidInput(format!("shape {rows}x{cols} overflows")))?;
        let values = slice(data, len, "data")?;
        *out = boxed(SdMatrix(Matrix::new(rows, cols, values.to_vec())?));
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sd_matrix_free(m: *mut SdMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a live handle; `rows` and `cols` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_matrix_shape(m: *const SdMatrix, rows: *mut usize, cols: *mut usize) -> SdStatus {
    guard(|| {
        let m = borrow(m, "matrix")?;
        let rows = out_ptr(rows, "rows")?;
        let cols = out_ptr(cols, "cols")?;
        (*rows, *cols) = m.0.shape();
        Ok(())
    })
}

/// Copies the row-major values into `buf`, which must hold `rows * cols`.
///
/// # Safety
/// `m` must be a live handle; `buf` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sd_matrix_copy_data(m: *const SdMatrix, buf: *mut f64, len: usize) -> SdStatus {
    guard(|| {
        let m = borrow(m, "matrix")?;
        let data = m.0.data();
        if len < data.len() {
            return Err(Error::InvalidInput(format!("buffer holds {len} values, need {}", data.len())).into());
        }
        if data.is_empty() {
            return Ok(());
        }
        if buf.is_null() {
            return Err(Failure::Null("buf"));
        }
        ptr::copy_nonoverlapping(data.as_ptr(), buf, data.len());
        Ok(())
    })
}

/// # Safety
/// `a` and `b` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_matmul(a: *const SdMatrix, b: *const SdMatrix, out: *mut *mut SdMatrix) -> SdStatus {
    guard(|| {
        let (a, b) = (borrow(a, "a")?, borrow(b, "b")?);
        let out = out_ptr(out, "out")?;
        *out = boxed(SdMatrix(matmul(&a.0, &b.0)?));
        Ok(())
    })
}

/// `‖M‖_F² / σ_max²`. Fails with `Domain` on the zero matrix.
///
/// # Safety
/// `m` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_stable_rank(m: *const SdMatrix, out: *mut f64) -> SdStatus {
    guard(|| {
        let m = borrow(m, "matrix")?;
        *out_ptr(out, "out")? = stable_rank(&m.0)?;
        Ok(())
    })
}

/// # Safety
/// `m` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_sigma_max(m: *const SdMatrix, out: *mut f64) -> SdStatus {
    guard(|| {
        let m = borrow(m, "matrix")?;
        *out_ptr(out, "out")? = sigma_max(&m.0)?;
        Ok(())
    })
}

/// Quantizes a matrix with an optimal codebook of at most `2^bits` levels.
///
/// # Safety
/// `m` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_quantize(m: *const SdMatrix, bits: u8, out: *mut *mut SdQuantized) -> SdStatus {
    guard(|| {
        let m = borrow(m, "matrix")?;
        let out = out_ptr(out, "out")?;
        *out = boxed(SdQuantized(quantize_matrix(&m.0, bits)?));
        Ok(())
    })
}

/// # Safety
/// `q` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sd_quantized_free(q: *mut SdQuantized) {
    if !q.is_null() {
        drop(Box::from_raw(q));
    }
}

/// Number of codebook levels actually used.
///
/// # Safety
/// `q` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_quantized_levels(q: *const SdQuantized, out: *mut usize) -> SdStatus {
    guard(|| {
        let q = borrow(q, "quantized")?;
        *out_ptr(out, "out")? = q.0.codebook().len();
        Ok(())
    })
}

/// # Safety
/// `q` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_dequantize(q: *const SdQuantized, out: *mut *mut SdMatrix) -> SdStatus {
    guard(|| {
        let q = borrow(q, "quantized")?;
        let out = out_ptr(out, "out")?;
        *out = boxed(SdMatrix(dequantize(&q.0)?));
        Ok(())
    })
}

/// Weight delta from quantized factors. A non-positive `gamma` selects the
/// default `√n`.
///
/// # Safety
/// `qa` and `qb` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_reconstruct_delta(
    qa: *const SdQuantized,
    qb: *const SdQuantized,
    flavor_: SdFlavor,
    omega: f64,
    gamma: f64,
    out: *mut *mut SdMatrix,
) -> SdStatus {
    guard(|| {
        let (qa, qb) = (borrow(qa, "qa")?, borrow(qb, "qb")?);
        let out = out_ptr(out, "out")?;
        let gamma = (gamma > 0.0).then_some(gamma);
        *out = boxed(SdMatrix(reconstruct_quantized_delta(
            &qa.0,
            &qb.0,
            omega,
            gamma,
            flavor(flavor_),
        )?));
        Ok(())
    })
}

/// Parses and validates a container held in memory.
///
/// # Safety
/// `bytes` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_adapter_from_bytes(bytes: *const u8, len: usize, out: *mut *mut SdAdapter) -> SdStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let bytes = slice(bytes, len, "bytes")?;
        *out = boxed(SdAdapter(read_compressed(bytes)?));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_adapter_load(path: *const c_char, out: *mut *mut SdAdapter) -> SdStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let path = str_arg(path, "path")?;
        *out = boxed(SdAdapter(load_compressed(path)?));
        Ok(())
    })
}

/// # Safety
/// `a` must be a live handle; `path` must be a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn sd_adapter_save(a: *const SdAdapter, path: *const c_char) -> SdStatus {
    guard(|| {
        let a = borrow(a, "adapter")?;
        save_compressed(str_arg(path, "path")?, &a.0)?;
        Ok(())
    })
}

/// Serializes into `buf`. Call with a null `buf` to learn the size through
/// `written`; a buffer that is too small fails with `InvalidInput` and still
/// reports the required size.
///
/// # Safety
/// `a` must be a live handle; `buf` must be null or have room for `cap`
/// bytes; `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_adapter_to_bytes(
    a: *const SdAdapter,
    buf: *mut u8,
    cap: usize,
    written: *mut usize,
) -> SdStatus {
    guard(|| {
        let a = borrow(a, "adapter")?;
        let written = out_ptr(written, "written")?;
        let bytes = write_compressed(&a.0)?;
        *written = bytes.len();
        if buf.is_null() {
            return Ok(());
        }
        if cap < bytes.len() {
            return Err(Error::InvalidInput(format!("buffer holds {cap} bytes, need {}", bytes.len())).into());
        }
        ptr::copy_nonoverlapping(bytes.as_ptr(), buf, bytes.len());
        Ok(())
    })
}

/// # Safety
/// `a` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sd_adapter_free(a: *mut SdAdapter) {
    if !a.is_null() {
        drop(Box::from_raw(a));
    }
}

/// Number of named tensors in the container.
///
/// # Safety
/// `a` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_adapter_tensor_count(a: *const SdAdapter, out: *mut usize) -> SdStatus {
    guard(|| {
        let a = borrow(a, "adapter")?;
        *out_ptr(out, "out")? = a.0.tensors.len();
        Ok(())
    })
}

/// Serialized size in bytes.
///
/// # Safety
/// `a` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_adapter_footprint(a: *const SdAdapter, out: *mut usize) -> SdStatus {
    guard(|| {
        let a = borrow(a, "adapter")?;
        *out_ptr(out, "out")? = memory_footprint(&a.0);
        Ok(())
    })
}

/// Copy of the tensor stored under `name`.
///
/// # Safety
/// `a` must be a live handle; `name` must be a NUL-terminated UTF-8 string;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_adapter_tensor(
    a: *const SdAdapter,
    name: *const c_char,
    out: *mut *mut SdQuantized,
) -> SdStatus {
    guard(|| {
        let a = borrow(a, "adapter")?;
        let name = str_arg(name, "name")?;
        let out = out_ptr(out, "out")?;
        let q =
            a.0.get(name)
                .ok_or_else(|| Error::InvalidInput(format!("no tensor named '{name}'")))?;
        *out = boxed(SdQuantized(q.clone()));
        Ok(())
    })
}

/// Delta for `layer` from `<layer>.A` and `<layer>.B`, using the flavor,
/// frequency and gamma rule recorded in the container.
///
/// # Safety
/// `a` must be a live handle; `layer` must be a NUL-terminated UTF-8 string;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_adapter_layer_delta(
    a: *const SdAdapter,
    layer: *const c_char,
    out: *mut *mut SdMatrix,
) -> SdStatus {
    guard(|| {
        let a = &borrow(a, "adapter")?.0;
        let layer = str_arg(layer, "layer")?;
        let out = out_ptr(out, "out")?;
        let get = |suffix: &str| {
            a.get(&format!("{layer}.{suffix}"))
                .ok_or_else(|| Error::InvalidInput(format!("no tensor named '{layer}.{suffix}'")))
        };
        let (qa, qb) = (get("A")?, get("B")?);
        let n = *qb.shape().last().unwrap_or(&0);
        let gamma = sinedelta::adapter::default_gamma(n, a.gamma_multiplier);
        *out = boxed(SdMatrix(reconstruct_quantized_delta(
            qa,
            qb,
            a.omega,
            Some(gamma),
            a.flavor,
        )?));
        Ok(())
    })
}

/// BD-rate and BD-quality of `test` against `anchor`. Each curve needs at
/// least four points with positive rates.
///
/// # Safety
/// Each array must hold its curve's point count of readable doubles; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_bd_compare(
    anchor_rates: *const f64,
    anchor_qualities: *const f64,
    anchor_len: usize,
    test_rates: *const f64,
    test_qualities: *const f64,
    test_len: usize,
    method: SdInterpolator,
    out: *mut SdBdResult,
) -> SdStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let anchor = RDCurve::from_pairs(
            "anchor",
            slice(anchor_rates, anchor_len, "anchor_rates")?,
            slice(anchor_qualities, anchor_len, "anchor_qualities")?,
        )?;
        let test = RDCurve::from_pairs(
            "test",
            slice(test_rates, test_len, "test_rates")?,
            slice(test_qualities, test_len, "test_qualities")?,
        )?;
        let method = match method {
            SdInterpolator::Akima => Interpolator::Akima,
            SdInterpolator::CubicFit => Interpolator::CubicFit,
        };
        let r = compare(&anchor, &test, method)?;
        *out = SdBdResult {
            bd_rate: r.bd_rate,
            bd_quality: r.bd_quality,
        };
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: usize, cols: usize, data: &[f64]) -> *mut SdMatrix {
        let mut m = ptr::null_mut();
        assert_eq!(
            unsafe { sd_matrix_new(rows, cols, data.as_ptr(), &mut m) },
            SdStatus::Ok
        );
        m
    }

    fn last_error() -> String {
        unsafe { CStr::from_ptr(sd_last_error_message()) }
            .to_string_lossy()
            .into_owned()
    }

    #[test]
    fn matrix_round_trip_and_stable_rank() {
        let m = matrix(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let (mut r, mut c) = (0, 0);
        let mut sr = 0.0;
        let mut buf = [0.0; 4];
        unsafe {
            assert_eq!(sd_matrix_shape(m, &mut r, &mut c), SdStatus::Ok);
            assert_eq!(sd_stable_rank(m, &mut sr), SdStatus::Ok);
            assert_eq!(sd_matrix_copy_data(m, buf.as_mut_ptr(), 4), SdStatus::Ok);
            assert_eq!(sd_matrix_copy_data(m, buf.as_mut_ptr(), 3), SdStatus::InvalidInput);
            sd_matrix_free(m);
        }
        assert_eq!((r, c), (2, 2));
        assert!((sr - 1.25).abs() < 1e-9);
        assert_eq!(buf, [2.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn errors_map_to_status_codes() {
        let mut out = ptr::null_mut();
        let status = unsafe { sd_matrix_new(2, 2, ptr::null(), &mut out) };
        assert_eq!(status, SdStatus::NullPointer);
        assert!(last_error().contains("data"));
        assert!(out.is_null());

        let z = matrix(2, 3, &[0.0; 6]);
        let mut sr = -1.0;
        assert_eq!(unsafe { sd_stable_rank(z, &mut sr) }, SdStatus::Domain);
        assert_eq!(sr, -1.0);
        let mut q = ptr::null_mut();
        assert_eq!(unsafe { sd_quantize(z, 17, &mut q) }, SdStatus::InvalidInput);
        unsafe { sd_matrix_free(z) };

        let garbage = [0u8; 16];
        let mut a = ptr::null_mut();
        assert_eq!(
            unsafe { sd_adapter_from_bytes(garbage.as_ptr(), 16, &mut a) },
            SdStatus::CorruptData
        );
        let missing = CString::new("/nonexistent/adapter.sldq").unwrap();
        assert_eq!(unsafe { sd_adapter_load(missing.as_ptr(), &mut a) }, SdStatus::Io);
    }

    #[test]
    fn quantize_and_reconstruct() {
        let a = matrix(3, 2, &[0.1, -0.2, 0.3, 0.05, -0.4, 0.2]);
        let b = matrix(2, 4, &[0.5, -0.1, 0.0, 0.2, 0.3, 0.3, -0.2, 0.1]);
        let (mut qa, mut qb) = (ptr::null_mut(), ptr::null_mut());
        let mut levels = 0;
        let mut delta = ptr::null_mut();
        let mut buf = [0.0; 12];
        unsafe {
            assert_eq!(sd_quantize(a, 16, &mut qa), SdStatus::Ok);
            assert_eq!(sd_quantize(b, 16, &mut qb), SdStatus::Ok);
            assert_eq!(sd_quantized_levels(qa, &mut levels), SdStatus::Ok);
            assert_eq!(
                sd_reconstruct_delta(qa, qb, SdFlavor::Sine, 200.0, 0.0, &mut delta),
                SdStatus::Ok
            );
            assert_eq!(sd_matrix_copy_data(delta, buf.as_mut_ptr(), 12), SdStatus::Ok);
            sd_matrix_free(delta);
            assert_eq!(
                sd_reconstruct_delta(qb, qa, SdFlavor::Plain, 1.0, 0.0, &mut delta),
                SdStatus::InvalidInput
            );
            sd_quantized_free(qa);
            sd_quantized_free(qb);
            sd_matrix_free(a);
            sd_matrix_free(b);
        }
        assert_eq!(levels, 6);
        assert!(buf.iter().all(|v| v.abs() <= 0.5 + 1e-12));
    }

    #[test]
    fn bd_compare_identical_curves() {
        let rates = [1.0, 2.0, 3.0, 4.0];
        let quality = [10.0, 12.0, 13.0, 13.5];
        let mut r = SdBdResult {
            bd_rate: 1.0,
            bd_quality: 1.0,
        };
        let status = unsafe {
            sd_bd_compare(
                rates.as_ptr(),
                quality.as_ptr(),
                4,
                rates.as_ptr(),
                quality.as_ptr(),
                4,
                SdInterpolator::Akima,
                &mut r,
            )
        };
        assert_eq!(status, SdStatus::Ok);
        assert!(r.bd_rate.abs() < 1e-9 && r.bd_quality.abs() < 1e-9);
    }

    #[test]
    fn version_is_terminated() {
        let v = unsafe { CStr::from_ptr(sd_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
