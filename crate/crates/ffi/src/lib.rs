//! C interface to the excess-mass estimators.
//!
//! Objects cross the boundary as opaque handles that the caller releases with
//! the matching `em_*_free`. Every fallible call returns an [`EmStatus`]; the
//! message of the last failure on the calling thread is available from
//! [`em_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use excess_mass::densities::{DensitySpec, Sample};
use excess_mass::excess::{self, ExcessMassCurve, Method, PipelineConfig};
use excess_mass::{fourier, kde, Error};

/// Result of a call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InputError = 3,
    NumericError = 4,
    Panic = 5,
}

/// Estimator selector for [`em_estimate_curve`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmMethod {
    Plugin = 0,
    FunctionalMean = 1,
    FunctionalCorrected = 2,
    Wavelet = 3,
}

/// A mixture density.
pub struct EmDensity(DensitySpec);

/// A sample of points.
pub struct EmSample(Sample);

/// Excess-mass values on a level grid.
pub struct EmCurve(ExcessMassCurve);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> EmStatus {
    match err {
        Error::InvalidParameter { .. } => EmStatus::InvalidArgument,
        Error::Overflow(_)
        | Error::NonFinite(_)
        | Error::InvalidBandwidth(_)
        | Error::GridMismatch => EmStatus::NumericError,
        _ => EmStatus::InputError,
    }
}

fn guard<F>(f: F) -> EmStatus
where
    F: FnOnce() -> Result<(), EmStatus>,
{
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EmStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => {
            set_error("internal panic".to_string());
            EmStatus::Panic
        }
    }
}

fn fail(err: Error) -> EmStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

fn null(name: &str) -> EmStatus {
    set_error(format!("`{name}` is null"));
    EmStatus::NullPointer
}

unsafe fn as_ref<'a, T>(p: *const T, name: &str) -> Result<&'a T, EmStatus> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn as_slice<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], EmStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn as_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, EmStatus> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("`{name}` is not valid UTF-8"));
        EmStatus::InvalidArgument
    })
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), EmStatus> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn copy_out(src: &[f64], out: *mut f64, capacity: usize) -> Result<(), EmStatus> {
    if capacity < src.len() {
        set_error(format!(
            "buffer holds {capacity} values, need {}",
            src.len()
        ));
        return Err(EmStatus::InvalidArgument);
    }
    if src.is_empty() {
        return Ok(());
    }
    if out.is_null() {
        return Err(null("out"));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. Valid until the next call.
#[no_mangle]
pub extern "C" fn em_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Built-in density by id (`a`..`d`, `A`..`D`).
///
/// # Safety
/// `id` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn em_density_builtin(
    id: *const c_char,
    out: *mut *mut EmDensity,
) -> EmStatus {
    guard(|| {
        let id = as_str(id, "id")?;
        let spec = DensitySpec::builtin(id).map_err(fail)?;
        put(out, EmDensity(spec))
    })
}

/// Density from its JSON description.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn em_density_from_json(
    json: *const c_char,
    out: *mut *mut EmDensity,
) -> EmStatus {
    guard(|| {
        let text = as_str(json, "json")?;
        let spec = DensitySpec::from_json(text).map_err(fail)?;
        put(out, EmDensity(spec))
    })
}

/// # Safety
/// `density` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn em_density_free(density: *mut EmDensity) {
    if !density.is_null() {
        drop(Box::from_raw(density));
    }
}

/// Dimension of the density, 0 for NULL.
///
/// # Safety
/// `density` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn em_density_dimension(density: *const EmDensity) -> usize {
    density.as_ref().map_or(0, |d| d.0.dimension())
}

/// Density value at a point of `len` coordinates.
///
/// # Safety
/// `x` must point to `len` doubles and `out` to one double.
#[no_mangle]
pub unsafe extern "C" fn em_density_pdf(
    density: *const EmDensity,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> EmStatus {
    guard(|| {
        let d = as_ref(density, "density")?;
        let x = as_slice(x, len, "x")?;
        let v = d.0.pdf(x).map_err(fail)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = v;
        Ok(())
    })
}

/// `n` draws from the density with a seed.
///
/// # Safety
/// `density` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn em_density_sample(
    density: *const EmDensity,
    n: usize,
    seed: u64,
    out: *mut *mut EmSample,
) -> EmStatus {
    guard(|| {
        let d = as_ref(density, "density")?;
        let s = d.0.sample(n, seed).map_err(fail)?;
        put(out, EmSample(s))
    })
}

/// Exact excess mass at one level by quadrature; `grid_points` 0 picks the default.
///
/// # Safety
/// `density` must be a live handle and `out` point to one double.
#[no_mangle]
pub unsafe extern "C" fn em_oracle_excess_mass(
    density: *const EmDensity,
    level: f64,
    grid_points: usize,
    out: *mut f64,
) -> EmStatus {
    guard(|| {
        let d = as_ref(density, "density")?;
        let points = if grid_points == 0 {
            d.0.default_oracle_points()
        } else {
            grid_points
        };
        let v = d.0.oracle_excess_mass(level, points).map_err(fail)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = v;
        Ok(())
    })
}

/// Exact excess-mass curve on ascending levels.
///
/// # Safety
/// `levels` must point to `count` doubles and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn em_oracle_curve(
    density: *const EmDensity,
    levels: *const f64,
    count: usize,
    out: *mut *mut EmCurve,
) -> EmStatus {
    guard(|| {
        let d = as_ref(density, "density")?;
        let levels = as_slice(levels, count, "levels")?;
        let c = d.0.oracle_curve(levels).map_err(fail)?;
        put(out, EmCurve(c))
    })
}

/// Sample from `n` row-major points of dimension `dim`.
///
/// # Safety
/// `points` must point to `n * dim` doubles and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn em_sample_from_points(
    points: *const f64,
    n: usize,
    dim: usize,
    out: *mut *mut EmSample,
) -> EmStatus {
    guard(|| {
        let total = n.checked_mul(dim).ok_or_else(|| {
            set_error("n * dim overflows".to_string());
            EmStatus::InvalidArgument
        })?;
        let values = as_slice(points, total, "points")?;
        let s = Sample::new(dim, values.to_vec()).map_err(fail)?;
        put(out, EmSample(s))
    })
}

/// # Safety
/// `sample` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn em_sample_free(sample: *mut EmSample) {
    if !sample.is_null() {
        drop(Box::from_raw(sample));
    }
}

/// Number of points, 0 for NULL.
///
/// # Safety
/// `sample` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn em_sample_len(sample: *const EmSample) -> usize {
    sample.as_ref().map_or(0, |s| s.0.len())
}

/// Dimension of the points, 0 for NULL.
///
/// # Safety
/// `sample` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn em_sample_dimension(sample: *const EmSample) -> usize {
    sample.as_ref().map_or(0, |s| s.0.dimension())
}

/// Copies the row-major points into `out`, which holds `capacity` doubles.
///
/// # Safety
/// `out` must point to `capacity` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn em_sample_points(
    sample: *const EmSample,
    out: *mut f64,
    capacity: usize,
) -> EmStatus {
    guard(|| {
        let s = as_ref(sample, "sample")?;
        copy_out(s.0.as_flat(), out, capacity)
    })
}

/// Cosine coefficients `c_0..c_order` of `(|u| - level)_+` on scale `scale`;
/// `out` must hold `order + 1` doubles.
///
/// # Safety
/// `out` must point to `capacity` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn em_coefficients(
    level: f64,
    order: usize,
    scale: f64,
    out: *mut f64,
    capacity: usize,
) -> EmStatus {
    guard(|| {
        let c = fourier::coefficients(level, order, scale).map_err(fail)?;
        copy_out(c.values(), out, capacity)
    })
}

/// Estimated excess-mass curve of a sample on ascending levels.
///
/// The integration box is the default box of `support` when given, else the
/// data range padded by four reference bandwidths. `order` 0 and
/// `bootstrap` 0 select the automatic order and 100 replications.
///
/// # Safety
/// Handles must be live (`support` may be NULL), `levels` must point to
/// `count` doubles and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn em_estimate_curve(
    sample: *const EmSample,
    support: *const EmDensity,
    levels: *const f64,
    count: usize,
    method: EmMethod,
    order: usize,
    bootstrap: usize,
    seed: u64,
    out: *mut *mut EmCurve,
) -> EmStatus {
    guard(|| {
        let s = &as_ref(sample, "sample")?.0;
        let levels = as_slice(levels, count, "levels")?;
        let b = match support.as_ref() {
            Some(d) => d.0.default_box(),
            None => {
                let h = kde::bandwidth_auto(s).map_err(fail)?;
                excess::data_box(s, &h).map_err(fail)?
            }
        };
        let config = PipelineConfig {
            order: (order > 0).then_some(order),
            replications: if bootstrap == 0 {
                kde::DEFAULT_REPLICATIONS
            } else {
                bootstrap
            },
            ..Default::default()
        };
        let m = match method {
            EmMethod::Plugin => Method::Plugin,
            EmMethod::FunctionalMean => Method::FunctionalMean,
            EmMethod::FunctionalCorrected => Method::FunctionalCorrected,
            EmMethod::Wavelet => Method::Wavelet,
        };
        let mut result = excess::run_pipeline(s, &b, levels, &[m], &config, seed).map_err(fail)?;
        put(out, EmCurve(result.curves.remove(0)))
    })
}

/// # Safety
/// `curve` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn em_curve_free(curve: *mut EmCurve) {
    if !curve.is_null() {
        drop(Box::from_raw(curve));
    }
}

/// Number of levels, 0 for NULL.
///
/// # Safety
/// `curve` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn em_curve_len(curve: *const EmCurve) -> usize {
    curve.as_ref().map_or(0, |c| c.0.len())
}

/// Copies the levels into `out`, which holds `capacity` doubles.
///
/// # Safety
/// `out` must point to `capacity` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn em_curve_levels(
    curve: *const EmCurve,
    out: *mut f64,
    capacity: usize,
) -> EmStatus {
    guard(|| copy_out(as_ref(curve, "curve")?.0.levels(), out, capacity))
}

/// Copies the values into `out`, which holds `capacity` doubles.
///
/// # Safety
/// `out` must point to `capacity` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn em_curve_values(
    curve: *const EmCurve,
    out: *mut f64,
    capacity: usize,
) -> EmStatus {
    guard(|| copy_out(as_ref(curve, "curve")?.0.values(), out, capacity))
}
