//! C interface to the enhp library.
//!
//! Models are opaque handles created by `enhp_model_load` and released with
//! `enhp_model_free`. Every fallible function returns an `EnhpStatus`; on a
//! nonzero status `enhp_last_error` describes the failure on the calling
//! thread. Event sequences cross the boundary as parallel arrays of times and
//! type indices. Panics never unwind into C; they surface as
//! `ENHP_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use enhp::model::{load_model, save_model, IntegratorConfig, IntensityModel};
use enhp::{Error, Event, EventSequence};

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnhpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Numerical = 5,
    Panic = 6,
}

/// A fitted model.
pub struct EnhpModel {
    inner: enhp::EnhpModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

type Failure = (EnhpStatus, String);

fn set_last_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn status_of(e: &Error) -> EnhpStatus {
    match e {
        Error::Io { .. } => EnhpStatus::Io,
        Error::Parse { .. } | Error::Serde(_) | Error::Csv(_) | Error::FormatVersion { .. } => EnhpStatus::Parse,
        e if e.is_numerical() => EnhpStatus::Numerical,
        _ => EnhpStatus::InvalidArgument,
    }
}

fn fail(e: Error) -> Failure {
    (status_of(&e), e.to_string())
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> EnhpStatus {
    let outcome = catch_unwind(AssertUnwindSafe(f));
    let (status, message) = match outcome {
        Ok(Ok(())) => {
            set_last_error("");
            return EnhpStatus::Ok;
        }
        Ok(Err(failure)) => failure,
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            (EnhpStatus::Panic, format!("panic: {msg}"))
        }
    };
    set_last_error(&message);
    status
}

fn null(what: &str) -> Failure {
    (EnhpStatus::NullPointer, format!("{what} is null"))
}

unsafe fn model_ref<'a>(model: *const EnhpModel) -> Result<&'a enhp::EnhpModel, Failure> {
    model.as_ref().map(|m| &m.inner).ok_or_else(|| null("model"))
}

unsafe fn path_arg(path: *const c_char) -> Result<String, Failure> {
    if path.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| (EnhpStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

unsafe fn events_arg(times: *const f64, types: *const usize, n: usize) -> Result<Vec<Event>, Failure> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if times.is_null() {
        return Err(null("times"));
    }
    if types.is_null() {
        return Err(null("types"));
    }
    let times = std::slice::from_raw_parts(times, n);
    let types = std::slice::from_raw_parts(types, n);
    Ok(times.iter().zip(types).map(|(&t, &k)| Event::new(t, k)).collect())
}

unsafe fn out_slice<'a>(out: *mut f64, len: usize, needed: usize) -> Result<&'a mut [f64], Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    if len < needed {
        return Err((
            EnhpStatus::InvalidArgument,
            format!("output buffer holds {len} values but {needed} are needed"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(out, needed))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = value;
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn enhp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or an empty string. The
/// pointer stays valid until the next enhp call on the same thread.
#[no_mangle]
pub extern "C" fn enhp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a checkpoint. On success `*out` owns a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn enhp_model_load(path: *const c_char, out: *mut *mut EnhpModel) -> EnhpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = path_arg(path)?;
        let inner = load_model(&path).map_err(fail)?;
        *out = Box::into_raw(Box::new(EnhpModel { inner }));
        Ok(())
    })
}

/// Writes the model as a checkpoint without provenance.
///
/// # Safety
/// `model` must come from `enhp_model_load`; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn enhp_model_save(model: *const EnhpModel, path: *const c_char) -> EnhpStatus {
    guard(|| {
        let m = model_ref(model)?;
        let path = path_arg(path)?;
        save_model(m, &path).map_err(fail)
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must come from `enhp_model_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn enhp_model_free(model: *mut EnhpModel) {
    if !model.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(model))));
    }
}

/// Number of event types M, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or come from `enhp_model_load`.
#[no_mangle]
pub unsafe extern "C" fn enhp_model_num_types(model: *const EnhpModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.num_types())
}

/// Embedding dimension D, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or come from `enhp_model_load`.
#[no_mangle]
pub unsafe extern "C" fn enhp_model_embed_dim(model: *const EnhpModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.embed_dim())
}

/// Impact of a type-`source` event on the type-`target` intensity after a
/// gap `dt >= 0`.
///
/// # Safety
/// `model` must come from `enhp_model_load`; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn enhp_model_impact(
    model: *const EnhpModel,
    source: usize,
    target: usize,
    dt: f64,
    out: *mut f64,
) -> EnhpStatus {
    guard(|| {
        let m = model_ref(model)?;
        let v = m.impact(source, target, dt).map_err(fail)?;
        write_out(out, v)
    })
}

/// Per-type intensities at time `t` given the `n` history events (all at or
/// before `t`, in time order). Writes M values to `out`.
///
/// # Safety
/// `times` and `types` must hold `n` values; `out` must hold `out_len`.
#[no_mangle]
pub unsafe extern "C" fn enhp_model_intensities(
    model: *const EnhpModel,
    times: *const f64,
    types: *const usize,
    n: usize,
    t: f64,
    out: *mut f64,
    out_len: usize,
) -> EnhpStatus {
    guard(|| {
        let m = model_ref(model)?;
        let history = events_arg(times, types, n)?;
        let lam = m.intensities_after(&history, t).map_err(fail)?;
        out_slice(out, out_len, lam.len())?.copy_from_slice(&lam);
        Ok(())
    })
}

/// Log-likelihood of one sequence observed on `[0, t_end]`, with the
/// compensator integrated by the trapezoid rule at `knots_per_interval`
/// interior knots between consecutive events.
///
/// # Safety
/// `times` and `types` must hold `n` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn enhp_model_log_likelihood(
    model: *const EnhpModel,
    times: *const f64,
    types: *const usize,
    n: usize,
    t_end: f64,
    knots_per_interval: usize,
    out: *mut f64,
) -> EnhpStatus {
    guard(|| {
        let m = model_ref(model)?;
        let seq = EventSequence::new("ffi", t_end, events_arg(times, types, n)?);
        let cfg = IntegratorConfig::trapezoid(knots_per_interval);
        let ll = m.sequence_log_likelihood(&seq, &cfg).map_err(fail)?;
        write_out(out, ll)
    })
}

/// Cumulative impacts over `[0, horizon]` (trapezoid with `steps` steps) as an
/// M×M row-major matrix; row is the source type.
///
/// # Safety
/// `out` must hold `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn enhp_model_cumulative_impact(
    model: *const EnhpModel,
    horizon: f64,
    steps: usize,
    out: *mut f64,
    out_len: usize,
) -> EnhpStatus {
    guard(|| {
        let m = model_ref(model)?;
        let summary = enhp::interpret::cumulative_impact(m, horizon, steps).map_err(fail)?;
        let flat: Vec<f64> = summary.matrix.into_iter().flatten().collect();
        out_slice(out, out_len, flat.len())?.copy_from_slice(&flat);
        Ok(())
    })
}

/// Next-event prediction after the `n` history events: expected time (with
/// the integral cut at `h_mult * mean_gap` past the last event) and the most
/// intense type at that time.
///
/// # Safety
/// `times` and `types` must hold `n` values; `out_time` and `out_type` must
/// be valid.
#[no_mangle]
pub unsafe extern "C" fn enhp_model_predict_next(
    model: *const EnhpModel,
    times: *const f64,
    types: *const usize,
    n: usize,
    mean_gap: f64,
    h_mult: f64,
    out_time: *mut f64,
    out_type: *mut usize,
) -> EnhpStatus {
    guard(|| {
        let m = model_ref(model)?;
        let history = events_arg(times, types, n)?;
        let t_last = history.last().map_or(0.0, |e| e.t);
        let cfg = enhp::predict::PredictionConfig {
            h_mult,
            ..Default::default()
        };
        let pred = enhp::predict::predict_next_time(m, &history, t_last, mean_gap, &cfg).map_err(fail)?;
        let k = enhp::predict::predict_next_type(m, &history, pred.predicted_time).map_err(fail)?;
        write_out(out_time, pred.predicted_time)?;
        write_out(out_type, k)
    })
}

/// Runs the gradient check on `num_models` random models. `*out_worst`
/// receives the worst relative error; the status is `ENHP_STATUS_NUMERICAL`
/// when it exceeds the tolerance.
///
/// # Safety
/// `out_worst` must be valid.
#[no_mangle]
pub unsafe extern "C" fn enhp_gradcheck(seed: u64, num_models: usize, out_worst: *mut f64) -> EnhpStatus {
    guard(|| {
        let cfg = enhp::gradcheck::GradCheckConfig {
            seed,
            num_models,
            ..Default::default()
        };
        let report = enhp::gradcheck::run_gradcheck(&cfg).map_err(fail)?;
        write_out(out_worst, report.worst_relative_error())?;
        if report.passed {
            Ok(())
        } else {
            Err(fail(Error::GradCheck {
                worst: report.worst_relative_error(),
                tolerance: report.tolerance,
            }))
        }
    })
}
