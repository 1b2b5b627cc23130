//! C ABI for the sln-raresim estimators.
//!
//! Models are opaque handles created by `slnr_model_new` or
//! `slnr_model_from_json` and released with `slnr_model_free`. Every
//! fallible call returns an `SLNR_*` status code; the message for the most
//! recent failure on the calling thread is available from
//! `slnr_last_error_message`.

use libc::{c_char, c_int};
use sln_raresim::cli::{estimate, EstimateRequest, EstimatorChoice, Quantity, StreamChoice};
use sln_raresim::config::ModelSpec;
use sln_raresim::lefttail::sample_conditional;
use sln_raresim::righttail::ell_as;
use sln_raresim::rng_qmc::UniformStream;
use sln_raresim::{Error, SlnModel};
use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

pub const SLNR_OK: c_int = 0;
pub const SLNR_ERR_NULL_POINTER: c_int = 1;
pub const SLNR_ERR_INVALID_ARGUMENT: c_int = 2;
pub const SLNR_ERR_MODEL: c_int = 3;
pub const SLNR_ERR_CONFIG: c_int = 4;
pub const SLNR_ERR_NUMERICAL: c_int = 5;
pub const SLNR_ERR_PANIC: c_int = 6;

pub const SLNR_QUANTITY_CDF: u32 = 0;
pub const SLNR_QUANTITY_PDF: u32 = 1;
pub const SLNR_QUANTITY_RIGHT_TAIL: u32 = 2;

pub const SLNR_ESTIMATOR_NEW: u32 = 0;
pub const SLNR_ESTIMATOR_SIMPLE: u32 = 1;
pub const SLNR_ESTIMATOR_CRUDE: u32 = 2;
pub const SLNR_ESTIMATOR_VAR_BOOST: u32 = 3;
pub const SLNR_ESTIMATOR_AK: u32 = 4;
pub const SLNR_ESTIMATOR_ISVE: u32 = 5;
pub const SLNR_ESTIMATOR_GT: u32 = 6;

pub const SLNR_STREAM_PSEUDO: u32 = 0;
pub const SLNR_STREAM_SOBOL: u32 = 1;

pub const SLNR_FLAG_OPTIMIZER_FALLBACK: u32 = 1;
pub const SLNR_FLAG_ALL_ZERO: u32 = 2;
pub const SLNR_FLAG_NO_VARIANCE: u32 = 4;
pub const SLNR_FLAG_EMPTY_STRATUM: u32 = 8;

/// Opaque model handle.
pub struct SlnrModel {
    inner: SlnModel,
}

/// Estimate returned by `slnr_estimate`. The estimate is
/// `sign * exp(log_mean)`; `estimate` is that value in double precision
/// (it underflows to 0 below about 1e-308, `log_mean` does not).
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SlnrEstimate {
    pub log_mean: f64,
    pub sign: f64,
    pub estimate: f64,
    pub log10_estimate: f64,
    pub re_percent: f64,
    pub wnrv: f64,
    pub wall_seconds: f64,
    pub n: u64,
    /// Bitwise OR of `SLNR_FLAG_*`.
    pub flags: u32,
}

/// Options for `slnr_estimate`. Start from `slnr_estimate_options_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SlnrEstimateOptions {
    pub quantity: u32,
    pub estimator: u32,
    pub stream: u32,
    pub n: u64,
    pub shifts: u64,
    pub seed: u64,
    /// Variance-boost parameter; NaN selects the default `1 - 1/ln^2 gamma`.
    pub theta: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn error_code(e: &Error) -> c_int {
    match e {
        Error::DimensionMismatch { .. } | Error::NotSymmetric { .. } | Error::NotPositiveDefinite { .. } => {
            SLNR_ERR_MODEL
        }
        Error::Config(_) | Error::Io(_) => SLNR_ERR_CONFIG,
        Error::NoConvergence { .. } | Error::Unbounded | Error::EmptyRegion => SLNR_ERR_NUMERICAL,
        _ => SLNR_ERR_INVALID_ARGUMENT,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), (c_int, String)>>(f: F) -> c_int {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SLNR_OK,
        Ok(Err((code, msg))) => {
            set_last_error(msg);
            code
        }
        Err(_) => {
            set_last_error("internal panic".into());
            SLNR_ERR_PANIC
        }
    }
}

fn lib_err(e: Error) -> (c_int, String) {
    (error_code(&e), e.to_string())
}

fn null(what: &str) -> (c_int, String) {
    (SLNR_ERR_NULL_POINTER, format!("{what} is null"))
}

fn invalid(msg: String) -> (c_int, String) {
    (SLNR_ERR_INVALID_ARGUMENT, msg)
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn slnr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a model from `nu` (length `d`) and a row-major `d*d` covariance.
///
/// # Safety
/// `nu` must point to `d` doubles, `sigma` to `d*d` doubles, and `out` to
/// writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn slnr_model_new(
    d: usize,
    nu: *const f64,
    sigma: *const f64,
    out: *mut *mut SlnrModel,
) -> c_int {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if nu.is_null() || sigma.is_null() {
            return Err(null("nu or sigma"));
        }
        if d == 0 {
            return Err(invalid("d must be positive".into()));
        }
        let nu = std::slice::from_raw_parts(nu, d).to_vec();
        let flat = std::slice::from_raw_parts(sigma, d * d);
        let rows: Vec<Vec<f64>> = flat.chunks(d).map(|r| r.to_vec()).collect();
        let m = SlnModel::from_rows(nu, &rows).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(SlnrModel { inner: m }));
        Ok(())
    })
}

/// Builds a model from a JSON document in any of the model-file shapes.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn slnr_model_from_json(json: *const c_char, out: *mut *mut SlnrModel) -> c_int {
    guard(|| {
        if out.is_null() || json.is_null() {
            return Err(null("json or out"));
        }
        let text = CStr::from_ptr(json).to_str().map_err(|_| (SLNR_ERR_CONFIG, "json is not UTF-8".to_string()))?;
        let m = ModelSpec::parse(text).and_then(|s| s.build()).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(SlnrModel { inner: m }));
        Ok(())
    })
}

/// Releases a model. NULL is ignored.
///
/// # Safety
/// `model` must come from a `slnr_model_*` constructor and not be used again.
#[no_mangle]
pub unsafe extern "C" fn slnr_model_free(model: *mut SlnrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Dimension of the model, 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn slnr_model_dim(model: *const SlnrModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.dim())
}

/// Defaults: new estimator, CDF, pseudorandom stream, n = 1e6, 100 shifts,
/// seed 1, default theta.
#[no_mangle]
pub extern "C" fn slnr_estimate_options_default() -> SlnrEstimateOptions {
    SlnrEstimateOptions {
        quantity: SLNR_QUANTITY_CDF,
        estimator: SLNR_ESTIMATOR_NEW,
        stream: SLNR_STREAM_PSEUDO,
        n: 1_000_000,
        shifts: 100,
        seed: 1,
        theta: f64::NAN,
    }
}

fn request(opts: &SlnrEstimateOptions, gamma: f64) -> Result<EstimateRequest, (c_int, String)> {
    let quantity = match opts.quantity {
        SLNR_QUANTITY_CDF => Quantity::Cdf,
        SLNR_QUANTITY_PDF => Quantity::Pdf,
        SLNR_QUANTITY_RIGHT_TAIL => Quantity::RightTail,
        q => return Err(invalid(format!("unknown quantity {q}"))),
    };
    let estimator = match opts.estimator {
        SLNR_ESTIMATOR_NEW => EstimatorChoice::New,
        SLNR_ESTIMATOR_SIMPLE => EstimatorChoice::Simple,
        SLNR_ESTIMATOR_CRUDE => EstimatorChoice::Crude,
        SLNR_ESTIMATOR_VAR_BOOST => EstimatorChoice::VarBoost,
        SLNR_ESTIMATOR_AK => EstimatorChoice::Ak,
        SLNR_ESTIMATOR_ISVE => EstimatorChoice::Isve,
        SLNR_ESTIMATOR_GT => EstimatorChoice::Gt,
        e => return Err(invalid(format!("unknown estimator {e}"))),
    };
    let stream = match opts.stream {
        SLNR_STREAM_PSEUDO => StreamChoice::Pseudo,
        SLNR_STREAM_SOBOL => StreamChoice::Sobol,
        s => return Err(invalid(format!("unknown stream {s}"))),
    };
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(invalid(format!("gamma must be positive and finite, got {gamma}")));
    }
    Ok(EstimateRequest {
        quantity,
        estimator,
        gamma,
        n: opts.n,
        stream,
        shifts: opts.shifts,
        seed: opts.seed,
        theta: if opts.theta.is_nan() { None } else { Some(opts.theta) },
    })
}

/// Runs one estimator. `opts` may be NULL for the defaults.
///
/// # Safety
/// `model` must be a live handle, `opts` NULL or readable, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn slnr_estimate(
    model: *const SlnrModel,
    gamma: f64,
    opts: *const SlnrEstimateOptions,
    out: *mut SlnrEstimate,
) -> c_int {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let o = opts.as_ref().copied().unwrap_or_else(|| slnr_estimate_options_default());
        let req = request(&o, gamma)?;
        let r = estimate(&m.inner, &req).map_err(|e| match e {
            Error::Config(msg) => (SLNR_ERR_INVALID_ARGUMENT, msg),
            e => lib_err(e),
        })?;
        let e = r.estimate;
        let f = &e.flags;
        let flags = ((f.optimizer_fallback as u32) * SLNR_FLAG_OPTIMIZER_FALLBACK)
            | ((f.all_zero as u32) * SLNR_FLAG_ALL_ZERO)
            | ((f.no_variance as u32) * SLNR_FLAG_NO_VARIANCE)
            | ((f.empty_stratum as u32) * SLNR_FLAG_EMPTY_STRATUM);
        *out = SlnrEstimate {
            log_mean: e.log_mean,
            sign: e.sign,
            estimate: e.estimate(),
            log10_estimate: e.log10_mean(),
            re_percent: e.re_percent,
            wnrv: e.wnrv(),
            wall_seconds: e.wall_seconds,
            n: e.n,
            flags,
        };
        Ok(())
    })
}

/// Natural log of the first-order right-tail approximation
/// `sum_k P(X_k > gamma)`.
///
/// # Safety
/// `model` must be a live handle and `out_log` writable.
#[no_mangle]
pub unsafe extern "C" fn slnr_ell_as(model: *const SlnrModel, gamma: f64, out_log: *mut f64) -> c_int {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out_log.is_null() {
            return Err(null("out_log"));
        }
        *out_log = ell_as(&m.inner, gamma).map_err(lib_err)?;
        Ok(())
    })
}

/// Draws `n` exact samples of X given `X_1 + ... + X_d <= gamma` into the
/// row-major `n*d` buffer `out_x`. `out_acceptance_rate` may be NULL.
///
/// # Safety
/// `model` must be a live handle and `out_x` must hold `n*d` doubles.
#[no_mangle]
pub unsafe extern "C" fn slnr_sample_conditional(
    model: *const SlnrModel,
    gamma: f64,
    n: usize,
    seed: u64,
    out_x: *mut f64,
    out_acceptance_rate: *mut f64,
) -> c_int {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out_x.is_null() && n > 0 {
            return Err(null("out_x"));
        }
        let d = m.inner.dim();
        let s = sample_conditional(&m.inner, gamma, n, &UniformStream::pseudo(seed, d + 1)).map_err(lib_err)?;
        if n > 0 {
            let dst = std::slice::from_raw_parts_mut(out_x, n * d);
            for (row, draw) in dst.chunks_mut(d).zip(&s.draws) {
                row.copy_from_slice(&draw.x);
            }
        }
        if !out_acceptance_rate.is_null() {
            *out_acceptance_rate = s.acceptance_rate;
        }
        Ok(())
    })
}
