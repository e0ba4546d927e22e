//! C ABI over the traffic-xai engine.
//!
//! Every fallible function returns a [`TxStatus`] and writes its result
//! through an out-pointer. On failure a message is available from
//! [`tx_last_error_message`] on the same thread. Strings handed out by the
//! library are NUL-terminated UTF-8 and must be released with
//! [`tx_string_free`]; engines with [`tx_engine_free`]. Panics never cross
//! the boundary: they are reported as `TX_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use traffic_xai::dataset::FeatureVector;
use traffic_xai::render::contrast::{contrast_ratio, Rgb};
use traffic_xai::render::{plain_text, AccessibleExplanation};
use traffic_xai::service::{ExplainService, ServiceConfig, ServiceError};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    NotReady = 4,
    RowNotFound = 5,
    UnknownMethod = 6,
    Internal = 7,
    Panic = 8,
}

/// Opaque engine: a loaded model, its inference rows and an explanation cache.
pub struct TxEngine {
    service: ExplainService,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(TxStatus, String);

impl From<ServiceError> for Failure {
    fn from(e: ServiceError) -> Self {
        let status = match e {
            ServiceError::NotReady(_) => TxStatus::NotReady,
            ServiceError::RowNotFound(_) => TxStatus::RowNotFound,
            ServiceError::UnknownMethod(_) => TxStatus::UnknownMethod,
            ServiceError::Internal(_) => TxStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

fn set_last_error(msg: Option<String>) {
    let c = msg.map(|m| CString::new(m.replace('\0', " ")).unwrap_or_default());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error(None);
            TxStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(Some(msg));
            status
        }
        Err(_) => {
            set_last_error(Some("panic inside traffic-xai".into()));
            TxStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(TxStatus::NullArgument, format!("{what} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(TxStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn engine<'a>(e: *const TxEngine) -> Result<&'a TxEngine, Failure> {
    e.as_ref().ok_or_else(|| null("engine"))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(value);
    Ok(())
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(TxStatus::Internal, "output contains a NUL byte".into()))
}

/// Loads the model artifact and data file and splits out the inference rows.
///
/// # Safety
/// `model_path` and `data_path` must be NUL-terminated strings; `out` must be
/// writable. On success `*out` owns a new engine.
#[no_mangle]
pub unsafe extern "C" fn tx_engine_open(
    model_path: *const c_char,
    data_path: *const c_char,
    out: *mut *mut TxEngine,
) -> TxStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("output pointer"));
        }
        out.write(ptr::null_mut());
        let model = PathBuf::from(read_str(model_path, "model_path")?);
        let data = PathBuf::from(read_str(data_path, "data_path")?);
        let service = ExplainService::open(ServiceConfig::new(model, data));
        service.context()?;
        out.write(Box::into_raw(Box::new(TxEngine { service })));
        Ok(())
    })
}

/// # Safety
/// `engine` must come from [`tx_engine_open`] and not be freed twice. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn tx_engine_free(engine: *mut TxEngine) {
    if !engine.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(engine))));
    }
}

/// Number of inference rows.
///
/// # Safety
/// `engine` must be a live engine; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tx_engine_row_count(engine: *const TxEngine, out: *mut usize) -> TxStatus {
    guard(|| {
        let ctx = self::engine(engine)?.service.context()?;
        write_out(out, ctx.inference.len())
    })
}

/// Prediction table as a JSON array.
///
/// # Safety
/// `engine` must be a live engine; `out` must be writable. Free the result
/// with [`tx_string_free`].
#[no_mangle]
pub unsafe extern "C" fn tx_engine_predictions_json(engine: *const TxEngine, out: *mut *mut c_char) -> TxStatus {
    guard(|| {
        let rows = self::engine(engine)?.service.get_predictions()?;
        let json = serde_json::to_string(&rows).map_err(|e| Failure(TxStatus::Internal, e.to_string()))?;
        write_out(out, into_c_string(json)?)
    })
}

/// Explanation of one row as JSON. `method` is one of `lime-simplified`,
/// `lime-detailed`, `shap-simplified`, `shap-detailed`.
///
/// # Safety
/// `engine` must be a live engine, `method` a NUL-terminated string and
/// `out` writable. Free the result with [`tx_string_free`].
#[no_mangle]
pub unsafe extern "C" fn tx_engine_explain_json(
    engine: *const TxEngine,
    row: usize,
    method: *const c_char,
    out: *mut *mut c_char,
) -> TxStatus {
    guard(|| {
        let method = read_str(method, "method")?;
        let payload = self::engine(engine)?.service.get_explanation_named(row, method)?;
        write_out(out, into_c_string(payload.to_string())?)
    })
}

/// Explanation of one row as plain text wrapped at 80 columns.
///
/// # Safety
/// Same contract as [`tx_engine_explain_json`].
#[no_mangle]
pub unsafe extern "C" fn tx_engine_explain_text(
    engine: *const TxEngine,
    row: usize,
    method: *const c_char,
    out: *mut *mut c_char,
) -> TxStatus {
    guard(|| {
        let method = read_str(method, "method")?;
        let payload = self::engine(engine)?.service.get_explanation_named(row, method)?;
        let parsed: AccessibleExplanation =
            serde_json::from_str(&payload).map_err(|e| Failure(TxStatus::Internal, e.to_string()))?;
        write_out(out, into_c_string(plain_text(&parsed))?)
    })
}

/// Predicted flow (vehicles per hour) for an arbitrary feature vector.
///
/// # Safety
/// `engine` must be a live engine; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tx_engine_predict(
    engine: *const TxEngine,
    interval: f64,
    occ: f64,
    speed: f64,
    out: *mut f64,
) -> TxStatus {
    guard(|| {
        if !(interval.is_finite() && occ.is_finite() && speed.is_finite()) {
            return Err(Failure(TxStatus::InvalidArgument, "features must be finite".into()));
        }
        let ctx = self::engine(engine)?.service.context()?;
        write_out(out, ctx.forest.predict(&FeatureVector::new(interval, occ, speed)))
    })
}

/// WCAG contrast ratio between two `#RRGGBB` colors.
///
/// # Safety
/// `fg` and `bg` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tx_contrast_ratio(fg: *const c_char, bg: *const c_char, out: *mut f64) -> TxStatus {
    guard(|| {
        let parse = |p, what| -> Result<Rgb, Failure> {
            read_str(p, what)?
                .parse::<Rgb>()
                .map_err(|e| Failure(TxStatus::InvalidArgument, e.to_string()))
        };
        write_out(out, contrast_ratio(parse(fg, "fg")?, parse(bg, "bg")?))
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tx_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message for the last failed call on this thread, or null after a
/// success. Valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn tx_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn tx_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
