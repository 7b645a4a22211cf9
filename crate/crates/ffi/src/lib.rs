//! C ABI over the `tstmle` estimators.
//!
//! Every function returns a [`TstmleStatus`]; outputs go through pointer
//! arguments. On failure a message is available from
//! [`tstmle_last_error_message`] on the same thread until the next call.
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `*_free` function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use tstmle::adaptive::gn_smooth;
use tstmle::cli::RunConfig;
use tstmle::data::{load_timeseries, ContextSpec, Schema, TimeSeries};
use tstmle::simlab::{draw_dgp, DgpKind};
use tstmle::tmle::{ltmle_mean, tmle_ate, StochasticIntervention, TmleReport};
use tstmle::{Error, ErrorKind};

/// Status code of every call. `Ok` is zero.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TstmleStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Data = 3,
    Numerical = 4,
    Utf8 = 5,
    Panic = 6,
}

/// A loaded or simulated time series.
pub struct TstmleSeries(TimeSeries);

/// The result of one estimation call.
pub struct TstmleReport(TmleReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
    Ok(s) => s,
    Err(_) => panic!("version contains a nul byte"),
};

struct Failure(TstmleStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e.kind() {
            ErrorKind::Config => TstmleStatus::Config,
            ErrorKind::Data => TstmleStatus::Data,
            ErrorKind::Numerical => TstmleStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(msg: String) {
    // interior nul bytes cannot be represented; drop them
    let c = CString::new(msg.replace('\0', "")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TstmleStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TstmleStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            TstmleStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(TstmleStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `p` is null or a nul-terminated string.
unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|e| Failure(TstmleStatus::Utf8, format!("{what}: {e}")))
}

/// # Safety
/// `p` is null or a valid pointer to `T`.
unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

/// # Safety
/// `out` is null or valid for writes.
unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn config_from_json(text: &str) -> Result<RunConfig, Failure> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Failure(TstmleStatus::Config, format!("config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

fn context_of(cfg: &RunConfig) -> Result<ContextSpec, Failure> {
    cfg.context.clone().ok_or_else(|| Failure(TstmleStatus::Config, "config: `context` is required".into()))
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn tstmle_version() -> *const c_char {
    VERSION.as_ptr()
}

/// Message of the last failed call on this thread, or null after a
/// successful call. Valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn tstmle_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Loads a CSV series. `schema_json` may be null to infer a single-treatment
/// layout from the header.
///
/// # Safety
/// String arguments are null or nul-terminated; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tstmle_series_from_csv(
    path: *const c_char,
    schema_json: *const c_char,
    out: *mut *mut TstmleSeries,
) -> TstmleStatus {
    guard(|| {
        let path = read_str(path, "path")?;
        let schema: Option<Schema> = if schema_json.is_null() {
            None
        } else {
            let text = read_str(schema_json, "schema_json")?;
            Some(serde_json::from_str(text).map_err(|e| Failure(TstmleStatus::Config, format!("schema: {e}")))?)
        };
        let s = load_timeseries(Path::new(path), schema.as_ref())?;
        put(out, Box::into_raw(Box::new(TstmleSeries(s))), "out")
    })
}

/// Draws `n` blocks (burn-in included) from a named simulation DGP.
///
/// # Safety
/// `dgp` is nul-terminated; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tstmle_series_simulate(
    dgp: *const c_char,
    n: usize,
    seed: u64,
    out: *mut *mut TstmleSeries,
) -> TstmleStatus {
    guard(|| {
        let kind = DgpKind::parse(read_str(dgp, "dgp")?)?;
        let s = draw_dgp(kind, n, seed, None)?;
        put(out, Box::into_raw(Box::new(TstmleSeries(s))), "out")
    })
}

/// # Safety
/// `series` is a live handle; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tstmle_series_len(series: *const TstmleSeries, out: *mut usize) -> TstmleStatus {
    guard(|| put(out, get(series, "series")?.0.len(), "out"))
}

/// # Safety
/// `series` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tstmle_series_free(series: *mut TstmleSeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}

/// Single time-point TMLE. `config_json` uses the keys of the CLI run
/// configuration; `context` is required and `data` is ignored.
///
/// # Safety
/// `series` is a live handle, `config_json` nul-terminated and `out` valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn tstmle_estimate_ate(
    series: *const TstmleSeries,
    config_json: *const c_char,
    out: *mut *mut TstmleReport,
) -> TstmleStatus {
    guard(|| {
        let s = get(series, "series")?;
        let cfg = config_from_json(read_str(config_json, "config_json")?)?;
        let r = tmle_ate(&s.0, &context_of(&cfg)?, &cfg.point_tmle())?;
        put(out, Box::into_raw(Box::new(TstmleReport(r))), "out")
    })
}

/// Sequential-regression TMLE; the intervention defaults to always-treat
/// on every node.
///
/// # Safety
/// As for [`tstmle_estimate_ate`].
#[no_mangle]
pub unsafe extern "C" fn tstmle_estimate_ltmle(
    series: *const TstmleSeries,
    config_json: *const c_char,
    out: *mut *mut TstmleReport,
) -> TstmleStatus {
    guard(|| {
        let s = get(series, "series")?;
        let cfg = config_from_json(read_str(config_json, "config_json")?)?;
        let gstar = cfg
            .intervention
            .clone()
            .unwrap_or_else(|| StochasticIntervention::always_treat(s.0.schema().k()));
        let (r, _) = ltmle_mean(&s.0, &context_of(&cfg)?, &gstar, &cfg.seq_tmle())?;
        put(out, Box::into_raw(Box::new(TstmleReport(r))), "out")
    })
}

/// # Safety
/// `report` is a live handle; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tstmle_report_psi(report: *const TstmleReport, out: *mut f64) -> TstmleStatus {
    guard(|| put(out, get(report, "report")?.0.psi, "out"))
}

/// # Safety
/// `report` is a live handle; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tstmle_report_se(report: *const TstmleReport, out: *mut f64) -> TstmleStatus {
    guard(|| put(out, get(report, "report")?.0.se, "out"))
}

/// # Safety
/// `report` is a live handle; `lo` and `hi` are valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tstmle_report_ci(report: *const TstmleReport, lo: *mut f64, hi: *mut f64) -> TstmleStatus {
    guard(|| {
        let r = &get(report, "report")?.0;
        if hi.is_null() {
            return Err(null("hi"));
        }
        put(lo, r.ci.0, "lo")?;
        put(hi, r.ci.1, "hi")
    })
}

/// Number of rows the estimate averages over.
///
/// # Safety
/// `report` is a live handle; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tstmle_report_n(report: *const TstmleReport, out: *mut usize) -> TstmleStatus {
    guard(|| put(out, get(report, "report")?.0.n, "out"))
}

/// Copies up to `cap` influence-curve values into `buf`; `len` receives
/// the full length, so a call with `cap = 0` sizes the buffer.
///
/// # Safety
/// `buf` is valid for `cap` writes (or null when `cap` is zero); `len` is
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tstmle_report_eic(
    report: *const TstmleReport,
    buf: *mut f64,
    cap: usize,
    len: *mut usize,
) -> TstmleStatus {
    guard(|| {
        let eic = &get(report, "report")?.0.eic;
        if cap > 0 {
            if buf.is_null() {
                return Err(null("buf"));
            }
            ptr::copy_nonoverlapping(eic.as_ptr(), buf, cap.min(eic.len()));
        }
        put(len, eic.len(), "len")
    })
}

/// Report as JSON; release the string with [`tstmle_string_free`].
///
/// # Safety
/// `report` is a live handle; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tstmle_report_json(report: *const TstmleReport, out: *mut *mut c_char) -> TstmleStatus {
    guard(|| {
        let json = get(report, "report")?.0.to_json()?;
        let c = CString::new(json).map_err(|e| Failure(TstmleStatus::Utf8, e.to_string()))?;
        put(out, c.into_raw(), "out")
    })
}

/// # Safety
/// `report` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tstmle_report_free(report: *mut TstmleReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// `s` is null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tstmle_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Smoothed assignment probability for blip value `x`.
///
/// # Safety
/// `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tstmle_gn_smooth(x: f64, t_n: f64, e_n: f64, out: *mut f64) -> TstmleStatus {
    guard(|| put(out, gn_smooth(x, t_n, e_n)?, "out"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_codes_are_stable() {
        assert_eq!(TstmleStatus::Ok as i32, 0);
        assert_eq!(TstmleStatus::NullPointer as i32, 1);
        assert_eq!(TstmleStatus::Panic as i32, 6);
    }

    #[test]
    fn panics_are_caught() {
        let st = guard(|| panic!("boom"));
        assert_eq!(st, TstmleStatus::Panic);
        let msg = unsafe { CStr::from_ptr(tstmle_last_error_message()) }.to_str().unwrap();
        assert_eq!(msg, "panic: boom");
    }

    #[test]
    fn success_clears_the_message() {
        let mut v = 0.0;
        assert_eq!(unsafe { tstmle_gn_smooth(0.0, 0.0, 0.05, &mut v) }, TstmleStatus::Config);
        assert!(!tstmle_last_error_message().is_null());
        assert_eq!(unsafe { tstmle_gn_smooth(0.0, 0.1, 0.05, &mut v) }, TstmleStatus::Ok);
        assert!(tstmle_last_error_message().is_null());
        assert_eq!(v, 0.5);
    }
}
