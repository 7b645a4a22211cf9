use std::ffi::{CStr, CString};
use std::ptr;

use tstmle_ffi::*;

fn last_error() -> String {
    let p = tstmle_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

const CONFIG: &str = r#"{
    "context": {"lags": [{"var": "y", "lags": [1]}, {"var": "w1", "lags": [1]}], "burn_in": 4},
    "q_library": [{"type": "glm"}],
    "g": {"mode": "known"}
}"#;

fn simulated(n: usize, seed: u64) -> *mut TstmleSeries {
    let name = CString::new("sim1a").unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { tstmle_series_simulate(name.as_ptr(), n, seed, &mut s) }, TstmleStatus::Ok);
    s
}

#[test]
fn estimate_through_the_abi() {
    let s = simulated(400, 3);
    let mut len = 0;
    assert_eq!(unsafe { tstmle_series_len(s, &mut len) }, TstmleStatus::Ok);
    assert_eq!(len, 400);

    let cfg = CString::new(CONFIG).unwrap();
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { tstmle_estimate_ate(s, cfg.as_ptr(), &mut r) }, TstmleStatus::Ok, "{}", last_error());
    let (mut psi, mut se, mut lo, mut hi, mut n) = (0.0, 0.0, 0.0, 0.0, 0usize);
    unsafe {
        assert_eq!(tstmle_report_psi(r, &mut psi), TstmleStatus::Ok);
        assert_eq!(tstmle_report_se(r, &mut se), TstmleStatus::Ok);
        assert_eq!(tstmle_report_ci(r, &mut lo, &mut hi), TstmleStatus::Ok);
        assert_eq!(tstmle_report_n(r, &mut n), TstmleStatus::Ok);
    }
    assert!(lo < psi && psi < hi && se > 0.0);
    assert_eq!(n, 396);

    // sizing call, then the copy
    let mut need = 0;
    assert_eq!(unsafe { tstmle_report_eic(r, ptr::null_mut(), 0, &mut need) }, TstmleStatus::Ok);
    assert_eq!(need, n);
    let mut buf = vec![0.0; need];
    assert_eq!(unsafe { tstmle_report_eic(r, buf.as_mut_ptr(), buf.len(), &mut need) }, TstmleStatus::Ok);
    let mean = buf.iter().sum::<f64>() / need as f64;
    assert!(mean.abs() <= 1e-8);

    let mut js = ptr::null_mut();
    assert_eq!(unsafe { tstmle_report_json(r, &mut js) }, TstmleStatus::Ok);
    let v: serde_json::Value = serde_json::from_str(unsafe { CStr::from_ptr(js) }.to_str().unwrap()).unwrap();
    assert_eq!(v["psi"].as_f64().unwrap(), psi);
    unsafe {
        tstmle_string_free(js);
        tstmle_report_free(r);
        tstmle_series_free(s);
    }
}

#[test]
fn ltmle_with_one_node_matches_the_treatment_specific_mean() {
    let s = simulated(300, 8);
    let cfg = CString::new(CONFIG.replacen('{', r#"{"target": "tsm1","#, 1)).unwrap();
    let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(tstmle_estimate_ate(s, cfg.as_ptr(), &mut a), TstmleStatus::Ok, "{}", last_error());
        assert_eq!(tstmle_estimate_ltmle(s, cfg.as_ptr(), &mut b), TstmleStatus::Ok, "{}", last_error());
        let (mut pa, mut pb) = (0.0, 0.0);
        tstmle_report_psi(a, &mut pa);
        tstmle_report_psi(b, &mut pb);
        assert!((pa - pb).abs() <= 1e-10);
        tstmle_report_free(a);
        tstmle_report_free(b);
        tstmle_series_free(s);
    }
}

#[test]
fn status_codes_follow_error_classes() {
    let mut s = ptr::null_mut();
    let bad = CString::new("sim9").unwrap();
    assert_eq!(unsafe { tstmle_series_simulate(bad.as_ptr(), 10, 0, &mut s) }, TstmleStatus::Config);
    assert!(last_error().contains("sim9"));

    assert_eq!(unsafe { tstmle_series_simulate(ptr::null(), 10, 0, &mut s) }, TstmleStatus::NullPointer);

    let missing = CString::new("/nonexistent/series.csv").unwrap();
    assert_eq!(unsafe { tstmle_series_from_csv(missing.as_ptr(), ptr::null(), &mut s) }, TstmleStatus::Data);

    let not_utf8 = [0xffu8, 0xfe, 0];
    assert_eq!(
        unsafe { tstmle_series_simulate(not_utf8.as_ptr().cast(), 10, 0, &mut s) },
        TstmleStatus::Utf8
    );

    let series = simulated(200, 1);
    let mut r = ptr::null_mut();
    let unknown = CString::new(r#"{"gbar_truncaton": 0.05}"#).unwrap();
    assert_eq!(unsafe { tstmle_estimate_ate(series, unknown.as_ptr(), &mut r) }, TstmleStatus::Config);
    assert!(last_error().contains("gbar_truncaton"));
    let no_context = CString::new("{}").unwrap();
    assert_eq!(unsafe { tstmle_estimate_ate(series, no_context.as_ptr(), &mut r) }, TstmleStatus::Config);
    assert!(r.is_null());
    unsafe { tstmle_series_free(series) };
}

#[test]
fn csv_round_trip() {
    let dir = std::env::temp_dir().join(format!("tstmle-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("s.csv");
    tstmle::simlab::draw_dgp(tstmle::simlab::DgpKind::Sim1a, 120, 2, None).unwrap().write_csv(&path).unwrap();
    let p = CString::new(path.to_str().unwrap()).unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { tstmle_series_from_csv(p.as_ptr(), ptr::null(), &mut s) }, TstmleStatus::Ok, "{}", last_error());
    let mut len = 0;
    unsafe {
        tstmle_series_len(s, &mut len);
        tstmle_series_free(s);
    }
    assert_eq!(len, 120);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn header_declares_the_surface() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/tstmle.h")).unwrap();
    for sym in [
        "TSTMLE_STATUS_OK = 0",
        "TSTMLE_STATUS_PANIC = 6",
        "typedef struct TstmleSeries TstmleSeries;",
        "tstmle_estimate_ltmle(",
        "tstmle_last_error_message(",
        "tstmle_report_free(",
    ] {
        assert!(h.contains(sym), "header lacks `{sym}`");
    }
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(tstmle_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
