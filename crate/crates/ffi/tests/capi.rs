use sln_raresim_ffi::*;
use std::ffi::{CStr, CString};
use std::ptr;

fn last_error() -> String {
    let p = slnr_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn one_d() -> *mut SlnrModel {
    let mut m = ptr::null_mut();
    let rc = unsafe { slnr_model_new(1, [0.0].as_ptr(), [1.0].as_ptr(), &mut m) };
    assert_eq!(rc, SLNR_OK);
    m
}

#[test]
fn model_lifecycle() {
    let m = one_d();
    assert_eq!(unsafe { slnr_model_dim(m) }, 1);
    unsafe { slnr_model_free(m) };
    unsafe { slnr_model_free(ptr::null_mut()) };
    assert_eq!(unsafe { slnr_model_dim(ptr::null()) }, 0);
}

#[test]
fn invalid_models_report_codes() {
    let mut m = ptr::null_mut();
    let sigma = [1.0, 2.0, 2.0, 1.0];
    let rc = unsafe { slnr_model_new(2, [0.0, 0.0].as_ptr(), sigma.as_ptr(), &mut m) };
    assert_eq!(rc, SLNR_ERR_MODEL);
    assert!(m.is_null());
    assert!(last_error().contains("positive definite"));

    let rc = unsafe { slnr_model_new(2, ptr::null(), sigma.as_ptr(), &mut m) };
    assert_eq!(rc, SLNR_ERR_NULL_POINTER);

    let bad = CString::new("{\"nu\":").unwrap();
    assert_eq!(unsafe { slnr_model_from_json(bad.as_ptr(), &mut m) }, SLNR_ERR_CONFIG);
}

#[test]
fn json_models() {
    let text = CString::new(r#"{"equicorrelated":{"d":10,"rho":0.9,"s2":0.0625,"nu":0}}"#).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { slnr_model_from_json(text.as_ptr(), &mut m) }, SLNR_OK);
    let mut l = 0.0;
    assert_eq!(unsafe { slnr_ell_as(m, 15.0, &mut l) }, SLNR_OK);
    assert!((l.exp() / 1.2113076e-26 - 1.0).abs() < 1e-6);
    unsafe { slnr_model_free(m) };
}

#[test]
fn estimates_through_the_abi() {
    let m = one_d();
    let mut opts = slnr_estimate_options_default();
    opts.n = 20_000;
    let mut out = SlnrEstimate::default();
    for (q, truth) in [
        (SLNR_QUANTITY_CDF, 0.755_891_404_214_417_4),   // Φ(ln 2)
        (SLNR_QUANTITY_RIGHT_TAIL, 0.244_108_595_785_582_6),
        (SLNR_QUANTITY_PDF, 0.156_874_019_278_981_7),   // φ(ln 2)/2
    ] {
        opts.quantity = q;
        assert_eq!(unsafe { slnr_estimate(m, 2.0, &opts, &mut out) }, SLNR_OK, "{}", last_error());
        let se = out.estimate * out.re_percent / 100.0;
        assert!((out.estimate - truth).abs() <= 3.0 * se + 1e-12, "q={q}: {} vs {truth}", out.estimate);
        assert_eq!(out.n, 20_000);
    }
    opts.quantity = 9;
    assert_eq!(unsafe { slnr_estimate(m, 2.0, &opts, &mut out) }, SLNR_ERR_INVALID_ARGUMENT);
    opts.quantity = SLNR_QUANTITY_CDF;
    opts.estimator = SLNR_ESTIMATOR_AK;
    assert_eq!(unsafe { slnr_estimate(m, 2.0, &opts, &mut out) }, SLNR_ERR_INVALID_ARGUMENT);
    assert!(last_error().contains("does not apply"));
    assert_eq!(unsafe { slnr_estimate(m, -1.0, ptr::null(), &mut out) }, SLNR_ERR_INVALID_ARGUMENT);
    unsafe { slnr_model_free(m) };
}

#[test]
fn conditional_draws_fill_the_buffer() {
    let mut m = ptr::null_mut();
    let sigma = [1.0, 0.3, 0.3, 1.0];
    assert_eq!(unsafe { slnr_model_new(2, [0.0, 0.0].as_ptr(), sigma.as_ptr(), &mut m) }, SLNR_OK);
    let n = 50;
    let mut buf = vec![f64::NAN; 2 * n];
    let mut rate = 0.0;
    assert_eq!(unsafe { slnr_sample_conditional(m, 1.0, n, 7, buf.as_mut_ptr(), &mut rate) }, SLNR_OK);
    for row in buf.chunks(2) {
        assert!(row[0] > 0.0 && row[1] > 0.0 && row[0] + row[1] <= 1.0);
    }
    assert!(rate > 0.0 && rate <= 1.0);
    unsafe { slnr_model_free(m) };
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/sln_raresim.h")).unwrap();
    for name in [
        "slnr_last_error_message",
        "slnr_model_new",
        "slnr_model_from_json",
        "slnr_model_free",
        "slnr_model_dim",
        "slnr_estimate_options_default",
        "slnr_estimate",
        "slnr_ell_as",
        "slnr_sample_conditional",
        "typedef struct SlnrModel SlnrModel",
        "SLNR_ERR_PANIC",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
