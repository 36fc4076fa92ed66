use std::ffi::{c_char, CStr, CString};
use std::ptr;

use cbs_rv_ffi::*;

fn take(s: *mut c_char) -> String {
    assert!(!s.is_null());
    let out = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_string();
    unsafe { cbs_string_free(s) };
    out
}

fn last_error() -> String {
    let p = cbs_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

fn task() -> *mut CbsSystem {
    let mut sys = ptr::null_mut();
    let name = CString::new("task").unwrap();
    assert_eq!(unsafe { cbs_system_builtin(name.as_ptr(), &mut sys) }, CbsStatus::Ok);
    sys
}

#[test]
fn run_then_witness() {
    let sys = task();
    let opts = CbsRunOptions {
        seed: 3,
        steps: 15,
        ..cbs_run_options_default()
    };
    let (mut rep, mut trace) = (ptr::null_mut(), ptr::null_mut());
    assert_eq!(
        unsafe { cbs_run(sys, &opts, ptr::null(), &mut rep, &mut trace) },
        CbsStatus::Ok
    );
    let rep: serde_json::Value = serde_json::from_str(&take(rep)).unwrap();
    assert_eq!(rep["gamma"], 15);
    let trace = CString::new(take(trace)).unwrap();
    let mut w = ptr::null_mut();
    assert_eq!(unsafe { cbs_witness(trace.as_ptr(), sys, &mut w) }, CbsStatus::Ok);
    let w = take(w);
    assert_eq!(w.lines().filter(|l| l.starts_with("LABEL ")).count(), 15);
    unsafe { cbs_system_free(sys) };
}

#[test]
fn monitored_run_with_inline_spec() {
    let sys = task();
    let spec = CString::new(cbs_rv::assets::TASK_MONITOR).unwrap();
    let opts = CbsRunOptions {
        mode: CbsMode::Monitored,
        seed: 1,
        steps: 10,
        ..cbs_run_options_default()
    };
    let mut rep = ptr::null_mut();
    assert_eq!(
        unsafe { cbs_run(sys, &opts, spec.as_ptr(), &mut rep, ptr::null_mut()) },
        CbsStatus::Ok
    );
    let rep: serde_json::Value = serde_json::from_str(&take(rep)).unwrap();
    assert_eq!(rep["delivered"], 10);
    unsafe { cbs_system_free(sys) };
}

#[test]
fn parse_render_round_trip() {
    let sys = task();
    let mut text = ptr::null_mut();
    assert_eq!(unsafe { cbs_system_render(sys, true, &mut text) }, CbsStatus::Ok);
    let json = CString::new(take(text)).unwrap();
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { cbs_system_parse(json.as_ptr(), &mut back) }, CbsStatus::Ok);
    assert!(!back.is_null());
    unsafe {
        cbs_system_free(back);
        cbs_system_free(sys);
    }
}

#[test]
fn transform_and_verify() {
    let sys = task();
    let mut r = ptr::null_mut();
    assert_eq!(
        unsafe { cbs_system_transform(sys, ptr::null(), CbsRgtVariant::Default, &mut r) },
        CbsStatus::Ok
    );
    let mut rep = ptr::null_mut();
    assert_eq!(
        unsafe { cbs_verify_equivalence(sys, CbsStage::Partial, 1_000_000, CbsRgtVariant::Default, &mut rep) },
        CbsStatus::Ok
    );
    assert!(take(rep).contains("\"equivalent\":true"));
    unsafe {
        cbs_system_free(r);
        cbs_system_free(sys);
    }
}

#[test]
fn error_codes_and_messages() {
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { cbs_system_parse(ptr::null(), &mut out) },
        CbsStatus::InvalidArgument
    );
    assert!(last_error().contains("null"));

    let bad = CString::new("component {").unwrap();
    assert_eq!(unsafe { cbs_system_parse(bad.as_ptr(), &mut out) }, CbsStatus::Invalid);
    assert!(out.is_null());
    assert!(last_error().contains("syntax error"));

    let name = CString::new("nope").unwrap();
    assert_eq!(
        unsafe { cbs_system_builtin(name.as_ptr(), &mut out) },
        CbsStatus::InvalidArgument
    );

    let sys = task();
    assert_eq!(
        unsafe { cbs_verify_equivalence(sys, CbsStage::Partial, 5, CbsRgtVariant::Default, ptr::null_mut()) },
        CbsStatus::NotEquivalent
    );
    assert!(last_error().contains("bound"));

    let opts = CbsRunOptions {
        threads: 0,
        ..cbs_run_options_default()
    };
    assert_eq!(
        unsafe { cbs_run(sys, &opts, ptr::null(), ptr::null_mut(), ptr::null_mut()) },
        CbsStatus::InvalidArgument
    );
    let opts = CbsRunOptions {
        mode: CbsMode::Monitored,
        ..cbs_run_options_default()
    };
    assert_eq!(
        unsafe { cbs_run(sys, &opts, ptr::null(), ptr::null_mut(), ptr::null_mut()) },
        CbsStatus::InvalidArgument
    );

    let junk = CString::new("COMPONENTS []\nLABEL x\n").unwrap();
    assert_eq!(
        unsafe { cbs_witness(junk.as_ptr(), ptr::null(), &mut ptr::null_mut()) },
        CbsStatus::Invalid
    );
    unsafe { cbs_system_free(sys) };
}

#[test]
fn frees_accept_null() {
    unsafe {
        cbs_system_free(ptr::null_mut());
        cbs_string_free(ptr::null_mut());
    }
    let v = unsafe { CStr::from_ptr(cbs_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/cbs_rv.h");
    for f in [
        "cbs_last_error_message",
        "cbs_string_free",
        "cbs_system_parse",
        "cbs_system_builtin",
        "cbs_system_free",
        "cbs_system_render",
        "cbs_system_transform",
        "cbs_run_options_default",
        "cbs_run(",
        "cbs_witness",
        "cbs_verify_equivalence",
        "cbs_version",
    ] {
        assert!(header.contains(f), "{f} missing from header");
    }
}
