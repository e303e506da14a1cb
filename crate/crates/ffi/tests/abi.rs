use std::ffi::{CStr, CString};
use std::ptr;

use mclab_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(mclab_last_error()) }.to_string_lossy().into_owned()
}

fn system(kind: &str, n: usize, rho: f64) -> *mut MclabSystem {
    let kind = CString::new(kind).unwrap();
    let mut sys = ptr::null_mut();
    assert_eq!(unsafe { mclab_system_generate(kind.as_ptr(), n, rho, 1, &mut sys) }, MclabStatus::Ok);
    sys
}

fn curve(sys: *const MclabSystem, method: &str, tau_max: usize) -> Result<Vec<f64>, MclabStatus> {
    let method = CString::new(method).unwrap();
    let mut c = ptr::null_mut();
    let st = unsafe { mclab_capacity(sys, method.as_ptr(), tau_max, 0, 50, 2000, 3, &mut c) };
    if st != MclabStatus::Ok {
        return Err(st);
    }
    let len = unsafe { mclab_curve_len(c) };
    let mut buf = vec![0.0; len + 4];
    assert_eq!(unsafe { mclab_curve_values(c, buf.as_mut_ptr(), buf.len()) }, len);
    buf.truncate(len);
    let total = unsafe { mclab_curve_total(c) };
    assert!((total - buf.iter().sum::<f64>()).abs() < 1e-12);
    unsafe { mclab_curve_free(c) };
    Ok(buf)
}

#[test]
fn delay_line_curves() {
    let sys = system("delay_shift", 6, f64::NAN);
    assert_eq!(unsafe { mclab_system_dim(sys) }, 6);
    assert_eq!(unsafe { mclab_system_spectral_radius(sys) }, 0.0);
    for method in ["naive", "osm", "oracle"] {
        let v = curve(sys, method, 9).unwrap();
        let want = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
        assert!(v.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-9), "{method}: {v:?}");
    }
    unsafe { mclab_system_free(sys) };
}

#[test]
fn cyclic_osm_plus_and_neutral() {
    let sys = system("cyclic", 5, 0.8);
    assert!((unsafe { mclab_system_spectral_radius(sys) } - 0.8).abs() < 1e-12);
    let oracle = curve(sys, "oracle", 15).unwrap();
    let neutral = curve(sys, "eigen_neutral", 15).unwrap();
    for (a, b) in oracle.iter().zip(&neutral) {
        assert!((a - b).abs() < 1e-9);
    }
    let plus = curve(sys, "osm_plus", 15).unwrap();
    assert_eq!(plus.len(), 15);
    unsafe { mclab_system_free(sys) };
}

#[test]
fn from_parts_and_json() {
    let a = [0.0, 0.0, 0.5, 0.0];
    let c = [1.0, 0.0];
    let mut sys = ptr::null_mut();
    assert_eq!(unsafe { mclab_system_from_parts(2, a.as_ptr(), c.as_ptr(), &mut sys) }, MclabStatus::Ok);
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { mclab_system_to_json(sys, &mut json) }, MclabStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    assert!(text.contains("0.5"));
    unsafe {
        mclab_string_free(json);
        mclab_system_free(sys);
    }
}

#[test]
fn errors_are_reported() {
    let mut sys = ptr::null_mut();
    let kind = CString::new("gaussian").unwrap();
    let st = unsafe { mclab_system_generate(kind.as_ptr(), 4, 1.2, 0, &mut sys) };
    assert_ne!(st, MclabStatus::Ok);
    assert!(sys.is_null());
    assert!(!last_error().is_empty());

    let bogus = CString::new("hexagonal").unwrap();
    assert_eq!(unsafe { mclab_system_generate(bogus.as_ptr(), 4, 0.9, 0, &mut sys) }, MclabStatus::InvalidArgument);
    assert!(last_error().contains("hexagonal"));

    assert_eq!(unsafe { mclab_system_generate(ptr::null(), 4, 0.9, 0, &mut sys) }, MclabStatus::NullPointer);
    assert_eq!(unsafe { mclab_system_generate(kind.as_ptr(), 4, 0.9, 0, ptr::null_mut()) }, MclabStatus::NullPointer);

    let sys = system("gaussian", 4, 0.9);
    assert!(last_error().is_empty());
    let method = CString::new("telepathy").unwrap();
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { mclab_capacity(sys, method.as_ptr(), 4, 0, 1, 1, 0, &mut c) }, MclabStatus::InvalidArgument);
    assert!(curve(ptr::null(), "naive", 3).is_err());

    let nilpotent = CString::new("delay_shift").unwrap();
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { mclab_system_generate(nilpotent.as_ptr(), 4, 0.5, 0, &mut d) }, MclabStatus::NotRescalable);
    unsafe {
        mclab_system_free(sys);
        mclab_system_free(ptr::null_mut());
        mclab_curve_free(ptr::null_mut());
    }
    assert_eq!(unsafe { mclab_system_dim(ptr::null()) }, 0);
}

#[test]
fn run_config_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let json = CString::new(r#"{"experiment": "eigplot", "seed": 4, "desk": true}"#).unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(unsafe { mclab_run_config_json(json.as_ptr(), out.as_ptr()) }, MclabStatus::Ok);
    assert!(dir.path().join("manifest.json").exists());

    let bad = CString::new(r#"{"experiment": "eigplot"}"#).unwrap();
    assert_eq!(unsafe { mclab_run_config_json(bad.as_ptr(), out.as_ptr()) }, MclabStatus::Config);
}

#[test]
fn header_is_valid_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/mclab.h");
    let text = std::fs::read_to_string(header).unwrap();
    for sym in ["mclab_system_generate", "mclab_capacity", "mclab_curve_values", "mclab_last_error", "MCLAB_STATUS_OK"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    let Ok(cc) = which_cc() else { return };
    let st = std::process::Command::new(cc).args(["-std=c99", "-fsyntax-only", "-x", "c", header]).status().unwrap();
    assert!(st.success());
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| std::process::Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .ok_or(())
}
