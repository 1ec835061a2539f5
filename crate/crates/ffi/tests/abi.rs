use std::ffi::{CStr, CString};
use std::ptr;

use sigma_lab_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(slab_last_error()) }.to_string_lossy().into_owned()
}

fn values(p: *const SlabPath) -> Vec<f64> {
    unsafe {
        let mut buf = vec![0.0; slab_path_len(p)];
        assert_eq!(slab_path_copy(p, buf.as_mut_ptr(), buf.len()), SlabStatus::Ok);
        buf
    }
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(slab_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn brownian_reflection_and_local_time_round_trip() {
    unsafe {
        let mut b = ptr::null_mut();
        assert_eq!(slab_brownian(1e-3, 1000, 7, 0, &mut b), SlabStatus::Ok);
        assert_eq!(slab_path_len(b), 1001);
        assert_eq!(slab_path_dt(b), 1e-3);
        let bv = values(b);
        assert_eq!(bv[0], 0.0);

        let mut d = ptr::null_mut();
        assert_eq!(slab_reflect(b, &mut d), SlabStatus::Ok);
        let mut x = ptr::null_mut();
        assert_eq!(slab_decomposed_component(d, SlabComponent::X, &mut x), SlabStatus::Ok);
        let xv = values(x);
        for (a, b) in xv.iter().zip(&bv) {
            assert_eq!(*a, b.abs());
        }

        let mut l = ptr::null_mut();
        assert_eq!(slab_local_time(b, SlabLocalTimeMethod::Tanaka, 0.0, &mut l), SlabStatus::Ok);
        let mut v = ptr::null_mut();
        assert_eq!(slab_decomposed_component(d, SlabComponent::V, &mut v), SlabStatus::Ok);
        let (lv, vv) = (values(l), values(v));
        for (a, b) in lv.iter().zip(&vv) {
            assert!((a - b).abs() < 1e-12);
        }

        let mut z = ptr::null_mut();
        let mut res = f64::NAN;
        assert_eq!(slab_z_transform(d, 1.0, 7, 0, &mut z, &mut res), SlabStatus::Ok);
        assert!(res.is_finite());

        for p in [b, x, l, v] {
            slab_path_free(p);
        }
        slab_decomposed_free(d);
        slab_decomposed_free(z);
        slab_path_free(ptr::null_mut());
    }
}

#[test]
fn errors_set_codes_and_messages() {
    unsafe {
        assert_eq!(slab_brownian(1e-3, 10, 0, 0, ptr::null_mut()), SlabStatus::NullPointer);
        assert!(last_error().contains("out"));

        let mut b = ptr::null_mut();
        assert_eq!(slab_brownian(-1.0, 10, 0, 0, &mut b), SlabStatus::InvalidArgument);
        assert!(b.is_null());
        assert!(!last_error().is_empty());

        let vals = [0.0, f64::NAN, 1.0];
        assert_eq!(slab_path_new(0.1, vals.as_ptr(), 3, &mut b), SlabStatus::InvalidArgument);

        let bad = CString::new("{\"kind\":\"nope\"}").unwrap();
        let st = slab_exceedance_probability(bad.as_ptr(), 1.0, 1e-3, 10, 0, 0.02, ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
        assert_eq!(st, SlabStatus::InvalidArgument);

        let mut out = ptr::null_mut();
        let cfg = CString::new("{\"grid\":{\"dt\":0}}").unwrap();
        assert_eq!(slab_run_suite(cfg.as_ptr(), &mut out), SlabStatus::InvalidArgument);
        assert!(out.is_null());
    }
}

#[test]
fn exceedance_matches_closed_form() {
    let phi = CString::new(r#"{"kind":"constant","c":1.0}"#).unwrap();
    let (mut e, mut c, mut s) = (0.0, 0.0, 0.0);
    let st = unsafe { slab_exceedance_probability(phi.as_ptr(), 1.0, 1e-3, 2000, 3, 0.05, &mut e, &mut c, &mut s) };
    assert_eq!(st, SlabStatus::Ok, "{e} {c} {s}");
    assert!((c - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
    assert!(s > 0.0);
}

#[test]
fn run_suite_returns_report_json() {
    let cfg = CString::new(
        r#"{"suite":"sigma-verify","grid":{"dt":0.001,"n_steps":1000},"ensemble":{"n_paths":200,"master_seed":5}}"#,
    )
    .unwrap();
    let mut out = ptr::null_mut();
    let st = unsafe { slab_run_suite(cfg.as_ptr(), &mut out) };
    assert!(matches!(st, SlabStatus::Ok | SlabStatus::CheckFailed), "{}", last_error());
    let json = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_owned();
    unsafe { slab_string_free(out) };
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["pass"].as_bool().unwrap(), st == SlabStatus::Ok);
    assert!(v["content_hash"].as_str().unwrap().len() == 64);
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/sigma_lab.h")).unwrap();
    for f in [
        "slab_last_error",
        "slab_version",
        "slab_string_free",
        "slab_brownian",
        "slab_path_new",
        "slab_path_copy",
        "slab_path_free",
        "slab_reflect",
        "slab_local_time",
        "slab_z_transform",
        "slab_exceedance_probability",
        "slab_run_suite",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f}");
    }
}

#[test]
fn header_compiles_as_c() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let src = std::env::temp_dir().join(format!("slab_header_{}.c", std::process::id()));
    std::fs::write(&src, "#include \"sigma_lab.h\"\nint main(void) { return slab_version() == 0; }\n").unwrap();
    let status = match std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-I", dir])
        .arg(&src)
        .status()
    {
        Ok(s) => s,
        Err(_) => {
            eprintln!("no C compiler; skipping");
            return;
        }
    };
    let _ = std::fs::remove_file(&src);
    assert!(status.success());
}
