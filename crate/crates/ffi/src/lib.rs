//! C ABI over `sigma_lab`.
//!
//! Objects cross the boundary as opaque handles (`SlabPath`,
//! `SlabDecomposed`) that the caller releases with the matching `*_free`
//! function. Every fallible call returns a [`SlabStatus`]; on failure the
//! message is available from [`slab_last_error`] on the same thread.
//! Strings returned by the library are released with [`slab_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sigma_lab::cli::{config, run_suite};
use sigma_lab::estimates::{exceedance_probability, EnsembleConfig, PhiSpec};
use sigma_lab::pathgen::{gen_brownian, gen_reflected};
use sigma_lab::sigma::z_transform;
use sigma_lab::stochcalc::{local_time_downcrossing, local_time_occupation, local_time_tanaka, tanaka_local_time};
use sigma_lab::{DecomposedPath, LabError, Path, SeedSpec, TimeGrid};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlabStatus {
    Ok = 0,
    /// A suite ran but at least one check failed.
    CheckFailed = 1,
    /// Invalid configuration or argument.
    InvalidArgument = 2,
    /// Unexpected failure inside the library.
    Internal = 3,
    /// A required pointer was null.
    NullPointer = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlabLocalTimeMethod {
    Occupation = 0,
    Downcrossing = 1,
    Tanaka = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlabComponent {
    X = 0,
    M = 1,
    V = 2,
}

/// Opaque sampled path.
pub struct SlabPath(Path);

/// Opaque path with its decomposition `X = M + V`.
pub struct SlabDecomposed(DecomposedPath);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &LabError) -> SlabStatus {
    match e {
        LabError::Io(_) | LabError::Csv(_) => SlabStatus::Internal,
        _ => SlabStatus::InvalidArgument,
    }
}

enum Fail {
    Lab(LabError),
    Null(&'static str),
}

impl From<LabError> for Fail {
    fn from(e: LabError) -> Self {
        Fail::Lab(e)
    }
}

fn guard(f: impl FnOnce() -> Result<SlabStatus, Fail>) -> SlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => s,
        Ok(Err(Fail::Lab(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Null(name))) => {
            set_error(format!("`{name}` is null"));
            SlabStatus::NullPointer
        }
        Err(_) => {
            set_error("panic inside sigma-lab".into());
            SlabStatus::Internal
        }
    }
}

unsafe fn non_null<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(name))
}

unsafe fn out_ptr<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(name))
}

unsafe fn c_str<'a>(p: *const c_char, name: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Lab(LabError::Format(format!("`{name}` is not UTF-8"))))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s).map(CString::into_raw).unwrap_or(ptr::null_mut())
}

/// Message of the last failed call on this thread. Never null; owned by the
/// library and valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn slab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn slab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Release a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn slab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Standard Brownian path on `n_steps` steps of size `dt`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn slab_brownian(
    dt: f64,
    n_steps: usize,
    master_seed: u64,
    stream: u64,
    out: *mut *mut SlabPath,
) -> SlabStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let b = gen_brownian(TimeGrid::new(dt, n_steps)?, SeedSpec::new(master_seed, stream))?;
        *out = Box::into_raw(Box::new(SlabPath(b)));
        Ok(SlabStatus::Ok)
    })
}

/// Path from `n_steps + 1` caller-provided values.
///
/// # Safety
/// `values` must point to `len` readable doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn slab_path_new(
    dt: f64,
    values: *const f64,
    len: usize,
    out: *mut *mut SlabPath,
) -> SlabStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let values = non_null(values, "values")?;
        if len < 2 {
            return Err(LabError::InvalidGrid("need at least two values".into()).into());
        }
        let v = std::slice::from_raw_parts(values, len).to_vec();
        let p = Path::new(TimeGrid::new(dt, len - 1)?, v)?;
        *out = Box::into_raw(Box::new(SlabPath(p)));
        Ok(SlabStatus::Ok)
    })
}

/// Number of samples (`n_steps + 1`); 0 for null.
///
/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn slab_path_len(p: *const SlabPath) -> usize {
    p.as_ref().map_or(0, |p| p.0.len())
}

/// Step size; NaN for null.
///
/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn slab_path_dt(p: *const SlabPath) -> f64 {
    p.as_ref().map_or(f64::NAN, |p| p.0.dt())
}

/// Copy the samples into `buf`, which must hold `slab_path_len(p)` doubles.
///
/// # Safety
/// `p` must be a live handle and `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn slab_path_copy(p: *const SlabPath, buf: *mut f64, len: usize) -> SlabStatus {
    guard(|| {
        let p = non_null(p, "path")?;
        out_ptr(buf, "buf")?;
        let v = p.0.values();
        if len != v.len() {
            return Err(LabError::LengthMismatch { expected: v.len(), actual: len }.into());
        }
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(v);
        Ok(SlabStatus::Ok)
    })
}

/// # Safety
/// `p` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn slab_path_free(p: *mut SlabPath) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Reflected path `|B| = ∫ sgn(B) dB + L`.
///
/// # Safety
/// `b` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn slab_reflect(b: *const SlabPath, out: *mut *mut SlabDecomposed) -> SlabStatus {
    guard(|| {
        let b = non_null(b, "b")?;
        let out = out_ptr(out, "out")?;
        *out = Box::into_raw(Box::new(SlabDecomposed(gen_reflected(&b.0)?)));
        Ok(SlabStatus::Ok)
    })
}

/// Copy one component of a decomposed path into a new path handle.
///
/// # Safety
/// `d` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn slab_decomposed_component(
    d: *const SlabDecomposed,
    which: SlabComponent,
    out: *mut *mut SlabPath,
) -> SlabStatus {
    guard(|| {
        let d = non_null(d, "decomposed")?;
        let out = out_ptr(out, "out")?;
        let p = match which {
            SlabComponent::X => &d.0.x,
            SlabComponent::M => &d.0.m,
            SlabComponent::V => &d.0.v,
        };
        *out = Box::into_raw(Box::new(SlabPath(p.clone())));
        Ok(SlabStatus::Ok)
    })
}

/// # Safety
/// `d` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn slab_decomposed_free(d: *mut SlabDecomposed) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Local time at 0 of `x`. `eps` is the band half-width and is ignored by
/// the Tanaka estimator.
///
/// # Safety
/// `x` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn slab_local_time(
    x: *const SlabPath,
    method: SlabLocalTimeMethod,
    eps: f64,
    out: *mut *mut SlabPath,
) -> SlabStatus {
    guard(|| {
        let x = non_null(x, "x")?;
        let out = out_ptr(out, "out")?;
        let l = match method {
            SlabLocalTimeMethod::Occupation => local_time_occupation(&x.0, eps)?,
            SlabLocalTimeMethod::Downcrossing => local_time_downcrossing(&x.0, eps)?,
            SlabLocalTimeMethod::Tanaka => tanaka_local_time(&x.0),
        };
        *out = Box::into_raw(Box::new(SlabPath(l.into_path())));
        Ok(SlabStatus::Ok)
    })
}

/// Increasing part of a decomposed path, read as its local time.
///
/// # Safety
/// `x` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn slab_local_time_decomposed(x: *const SlabDecomposed, out: *mut *mut SlabPath) -> SlabStatus {
    guard(|| {
        let x = non_null(x, "x")?;
        let out = out_ptr(out, "out")?;
        *out = Box::into_raw(Box::new(SlabPath(local_time_tanaka(&x.0)?.into_path())));
        Ok(SlabStatus::Ok)
    })
}

/// Excursion flip `Z^α X`; writes the new decomposition and, if
/// `sup_residual` is non-null, the sup residual of its decomposition identity.
///
/// # Safety
/// `x` must be a live handle, `out` valid, `sup_residual` null or valid.
#[no_mangle]
pub unsafe extern "C" fn slab_z_transform(
    x: *const SlabDecomposed,
    alpha: f64,
    master_seed: u64,
    stream: u64,
    out: *mut *mut SlabDecomposed,
    sup_residual: *mut f64,
) -> SlabStatus {
    guard(|| {
        let x = non_null(x, "x")?;
        let out = out_ptr(out, "out")?;
        let z = z_transform(&x.0, alpha, SeedSpec::new(master_seed, stream))?;
        if let Some(r) = sup_residual.as_mut() {
            *r = z.residual.sup_residual;
        }
        *out = Box::into_raw(Box::new(SlabDecomposed(z.path)));
        Ok(SlabStatus::Ok)
    })
}

/// Monte Carlo estimate of the exceedance probability at local-time level
/// `u` for the boundary `phi_json` (for example `{"kind":"constant","c":1}`).
/// Returns `CheckFailed` when the estimate misses the closed form.
///
/// # Safety
/// `phi_json` must be a NUL-terminated string; output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn slab_exceedance_probability(
    phi_json: *const c_char,
    u: f64,
    dt: f64,
    n_paths: usize,
    master_seed: u64,
    allowance: f64,
    empirical: *mut f64,
    closed_form: *mut f64,
    stderr: *mut f64,
) -> SlabStatus {
    guard(|| {
        let phi: PhiSpec = serde_json::from_str(c_str(phi_json, "phi_json")?).map_err(LabError::from)?;
        let cfg = EnsembleConfig {
            dt,
            n_paths,
            master_seed,
            max_horizon: 100.0,
        };
        let rep = exceedance_probability(phi, &[u], &cfg, allowance)?.remove(0);
        for (p, v) in [(empirical, rep.empirical), (closed_form, rep.closed_form), (stderr, rep.stderr)] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(if rep.pass { SlabStatus::Ok } else { SlabStatus::CheckFailed })
    })
}

/// Run a suite from a JSON configuration (same schema as the CLI config
/// file; missing keys take defaults). The report JSON is written to
/// `report_json` and must be released with `slab_string_free`.
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `report_json` valid.
#[no_mangle]
pub unsafe extern "C" fn slab_run_suite(config_json: *const c_char, report_json: *mut *mut c_char) -> SlabStatus {
    guard(|| {
        let out = out_ptr(report_json, "report_json")?;
        *out = ptr::null_mut();
        let value: serde_json::Value = serde_json::from_str(c_str(config_json, "config_json")?).map_err(|e| {
            LabError::Config {
                key: "config_json".into(),
                message: e.to_string(),
            }
        })?;
        let cfg = config::resolve(Some(value), false, &[])?;
        let report = run_suite(&cfg)?;
        *out = into_c_string(serde_json::to_string(&report).map_err(LabError::from)?);
        Ok(if report.pass { SlabStatus::Ok } else { SlabStatus::CheckFailed })
    })
}
