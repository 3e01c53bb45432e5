//! C ABI for the `henon-brody` library.
//!
//! Objects are opaque handles created by `hb_*_new`/`hb_*_parse`/`hb_*_find`/`hb_*_build`
//! and released by the matching `hb_*_free`. Every fallible function returns an
//! [`HbStatus`]; on failure [`hb_last_error_message`] describes the error for the
//! calling thread. Panics never cross the boundary and are reported as
//! [`HbStatus::Internal`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use henon_brody::escape::{classify_forward, green_plus, Classification, GREEN_N_MAX, GREEN_TOL};
use henon_brody::fs::lift_speed;
use henon_brody::manifold::StableManifoldChart;
use henon_brody::mapspec::parse_map;
use henon_brody::saddle::{default_seeds, find_periodic, SaddleOrbit};
use henon_brody::{AffinePoint, HenonError, HenonMap, C64};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    InvalidMap = 4,
    EscapedRange = 5,
    Indeterminate = 6,
    GreenUndecided = 7,
    NotSaddle = 8,
    Conditioning = 9,
    PrecisionExhausted = 10,
    PipelineFailed = 11,
    Io = 12,
    Internal = 13,
}

/// Escape classification of a forward orbit.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HbClass {
    Escaping = 0,
    Bounded = 1,
    Undecided = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HbComplex {
    pub re: f64,
    pub im: f64,
}

/// A point `(z, w)` of `C^2`.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HbPoint {
    pub z: HbComplex,
    pub w: HbComplex,
}

/// Summary of one periodic orbit.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HbOrbitInfo {
    pub period: usize,
    pub first_point: HbPoint,
    pub lambda_s: HbComplex,
    pub lambda_u: HbComplex,
    pub residual: f64,
    pub is_saddle: bool,
}

/// Opaque Hénon map.
pub struct HbMap(HenonMap<f64>);
/// Opaque list of periodic orbits.
pub struct HbOrbits(Vec<SaddleOrbit>);
/// Opaque stable-manifold parametrization.
pub struct HbChart(StableManifoldChart<f64>);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &HenonError) -> HbStatus {
    match e {
        HenonError::InvalidMap(_) => HbStatus::InvalidMap,
        HenonError::EscapedRange { .. } => HbStatus::EscapedRange,
        HenonError::Indeterminate(_) => HbStatus::Indeterminate,
        HenonError::GreenUndecided { .. } => HbStatus::GreenUndecided,
        HenonError::NotContracting { .. } | HenonError::NonSaddle { .. } => HbStatus::NotSaddle,
        HenonError::ResonanceConditioning { .. } => HbStatus::Conditioning,
        HenonError::PrecisionExhausted { .. } => HbStatus::PrecisionExhausted,
        HenonError::DegenerateRescale { .. } | HenonError::PipelineFailed { .. } => HbStatus::PipelineFailed,
        HenonError::Parse(_) => HbStatus::Parse,
        HenonError::Usage(_) => HbStatus::InvalidArgument,
        HenonError::Io(_) => HbStatus::Io,
    }
}

enum Fail {
    Null,
    Arg(String),
    Lib(HenonError),
}

impl From<HenonError> for Fail {
    fn from(e: HenonError) -> Self {
        Fail::Lib(e)
    }
}

fn guard(body: impl FnOnce() -> Result<(), Fail>) -> HbStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error("");
            HbStatus::Ok
        }
        Ok(Err(Fail::Null)) => {
            set_error("null pointer argument");
            HbStatus::NullPointer
        }
        Ok(Err(Fail::Arg(m))) => {
            set_error(&m);
            HbStatus::InvalidArgument
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(&format!("{}: {e}", e.code()));
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            HbStatus::Internal
        }
    }
}

unsafe fn deref<'a, T>(p: *const T) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null)
}

unsafe fn out<'a, T>(p: *mut T) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null)
}

fn c64(c: HbComplex) -> C64 {
    C64::new(c.re, c.im)
}

fn hb(c: C64) -> HbComplex {
    HbComplex { re: c.re, im: c.im }
}

fn point_in(p: &HbPoint) -> AffinePoint<f64> {
    AffinePoint::new(c64(p.z), c64(p.w))
}

fn point_out(p: &AffinePoint<f64>) -> HbPoint {
    HbPoint { z: hb(p.z), w: hb(p.w) }
}

/// Message describing the last failure on this thread, empty after a success. The
/// pointer stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn hb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a map such as `p=z^2-6; a=0.5`.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn hb_map_parse(text: *const c_char, out_map: *mut *mut HbMap) -> HbStatus {
    guard(|| {
        let slot = out(out_map)?;
        *slot = ptr::null_mut();
        if text.is_null() {
            return Err(Fail::Null);
        }
        let s = CStr::from_ptr(text).to_str().map_err(|_| Fail::Arg("map text is not UTF-8".into()))?;
        *slot = Box::into_raw(Box::new(HbMap(parse_map(s)?)));
        Ok(())
    })
}

/// Quadratic map `(z^2 + c - a w, z)`.
///
/// # Safety
/// `out_map` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn hb_map_new_quadratic(c: HbComplex, a: HbComplex, out_map: *mut *mut HbMap) -> HbStatus {
    guard(|| {
        let slot = out(out_map)?;
        *slot = ptr::null_mut();
        *slot = Box::into_raw(Box::new(HbMap(HenonMap::quadratic(c64(c), c64(a))?)));
        Ok(())
    })
}

/// # Safety
/// `map` must come from this library and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn hb_map_free(map: *mut HbMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

#[no_mangle]
/// # Safety
/// `map` must be a live handle; `degree` must be writable.
pub unsafe extern "C" fn hb_map_degree(map: *const HbMap, degree: *mut usize) -> HbStatus {
    guard(|| {
        *out(degree)? = deref(map)?.0.degree();
        Ok(())
    })
}

/// `f(x)`.
///
/// # Safety
/// `map` must be a live handle and `x`, `y` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn hb_map_forward(map: *const HbMap, x: *const HbPoint, y: *mut HbPoint) -> HbStatus {
    guard(|| {
        let v = deref(map)?.0.eval_forward(&point_in(deref(x)?))?;
        *out(y)? = point_out(&v);
        Ok(())
    })
}

/// `f^{-1}(x)`.
///
/// # Safety
/// `map` must be a live handle and `x`, `y` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn hb_map_inverse(map: *const HbMap, x: *const HbPoint, y: *mut HbPoint) -> HbStatus {
    guard(|| {
        let v = deref(map)?.0.eval_inverse(&point_in(deref(x)?))?;
        *out(y)? = point_out(&v);
        Ok(())
    })
}

/// Forward escape classification with at most `n_max` iterations. `n_escape` is set to
/// the escape time for escaping points and to `SIZE_MAX` otherwise.
///
/// # Safety
/// `map` must be a live handle and the other pointers valid.
#[no_mangle]
pub unsafe extern "C" fn hb_classify(map: *const HbMap, x: *const HbPoint, n_max: usize, class: *mut HbClass, n_escape: *mut usize) -> HbStatus {
    guard(|| {
        let r = classify_forward(&deref(map)?.0, &point_in(deref(x)?), n_max);
        *out(class)? = match r.classification {
            Classification::Escaping => HbClass::Escaping,
            Classification::Bounded => HbClass::Bounded,
            Classification::Undecided => HbClass::Undecided,
        };
        *out(n_escape)? = r.n_escape.unwrap_or(usize::MAX);
        Ok(())
    })
}

/// Green function `g+(x)`.
///
/// # Safety
/// `map` must be a live handle and the other pointers valid.
#[no_mangle]
pub unsafe extern "C" fn hb_green_plus(map: *const HbMap, x: *const HbPoint, value: *mut f64) -> HbStatus {
    guard(|| {
        *out(value)? = green_plus(&deref(map)?.0, &point_in(deref(x)?), GREEN_N_MAX, GREEN_TOL)?;
        Ok(())
    })
}

/// Periodic orbits of exact period `period`.
///
/// # Safety
/// `map` must be a live handle and `out_orbits` writable.
#[no_mangle]
pub unsafe extern "C" fn hb_periodic_find(map: *const HbMap, period: usize, out_orbits: *mut *mut HbOrbits) -> HbStatus {
    guard(|| {
        let slot = out(out_orbits)?;
        *slot = ptr::null_mut();
        let f = &deref(map)?.0;
        *slot = Box::into_raw(Box::new(HbOrbits(find_periodic(f, period, &default_seeds(f), 1e-13)?)));
        Ok(())
    })
}

/// # Safety
/// `orbits` must be a live handle and `count` writable.
#[no_mangle]
pub unsafe extern "C" fn hb_orbits_count(orbits: *const HbOrbits, count: *mut usize) -> HbStatus {
    guard(|| {
        *out(count)? = deref(orbits)?.0.len();
        Ok(())
    })
}

/// # Safety
/// `orbits` must be a live handle and `info` writable.
#[no_mangle]
pub unsafe extern "C" fn hb_orbits_get(orbits: *const HbOrbits, index: usize, info: *mut HbOrbitInfo) -> HbStatus {
    guard(|| {
        let list = &deref(orbits)?.0;
        let o = list.get(index).ok_or_else(|| Fail::Arg(format!("orbit index {index} out of range ({} orbits)", list.len())))?;
        *out(info)? = HbOrbitInfo {
            period: o.period,
            first_point: point_out(&o.points[0]),
            lambda_s: hb(o.lambda_s),
            lambda_u: hb(o.lambda_u),
            residual: o.residual,
            is_saddle: o.is_saddle,
        };
        Ok(())
    })
}

/// # Safety
/// `orbits` must come from this library and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn hb_orbits_free(orbits: *mut HbOrbits) {
    if !orbits.is_null() {
        drop(Box::from_raw(orbits));
    }
}

/// Stable-manifold parametrization `psi` of saddle orbit `index` with series order `order`,
/// normalized so that `psi'(0)` is the unit stable eigenvector.
///
/// # Safety
/// `map` and `orbits` must be live handles and `out_chart` writable.
#[no_mangle]
pub unsafe extern "C" fn hb_chart_build(
    map: *const HbMap,
    orbits: *const HbOrbits,
    index: usize,
    order: usize,
    out_chart: *mut *mut HbChart,
) -> HbStatus {
    guard(|| {
        let slot = out(out_chart)?;
        *slot = ptr::null_mut();
        let list = &deref(orbits)?.0;
        let o = list.get(index).ok_or_else(|| Fail::Arg(format!("orbit index {index} out of range ({} orbits)", list.len())))?;
        let chart = StableManifoldChart::build(&deref(map)?.0, o, order, C64::new(1.0, 0.0))?;
        *slot = Box::into_raw(Box::new(HbChart(chart)));
        Ok(())
    })
}

/// Evaluates `psi(zeta)`. `lift` receives a homogeneous lift `[X0 : X1 : X2]` (with
/// `X2 = 1` when the point is affine) and `speed` the Fubini–Study speed of `psi`.
///
/// # Safety
/// `chart` must be a live handle; `lift` must point to three writable values.
#[no_mangle]
pub unsafe extern "C" fn hb_chart_eval(chart: *const HbChart, zeta: HbComplex, lift: *mut HbComplex, speed: *mut f64) -> HbStatus {
    guard(|| {
        let c = &deref(chart)?.0;
        if lift.is_null() {
            return Err(Fail::Null);
        }
        let e = c.eval_global(&c64(zeta), true)?;
        let s = e.dlift.as_ref().map_or(f64::NAN, |d| lift_speed(&e.lift, d));
        for (k, v) in e.lift.iter().enumerate() {
            *lift.add(k) = hb(*v);
        }
        *out(speed)? = s;
        Ok(())
    })
}

/// # Safety
/// `chart` must be a live handle and `rho` writable.
#[no_mangle]
pub unsafe extern "C" fn hb_chart_radius(chart: *const HbChart, rho: *mut f64) -> HbStatus {
    guard(|| {
        *out(rho)? = deref(chart)?.0.rho;
        Ok(())
    })
}

/// # Safety
/// `chart` must come from this library and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn hb_chart_free(chart: *mut HbChart) {
    if !chart.is_null() {
        drop(Box::from_raw(chart));
    }
}
