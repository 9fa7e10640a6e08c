//! C ABI over the lsol toolkit.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_find`
//! functions and released with the matching `*_free`. Every fallible call
//! returns an [`LsolStatus`]; on failure the message is available from
//! [`lsol_last_error`] on the same thread until the next failing call.
//!
//! Array outputs follow one convention: the caller passes a buffer and its
//! capacity, the library writes the required length to `*len` and fails with
//! `LSOL_ERR_BUFFER` when the capacity is too small. Passing a null buffer
//! with capacity 0 is the way to query the length.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use lsol::integrator::{evolve, EvolveConfig, FieldModel};
use lsol::io::{read_grid, write_grid};
use lsol::noise::composition_check;
use lsol::soliton::{embed_profile, find_free_soliton, soliton_stability, Geometry, SolitonProfile};
use lsol::steady::homogeneous_solutions;
use lsol::{ComplexField, DimensionlessParams, Error, Frame, GridSpec};
use num_complex::Complex64 as C64;

/// Result of every fallible call.
#[repr(C)]
#[allow(non_camel_case_types)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LsolStatus {
    LSOL_OK = 0,
    /// A required pointer argument was null.
    LSOL_ERR_NULL = 1,
    LSOL_ERR_INVALID_ARGUMENT = 2,
    LSOL_ERR_DOMAIN = 3,
    /// Newton or eigensolver failure, non-finite values, escaped soliton.
    LSOL_ERR_NUMERICAL = 4,
    LSOL_ERR_FORMAT = 5,
    LSOL_ERR_IO = 6,
    LSOL_ERR_NOT_REALIZABLE = 7,
    /// Output buffer too small; `*len` holds the required length.
    LSOL_ERR_BUFFER = 8,
    /// A Rust panic was caught at the boundary.
    LSOL_ERR_PANIC = 9,
}

use LsolStatus::*;

/// Soliton geometry selector.
#[repr(C)]
#[allow(non_camel_case_types)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LsolGeometry {
    LSOL_GEOMETRY_LINE = 0,
    LSOL_GEOMETRY_RADIAL = 1,
}

/// Reduced model parameters.
pub struct LsolParams(DimensionlessParams);

/// Converged free soliton.
pub struct LsolSoliton(SolitonProfile);

/// Complex field on a periodic grid, in reduced units.
pub struct LsolField(ComplexField);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> LsolStatus {
    match e {
        Error::Domain(_) => LSOL_ERR_DOMAIN,
        Error::InvalidParams(_) | Error::Config(_) => LSOL_ERR_INVALID_ARGUMENT,
        Error::NonRealizableNoise { .. } => LSOL_ERR_NOT_REALIZABLE,
        Error::Format(_) => LSOL_ERR_FORMAT,
        Error::Io(_) => LSOL_ERR_IO,
        _ => LSOL_ERR_NUMERICAL,
    }
}

struct Fail(LsolStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(LSOL_ERR_NULL, format!("{what} is null"))
}

/// Runs `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> LsolStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LSOL_OK,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            LSOL_ERR_PANIC
        }
    }
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

/// Copies `src` into a caller buffer following the capacity convention.
unsafe fn fill<T: Copy>(src: &[T], buf: *mut T, cap: usize, len: *mut usize) -> Result<(), Fail> {
    put(len, src.len(), "len")?;
    if cap < src.len() {
        return Err(Fail(LSOL_ERR_BUFFER, format!("buffer holds {cap}, need {}", src.len())));
    }
    if !src.is_empty() {
        if buf.is_null() {
            return Err(null("buffer"));
        }
        std::ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    }
    Ok(())
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| Fail(LSOL_ERR_INVALID_ARGUMENT, "path is not UTF-8".into()))?;
    Ok(Path::new(s))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lsol_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the last failure on this thread; empty if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lsol_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates a parameter set for the reduced field equation.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn lsol_params_new(g0: f64, a0: f64, b: f64, theta: f64, e_in: f64, out: *mut *mut LsolParams) -> LsolStatus {
    guard(|| {
        let p = DimensionlessParams::new(g0, a0, b, theta, e_in)?;
        put(out, boxed(LsolParams(p)), "out")
    })
}

/// # Safety
/// `p` must come from [`lsol_params_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lsol_params_free(p: *mut LsolParams) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Sets the pump statistics of the active and passive media, each in [0, 1].
///
/// # Safety
/// `p` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lsol_params_set_pump_statistics(p: *mut LsolParams, s_a: f64, s_p: f64) -> LsolStatus {
    guard(|| {
        let p = p.as_mut().ok_or_else(|| null("params"))?;
        let mut next = p.0.clone();
        next.s_a = Some(s_a);
        next.s_p = Some(s_p);
        next.validate()?;
        p.0 = next;
        Ok(())
    })
}

/// Saturable gain f(I).
///
/// # Safety
/// `p` must be a live handle and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn lsol_gain(p: *const LsolParams, intensity: f64, out: *mut f64) -> LsolStatus {
    guard(|| {
        let p = get(p, "params")?;
        put(out, lsol::params::nonlinear_gain(intensity, &p.0)?, "out")
    })
}

/// Intensities of all homogeneous states at holding intensity `i_in`,
/// ascending. Stability flags (1 stable, 0 unstable) go to `stable` when it
/// is non-null; it must then have the same capacity.
///
/// # Safety
/// Buffers must hold `cap` elements; `len` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn lsol_homogeneous_states(
    p: *const LsolParams,
    i_in: f64,
    intensity: *mut f64,
    stable: *mut c_int,
    cap: usize,
    len: *mut usize,
) -> LsolStatus {
    guard(|| {
        let p = get(p, "params")?;
        let states = homogeneous_solutions(i_in, &p.0)?;
        let is: Vec<f64> = states.iter().map(|s| s.intensity).collect();
        fill(&is, intensity, cap, len)?;
        if !stable.is_null() {
            let fl: Vec<c_int> = states.iter().map(|s| s.stable as c_int).collect();
            fill(&fl, stable, cap, len)?;
        }
        Ok(())
    })
}

/// Solves for the free soliton of `p` (which must have E_in = 0) on a line
/// of `n` points and length `length`. Radial profiles are stored as A(|x|).
///
/// # Safety
/// `p` must be a live handle and `out` valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn lsol_soliton_find(
    p: *const LsolParams,
    geometry: LsolGeometry,
    n: usize,
    length: f64,
    out: *mut *mut LsolSoliton,
) -> LsolStatus {
    guard(|| {
        let p = get(p, "params")?;
        let geo = match geometry {
            LsolGeometry::LSOL_GEOMETRY_LINE => Geometry::Line,
            LsolGeometry::LSOL_GEOMETRY_RADIAL => Geometry::Radial,
        };
        let s = find_free_soliton(&p.0, geo, &GridSpec::line(n, length)?, None)?;
        put(out, boxed(LsolSoliton(s)), "out")
    })
}

/// # Safety
/// `s` must come from [`lsol_soliton_find`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lsol_soliton_free(s: *mut LsolSoliton) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Frequency shift ν_s, peak intensity and final Newton residual. Any of
/// the output pointers may be null.
///
/// # Safety
/// `s` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lsol_soliton_info(s: *const LsolSoliton, nu_s: *mut f64, peak_intensity: *mut f64, residual: *mut f64) -> LsolStatus {
    guard(|| {
        let s = &get(s, "soliton")?.0;
        for (ptr, v) in [(nu_s, s.nu_s), (peak_intensity, s.peak_intensity()), (residual, s.residual)] {
            if !ptr.is_null() {
                ptr.write(v);
            }
        }
        Ok(())
    })
}

/// Profile samples on the solver grid as separate real and imaginary parts.
///
/// # Safety
/// `re` and `im` must hold `cap` elements; `len` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn lsol_soliton_profile(s: *const LsolSoliton, re: *mut f64, im: *mut f64, cap: usize, len: *mut usize) -> LsolStatus {
    guard(|| {
        let s = &get(s, "soliton")?.0;
        let (r, i): (Vec<f64>, Vec<f64>) = s.field.values.iter().map(|v| (v.re, v.im)).unzip();
        fill(&r, re, cap, len)?;
        fill(&i, im, cap, len)
    })
}

/// Linear stability: `*stable` is 1 when the largest growth rate outside
/// the symmetry modes is below tolerance.
///
/// # Safety
/// `s` must be a live handle; outputs must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lsol_soliton_stability(s: *const LsolSoliton, stable: *mut c_int, max_growth: *mut f64) -> LsolStatus {
    guard(|| {
        let r = soliton_stability(&get(s, "soliton")?.0)?;
        put(stable, r.stable as c_int, "stable")?;
        put(max_growth, r.max_growth, "max_growth")
    })
}

/// Field on a 1D (`dim` = 1, `ny` ignored) or 2D grid from split real and
/// imaginary arrays of length nx·ny, row-major.
///
/// # Safety
/// `re` and `im` must hold nx·ny elements (nx for a line).
#[no_mangle]
pub unsafe extern "C" fn lsol_field_new(
    dim: c_int,
    nx: usize,
    ny: usize,
    length: f64,
    re: *const f64,
    im: *const f64,
    out: *mut *mut LsolField,
) -> LsolStatus {
    guard(|| {
        let grid = match (dim, nx == ny) {
            (1, _) => GridSpec::line(nx, length)?,
            (2, true) => GridSpec::square(nx, length)?,
            _ => return Err(Fail(LSOL_ERR_INVALID_ARGUMENT, "dim must be 1, or 2 with nx = ny".into())),
        };
        if re.is_null() || im.is_null() {
            return Err(null("values"));
        }
        let n = grid.len();
        let re = std::slice::from_raw_parts(re, n);
        let im = std::slice::from_raw_parts(im, n);
        let values = re.iter().zip(im).map(|(a, b)| C64::new(*a, *b)).collect();
        let f = ComplexField::from_values(grid, values, Frame::Holding)?;
        put(out, boxed(LsolField(f)), "out")
    })
}

/// Embeds a soliton on a fresh line (`dim` = 1) or square (`dim` = 2) grid.
///
/// # Safety
/// `s` must be a live handle and `out` valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn lsol_field_from_soliton(s: *const LsolSoliton, dim: c_int, n: usize, length: f64, out: *mut *mut LsolField) -> LsolStatus {
    guard(|| {
        let s = &get(s, "soliton")?.0;
        let grid = match dim {
            1 => GridSpec::line(n, length)?,
            2 => GridSpec::square(n, length)?,
            _ => return Err(Fail(LSOL_ERR_INVALID_ARGUMENT, format!("dim must be 1 or 2, got {dim}"))),
        };
        put(out, boxed(LsolField(embed_profile(s, &grid)?)), "out")
    })
}

/// # Safety
/// `f` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lsol_field_free(f: *mut LsolField) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Field values as split real and imaginary arrays, row-major.
///
/// # Safety
/// `re` and `im` must hold `cap` elements; `len` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn lsol_field_values(f: *const LsolField, re: *mut f64, im: *mut f64, cap: usize, len: *mut usize) -> LsolStatus {
    guard(|| {
        let f = &get(f, "field")?.0;
        let (r, i): (Vec<f64>, Vec<f64>) = f.values.iter().map(|v| (v.re, v.im)).unzip();
        fill(&r, re, cap, len)?;
        fill(&i, im, cap, len)
    })
}

/// Integrates the deterministic field equation in place from the field's
/// current state for `t_end` time units with step `dt`.
///
/// # Safety
/// `f` and `p` must be live handles.
#[no_mangle]
pub unsafe extern "C" fn lsol_evolve(f: *mut LsolField, p: *const LsolParams, dt: f64, t_end: f64) -> LsolStatus {
    guard(|| {
        let p = get(p, "params")?;
        let f = f.as_mut().ok_or_else(|| null("field"))?;
        let tr = evolve(&f.0, &EvolveConfig::deterministic(dt, t_end), FieldModel::Reduced(p.0.clone()), None)?;
        f.0 = tr.field;
        Ok(())
    })
}

/// Writes the field as a single LSOL1 record.
///
/// # Safety
/// `path` and `variable` must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn lsol_field_write(f: *const LsolField, path: *const c_char, variable: *const c_char, time: f64) -> LsolStatus {
    guard(|| {
        let f = &get(f, "field")?.0;
        let path = path_arg(path)?;
        if variable.is_null() {
            return Err(null("variable"));
        }
        let var = CStr::from_ptr(variable).to_str().map_err(|_| Fail(LSOL_ERR_INVALID_ARGUMENT, "variable is not UTF-8".into()))?;
        Ok(write_grid(path, f, var, time)?)
    })
}

/// Reads the first record of an LSOL1 file. `time` may be null.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn lsol_field_read(path: *const c_char, out: *mut *mut LsolField, time: *mut f64) -> LsolStatus {
    guard(|| {
        let rec = read_grid(path_arg(path)?)?;
        if !time.is_null() {
            time.write(rec.header.time);
        }
        put(out, boxed(LsolField(rec.field)), "out")
    })
}

/// Monte-Carlo check of the composed noise moments at reduced intensity
/// `intensity`; writes the largest z-score over both media.
///
/// # Safety
/// `p` must be a live handle with pump statistics set; `max_z` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn lsol_noise_check(p: *const LsolParams, intensity: f64, samples: u64, seed: u64, max_z: *mut f64) -> LsolStatus {
    guard(|| {
        let p = get(p, "params")?;
        let c = composition_check(&p.0, intensity, 1e-9, samples as usize, seed)?;
        put(max_z, c.max_z(), "max_z")
    })
}
