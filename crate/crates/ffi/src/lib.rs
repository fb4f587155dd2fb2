//! C ABI over the tgeom engine.
//!
//! Worlds are opaque `TgWorld` handles created from a JSON spec and released
//! with `tg_world_free`. Every fallible call returns a `TgStatus`; the message
//! of the last failure on the calling thread is available through
//! `tg_last_error_message`. Output buffers are caller-allocated.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use tgeom::{algebra, calculus, lines, point, tubes, Error, Kind, World, WorldFunction, WorldSpec};

/// Opaque world handle.
pub struct TgWorld {
    inner: WorldFunction,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    SolverFailure = 3,
    BufferTooSmall = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TgKind {
    Neutral = 0,
    Future = 1,
    Past = 2,
}

impl From<TgKind> for Kind {
    fn from(k: TgKind) -> Kind {
        match k {
            TgKind::Neutral => Kind::Neutral,
            TgKind::Future => Kind::Future,
            TgKind::Past => Kind::Past,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

struct Fail(TgStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = if e.is_solver_failure() {
            TgStatus::SolverFailure
        } else {
            TgStatus::InvalidInput
        };
        Fail(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> TgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            TgStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TgStatus::Panic
        }
    }
}

fn null() -> Fail {
    Fail(TgStatus::NullPointer, "null pointer argument".into())
}

unsafe fn world<'a>(w: *const TgWorld) -> Result<&'a WorldFunction, Fail> {
    w.as_ref().map(|w| &w.inner).ok_or_else(null)
}

unsafe fn coords<'a>(p: *const f64, len: usize) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null());
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn out_buf<'a>(p: *mut f64, len: usize) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(null());
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

fn check_dim(w: &WorldFunction, len: usize) -> Result<(), Fail> {
    if len != w.dim() {
        return Err(Error::DimensionMismatch {
            expected: w.dim(),
            found: len,
        }
        .into());
    }
    Ok(())
}

/// Builds a world from a NUL-terminated JSON spec. On success `*out` owns a new handle.
///
/// # Safety
/// `json` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tg_world_from_json(json: *const c_char, out: *mut *mut TgWorld) -> TgStatus {
    guard(|| {
        if json.is_null() || out.is_null() {
            return Err(null());
        }
        *out = ptr::null_mut();
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| Fail(TgStatus::InvalidInput, e.to_string()))?;
        let inner = WorldFunction::new(WorldSpec::from_json(text)?)?;
        *out = Box::into_raw(Box::new(TgWorld { inner }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `w` must come from `tg_world_from_json` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tg_world_free(w: *mut TgWorld) {
    if !w.is_null() {
        drop(Box::from_raw(w));
    }
}

/// Chart dimension, 0 for a null handle.
///
/// # Safety
/// `w` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tg_world_dim(w: *const TgWorld) -> usize {
    w.as_ref().map_or(0, |w| w.inner.dim())
}

/// Σ(x, x′).
///
/// # Safety
/// `x` and `xp` must point to `len` doubles; `out` to one.
#[no_mangle]
pub unsafe extern "C" fn tg_sigma(w: *const TgWorld, x: *const f64, xp: *const f64, len: usize, out: *mut f64) -> TgStatus {
    guard(|| {
        let w = world(w)?;
        let (x, xp) = (coords(x, len)?, coords(xp, len)?);
        let out = out_buf(out, 1)?;
        out[0] = w.sigma(&point(x), &point(xp))?;
        Ok(())
    })
}

/// Scalar Σ-product (P₀P₁.Q₀Q₁).
///
/// # Safety
/// The four point pointers must each reference `len` doubles; `out` one.
#[no_mangle]
pub unsafe extern "C" fn tg_vector_product(
    w: *const TgWorld,
    p0: *const f64,
    p1: *const f64,
    q0: *const f64,
    q1: *const f64,
    len: usize,
    out: *mut f64,
) -> TgStatus {
    guard(|| {
        let w = world(w)?;
        let pts = [p0, p1, q0, q1]
            .iter()
            .map(|&p| coords(p, len).map(point))
            .collect::<Result<Vec<_>, _>>()?;
        let out = out_buf(out, 1)?;
        out[0] = algebra::vector_product(w, &pts[0], &pts[1], &pts[2], &pts[3])?;
        Ok(())
    })
}

/// Radii of the axisymmetric first-order tube through 0 and `y` at parameter `tau`.
///
/// Writes up to `cap` radii in ascending order and their count to `*n_out`.
/// Returns `BufferTooSmall` (with `*n_out` set) if `cap` is insufficient.
///
/// # Safety
/// `y` must reference `len` doubles, `radii` `cap` doubles, `n_out` one size_t.
#[no_mangle]
pub unsafe extern "C" fn tg_tube_radii(
    w: *const TgWorld,
    kind: TgKind,
    y: *const f64,
    len: usize,
    tau: f64,
    radii: *mut f64,
    cap: usize,
    n_out: *mut usize,
) -> TgStatus {
    guard(|| {
        let w = world(w)?;
        let y = coords(y, len)?;
        if n_out.is_null() {
            return Err(null());
        }
        let s = tubes::sample_axisymmetric_tube(w, &point(y), kind.into(), &[tau])?;
        let r = &s[0].radii;
        *n_out = r.len();
        if r.len() > cap {
            return Err(Fail(TgStatus::BufferTooSmall, format!("{} radii, capacity {cap}", r.len())));
        }
        if !r.is_empty() {
            out_buf(radii, r.len())?.copy_from_slice(r);
        }
        Ok(())
    })
}

/// Coincidence limits at `x`: a_i into `a` (len doubles) and g_ik into `g` (len² doubles, row-major).
///
/// # Safety
/// Buffers must have the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn tg_coincidence(w: *const TgWorld, x: *const f64, len: usize, a: *mut f64, g: *mut f64) -> TgStatus {
    guard(|| {
        let w = world(w)?;
        let x = coords(x, len)?;
        check_dim(w, len)?;
        let (a, g) = (out_buf(a, len)?, out_buf(g, len * len)?);
        let c = calculus::coincidence_coefficients(w, x)?;
        a.copy_from_slice(&c.a.data);
        g.copy_from_slice(&c.g.data);
        Ok(())
    })
}

/// Implicit gradient line from `xa` (τ = 0) to `xb` (τ = 1) on `steps` equal intervals.
///
/// Writes (steps + 1)·len coordinates row-major into `out` and the number of
/// samples actually resolved into `*n_out` (rough worlds may drop samples near τ = 0).
///
/// # Safety
/// `xa`, `xb` reference `len` doubles; `out` holds (steps + 1)·len doubles.
#[no_mangle]
pub unsafe extern "C" fn tg_gradient_line(
    w: *const TgWorld,
    kind: TgKind,
    xa: *const f64,
    xb: *const f64,
    len: usize,
    steps: usize,
    out: *mut f64,
    n_out: *mut usize,
) -> TgStatus {
    guard(|| {
        let w = world(w)?;
        let (xa, xb) = (coords(xa, len)?, coords(xb, len)?);
        if n_out.is_null() {
            return Err(null());
        }
        if steps == 0 {
            return Err(Fail(TgStatus::InvalidInput, "steps must be positive".into()));
        }
        let out = out_buf(out, (steps + 1) * len)?;
        let grid: Vec<f64> = (0..=steps).map(|i| i as f64 / steps as f64).collect();
        let t = lines::gradient_line_implicit(w, kind.into(), &point(xa), &point(xb), &grid)?;
        for (row, p) in out.chunks_mut(len).zip(&t.points) {
            row.copy_from_slice(p.as_slice());
        }
        *n_out = t.points.len();
        Ok(())
    })
}

/// Copies the last error message of this thread into `buf` (NUL-terminated, truncated to `cap`).
/// Returns the full message length in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be null or reference `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn tg_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static C string.
#[no_mangle]
pub extern "C" fn tg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    fn make(json: &str) -> *mut TgWorld {
        let c = CString::new(json).unwrap();
        let mut w = ptr::null_mut();
        assert_eq!(unsafe { tg_world_from_json(c.as_ptr(), &mut w) }, TgStatus::Ok);
        w
    }

    fn last_error() -> String {
        let mut buf = vec![0 as c_char; 256];
        unsafe { tg_last_error_message(buf.as_mut_ptr(), buf.len()) };
        unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
    }

    const CASE1: &str = r#"{"kind":"case1","dim":4,"metric":[1,-1,-1,-1],"b":[1,0,0,0],"alpha":0.2}"#;

    #[test]
    fn sigma_spot_value() {
        let w = make(CASE1);
        assert_eq!(unsafe { tg_world_dim(w) }, 4);
        let (x, xp) = ([1.0, 0.0, 0.0, 0.0], [0.0; 4]);
        let mut s = 0.0;
        assert_eq!(unsafe { tg_sigma(w, x.as_ptr(), xp.as_ptr(), 4, &mut s) }, TgStatus::Ok);
        assert!((s - 1.7).abs() < 1e-15);
        unsafe { tg_world_free(w) };
    }

    #[test]
    fn errors_are_reported() {
        let c = CString::new("{nope").unwrap();
        let mut w = ptr::null_mut();
        assert_eq!(unsafe { tg_world_from_json(c.as_ptr(), &mut w) }, TgStatus::InvalidInput);
        assert!(w.is_null());
        assert!(last_error().contains("invalid world spec"));

        let w = make(CASE1);
        let x = [0.0; 3];
        let mut s = 0.0;
        assert_eq!(unsafe { tg_sigma(w, x.as_ptr(), x.as_ptr(), 3, &mut s) }, TgStatus::InvalidInput);
        assert_eq!(unsafe { tg_sigma(ptr::null(), x.as_ptr(), x.as_ptr(), 3, &mut s) }, TgStatus::NullPointer);
        assert_eq!(unsafe { tg_last_error_message(ptr::null_mut(), 0) }, "null pointer argument".len());
        unsafe { tg_world_free(w) };
        unsafe { tg_world_free(ptr::null_mut()) };
    }

    #[test]
    fn vector_product_antisymmetry() {
        let w = make(CASE1);
        let p = [[0.0, 0.0, 0.0, 0.0], [1.0, 0.2, 0.0, 0.0], [0.3, 1.0, 0.0, 0.1], [1.0, 1.0, 0.5, 0.0]];
        let (mut a, mut b) = (0.0, 0.0);
        unsafe {
            tg_vector_product(w, p[0].as_ptr(), p[1].as_ptr(), p[2].as_ptr(), p[3].as_ptr(), 4, &mut a);
            tg_vector_product(w, p[1].as_ptr(), p[0].as_ptr(), p[2].as_ptr(), p[3].as_ptr(), 4, &mut b);
            tg_world_free(w);
        }
        assert_eq!(a, -b);
    }

    #[test]
    fn waist_radii_and_buffer_size() {
        let w = make(r#"{"kind":"case1","dim":4,"metric":[1,-1,-1,-1],"b":[1,0,0,0],"alpha":0.1}"#);
        let y = [1.0, 0.0, 0.0, 0.0];
        let mut r = [0.0; 4];
        let mut n = 0;
        let st = unsafe { tg_tube_radii(w, TgKind::Neutral, y.as_ptr(), 4, 0.5, r.as_mut_ptr(), 4, &mut n) };
        assert_eq!(st, TgStatus::Ok);
        assert_eq!(n, 2);
        assert!((r[0] - 0.0755712).abs() < 1.5e-7 && (r[1] - 9.9244288).abs() < 1.5e-7);
        let st = unsafe { tg_tube_radii(w, TgKind::Neutral, y.as_ptr(), 4, 0.5, r.as_mut_ptr(), 1, &mut n) };
        assert_eq!(st, TgStatus::BufferTooSmall);
        assert_eq!(n, 2);
        unsafe { tg_world_free(w) };
    }

    #[test]
    fn coincidence_and_line() {
        let w = make(r#"{"kind":"euclidean","dim":2,"metric":[1,1]}"#);
        let x = [0.3, -0.2];
        let (mut a, mut g) = ([9.0; 2], [9.0; 4]);
        assert_eq!(unsafe { tg_coincidence(w, x.as_ptr(), 2, a.as_mut_ptr(), g.as_mut_ptr()) }, TgStatus::Ok);
        assert!(a.iter().all(|v| v.abs() < 1e-9));
        for (got, want) in g.iter().zip([1.0, 0.0, 0.0, 1.0]) {
            assert!((got - want).abs() < 1e-8);
        }
        let (xa, xb) = ([0.0, 0.0], [2.0, 1.0]);
        let mut out = [0.0; 10];
        let mut n = 0;
        let st = unsafe { tg_gradient_line(w, TgKind::Future, xa.as_ptr(), xb.as_ptr(), 2, 4, out.as_mut_ptr(), &mut n) };
        assert_eq!(st, TgStatus::Ok);
        assert_eq!(n, 5);
        for (k, row) in out.chunks(2).enumerate() {
            let t = k as f64 / 4.0;
            assert!((row[0] - 2.0 * t).abs() < 1e-9 && (row[1] - t).abs() < 1e-9);
        }
        unsafe { tg_world_free(w) };
    }

    #[test]
    fn version_string() {
        let v = unsafe { CStr::from_ptr(tg_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
