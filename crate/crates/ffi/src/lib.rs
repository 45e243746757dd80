//! C ABI over `lqrlab`.
//!
//! Matrices cross the boundary as row-major `double` buffers whose sizes are
//! fixed by the plant dimensions: `A`, `Q`, `Ω`, `P` are `n×n`, `B` is `n×m`,
//! `R` is `m×m` and gains are `m×n`. Every function returns an
//! [`LqrStatus`]; on failure a message is kept per thread and can be read
//! with [`lqr_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use lqrlab::bench::plants::{make_mass_spring, MassSpringSpec};
use lqrlab::lqr_core::{gradient, lqr_cost as cost, solve_riccati_kleinman, Plant};
use lqrlab::{LqrError, Mat};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LqrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    NotStabilizing = 4,
    Numerical = 5,
    Panic = 6,
}

/// Opaque plant handle.
pub struct LqrPlant {
    inner: Plant,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &LqrError) -> LqrStatus {
    match e {
        LqrError::Dimension(_) => LqrStatus::Dimension,
        LqrError::InvalidArgument(_) | LqrError::NonFinite(_) | LqrError::NotPositiveDefinite(_) => {
            LqrStatus::InvalidArgument
        }
        LqrError::NotStabilizing { .. } | LqrError::Unstable { .. } => LqrStatus::NotStabilizing,
        _ => LqrStatus::Numerical,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (LqrStatus, String)>) -> LqrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LqrStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            LqrStatus::Panic
        }
    }
}

fn lib(e: LqrError) -> (LqrStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (LqrStatus, String) {
    (LqrStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `p` must be null or point to `rows·cols` readable doubles.
unsafe fn read(p: *const f64, rows: usize, cols: usize, what: &str) -> Result<Mat, (LqrStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(Mat::from_row_slice(rows, cols, slice::from_raw_parts(p, rows * cols)))
}

/// # Safety
/// `p` must be null or point to `m.len()` writable doubles.
unsafe fn write(m: &Mat, p: *mut f64, what: &str) -> Result<(), (LqrStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    let out = slice::from_raw_parts_mut(p, m.len());
    for (i, row) in m.row_iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            out[i * m.ncols() + j] = *v;
        }
    }
    Ok(())
}

/// # Safety
/// `plant` must be null or a live handle from this library.
unsafe fn plant_ref<'a>(plant: *const LqrPlant) -> Result<&'a Plant, (LqrStatus, String)> {
    plant.as_ref().map(|p| &p.inner).ok_or_else(|| null("plant"))
}

fn emit(out: *mut *mut LqrPlant, plant: Plant) -> Result<(), (LqrStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    // SAFETY: checked non-null; caller provides a writable slot.
    unsafe { *out = Box::into_raw(Box::new(LqrPlant { inner: plant })) };
    Ok(())
}

/// Builds a plant from row-major buffers; `omega` may be null for `Ω = I`.
///
/// # Safety
/// Buffers must hold the sizes listed in the module docs; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lqr_plant_new(
    n: usize,
    m: usize,
    a: *const f64,
    b: *const f64,
    q: *const f64,
    r: *const f64,
    omega: *const f64,
    out: *mut *mut LqrPlant,
) -> LqrStatus {
    guard(|| {
        if n == 0 || m == 0 {
            return Err((LqrStatus::InvalidArgument, "dimensions must be positive".into()));
        }
        let omega = if omega.is_null() { Mat::identity(n, n) } else { read(omega, n, n, "omega")? };
        let plant = Plant::new(read(a, n, n, "a")?, read(b, n, m, "b")?, read(q, n, n, "q")?, read(r, m, m, "r")?, omega)
            .map_err(lib)?;
        emit(out, plant)
    })
}

/// Mass-spring-damper chain with `masses` unit masses and `Q = R = Ω = I`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lqr_plant_mass_spring(masses: usize, out: *mut *mut LqrPlant) -> LqrStatus {
    guard(|| {
        let plant = make_mass_spring(&MassSpringSpec::identity(masses)).map_err(lib)?;
        emit(out, plant)
    })
}

/// # Safety
/// `plant` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lqr_plant_free(plant: *mut LqrPlant) {
    if !plant.is_null() {
        drop(Box::from_raw(plant));
    }
}

/// # Safety
/// `plant` must be a live handle; `n` and `m` writable.
#[no_mangle]
pub unsafe extern "C" fn lqr_plant_dims(plant: *const LqrPlant, n: *mut usize, m: *mut usize) -> LqrStatus {
    guard(|| {
        let p = plant_ref(plant)?;
        if n.is_null() || m.is_null() {
            return Err(null("n or m"));
        }
        *n = p.n();
        *m = p.m();
        Ok(())
    })
}

/// `f(K) = trace(P_K Ω)`; fails with `NotStabilizing` outside the stabilizing set.
///
/// # Safety
/// `k` holds `m·n` doubles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn lqr_cost(plant: *const LqrPlant, k: *const f64, out: *mut f64) -> LqrStatus {
    guard(|| {
        let p = plant_ref(plant)?;
        let k = read(k, p.m(), p.n(), "k")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let c = cost(p, &k);
        if !c.is_finite() {
            return Err((LqrStatus::NotStabilizing, "gain is not stabilizing".into()));
        }
        *out = c.value();
        Ok(())
    })
}

/// `∇f(K) = 2(RK − BᵀP)X` into an `m×n` buffer.
///
/// # Safety
/// `k` and `out` hold `m·n` doubles.
#[no_mangle]
pub unsafe extern "C" fn lqr_gradient(plant: *const LqrPlant, k: *const f64, out: *mut f64) -> LqrStatus {
    guard(|| {
        let p = plant_ref(plant)?;
        let k = read(k, p.m(), p.n(), "k")?;
        write(&gradient(p, &k).map_err(lib)?, out, "out")
    })
}

/// Stabilizing Riccati solution by Kleinman iteration. Any output may be null.
///
/// # Safety
/// `p_star` holds `n·n` doubles, `k_star` holds `m·n`, `f_star` one.
#[no_mangle]
pub unsafe extern "C" fn lqr_riccati(
    plant: *const LqrPlant,
    p_star: *mut f64,
    k_star: *mut f64,
    f_star: *mut f64,
) -> LqrStatus {
    guard(|| {
        let p = plant_ref(plant)?;
        let sol = solve_riccati_kleinman(p, None).map_err(lib)?;
        if !p_star.is_null() {
            write(&sol.p_star, p_star, "p_star")?;
        }
        if !k_star.is_null() {
            write(&sol.k_star, k_star, "k_star")?;
        }
        if !f_star.is_null() {
            *f_star = sol.f_star(p);
        }
        Ok(())
    })
}

/// Message of the last failure on this thread, or null. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn lqr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}
