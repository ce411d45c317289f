//! C interface to the systolic3d performance model.
//!
//! Design points live behind an opaque [`S3dDesign`] handle created with
//! [`s3d_design_new`] or [`s3d_design_new_with_blocking`] and released with
//! [`s3d_design_free`]. Every fallible call returns an [`S3dStatus`]; on
//! failure a description is available from [`s3d_last_error`] on the same
//! thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use systolic3d::dse::{predict, simulate, DesignPoint, Fidelity};
use systolic3d::model::{ArchShape, ClockSpec, LatencyProfile, MemorySpec, ProblemShape};
use systolic3d::Error;

/// Result code of every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum S3dStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidShape = 2,
    UnsupportedClock = 3,
    InvalidMemory = 4,
    InvalidPlan = 5,
    ProblemMismatch = 6,
    Internal = 7,
    Panic = 8,
}

impl From<&Error> for S3dStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidShape(_) => S3dStatus::InvalidShape,
            Error::UnsupportedTier(_) => S3dStatus::UnsupportedClock,
            Error::InvalidMemory(_) => S3dStatus::InvalidMemory,
            Error::InvalidPlan(_) | Error::CapacityExceeded(_) => S3dStatus::InvalidPlan,
            Error::ProblemViolations(_)
            | Error::DimensionMismatch(_)
            | Error::IndivisiblePartition { .. } => S3dStatus::ProblemMismatch,
            _ => S3dStatus::Internal,
        }
    }
}

/// Architecture of the grid: `d0_i x d0_j` PEs per layer, `d0_k` DSPs deep,
/// dot units of `d_p` DSPs.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct S3dArch {
    pub d0_i: usize,
    pub d0_j: usize,
    pub d0_k: usize,
    pub d_p: usize,
}

/// Blocking chosen for a design point.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct S3dPlan {
    pub d1_i: usize,
    pub d1_j: usize,
    pub b_ga: usize,
    pub b_gb: usize,
    pub r_a: usize,
    pub r_b: usize,
}

/// Closed-form figures for one design point and problem.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct S3dEstimate {
    pub n_dsp: usize,
    pub n_pe: usize,
    pub t_peak_gflops: f64,
    pub c_percent: f64,
    pub t_pred_gflops: f64,
    pub stall: f64,
    pub l_body: u64,
    pub l_tot: u64,
}

/// Counters of a blocked simulation.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct S3dSimStats {
    pub it_read_init: u64,
    pub it_steady: u64,
    pub it_tail: u64,
    pub it_write: u64,
    pub it_comp: u64,
    pub it_tot: u64,
    pub measured_c: f64,
    pub elements_read_a: u64,
    pub elements_read_b: u64,
    pub elements_written_c: u64,
    /// 1 when the product matched the reference and traffic identities held.
    pub verified: u8,
    /// Lowercase hex SHA-256 of the product, NUL terminated.
    pub result_sha256: [c_char; 65],
}

impl Default for S3dSimStats {
    fn default() -> Self {
        Self {
            it_read_init: 0,
            it_steady: 0,
            it_tail: 0,
            it_write: 0,
            it_comp: 0,
            it_tot: 0,
            measured_c: 0.0,
            elements_read_a: 0,
            elements_read_b: 0,
            elements_written_c: 0,
            verified: 0,
            result_sha256: [0; 65],
        }
    }
}

/// Opaque design point.
pub struct S3dDesign {
    point: DesignPoint,
    latency: LatencyProfile,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(e: Error) -> S3dStatus {
    let status = S3dStatus::from(&e);
    set_error(e.to_string());
    status
}

/// Runs `f`, turning panics into [`S3dStatus::Panic`].
fn guard(f: impl FnOnce() -> S3dStatus) -> S3dStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic".into());
            S3dStatus::Panic
        }
    }
}

fn null(what: &str) -> S3dStatus {
    set_error(format!("{what} is null"));
    S3dStatus::NullPointer
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn s3d_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn s3d_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Number of DSP blocks used by `arch`.
#[no_mangle]
pub extern "C" fn s3d_dsp_count(arch: S3dArch) -> usize {
    arch.d0_i.saturating_mul(arch.d0_j).saturating_mul(arch.d0_k)
}

fn build(
    arch: S3dArch,
    fmax_mhz: f64,
    d1: Option<(usize, usize)>,
    out: *mut *mut S3dDesign,
) -> S3dStatus {
    if out.is_null() {
        return null("out");
    }
    let shape = match ArchShape::new(arch.d0_i, arch.d0_j, arch.d0_k, arch.d_p) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let clock = match ClockSpec::new(fmax_mhz) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    if let Err(e) = systolic3d::model::ddr_floats_per_cycle(&clock) {
        return fail(e);
    }
    let point = DesignPoint::build(shape, clock, MemorySpec::default(), d1, None);
    if !point.feasible {
        return fail(Error::InvalidPlan(point.violations.join("; ")));
    }
    let design = Box::new(S3dDesign { point, latency: LatencyProfile::default() });
    // SAFETY: `out` was checked for null and the caller guarantees it is writable.
    unsafe { *out = Box::into_raw(design) };
    S3dStatus::Ok
}

/// Creates a design point with the default blocking at `fmax_mhz`.
///
/// # Safety
/// `out` must be null or point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn s3d_design_new(
    arch: S3dArch,
    fmax_mhz: f64,
    out: *mut *mut S3dDesign,
) -> S3dStatus {
    guard(|| build(arch, fmax_mhz, None, out))
}

/// Creates a design point with first-level blocks of `d1_i x d1_j`.
///
/// # Safety
/// `out` must be null or point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn s3d_design_new_with_blocking(
    arch: S3dArch,
    fmax_mhz: f64,
    d1_i: usize,
    d1_j: usize,
    out: *mut *mut S3dDesign,
) -> S3dStatus {
    guard(|| build(arch, fmax_mhz, Some((d1_i, d1_j)), out))
}

/// Releases a design. Null is ignored.
///
/// # Safety
/// `design` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn s3d_design_free(design: *mut S3dDesign) {
    if !design.is_null() {
        // SAFETY: the handle came from `Box::into_raw` and is freed once.
        drop(unsafe { Box::from_raw(design) });
    }
}

/// Copies the blocking of `design` into `out`.
///
/// # Safety
/// `design` must be a live handle; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn s3d_design_plan(design: *const S3dDesign, out: *mut S3dPlan) -> S3dStatus {
    guard(|| {
        // SAFETY: caller guarantees a live handle or null.
        let Some(design) = (unsafe { design.as_ref() }) else { return null("design") };
        if out.is_null() {
            return null("out");
        }
        let Some(p) = design.point.plan else {
            return fail(Error::InvalidPlan("design has no plan".into()));
        };
        let plan = S3dPlan { d1_i: p.d1_i, d1_j: p.d1_j, b_ga: p.b_ga, b_gb: p.b_gb, r_a: p.r_a, r_b: p.r_b };
        // SAFETY: checked for null above.
        unsafe { *out = plan };
        S3dStatus::Ok
    })
}

/// Closed-form estimate for a `d2_i x d2_k` by `d2_k x d2_j` product.
///
/// # Safety
/// `design` must be a live handle; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn s3d_design_estimate(
    design: *const S3dDesign,
    d2_i: usize,
    d2_j: usize,
    d2_k: usize,
    out: *mut S3dEstimate,
) -> S3dStatus {
    guard(|| {
        // SAFETY: caller guarantees a live handle or null.
        let Some(design) = (unsafe { design.as_ref() }) else { return null("design") };
        if out.is_null() {
            return null("out");
        }
        let problem = ProblemShape::new(d2_i, d2_j, d2_k);
        match predict(&design.point, &problem, &design.latency) {
            Ok(e) => {
                let est = S3dEstimate {
                    n_dsp: e.n_dsp,
                    n_pe: e.n_pe,
                    t_peak_gflops: e.t_peak / 1e9,
                    c_percent: e.c_percent,
                    t_pred_gflops: e.t_pred / 1e9,
                    stall: e.stall,
                    l_body: e.l_body,
                    l_tot: e.l_tot,
                };
                // SAFETY: checked for null above.
                unsafe { *out = est };
                S3dStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Runs the blocked schedule on seeded small-integer operands.
///
/// # Safety
/// `design` must be a live handle; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn s3d_design_simulate_blocked(
    design: *const S3dDesign,
    d2_i: usize,
    d2_j: usize,
    d2_k: usize,
    seed: u64,
    out: *mut S3dSimStats,
) -> S3dStatus {
    guard(|| {
        // SAFETY: caller guarantees a live handle or null.
        let Some(design) = (unsafe { design.as_ref() }) else { return null("design") };
        if out.is_null() {
            return null("out");
        }
        let problem = ProblemShape::new(d2_i, d2_j, d2_k);
        match simulate(&design.point, &problem, Fidelity::Blocked, seed, &design.latency) {
            Ok(o) => {
                let st = &o.stats;
                let mut stats = S3dSimStats {
                    it_read_init: st.it_read_init,
                    it_steady: st.it_steady,
                    it_tail: st.it_tail,
                    it_write: st.it_write,
                    it_comp: st.it_comp,
                    it_tot: st.it_tot,
                    measured_c: st.measured_c,
                    elements_read_a: st.elements_read_a,
                    elements_read_b: st.elements_read_b,
                    elements_written_c: st.elements_written_c,
                    verified: o.verified as u8,
                    ..S3dSimStats::default()
                };
                for (dst, &b) in stats.result_sha256.iter_mut().zip(o.result_hash.as_bytes().iter().take(64)) {
                    *dst = b as c_char;
                }
                // SAFETY: checked for null above.
                unsafe { *out = stats };
                S3dStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Reads the last error as an owned string. Convenience for Rust callers.
pub fn last_error_message() -> Option<String> {
    let p = s3d_last_error();
    // SAFETY: non-null pointers from `s3d_last_error` are valid C strings.
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}
