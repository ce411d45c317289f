use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use systolic3d_ffi::*;

fn arch(d0_i: usize, d0_j: usize, d0_k: usize, d_p: usize) -> S3dArch {
    S3dArch { d0_i, d0_j, d0_k, d_p }
}

fn new_design(a: S3dArch, fmax: f64) -> (S3dStatus, *mut S3dDesign) {
    let mut d = ptr::null_mut();
    let st = unsafe { s3d_design_new(a, fmax, &mut d) };
    (st, d)
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(s3d_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn estimate_design_g() {
    let (st, d) = new_design(arch(64, 32, 2, 2), 398.0);
    assert_eq!(st, S3dStatus::Ok);
    let mut plan = S3dPlan::default();
    assert_eq!(unsafe { s3d_design_plan(d, &mut plan) }, S3dStatus::Ok);
    assert_eq!((plan.d1_i, plan.d1_j, plan.r_a, plan.r_b), (512, 512, 16, 8));
    let mut est = S3dEstimate::default();
    assert_eq!(unsafe { s3d_design_estimate(d, 512, 512, 512, &mut est) }, S3dStatus::Ok);
    assert_eq!((est.n_dsp, est.n_pe), (4096, 2048));
    assert!((est.t_peak_gflops - 3260.4).abs() < 0.1);
    assert!((est.c_percent - 0.499).abs() < 1e-3);
    unsafe { s3d_design_free(d) };
}

#[test]
fn simulate_small_design() {
    let mut d = ptr::null_mut();
    let st = unsafe { s3d_design_new_with_blocking(arch(4, 4, 2, 2), 368.0, 8, 8, &mut d) };
    assert_eq!(st, S3dStatus::Ok);
    let mut stats = S3dSimStats::default();
    assert_eq!(unsafe { s3d_design_simulate_blocked(d, 16, 16, 8, 7, &mut stats) }, S3dStatus::Ok);
    assert_eq!(stats.verified, 1);
    assert_eq!(stats.elements_written_c, 256);
    let hash = unsafe { CStr::from_ptr(stats.result_sha256.as_ptr()) }.to_str().unwrap();
    assert_eq!(hash.len(), 64);
    assert!(hash.chars().all(|c| c.is_ascii_hexdigit()));
    unsafe { s3d_design_free(d) };
}

#[test]
fn error_codes_and_messages() {
    let (st, d) = new_design(arch(0, 1, 1, 1), 368.0);
    assert_eq!(st, S3dStatus::InvalidShape);
    assert!(d.is_null());
    assert!(last_error_message().unwrap().contains("shape"));

    assert_eq!(new_design(arch(2, 2, 2, 1), 100.0).0, S3dStatus::UnsupportedClock);

    let mut d = ptr::null_mut();
    let st = unsafe { s3d_design_new_with_blocking(arch(28, 28, 6, 1), 368.0, 28, 28, &mut d) };
    assert_eq!(st, S3dStatus::InvalidPlan);

    let (st, d) = new_design(arch(4, 4, 2, 2), 368.0);
    assert_eq!(st, S3dStatus::Ok);
    let mut est = S3dEstimate::default();
    assert_eq!(unsafe { s3d_design_estimate(d, 3, 3, 3, &mut est) }, S3dStatus::ProblemMismatch);
    assert_eq!(unsafe { s3d_design_estimate(d, 16, 16, 8, ptr::null_mut()) }, S3dStatus::NullPointer);
    assert_eq!(unsafe { s3d_design_estimate(ptr::null(), 16, 16, 8, &mut est) }, S3dStatus::NullPointer);
    assert_eq!(unsafe { s3d_design_new(arch(1, 1, 1, 1), 368.0, ptr::null_mut()) }, S3dStatus::NullPointer);
    unsafe {
        s3d_design_free(d);
        s3d_design_free(ptr::null_mut());
    }
}

#[test]
fn dsp_count_saturates() {
    assert_eq!(s3d_dsp_count(arch(28, 28, 6, 1)), 4704);
    assert_eq!(s3d_dsp_count(arch(usize::MAX, 2, 1, 1)), usize::MAX);
}

fn header() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/systolic3d.h")
}

#[test]
fn header_declares_every_export() {
    let text = std::fs::read_to_string(header()).unwrap();
    for sym in [
        "s3d_version",
        "s3d_last_error",
        "s3d_dsp_count",
        "s3d_design_new",
        "s3d_design_new_with_blocking",
        "s3d_design_free",
        "s3d_design_plan",
        "s3d_design_estimate",
        "s3d_design_simulate_blocked",
        "typedef struct S3dDesign S3dDesign",
        "S3D_STATUS_PROBLEM_MISMATCH = 6",
    ] {
        assert!(text.contains(sym), "header lacks {sym}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which("cc") else { return };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"systolic3d.h\"\n\
         int main(void) {\n\
           S3dArch a = {4, 4, 2, 2};\n\
           S3dDesign *d = 0;\n\
           S3dStatus s = s3d_design_new(a, 368.0, &d);\n\
           S3dSimStats st;\n\
           (void)st; (void)s;\n\
           s3d_design_free(d);\n\
           return 0;\n\
         }\n",
    )
    .unwrap();
    let status = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header().parent().unwrap())
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}

fn which(name: &str) -> Result<PathBuf, ()> {
    std::env::var_os("PATH")
        .and_then(|paths| std::env::split_paths(&paths).map(|p| p.join(name)).find(|p| p.is_file()))
        .ok_or(())
}
