//! The C entry points called the way a C client would call them.

use std::ffi::{c_char, c_int, CStr, CString};
use std::ptr;

use pmrtm_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    unsafe {
        pm_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(pm_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_arguments_are_rejected() {
    let mut cfg: *mut PmConfig = ptr::null_mut();
    assert_eq!(unsafe { pm_config_parse(ptr::null(), &mut cfg) }, PmStatus::InvalidArgument);
    assert!(cfg.is_null());
    assert!(last_error().contains("null"));
    assert_eq!(unsafe { pm_run_stage(ptr::null(), PmStage::Rtc) }, PmStatus::InvalidArgument);
    assert_eq!(unsafe { pm_selftest(0, ptr::null_mut()) }, PmStatus::InvalidArgument);
    // freeing null is a no-op
    unsafe {
        pm_config_free(ptr::null_mut());
        pm_grid_free(ptr::null_mut());
    }
}

#[test]
fn config_errors_carry_the_config_status() {
    let text = CString::new("[fd]\ndt = 0.001\n").unwrap();
    let mut cfg: *mut PmConfig = ptr::null_mut();
    assert_eq!(unsafe { pm_config_parse(text.as_ptr(), &mut cfg) }, PmStatus::Config);
    assert!(last_error().contains("t_max"));

    let text = CString::new("[fd]\nt_max = 0.5\n").unwrap();
    assert_eq!(unsafe { pm_config_parse(text.as_ptr(), &mut cfg) }, PmStatus::Ok);
    assert!(!cfg.is_null());
    unsafe { pm_config_free(cfg) };
}

#[test]
fn error_message_is_truncated_to_the_buffer() {
    let mut cfg: *mut PmConfig = ptr::null_mut();
    unsafe { pm_config_parse(ptr::null(), &mut cfg) };
    let mut buf = [1 as c_char; 4];
    let full = unsafe { pm_last_error(buf.as_mut_ptr(), buf.len()) };
    assert!(full > 3);
    assert_eq!(buf[3], 0);
}

#[test]
fn missing_files_are_io_errors() {
    let path = CString::new("/nonexistent/x.pmgrid").unwrap();
    let mut g: *mut PmGrid = ptr::null_mut();
    assert_eq!(unsafe { pm_grid_read(path.as_ptr(), &mut g) }, PmStatus::Io);
    assert!(g.is_null());
}

#[test]
fn selftest_reports_pass() {
    let mut passed: c_int = 0;
    assert_eq!(unsafe { pm_selftest(7, &mut passed) }, PmStatus::Ok);
    assert_eq!(passed, 1);
}

#[test]
fn stage_run_and_grid_readback() {
    let dir = std::env::temp_dir().join(format!("pmrtm-ffi-{}", std::process::id()));
    let text = CString::new("[grid]\nn = 64\nspacing = 10\n[source]\nkind = plane_pulse\ndepth = 400\nhalf_width = 150\ntaper = 80\nf_peak = 15\n[fd]\nt_max = 0.3\n").unwrap();
    let out = CString::new(dir.to_str().unwrap()).unwrap();
    let mut cfg: *mut PmConfig = ptr::null_mut();
    unsafe {
        assert_eq!(pm_config_parse(text.as_ptr(), &mut cfg), PmStatus::Ok);
        assert_eq!(pm_config_set_output(cfg, out.as_ptr()), PmStatus::Ok);
        assert_eq!(pm_run_stage(cfg, PmStage::Fdsim), PmStatus::Ok);
        pm_config_free(cfg);
    }
    let path = CString::new(dir.join("fd_initial.pmgrid").to_str().unwrap()).unwrap();
    let mut g: *mut PmGrid = ptr::null_mut();
    let (mut n0, mut n1, mut ch) = (0usize, 0usize, 0usize);
    let (mut spacing, mut origin) = ([0.0; 2], [0.0; 2]);
    let mut data: *const f64 = ptr::null();
    unsafe {
        assert_eq!(pm_grid_read(path.as_ptr(), &mut g), PmStatus::Ok);
        assert_eq!(pm_grid_shape(g, &mut n0, &mut n1, &mut ch), PmStatus::Ok);
        assert_eq!((n0, n1, ch), (64, 64, 1));
        assert_eq!(pm_grid_geometry(g, spacing.as_mut_ptr(), origin.as_mut_ptr()), PmStatus::Ok);
        assert_eq!(spacing, [10.0, 10.0]);
        assert_eq!(origin, [-320.0, 0.0]);
        assert_eq!(pm_grid_channel(g, 1, &mut data), PmStatus::InvalidArgument);
        assert_eq!(pm_grid_channel(g, 0, &mut data), PmStatus::Ok);
        let samples = std::slice::from_raw_parts(data, n0 * n1);
        // peak of the pulse on the centre column at its depth
        let peak = samples[32 + 40 * 64];
        assert!(samples.iter().all(|v| v.abs() <= peak + 1e-12));
        pm_grid_free(g);
    }
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn nufft_matches_direct_sum() {
    let (n0, n1) = (8usize, 6usize);
    let spec: Vec<f64> = (0..2 * n0 * n1).map(|i| ((i * 37 % 11) as f64 - 5.0) / 5.0).collect();
    let points = [0.3, -1.2, 2.5, 0.7, -3.0, 4.1];
    let mut out = [0.0; 6];
    assert_eq!(unsafe { pm_nufft_type2(spec.as_ptr(), n0, n1, points.as_ptr(), 3, out.as_mut_ptr()) }, PmStatus::Ok);
    let signed = |m: usize, n: usize| if m < n.div_ceil(2) { m as f64 } else { m as f64 - n as f64 };
    for p in 0..3 {
        let (x0, x1) = (points[2 * p], points[2 * p + 1]);
        let (mut re, mut im) = (0.0, 0.0);
        for m1 in 0..n1 {
            for m0 in 0..n0 {
                let k = m0 + n0 * m1;
                let (a, b) = (spec[2 * k], spec[2 * k + 1]);
                let ph = x0 * signed(m0, n0) + x1 * signed(m1, n1);
                re += a * ph.cos() - b * ph.sin();
                im += a * ph.sin() + b * ph.cos();
            }
        }
        assert!((out[2 * p] - re).abs() < 1e-6 && (out[2 * p + 1] - im).abs() < 1e-6, "point {p}");
    }
    assert_eq!(unsafe { pm_nufft_type2(spec.as_ptr(), 0, n1, points.as_ptr(), 3, out.as_mut_ptr()) }, PmStatus::InvalidArgument);
}
