//! C ABI for the imaging library.
//!
//! Objects cross the boundary as opaque handles owned by the caller and
//! released with the matching `*_free`. Every entry point returns a
//! [`PmStatus`]; the message of the last failure on the calling thread is
//! available from [`pm_last_error`]. Panics never unwind into C.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use pmrtm::config::{ConfigTable, RunConfig};
use pmrtm::grid::Array2;
use pmrtm::io::GridFile;
use pmrtm::num_complex::Complex64;
use pmrtm::pipeline::{self, Stage};
use pmrtm::Error;

/// Result of every call; values match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmStatus {
    Ok = 0,
    /// A required pointer argument was null or a string was not UTF-8.
    InvalidArgument = 1,
    Config = 2,
    Numerical = 3,
    Io = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmStage {
    Fdsim = 0,
    Decompose = 1,
    Rtc = 2,
    Migrate = 3,
    Gather = 4,
}

/// Parsed run configuration.
pub struct PmConfig {
    inner: RunConfig,
}

/// Sampled multi-channel field read from a PMGRID/PMDATA file.
pub struct PmGrid {
    inner: GridFile,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> PmStatus {
    match e.exit_code() {
        2 => PmStatus::Config,
        3 => PmStatus::Numerical,
        _ => PmStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (PmStatus, String)>) -> PmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PmStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            PmStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (PmStatus, String) {
    (status_of(&e), format!("{}: {e}", e.kind()))
}

fn bad_arg(what: &str) -> (PmStatus, String) {
    (PmStatus::InvalidArgument, what.to_string())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (PmStatus, String)> {
    if p.is_null() {
        return Err(bad_arg(&format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| bad_arg(&format!("{what} is not UTF-8")))
}

/// Copy the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes). Returns the full message length.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn pm_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Load a run configuration from a file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pm_config_load(path: *const c_char, out: *mut *mut PmConfig) -> PmStatus {
    guard(|| {
        if out.is_null() {
            return Err(bad_arg("out is null"));
        }
        let p = str_arg(path, "path")?;
        let cfg = RunConfig::load(Path::new(p)).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(PmConfig { inner: cfg }));
        Ok(())
    })
}

/// Parse a run configuration from text.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pm_config_parse(text: *const c_char, out: *mut *mut PmConfig) -> PmStatus {
    guard(|| {
        if out.is_null() {
            return Err(bad_arg("out is null"));
        }
        let t = str_arg(text, "text")?;
        let cfg = ConfigTable::parse(t).and_then(|t| RunConfig::from_table(&t)).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(PmConfig { inner: cfg }));
        Ok(())
    })
}

/// Override the output directory of a configuration.
///
/// # Safety
/// `cfg` must come from `pm_config_load`/`pm_config_parse`; `dir` must be a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pm_config_set_output(cfg: *mut PmConfig, dir: *const c_char) -> PmStatus {
    guard(|| {
        let c = cfg.as_mut().ok_or_else(|| bad_arg("cfg is null"))?;
        c.inner.out_dir = str_arg(dir, "dir")?.into();
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pm_config_free(cfg: *mut PmConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Run one pipeline stage; artifacts go to the configured output directory.
///
/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn pm_run_stage(cfg: *const PmConfig, stage: PmStage) -> PmStatus {
    guard(|| {
        let c = cfg.as_ref().ok_or_else(|| bad_arg("cfg is null"))?;
        let s = match stage {
            PmStage::Fdsim => Stage::Fdsim,
            PmStage::Decompose => Stage::Decompose,
            PmStage::Rtc => Stage::Rtc,
            PmStage::Migrate => Stage::Migrate,
            PmStage::Gather => Stage::Gather,
        };
        pipeline::run(s, &c.inner).map(|_| ()).map_err(lib_err)
    })
}

/// Run the invariant suite; `*passed` receives 1 when every check passes.
///
/// # Safety
/// `passed` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pm_selftest(seed: u64, passed: *mut c_int) -> PmStatus {
    guard(|| {
        if passed.is_null() {
            return Err(bad_arg("passed is null"));
        }
        let checks = pipeline::selftest(seed).map_err(lib_err)?;
        *passed = c_int::from(checks.iter().all(|c| c.pass));
        Ok(())
    })
}

/// Read a PMGRID or PMDATA file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pm_grid_read(path: *const c_char, out: *mut *mut PmGrid) -> PmStatus {
    guard(|| {
        if out.is_null() {
            return Err(bad_arg("out is null"));
        }
        let p = str_arg(path, "path")?;
        let g = GridFile::read(Path::new(p)).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(PmGrid { inner: g }));
        Ok(())
    })
}

/// Sample counts along both axes and number of channels.
///
/// # Safety
/// `grid` must be a live handle; output pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pm_grid_shape(grid: *const PmGrid, n0: *mut usize, n1: *mut usize, channels: *mut usize) -> PmStatus {
    guard(|| {
        let g = grid.as_ref().ok_or_else(|| bad_arg("grid is null"))?;
        if n0.is_null() || n1.is_null() || channels.is_null() {
            return Err(bad_arg("output pointer is null"));
        }
        *n0 = g.inner.grid.n[0];
        *n1 = g.inner.grid.n[1];
        *channels = g.inner.channels.len();
        Ok(())
    })
}

/// Spacing and origin, two values each.
///
/// # Safety
/// `grid` must be a live handle; `spacing` and `origin` valid for 2 writes.
#[no_mangle]
pub unsafe extern "C" fn pm_grid_geometry(grid: *const PmGrid, spacing: *mut f64, origin: *mut f64) -> PmStatus {
    guard(|| {
        let g = grid.as_ref().ok_or_else(|| bad_arg("grid is null"))?;
        if spacing.is_null() || origin.is_null() {
            return Err(bad_arg("output pointer is null"));
        }
        for a in 0..2 {
            *spacing.add(a) = g.inner.grid.spacing[a];
            *origin.add(a) = g.inner.grid.origin[a];
        }
        Ok(())
    })
}

/// Pointer to the samples of one channel, axis 0 fastest. The pointer stays
/// valid until the handle is freed.
///
/// # Safety
/// `grid` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pm_grid_channel(grid: *const PmGrid, channel: usize, out: *mut *const f64) -> PmStatus {
    guard(|| {
        let g = grid.as_ref().ok_or_else(|| bad_arg("grid is null"))?;
        if out.is_null() {
            return Err(bad_arg("out is null"));
        }
        let c = g.inner.channels.get(channel).ok_or_else(|| bad_arg("channel out of range"))?;
        *out = c.data.as_ptr();
        Ok(())
    })
}

/// # Safety
/// `grid` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pm_grid_free(grid: *mut PmGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Type-2 nonuniform FFT: `out[p] = sum_m spec[m] exp(i <x_p, signed_bin(m)>)`
/// for an `n0 x n1` FFT-ordered spectrum (axis 0 fastest, interleaved
/// re/im) at `count` points given as interleaved `(x0, x1)` radians.
///
/// # Safety
/// `spec` must hold `2 n0 n1` doubles, `points` `2 count`, `out` `2 count`.
#[no_mangle]
pub unsafe extern "C" fn pm_nufft_type2(
    spec: *const f64,
    n0: usize,
    n1: usize,
    points: *const f64,
    count: usize,
    out: *mut f64,
) -> PmStatus {
    guard(|| {
        if spec.is_null() || points.is_null() || out.is_null() {
            return Err(bad_arg("null buffer"));
        }
        if n0 == 0 || n1 == 0 {
            return Err(bad_arg("empty spectrum"));
        }
        let s = std::slice::from_raw_parts(spec, 2 * n0 * n1);
        let data = s.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
        let a = Array2::from_vec([n0, n1], data).map_err(lib_err)?;
        let p: Vec<[f64; 2]> = std::slice::from_raw_parts(points, 2 * count).chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        let v = pmrtm::nufft::nufft_t2(&p, &a);
        let o = std::slice::from_raw_parts_mut(out, 2 * count);
        for (d, z) in o.chunks_exact_mut(2).zip(v) {
            d[0] = z.re;
            d[1] = z.im;
        }
        Ok(())
    })
}
