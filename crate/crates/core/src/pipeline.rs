//! Stage drivers behind the command-line front end. Every stage reads only
//! artifacts written by earlier stages (plus the run configuration), so a
//! run can be resumed from any stage.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;

use crate::config::{RunConfig, SliceCount, SourceSpec};
use crate::error::{Error, Result};
use crate::fdref::{ricker, scattered_record, simulate, Excitation, FdConfig};
use crate::grid::{cosine_step, Array2, GridSpec};
use crate::imaging::{migrate, precondition, AngleGather, ImageAccumulator, ImagingConfig};
use crate::io::{write_pgm, Container, GridFile};
use crate::model::{ReflectivityModel, VelocityModel};
use crate::rays::{launch_set, split_schedule, Launch, SplitSchedule};
use crate::rtc::{trace_to_source, Engine, Record, RtcConfig};

pub const RECORD_FILE: &str = "record.pmdata";
pub const FD_INITIAL_FILE: &str = "fd_initial.pmgrid";
pub const VELOCITY_FILE: &str = "velocity.pmgrid";
pub const IMAGE_FILE: &str = "image.pmgrid";
pub const GATHERS_FILE: &str = "gathers.pmgrid";
pub const RTC_FINAL_FILE: &str = "rtc_final.pmgrid";

/// Launch angles (sines) and lateral positions monitored by the automatic
/// interval count.
pub const MONITOR_SIN_MAX: f64 = 0.8;
pub const MONITOR_SIN_STEP: f64 = 0.1;
pub const MONITOR_POSITIONS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Fdsim,
    Decompose,
    Rtc,
    Migrate,
    Gather,
}

pub fn scattered_file(i: usize) -> String {
    format!("scattered_{i:02}.pmdata")
}

pub fn snapshot_file(slice: usize, step: usize) -> String {
    format!("rtc_s{slice}_p{step}.pmgrid")
}

pub fn partial_file(slice: usize, step: usize) -> String {
    format!("partial_s{slice}_p{step}.pmgrid")
}

/// Rays watched for caustics when choosing the interval count.
pub fn monitor_launches(grid: &GridSpec) -> Vec<Launch> {
    let m = (MONITOR_SIN_MAX / MONITOR_SIN_STEP).round() as i64;
    let sins: Vec<f64> = (-m..=m).map(|i| i as f64 * MONITOR_SIN_STEP).collect();
    launch_set(&sins, [grid.origin[0], grid.max_coord(0)], MONITOR_POSITIONS)
}

/// Interval schedule over `[0, duration]` for a record sampled at `dt`.
pub fn schedule(cfg: &RunConfig, model: &VelocityModel, duration: f64, dt: f64) -> Result<SplitSchedule> {
    let delta = cfg.rtc.overlap_samples * dt;
    match cfg.rtc.slices {
        SliceCount::Fixed(n) => SplitSchedule::new(0.0, duration, n, delta),
        SliceCount::Auto => split_schedule(
            model,
            model.c0,
            &monitor_launches(&cfg.grid),
            0.0,
            duration,
            delta,
            cfg.rtc.det_threshold,
            cfg.rtc.ns_max,
        ),
    }
}

/// Initial displacement of a plane-pulse source.
pub fn plane_pulse(grid: &GridSpec, c0: f64, center_x: f64, depth: f64, half_width: f64, taper: f64, f_peak: f64) -> Array2<f64> {
    Array2::from_fn(grid.n, |i, j| {
        let x = grid.coord(0, i) - center_x;
        let z = grid.coord(1, j);
        let lateral = if taper > 0.0 { cosine_step((half_width - x.abs()) / taper) } else { f64::from(x.abs() <= half_width) };
        lateral * ricker(f_peak, (z - depth) / c0)
    })
}

fn fd_config(cfg: &RunConfig) -> FdConfig {
    let mut fd = FdConfig::new(cfg.fd.dt, cfg.fd.t_max);
    fd.record_every = cfg.fd.record_every;
    fd.pad = cfg.fd.pad;
    fd.snapshot_times = cfg.fd.snapshot_times.clone();
    fd
}

fn point_at(cfg: &RunConfig, x: f64) -> Result<(Excitation, [f64; 2], f64)> {
    match &cfg.source {
        SourceSpec::Point { position, f_peak, delay } => {
            let p = [x, position[1]];
            Ok((Excitation::Point { position: p, f_peak: *f_peak, delay: *delay }, p, *delay))
        }
        SourceSpec::PlanePulse { .. } => Err(Error::Config("imaging needs a point source".into())),
    }
}

fn read_record(path: &Path) -> Result<Record> {
    let f = GridFile::read(path)?;
    if f.kind != Container::Data || f.channels.len() != 1 {
        return Err(Error::Format { path: path.to_path_buf(), reason: "expected a single-channel PMDATA record".into() });
    }
    let mut ch = f.channels;
    Record::new(f.grid, ch.remove(0))
}

fn write_record(path: &Path, r: &Record) -> Result<()> {
    GridFile::single(Container::Data, r.grid, r.data.clone()).write(path)
}

fn write_grid(path: &Path, grid: GridSpec, a: &Array2<f64>) -> Result<()> {
    GridFile::single(Container::Grid, grid, a.clone()).write(path)
}

fn write_complex(path: &Path, grid: GridSpec, w: &Array2<Complex64>) -> Result<()> {
    GridFile { kind: Container::Grid, grid, channels: vec![w.map(|v| v.re), w.map(|v| v.im)] }.write(path)
}

fn write_text(path: &Path, s: &str) -> Result<()> {
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Run one stage; returns the artifacts written.
pub fn run(stage: Stage, cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    match stage {
        Stage::Fdsim => fdsim(cfg),
        Stage::Decompose => decompose(cfg),
        Stage::Rtc => rtc(cfg),
        Stage::Migrate => migrate_stage(cfg),
        Stage::Gather => gather(cfg),
    }
}

fn fdsim(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let out = &cfg.out_dir;
    let grid = cfg.grid;
    let fd = fd_config(cfg);
    let mut written = Vec::new();
    let p = out.join(VELOCITY_FILE);
    write_grid(&p, grid, &Array2::from_fn(grid.n, |i, j| crate::model::Speed::speed(&cfg.model, grid.point(i, j))))?;
    written.push(p);
    if cfg.reflectors.is_empty() {
        let exc = match &cfg.source {
            SourceSpec::Point { position, f_peak, delay } => Excitation::Point { position: *position, f_peak: *f_peak, delay: *delay },
            SourceSpec::PlanePulse { center_x, depth, half_width, taper, f_peak } => {
                let u0 = plane_pulse(&grid, cfg.model.c0, *center_x, *depth, *half_width, *taper, *f_peak);
                let p = out.join(FD_INITIAL_FILE);
                write_grid(&p, grid, &u0)?;
                written.push(p);
                Excitation::Initial { u0, u1: None }
            }
        };
        let r = simulate(&cfg.model, None, &grid, &exc, &fd)?;
        let p = out.join(RECORD_FILE);
        write_record(&p, &r.record)?;
        written.push(p);
        for (k, (t, s)) in r.snapshots.iter().enumerate() {
            let p = out.join(format!("fd_snapshot_{k:02}.pmgrid"));
            write_grid(&p, grid, s)?;
            log::info!("snapshot {k} at t = {t}");
            written.push(p);
        }
    } else {
        let refl = ReflectivityModel::new(cfg.reflectors.clone(), &grid)?;
        let pert = refl.perturbation(&grid);
        for (i, &x) in cfg.acquisition.iter().enumerate() {
            let (exc, _, _) = point_at(cfg, x)?;
            let r = scattered_record(&cfg.model, &pert, &grid, &exc, &fd)?;
            let p = out.join(scattered_file(i));
            write_record(&p, &r)?;
            written.push(p);
        }
    }
    Ok(written)
}

fn first_record(cfg: &RunConfig) -> Result<Record> {
    let p = cfg.out_dir.join(RECORD_FILE);
    if p.exists() {
        read_record(&p)
    } else {
        read_record(&cfg.out_dir.join(scattered_file(0)))
    }
}

/// Per-box energy of every data slice, in the continuation window layout.
fn decompose(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let rec = first_record(cfg)?;
    let g = trace_to_source(&rec, cfg.model.c0)?;
    let sch = schedule(cfg, &cfg.model, g.duration(), g.dt())?;
    let eng = Engine::new(&cfg.model, cfg.grid, &g.grid, RtcConfig::new(cfg.rtc.k_max, cfg.model.c0, sch))?;
    let mut csv = String::from("slice,box,scale,angle_rad,energy\n");
    for (i, s) in crate::rtc::slice_data(&g, &sch)?.iter().enumerate() {
        let spec = eng.window_spectrum(s, sch.stamp(i + 1));
        let pc = eng.record_tiling.analyze_spectrum(&spec);
        for (b, e) in eng.record_tiling.boxes.iter().zip(pc.energies()) {
            let _ = writeln!(csv, "{},{},{},{:.6},{e:e}", i + 1, b.index, b.k, b.angle());
        }
    }
    let p = cfg.out_dir.join("decompose.csv");
    write_text(&p, &csv)?;
    Ok(vec![p])
}

fn rtc(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let out = &cfg.out_dir;
    let rec = read_record(&out.join(RECORD_FILE))?;
    let g = trace_to_source(&rec, cfg.model.c0)?;
    let sch = schedule(cfg, &cfg.model, g.duration(), g.dt())?;
    log::info!("schedule: {} intervals of {:.4} s", sch.ns, sch.t1);
    let eng = Engine::new(&cfg.model, cfg.grid, &g.grid, RtcConfig::new(cfg.rtc.k_max, cfg.model.c0, sch))?;
    let r = eng.reverse_continue(&g)?;
    let mut written = Vec::new();
    for s in &r.snapshots {
        let p = out.join(snapshot_file(s.slice, s.step));
        write_complex(&p, cfg.grid, &s.field)?;
        written.push(p);
    }
    let p = out.join(RTC_FINAL_FILE);
    write_grid(&p, cfg.grid, &r.field)?;
    written.push(p);
    let p = out.join("rtc_final.pgm");
    write_pgm(&p, &r.field)?;
    written.push(p);
    let total: f64 = r.slice_fields.iter().map(|w| w.norm2().powi(2)).sum();
    let mut csv = String::from("slice,stamp,energy_fraction\n");
    for (i, w) in r.slice_fields.iter().enumerate() {
        let frac = if total > 0.0 { w.norm2().powi(2) / total } else { 0.0 };
        let _ = writeln!(csv, "{},{:.6},{frac:e}", i + 1, sch.stamp(i + 1));
    }
    let p = out.join("slice_energy.csv");
    write_text(&p, &csv)?;
    written.push(p);
    Ok(written)
}

/// Migrate every scattered record and stack the results.
pub fn migrate_all(cfg: &RunConfig) -> Result<ImageAccumulator> {
    let model = &cfg.imaging_model;
    let c0 = model.c0;
    let f_peak = cfg.source.f_peak();
    let mut stack: Option<ImageAccumulator> = None;
    let mut sch: Option<SplitSchedule> = None;
    for (i, &x) in cfg.acquisition.iter().enumerate() {
        let rec = read_record(&cfg.out_dir.join(scattered_file(i)))?;
        let (_, src, delay) = point_at(cfg, x)?;
        let icfg = ImagingConfig::new(model, src, delay, &cfg.grid, model.min_speed_bound());
        let g = precondition(&rec, &icfg, c0, f_peak)?;
        let s = match sch {
            Some(s) => s,
            None => *sch.insert(schedule(cfg, model, g.duration(), g.dt())?),
        };
        let eng = Engine::new(model, cfg.grid, &g.grid, RtcConfig::new(cfg.rtc.k_max, c0, s))?;
        let acc = migrate(&eng, &g, &icfg)?;
        match stack.as_mut() {
            None => stack = Some(acc),
            Some(st) => st.stack(&acc)?,
        }
    }
    stack.ok_or_else(|| Error::Config("[acquisition] sources is empty".into()))
}

fn migrate_stage(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let out = &cfg.out_dir;
    let acc = migrate_all(cfg)?;
    let mut written = Vec::new();
    let img = acc.assemble();
    let p = out.join(IMAGE_FILE);
    write_grid(&p, cfg.grid, &img)?;
    written.push(p);
    let p = out.join("image.pgm");
    write_pgm(&p, &img)?;
    written.push(p);
    let mut keys: Vec<(usize, usize)> = acc.partials.iter().map(|pi| (pi.slice, pi.step)).collect();
    keys.sort_unstable();
    keys.dedup();
    for (n, s) in keys {
        let p = out.join(partial_file(n, s));
        write_grid(&p, cfg.grid, &acc.sum_where(|pi| pi.slice == n && pi.step == s))?;
        written.push(p);
    }
    let p = out.join(GATHERS_FILE);
    GridFile { kind: Container::Grid, grid: cfg.grid, channels: acc.gathers.clone() }.write(&p)?;
    written.push(p);
    Ok(written)
}

fn gather(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let path = cfg.out_dir.join(GATHERS_FILE);
    let f = GridFile::read(&path)?;
    if f.channels.is_empty() {
        return Err(Error::Format { path, reason: "no angle bins".into() });
    }
    let width = 180.0 / f.channels.len() as f64;
    let positions: Vec<usize> = cfg
        .gather_positions
        .iter()
        .map(|&x| {
            let i = f.grid.frac_index(0, x).round();
            if i < 0.0 || i >= f.grid.n[0] as f64 {
                Err(Error::Config(format!("[imaging] gather position {x} lies outside the grid")))
            } else {
                Ok(i as usize)
            }
        })
        .collect::<Result<_>>()?;
    let ag = AngleGather::from_bins(&f.grid, &f.channels, width, &positions, cfg.gather_half_width)?;
    let p = cfg.out_dir.join("gathers.csv");
    write_text(&p, &ag.to_csv())?;
    Ok(vec![p])
}

/// One line of a self-test or benchmark report.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {} value={:.3e} limit={:.1e}", if self.pass { "PASS" } else { "FAIL" }, self.name, self.value, self.limit)
    }
}

fn at_most(name: &str, value: f64, limit: f64) -> Check {
    Check { name: name.into(), value, limit, pass: value <= limit }
}

/// Fast invariant suite on small problems.
pub fn selftest(seed: u64) -> Result<Vec<Check>> {
    use crate::frame::Tiling;
    use crate::grid::Fft2;
    use crate::model::Speed;
    use crate::rays::{flow, propagate_w, Direction};
    use rand::{Rng, SeedableRng};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    let n = [64, 64];
    let t = Tiling::new(3, 2, n, [1.0, 1.0])?;
    checks.push(at_most("frame.partition_of_unity", t.partition_residual(0.9), 1e-6));
    let mut u = Array2::from_fn(n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    t.band_limit(&mut u, 0.85)?;
    Fft2::new(n).inverse(&mut u.data);
    let back = t.synthesize(&t.analyze(&u)?)?;
    let err = back.data.iter().zip(&u.data).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt() / u.norm2();
    checks.push(at_most("frame.round_trip", err, 1e-6));

    let model = crate::model::make_gaussian_lens(3000.0, 0.3, [0.0, 600.0], [300.0, 300.0])?;
    let x = [-200.0, 0.0];
    // unit covector; the flow is homogeneous in xi and this keeps W well scaled
    let xi = [0.1, 0.99f64.sqrt()];
    let ham = |y: [f64; 2], eta: [f64; 2]| model.speed(y) * (eta[0] * eta[0] + eta[1] * eta[1]).sqrt();
    let fwd = flow(&model, x, xi, 0.4, Direction::Forward, 5e-4, None)?.phase;
    let (y, eta) = ([fwd.state.y[0], fwd.state.y[1]], [fwd.state.eta[0], fwd.state.eta[1]]);
    checks.push(at_most("rays.hamiltonian_drift", (ham(y, eta) - ham(x, xi)).abs() / ham(x, xi), 1e-8));
    let back = flow(&model, y, eta, 0.4, Direction::Backward, 5e-4, None)?.phase;
    let ret = ((back.state.y[0] - x[0]).hypot(back.state.y[1] - x[1])) / 600.0 + (back.state.eta[0] - xi[0]).hypot(back.state.eta[1] - xi[1]);
    checks.push(at_most("rays.time_reversal", ret, 1e-8));
    let w = propagate_w(&model, x, xi, 0.4, Direction::Forward, 5e-4, None)?.phase.w;
    checks.push(at_most("rays.symplectic_defect", w.symplectic_defect(), 1e-8));

    let spec = Array2::from_fn([16, 16], |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let pts: Vec<[f64; 2]> = (0..100).map(|_| [rng.gen_range(0.0..16.0), rng.gen_range(0.0..16.0)]).collect();
    let fast = crate::nufft::nufft_t2(&pts, &spec);
    let slow = crate::nufft::direct_t2(&pts, &spec);
    let scale = slow.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let err = fast.iter().zip(&slow).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / scale;
    checks.push(at_most("nufft.direct_agreement", err, 1e-6));
    Ok(checks)
}

/// Mean wall time per frequency box of one cold half-wave step in a
/// constant medium on an `n x n` grid of fixed physical width.
pub fn box_step_time(n: usize, width: f64, k_max: usize) -> Result<f64> {
    let grid = GridSpec::new([n, n], [width / n as f64; 2], [-width / 2.0, 0.0])?;
    let c0 = 3000.0;
    let model = VelocityModel::constant(c0)?.with_bounds(&grid);
    let dt = 0.5 * grid.spacing[0] / c0;
    let rec = GridSpec::new([n, 2 * n], [grid.spacing[0], dt], [grid.origin[0], 0.0])?;
    let sch = SplitSchedule::new(0.0, rec.extent(1), 2, 2.0 * dt)?;
    let eng = Engine::new(&model, grid, &rec, RtcConfig::new(k_max, c0, sch))?;
    // smooth broadband field so every box is active
    let field = Array2::from_fn(grid.n, |i, j| {
        let x = grid.coord(0, i) / width;
        let z = grid.coord(1, j) / width - 0.5;
        Complex64::new((-(x * x + z * z) * 400.0).exp(), 0.0)
    });
    let t0 = Instant::now();
    eng.halfwave_step(&field)?;
    let boxes = eng.grid_tiling.boxes.iter().filter(|b| !b.is_coarse()).count();
    Ok(t0.elapsed().as_secs_f64() / boxes as f64)
}

/// Per-box step time for successive doublings of `n`, plus growth ratios.
pub fn bench(sizes: &[usize], width: f64) -> Result<Vec<(usize, f64)>> {
    sizes
        .iter()
        .map(|&n| {
            // finest scale sized to the grid, as in production runs
            let k_max = crate::frame::max_scale_for(n);
            box_step_time(n, width, k_max).map(|t| (n, t))
        })
        .collect()
}
