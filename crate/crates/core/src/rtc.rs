//! Reverse-time continuation of boundary records: time slicing, boundary
//! continuation per slice, half-wave re-propagation across caustic-free
//! intervals and the final real field.

use std::sync::OnceLock;

use nalgebra::Vector2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fio::{apply_box, boundary_family, interior_family, rasterize, scale_tolerance, steps_for, BoxInput, Coverage, SeparatedExpansion, RANK_MAX};
use crate::frame::{FrequencyBox, Tiling};
use crate::grid::{cosine_step, Array2, Fft2, GridSpec};
use crate::model::Speed;
use crate::rays::SplitSchedule;

/// Grazing taper on `c0 |xi'| / |tau|`: 1 below 0.85, 0 above 0.95.
pub const GRAZING: [f64; 2] = [0.85, 0.95];
/// Width of the interior cutoff near `x_n = 0`, in grid cells.
pub const INTERIOR_RAMP_CELLS: f64 = 8.0;
/// Part II stops once a slice's energy falls below this fraction.
pub const EARLY_STOP_FRACTION: f64 = 0.005;
/// A box fails its caustic certificate when more than this fraction of its
/// energy sits where rays were masked.
pub const CAUSTIC_ENERGY_FRACTION: f64 = 0.05;
/// Boxes with relative energy below this are skipped.
/// Phase convention of the trace-to-source conversion.
pub const SOURCE_SIGN: f64 = -1.0;
const SKIP_ENERGY: f64 = 1e-26;

pub fn grazing_taper(ratio: f64) -> f64 {
    1.0 - cosine_step((ratio.abs() - GRAZING[0]) / (GRAZING[1] - GRAZING[0]))
}

/// Samples `g(x', t)` on a uniform `(x', t)` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub grid: GridSpec,
    pub data: Array2<f64>,
}

impl Record {
    pub fn new(grid: GridSpec, data: Array2<f64>) -> Result<Self> {
        if data.n != grid.n {
            return Err(Error::GridMismatch { expected: grid.n.to_vec(), got: data.n.to_vec() });
        }
        Ok(Self { grid, data })
    }

    pub fn zeros_like(&self) -> Self {
        Self { grid: self.grid, data: Array2::zeros(self.grid.n) }
    }

    pub fn duration(&self) -> f64 {
        self.grid.extent(1)
    }

    pub fn dt(&self) -> f64 {
        self.grid.spacing[1]
    }

    pub fn add(&self, other: &Record) -> Result<Record> {
        self.grid.check_same(&other.grid)?;
        let mut d = self.data.clone();
        d.add_assign(&other.data);
        Ok(Record { grid: self.grid, data: d })
    }
}

/// Boundary source `g` whose anti-causal field has surface trace `trace`
/// for upgoing waves: `g = 2 c0^2 d_n u`, applied per bin as
/// `SOURCE_SIGN * i sign(tau) 2 c0 |tau| C(c0 xi' / tau)`. Evanescent bins
/// are dropped.
pub fn trace_to_source(trace: &Record, c0: f64) -> Result<Record> {
    if !(c0 > 0.0) {
        return Err(Error::invalid("c0", "must be positive"));
    }
    apply_record_multiplier(trace, |xi, tau| {
        let r = c0 * xi / tau;
        if tau == 0.0 || r.abs() >= 1.0 {
            Complex64::default()
        } else {
            Complex64::new(0.0, SOURCE_SIGN * tau.signum() * 2.0 * c0 * tau.abs() * (1.0 - r * r).sqrt())
        }
    })
}

/// Apply a Fourier multiplier `m(xi', tau)` to a record. The multiplier
/// must be Hermitian, `m(-xi', -tau) = conj m(xi', tau)`, so the output is
/// real. Both axes are zero-padded against wrap-around.
pub fn apply_record_multiplier(record: &Record, m: impl Fn(f64, f64) -> Complex64) -> Result<Record> {
    let g = record.grid;
    let n = [fft_size(g.n[0] + g.n[0] / 2), fft_size(2 * g.n[1])];
    let mut a = Array2::zeros(n);
    for i1 in 0..g.n[1] {
        for i0 in 0..g.n[0] {
            *a.get_mut(i0, i1) = Complex64::new(*record.data.get(i0, i1), 0.0);
        }
    }
    let fft = Fft2::new(n);
    fft.forward(&mut a.data);
    let pad = GridSpec::new(n, g.spacing, g.origin)?;
    for m1 in 0..n[1] {
        let tau = pad.freq(1, m1);
        for m0 in 0..n[0] {
            *a.get_mut(m0, m1) *= m(pad.freq(0, m0), tau);
        }
    }
    fft.inverse(&mut a.data);
    Record::new(g, Array2::from_fn(g.n, |i0, i1| a.get(i0, i1).re))
}

/// Smooth partition of the record into the schedule's time slices. Slice
/// `n` is supported on `[b_{n-1}, b_n + delta]` with a cosine fade right
/// after each interior boundary `b_n`.
pub fn slice_data(record: &Record, schedule: &SplitSchedule) -> Result<Vec<Record>> {
    if schedule.delta >= 0.5 * schedule.t1 {
        return Err(Error::OverlapTooLarge { delta: schedule.delta, half: 0.5 * schedule.t1 });
    }
    let ns = schedule.ns;
    let rise = |t: f64, n: usize| -> f64 {
        // 1 before boundary n, 0 after its fade
        if n == 0 {
            0.0
        } else if n >= ns {
            1.0
        } else {
            let b = schedule.t_start + n as f64 * schedule.t1;
            1.0 - cosine_step((t - b) / schedule.delta)
        }
    };
    let g = record.grid;
    Ok((1..=ns)
        .map(|n| {
            let data = Array2::from_fn(g.n, |i0, i1| {
                let t = g.coord(1, i1);
                let w = rise(t, n) - rise(t, n - 1);
                record.data.get(i0, i1) * w
            });
            Record { grid: g, data }
        })
        .collect())
}

/// Settings of the continuation engine.
#[derive(Debug, Clone)]
pub struct RtcConfig {
    pub k_max: usize,
    /// Speed at the acquisition surface.
    pub c0: f64,
    pub schedule: SplitSchedule,
    /// Stride (in grid cells) of the start lattice for interior rays.
    pub start_stride: usize,
    /// Stride (in grid cells) between boundary rays.
    pub boundary_stride: usize,
    pub early_stop: bool,
}

impl RtcConfig {
    pub fn new(k_max: usize, c0: f64, schedule: SplitSchedule) -> Self {
        Self { k_max, c0, schedule, start_stride: 4, boundary_stride: 2, early_stop: false }
    }
}

/// Smallest `2^a 3^b 5^c` not below `n`.
pub fn fft_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Cached per-box data of the boundary continuation.
pub struct BoundaryBox {
    pub sin_angle: f64,
    pub coverage: Coverage,
    pub expansion: SeparatedExpansion,
    /// Spectral multiplier and quadratic phase variable per box bin.
    pub multiplier: Vec<Complex64>,
    pub q: Vec<f64>,
}

/// Cached per-box data of one half-wave step.
pub struct InteriorBox {
    pub coverage: Coverage,
    pub expansion: SeparatedExpansion,
    pub q: Vec<f64>,
    /// Start points whose rays were masked near a caustic.
    pub masked: Vec<[f64; 2]>,
}

/// Continuation engine for a fixed model, interior grid and record layout.
pub struct Engine<'m, S: Speed + ?Sized> {
    pub model: &'m S,
    pub grid: GridSpec,
    pub cfg: RtcConfig,
    /// Windowed record layout used for every slice.
    pub window: GridSpec,
    /// Samples before the slice stamp included in each window.
    pad_before: usize,
    pub s_max: f64,
    pub record_tiling: Tiling,
    pub grid_tiling: Tiling,
    boundary: Vec<OnceLock<Option<BoundaryBox>>>,
    interior: Vec<OnceLock<std::result::Result<InteriorBox, [usize; 2]>>>,
}

impl<'m, S: Speed + ?Sized> Engine<'m, S> {
    pub fn new(model: &'m S, grid: GridSpec, record: &GridSpec, cfg: RtcConfig) -> Result<Self> {
        let sch = cfg.schedule;
        if (record.spacing[0] - grid.spacing[0]).abs() > 1e-9 * grid.spacing[0] || record.n[0] != grid.n[0] {
            return Err(Error::invalid("record", "receiver line must match the interior lateral sampling"));
        }
        let dt = record.spacing[1];
        let span = sch.t1 + sch.delta;
        let pad = 0.125 * span + 4.0 * dt;
        let pad_before = (pad / dt).ceil() as usize;
        // the time axis must resolve tau / c0 at least as finely as the grid bins
        let resolve = (grid.extent(0) / (cfg.c0 * dt)).ceil() as usize;
        let nt = fft_size((((span + 2.0 * pad) / dt).ceil() as usize + pad_before).max(resolve));
        let nx = fft_size((1.5 * record.n[0] as f64).ceil() as usize);
        let x_origin = record.origin[0] - ((nx - record.n[0]) / 2) as f64 * record.spacing[0];
        let window = GridSpec::new([nx, nt], record.spacing, [x_origin, 0.0])?;
        let s_max = span + pad;
        let record_tiling = Tiling::for_record(cfg.k_max, &window, cfg.c0, grid.extent(0))?;
        let grid_tiling = Tiling::for_grid(cfg.k_max, 2, &grid)?;
        let boundary = (0..record_tiling.box_count()).map(|_| OnceLock::new()).collect();
        let interior = (0..grid_tiling.box_count()).map(|_| OnceLock::new()).collect();
        Ok(Self { model, grid, cfg, window, pad_before, s_max, record_tiling, grid_tiling, boundary, interior })
    }

    pub(crate) fn window_spectrum(&self, slice: &Record, stamp: f64) -> Array2<Complex64> {
        let w = self.window;
        let g = slice.grid;
        let j0 = ((stamp - g.origin[1]) / g.spacing[1]).round() as i64 - self.pad_before as i64;
        let off0 = ((g.origin[0] - w.origin[0]) / w.spacing[0]).round() as usize;
        let mut a = Array2::zeros(w.n);
        for i1 in 0..w.n[1] {
            let j = j0 + i1 as i64;
            if j < 0 || j >= g.n[1] as i64 {
                continue;
            }
            for i0 in 0..g.n[0] {
                *a.get_mut(i0 + off0, i1) = Complex64::new(*slice.data.get(i0, j as usize), 0.0);
            }
        }
        Fft2::new(w.n).forward(&mut a.data);
        a
    }

    /// Window time origin for a slice stamped at `stamp`.
    pub(crate) fn window_origin(&self, slice: &GridSpec, stamp: f64) -> f64 {
        let j0 = ((stamp - slice.origin[1]) / slice.spacing[1]).round() - self.pad_before as f64;
        slice.origin[1] + j0 * slice.spacing[1]
    }

    /// Boundary-continuation data of a record box, `None` when the box has
    /// no non-grazing positive-frequency content.
    pub fn boundary_box(&self, b: &FrequencyBox) -> Result<Option<&BoundaryBox>> {
        if let Some(v) = self.boundary[b.index].get() {
            return Ok(v.as_ref());
        }
        let v = self.build_boundary_box(b)?;
        Ok(self.boundary[b.index].get_or_init(|| v).as_ref())
    }

    fn build_boundary_box(&self, b: &FrequencyBox) -> Result<Option<BoundaryBox>> {
        if b.is_coarse() || b.nu[1] <= 0.0 {
            return Ok(None);
        }
        let c0 = self.cfg.c0;
        let w = self.window;
        let mut multiplier = vec![Complex64::default(); b.len()];
        let mut slow = Vec::new();
        for l1 in 0..b.m[1] {
            for l0 in 0..b.m[0] {
                let k = b.bins(l0, l1);
                let xi = 2.0 * std::f64::consts::PI * k[0] as f64 / w.extent(0);
                let tau = 2.0 * std::f64::consts::PI * k[1] as f64 / w.extent(1);
                if tau <= 0.0 || b.window()[l1 * b.m[0] + l0] == 0.0 {
                    continue;
                }
                let s = c0 * xi / tau;
                let taper = grazing_taper(s);
                if taper == 0.0 {
                    continue;
                }
                let cc = (1.0 - s * s).sqrt();
                multiplier[l1 * b.m[0] + l0] = Complex64::new(0.0, taper / (2.0 * tau)) * (c0 * cc).powf(-0.5);
                slow.push(s);
            }
        }
        if slow.is_empty() {
            return Ok(None);
        }
        let centre = b.nu[0] / b.nu[1];
        let sin_angle = if centre.abs() < GRAZING[1] {
            centre
        } else {
            let lo = slow.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = slow.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            0.5 * (lo.max(-GRAZING[1]) + hi.min(GRAZING[1]))
        };
        let p = sin_angle / c0;
        let mut q = vec![0.0; b.len()];
        for l1 in 0..b.m[1] {
            for l0 in 0..b.m[0] {
                let i = l1 * b.m[0] + l0;
                if multiplier[i] == Complex64::default() {
                    continue;
                }
                let k = b.bins(l0, l1);
                let xi = 2.0 * std::f64::consts::PI * k[0] as f64 / w.extent(0);
                let tau = 2.0 * std::f64::consts::PI * k[1] as f64 / w.extent(1);
                q[i] = (xi - p * tau).powi(2) / tau;
            }
        }
        let stride = self.cfg.boundary_stride as f64 * self.grid.spacing[0];
        let nrays = (w.extent(0) / stride).ceil() as usize + 1;
        let x0: Vec<f64> = (0..nrays).map(|i| w.origin[0] + i as f64 * stride).collect();
        let steps = steps_for(self.s_max, self.cfg.schedule.t1);
        let family = boundary_family(self.model, c0, sin_angle, &x0, self.s_max, steps);
        let coverage = rasterize(&family, &self.grid);
        let qs: Vec<f64> = q.iter().zip(&multiplier).filter(|(_, m)| m.norm() > 0.0).map(|(v, _)| *v).collect();
        let expansion = match coverage.h_range() {
            Some(r) => SeparatedExpansion::build(r, &qs, scale_tolerance(b.k), RANK_MAX)?,
            None => SeparatedExpansion::constant(0.0),
        };
        Ok(Some(BoundaryBox { sin_angle, coverage, expansion, multiplier, q }))
    }

    /// Continue one data slice from the boundary into the interior, giving
    /// the complex field at the slice stamp.
    pub fn part1_continue(&self, slice: &Record, n: usize) -> Result<Array2<Complex64>> {
        let stamp = self.cfg.schedule.stamp(n);
        let spec = self.window_spectrum(slice, stamp);
        let t_origin = self.window_origin(&slice.grid, stamp);
        let domain = GridSpec::new(self.window.n, self.window.spacing, [self.window.origin[0], t_origin])?;
        let total: f64 = spec.data.iter().map(|v| v.norm_sqr()).sum();
        let boxes: Vec<&FrequencyBox> = self.record_tiling.boxes.iter().collect();
        let norm = 1.0 / (self.window.len() as f64);
        let parts: Vec<Result<Option<Vec<Complex64>>>> = boxes
            .par_iter()
            .map(|b| {
                let bs = self.record_tiling.box_spectrum(&spec, b, 2);
                if bs.energy() <= SKIP_ENERGY * total || total == 0.0 {
                    return Ok(None);
                }
                let Some(bb) = self.boundary_box(b)? else { return Ok(None) };
                let data: Vec<Complex64> = bs.data.iter().zip(&bb.multiplier).map(|(g, m)| g * m).collect();
                let pts: Vec<[f64; 2]> = bb.coverage.points.iter().map(|c| [c.param[0], stamp + c.param[1]]).collect();
                let amp: Vec<f64> = bb.coverage.points.iter().map(|c| c.amp).collect();
                let mut out = vec![Complex64::default(); self.grid.len()];
                let input = BoxInput { lo: bs.lo, m: bs.m, data: &data, q: &bb.q };
                apply_box(&input, &domain, &bb.expansion, &bb.coverage, &pts, &amp, Complex64::new(norm, 0.0), &mut out);
                Ok(Some(out))
            })
            .collect();
        let mut field = Array2::zeros(self.grid.n);
        for p in parts {
            if let Some(v) = p? {
                for (a, b) in field.data.iter_mut().zip(&v) {
                    *a += b;
                }
            }
        }
        Ok(field)
    }

    pub fn interior_box(&self, b: &FrequencyBox) -> Result<&InteriorBox> {
        match self.interior[b.index].get_or_init(|| self.build_interior_box(b)) {
            Ok(v) => Ok(v),
            Err([rank, max]) => Err(Error::RankBlowUp { rank: *rank, max: *max }),
        }
    }

    fn build_interior_box(&self, b: &FrequencyBox) -> std::result::Result<InteriorBox, [usize; 2]> {
        let g = self.grid;
        let t1 = self.cfg.schedule.t1;
        // both tiling axes are in units of 2 pi / extent(0), so directions agree
        let dir = Vector2::new(b.nu[0], b.nu[1]).normalize();
        let perp = Vector2::new(-dir[1], dir[0]);
        let starts = self.start_lattice();
        let family = interior_family(self.model, dir, &starts, t1, steps_for(t1, t1));
        let masked: Vec<[f64; 2]> = family.samples.iter().filter(|s| !s.valid).map(|s| s.param).collect();
        let mut coverage = rasterize(&family, &g);
        // periodic wrap would bring in the opposite edge: drop those points
        let lo = g.origin;
        let hi = [g.origin[0] + g.extent(0), g.origin[1] + g.extent(1)];
        coverage.points.retain(|c| c.param[0] >= lo[0] && c.param[0] < hi[0] && c.param[1] >= lo[1] && c.param[1] < hi[1]);
        let mut q = vec![0.0; b.len()];
        for l1 in 0..b.m[1] {
            for l0 in 0..b.m[0] {
                let k = b.bins(l0, l1);
                let z = Vector2::new(g.freq_of(0, k[0]), g.freq_of(1, k[1]));
                let zn = z.norm();
                if zn > 0.0 {
                    q[l1 * b.m[0] + l0] = z.dot(&perp).powi(2) / zn;
                }
            }
        }
        let qs: Vec<f64> = q.iter().zip(b.window()).filter(|(_, w)| **w > 0.0).map(|(v, _)| *v).collect();
        let expansion = match coverage.h_range() {
            Some(r) => match SeparatedExpansion::build(r, &qs, scale_tolerance(b.k), RANK_MAX) {
                Ok(e) => e,
                Err(Error::RankBlowUp { rank, max }) => return Err([rank, max]),
                Err(_) => unreachable!("separation only fails on rank"),
            },
            None => SeparatedExpansion::constant(0.0),
        };
        Ok(InteriorBox { coverage, expansion, q, masked })
    }

    /// Lattice of interior ray starts, half a stride beyond the grid.
    pub fn start_lattice(&self) -> GridSpec {
        let g = self.grid;
        let stride = self.cfg.start_stride;
        let h = [g.spacing[0] * stride as f64, g.spacing[1] * stride as f64];
        GridSpec::new([g.n[0] / stride + 2, g.n[1] / stride + 2], h, [g.origin[0] - h[0] * 0.5, g.origin[1] - h[1] * 0.5]).expect("start lattice")
    }

    /// Propagate a complex field by one interval `t1` of the half-wave
    /// group (the field's time stamp decreases by `t1`).
    pub fn halfwave_step(&self, field: &Array2<Complex64>) -> Result<Array2<Complex64>> {
        self.grid.check_same(&GridSpec { n: field.n, ..self.grid })?;
        let g = self.grid;
        let fft = Fft2::new(g.n);
        let mut spec = field.clone();
        fft.forward(&mut spec.data);
        let total: f64 = spec.data.iter().map(|v| v.norm_sqr()).sum();
        let mut out = Array2::zeros(g.n);
        if total == 0.0 {
            return Ok(out);
        }
        let norm = 1.0 / g.len() as f64;
        let parts: Vec<Result<Option<Vec<Complex64>>>> = self
            .grid_tiling
            .boxes
            .par_iter()
            .map(|b| {
                let bs = self.grid_tiling.box_spectrum(&spec, b, 2);
                if bs.energy() <= SKIP_ENERGY * total {
                    return Ok(None);
                }
                let ib = self.interior_box(b)?;
                if !ib.masked.is_empty() {
                    self.check_masked_energy(&bs, ib)?;
                }
                let pts: Vec<[f64; 2]> = ib.coverage.points.iter().map(|c| c.param).collect();
                let amp: Vec<f64> = ib.coverage.points.iter().map(|c| c.amp).collect();
                let mut v = vec![Complex64::default(); g.len()];
                let input = BoxInput { lo: bs.lo, m: bs.m, data: &bs.data, q: &ib.q };
                apply_box(&input, &g, &ib.expansion, &ib.coverage, &pts, &amp, Complex64::new(norm, 0.0), &mut v);
                Ok(Some(v))
            })
            .collect();
        for p in parts {
            if let Some(v) = p? {
                for (a, b) in out.data.iter_mut().zip(&v) {
                    *a += b;
                }
            }
        }
        // coarse box: isotropic low frequencies with the surface speed
        let cb = &self.grid_tiling.coarse_box;
        let mut cs = self.grid_tiling.box_spectrum(&spec, cb, 2);
        let t1 = self.cfg.schedule.t1;
        for l1 in 0..cb.m[1] {
            for l0 in 0..cb.m[0] {
                let k = cb.bins(l0, l1);
                let z = Vector2::new(g.freq_of(0, k[0]), g.freq_of(1, k[1]));
                cs.data[l1 * cb.m[0] + l0] *= Complex64::from_polar(1.0, -t1 * self.cfg.c0 * z.norm());
            }
        }
        let mut low = Array2::zeros(g.n);
        cs.add_to(&mut low);
        fft.inverse(&mut low.data);
        out.add_assign(&low);
        Ok(out)
    }

    fn check_masked_energy(&self, bs: &crate::frame::BoxSpectrum, ib: &InteriorBox) -> Result<()> {
        let g = self.grid;
        let mut comp = Array2::zeros(g.n);
        bs.add_to(&mut comp);
        Fft2::new(g.n).inverse(&mut comp.data);
        let e: Array2<f64> = comp.map(|v| v.norm_sqr());
        let total: f64 = e.data.iter().sum::<f64>();
        let cell = (self.cfg.start_stride * self.cfg.start_stride) as f64;
        let masked: f64 = ib
            .masked
            .iter()
            .filter(|p| p[0] >= g.origin[0] && p[1] >= g.origin[1] && p[0] <= g.max_coord(0) && p[1] <= g.max_coord(1))
            .map(|p| e.bilinear(g.frac_index(0, p[0]), g.frac_index(1, p[1])) * cell)
            .sum();
        if total > 0.0 && masked > CAUSTIC_ENERGY_FRACTION * total {
            log::debug!("masked energy fraction {:.3} over {} starts", masked / total, ib.masked.len());
            return Err(Error::Caustic { det: 0.0, threshold: crate::rays::CAUSTIC_THRESHOLD });
        }
        Ok(())
    }

    /// Algorithm driver: every slice is continued from the boundary, then
    /// stepped back to the target time; the sum is folded to a real field.
    pub fn reverse_continue(&self, record: &Record) -> Result<RtcOutput> {
        let sch = self.cfg.schedule;
        let slices = slice_data(record, &sch)?;
        let mut snapshots = Vec::new();
        let mut sum: Array2<Complex64> = Array2::zeros(self.grid.n);
        let mut slice_fields = Vec::with_capacity(sch.ns);
        for (i, s) in slices.iter().enumerate() {
            let n = i + 1;
            let mut w = self.part1_continue(s, n)?;
            snapshots.push(Snapshot { slice: n, step: 1, time: sch.stamp(n), field: w.clone() });
            let e0 = w.norm2();
            for p in 2..=n {
                if self.cfg.early_stop && w.norm2() <= EARLY_STOP_FRACTION.sqrt() * e0 {
                    w = Array2::zeros(self.grid.n);
                } else {
                    w = self.halfwave_step(&w)?;
                }
                snapshots.push(Snapshot { slice: n, step: p, time: sch.stamp(n) - (p - 1) as f64 * sch.t1, field: w.clone() });
            }
            sum.add_assign(&w);
            slice_fields.push(w);
        }
        let field = self.fold_real(&sum);
        Ok(RtcOutput { field, snapshots, slice_fields })
    }

    /// `2 Re` of a complex field with the interior cutoff near `x_n = 0`.
    pub fn fold_real(&self, w: &Array2<Complex64>) -> Array2<f64> {
        let g = self.grid;
        let ramp = INTERIOR_RAMP_CELLS * g.spacing[1];
        Array2::from_fn(g.n, |i0, i1| {
            let z = g.coord(1, i1);
            2.0 * w.get(i0, i1).re * cosine_step(z / ramp)
        })
    }
}

/// One intermediate field: slice `slice`, after `step - 1` half-wave steps.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub slice: usize,
    pub step: usize,
    pub time: f64,
    pub field: Array2<Complex64>,
}

#[derive(Debug, Clone)]
pub struct RtcOutput {
    /// Real field at the schedule's start time.
    pub field: Array2<f64>,
    pub snapshots: Vec<Snapshot>,
    /// Per-slice complex contributions at the start time.
    pub slice_fields: Vec<Array2<Complex64>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VelocityModel;

    fn record(nx: usize, nt: usize) -> Record {
        let g = GridSpec::new([nx, nt], [10.0, 0.004], [-(nx as f64) * 5.0, 0.0]).unwrap();
        let data = Array2::from_fn(g.n, |i, j| ((i * 31 + j * 17) % 13) as f64 - 6.0);
        Record::new(g, data).unwrap()
    }

    #[test]
    fn slices_sum_to_record() {
        let r = record(8, 200);
        let s = SplitSchedule::new(0.0, r.duration(), 4, 0.008).unwrap();
        let parts = slice_data(&r, &s).unwrap();
        assert_eq!(parts.len(), 4);
        let mut acc = r.zeros_like();
        for p in &parts {
            acc = acc.add(p).unwrap();
        }
        for (a, b) in acc.data.data.iter().zip(&r.data.data) {
            assert!((a - b).abs() < 1e-10);
        }
        // slice 2 is silent before the first boundary and after b_2 + delta
        let g = r.grid;
        for j in 0..g.n[1] {
            let t = g.coord(1, j);
            if t < s.t1 - 1e-12 || t > 2.0 * s.t1 + s.delta + 1e-12 {
                assert_eq!(*parts[1].data.get(3, j), 0.0);
            }
        }
        let one = slice_data(&r, &SplitSchedule::new(0.0, r.duration(), 1, 0.008).unwrap()).unwrap();
        assert_eq!(one[0], r);
    }

    #[test]
    fn overlap_must_be_short() {
        assert!(matches!(SplitSchedule::new(0.0, 1.0, 4, 0.2), Err(Error::OverlapTooLarge { .. })));
    }

    #[test]
    fn zero_inputs_give_zero_fields() {
        let grid = GridSpec::square(64, 640.0).unwrap();
        let m = VelocityModel::constant(2000.0).unwrap();
        let r = Record::new(GridSpec::new([64, 100], [10.0, 0.004], [-320.0, 0.0]).unwrap(), Array2::zeros([64, 100])).unwrap();
        let s = SplitSchedule::new(0.0, 0.4, 1, 0.008).unwrap();
        let e = Engine::new(&m, grid, &r.grid, RtcConfig::new(3, 2000.0, s)).unwrap();
        assert_eq!(e.part1_continue(&r, 1).unwrap().norm2(), 0.0);
        assert_eq!(e.halfwave_step(&Array2::zeros(grid.n)).unwrap().norm2(), 0.0);
    }

    #[test]
    fn grazing_taper_shape() {
        assert_eq!(grazing_taper(0.0), 1.0);
        assert_eq!(grazing_taper(0.85), 1.0);
        assert_eq!(grazing_taper(0.95), 0.0);
        assert_eq!(grazing_taper(-0.97), 0.0);
        assert!((grazing_taper(0.9) - 0.5).abs() < 1e-12);
    }
}
