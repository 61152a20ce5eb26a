//! Inverse scattering by reverse-time continuation: data preconditioning,
//! the imaging condition evaluated inside the box algorithm for both the
//! boundary part and the half-wave steps, assembly and angle gathers.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::Vector2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fio::{apply_box, imaging_family, rasterize, scale_tolerance, steps_for, BoxInput, SeparatedExpansion, RANK_MAX};
use crate::frame::FrequencyBox;
use crate::grid::{cosine_step, smooth_step, Array2, Fft2, GridSpec};
use crate::model::Speed;
use crate::rays::SourceTables;
use crate::rtc::{apply_record_multiplier, grazing_taper, slice_data, Engine, Record};

/// Low-frequency cutoff of the time integration, in Hz.
pub const TAU_MIN_HZ: f64 = 0.5;
/// Width of the space-time edge taper as a fraction of each record extent.
pub const EDGE_TAPER_FRACTION: f64 = 0.1;
/// Half-width of the direct-arrival mute in source periods.
pub const MUTE_PERIODS: f64 = 1.5;
/// Source amplitudes above this multiple of the median are not imaged.
pub const AMPLITUDE_OUTLIER: f64 = 10.0;
pub const ANGLE_BIN_DEG: f64 = 5.0;
/// Boxes evaluated together before their results are summed in order.
const BOX_CHUNK: usize = 16;
const SKIP_ENERGY: f64 = 1e-26;

/// `N = -2 i tau c0^{-1} C(c0 xi' / tau)` with the grazing taper.
pub fn apply_n(record: &Record, c0: f64) -> Result<Record> {
    if !(c0 > 0.0) {
        return Err(Error::invalid("c0", "must be positive"));
    }
    apply_record_multiplier(record, |xi, tau| n_symbol(xi, tau, c0))
}

/// Symbol of `apply_n`.
pub fn n_symbol(xi: f64, tau: f64, c0: f64) -> Complex64 {
    if tau == 0.0 {
        return Complex64::default();
    }
    let r = c0 * xi / tau;
    let taper = grazing_taper(r);
    if taper == 0.0 {
        return Complex64::default();
    }
    Complex64::new(0.0, -2.0 * tau / c0 * (1.0 - r * r).sqrt() * taper)
}

/// Low-frequency ramp: 0 below `tau_min`, 1 above `2 tau_min`.
pub fn sigma_tilde(tau: f64, tau_min: f64) -> f64 {
    smooth_step((tau.abs() - tau_min) / tau_min)
}

/// Data part of the imaging operator: `sigma(tau) (i tau)^{-1/2}`. The
/// remaining `i tau (1 + n . eta_hat)` of the time-derivative bracket
/// combines with `(i tau)^{-1}` to this symbol.
pub fn imaging_filter(record: &Record, tau_min: f64) -> Result<Record> {
    if !(tau_min > 0.0) {
        return Err(Error::invalid("tau_min", "must be positive"));
    }
    apply_record_multiplier(record, |_, tau| {
        let s = sigma_tilde(tau, tau_min);
        if s == 0.0 {
            Complex64::default()
        } else {
            Complex64::new(0.0, tau).powf(-0.5) * s
        }
    })
}

/// Full leading-order multiplier `i (tau + c n . eta) / A` of the imaging
/// operator before the time integration.
pub fn imaging_multiplier(tau: f64, c: f64, n: [f64; 2], eta: [f64; 2], amplitude: f64) -> Complex64 {
    if !(amplitude > 0.0) {
        return Complex64::default();
    }
    Complex64::new(0.0, (tau + c * (n[0] * eta[0] + n[1] * eta[1])) / amplitude)
}

/// Space-time edge taper and direct-arrival mute around
/// `t = delay + |x' - source'| / c0`.
pub fn apply_psi(record: &Record, source_x: f64, c0: f64, delay: f64, f_peak: f64) -> Record {
    let g = record.grid;
    let edge = |i: usize, n: usize| {
        let d = i.min(n - 1 - i) as f64;
        cosine_step(d / (EDGE_TAPER_FRACTION * (n - 1) as f64))
    };
    let half = MUTE_PERIODS / f_peak;
    let ramp = 0.5 / f_peak;
    let data = Array2::from_fn(g.n, |i0, i1| {
        let x = g.coord(0, i0);
        let t = g.coord(1, i1);
        let dt = (t - delay - (x - source_x).abs() / c0).abs();
        record.data.get(i0, i1) * edge(i0, g.n[0]) * edge(i1, g.n[1]) * cosine_step((dt - half) / ramp)
    });
    Record { grid: g, data }
}

/// Source wave description used by the imaging condition.
#[derive(Debug, Clone)]
pub struct ImagingConfig {
    pub source: [f64; 2],
    /// Time of the source wavelet maximum, added to the travel times.
    pub delay: f64,
    pub tables: SourceTables,
    pub tau_min: f64,
    pub angle_bin_deg: f64,
}

impl ImagingConfig {
    pub fn new<S: Speed + ?Sized>(model: &S, source: [f64; 2], delay: f64, grid: &GridSpec, c_min: f64) -> Self {
        Self {
            source,
            delay,
            tables: SourceTables::for_grid(model, source, grid, c_min),
            tau_min: 2.0 * PI * TAU_MIN_HZ,
            angle_bin_deg: ANGLE_BIN_DEG,
        }
    }

    /// Number of signed-angle bins covering `[-90, 90)` degrees.
    pub fn bins(&self) -> usize {
        2 * (90.0 / self.angle_bin_deg).ceil() as usize
    }

    /// Points where the source field is defined and not near a source-side
    /// caustic.
    pub fn illumination(&self) -> Array2<bool> {
        let t = &self.tables;
        let mut amps: Vec<f64> = t.amplitude.data.iter().zip(&t.mask.data).filter(|(a, m)| **m && **a > 0.0).map(|(a, _)| *a).collect();
        if amps.is_empty() {
            return Array2::from_fn(t.grid.n, |_, _| false);
        }
        amps.sort_by(f64::total_cmp);
        let limit = AMPLITUDE_OUTLIER * amps[amps.len() / 2];
        Array2::from_fn(t.grid.n, |i, j| *t.mask.get(i, j) && *t.amplitude.get(i, j) > 0.0 && *t.amplitude.get(i, j) <= limit)
    }
}

/// Gridded source quantities with the delay folded in.
struct SourceField<'a> {
    cfg: &'a ImagingConfig,
    grid: GridSpec,
    lit: Array2<bool>,
}

impl<'a> SourceField<'a> {
    fn new(cfg: &'a ImagingConfig) -> Self {
        Self { cfg, grid: cfg.tables.grid, lit: cfg.illumination() }
    }

    fn time(&self, index: usize) -> f64 {
        self.cfg.tables.time.data[index] + self.cfg.delay
    }

    /// Travel time and unit normal at an arbitrary point.
    fn lookup(&self, y: Vector2<f64>) -> Option<(f64, Vector2<f64>)> {
        let g = self.grid;
        let f0 = g.frac_index(0, y[0]);
        let f1 = g.frac_index(1, y[1]);
        if !(f0 >= 0.0 && f1 >= 0.0 && f0 <= (g.n[0] - 1) as f64 && f1 <= (g.n[1] - 1) as f64) {
            return None;
        }
        let i0 = (f0.floor() as usize).min(g.n[0] - 2);
        let i1 = (f1.floor() as usize).min(g.n[1] - 2);
        let m = &self.cfg.tables.mask;
        if !(*m.get(i0, i1) && *m.get(i0 + 1, i1) && *m.get(i0, i1 + 1) && *m.get(i0 + 1, i1 + 1)) {
            return None;
        }
        let t = &self.cfg.tables;
        let n = Vector2::new(t.normal[0].bilinear(f0, f1), t.normal[1].bilinear(f0, f1));
        let nn = n.norm();
        if nn == 0.0 {
            return None;
        }
        Some((t.time.bilinear(f0, f1) + self.cfg.delay, n / nn))
    }

    /// Spatial imaging weight `(1 + n . eta_hat) / A` and angle bin.
    fn weight(&self, index: usize, dir: [f64; 2]) -> Option<(f64, usize)> {
        if !self.lit.data[index] {
            return None;
        }
        let t = &self.cfg.tables;
        let n = [t.normal[0].data[index], t.normal[1].data[index]];
        let c = (n[0] * dir[0] + n[1] * dir[1]).clamp(-1.0, 1.0);
        let bin = angle_bin(incidence_angle(n, dir), self.cfg.angle_bin_deg, self.cfg.bins());
        Some(((1.0 + c) / t.amplitude.data[index], bin))
    }
}

/// Signed half opening angle in degrees between the source direction `n`
/// and the receiver-side direction `dir`; the sign tells which side of the
/// source ray the receiver ray lies on.
pub fn incidence_angle(n: [f64; 2], dir: [f64; 2]) -> f64 {
    let cross = n[0] * dir[1] - n[1] * dir[0];
    let dot = n[0] * dir[0] + n[1] * dir[1];
    0.5 * cross.atan2(dot).to_degrees()
}

/// Bin of a signed angle; bin 0 starts at -90 degrees.
pub fn angle_bin(angle_deg: f64, width_deg: f64, bins: usize) -> usize {
    (((angle_deg + 90.0) / width_deg).max(0.0) as usize).min(bins - 1)
}

/// One partial image: slice `slice`, part `step` (1 for the boundary part,
/// `n_p >= 2` for the half-wave steps).
#[derive(Debug, Clone)]
pub struct PartialImage {
    pub slice: usize,
    pub step: usize,
    pub image: Array2<f64>,
}

/// Partial images and angle-binned contributions.
#[derive(Debug, Clone)]
pub struct ImageAccumulator {
    pub grid: GridSpec,
    pub partials: Vec<PartialImage>,
    /// Contributions per incidence-angle bin.
    pub gathers: Vec<Array2<f64>>,
    pub angle_bin_deg: f64,
}

impl ImageAccumulator {
    pub fn new(grid: GridSpec, bins: usize, angle_bin_deg: f64) -> Self {
        Self { grid, partials: Vec::new(), gathers: vec![Array2::zeros(grid.n); bins], angle_bin_deg }
    }

    fn partial(&mut self, slice: usize, step: usize) -> usize {
        if let Some(i) = self.partials.iter().position(|p| p.slice == slice && p.step == step) {
            return i;
        }
        self.partials.push(PartialImage { slice, step, image: Array2::zeros(self.grid.n) });
        self.partials.len() - 1
    }

    fn deposit(&mut self, slice: usize, step: usize, hits: &[(usize, usize, f64)]) {
        let k = self.partial(slice, step);
        for &(i, bin, v) in hits {
            self.partials[k].image.data[i] += v;
            self.gathers[bin].data[i] += v;
        }
    }

    /// Sum of the selected partial images.
    pub fn sum_where(&self, keep: impl Fn(&PartialImage) -> bool) -> Array2<f64> {
        let mut out: Array2<f64> = Array2::zeros(self.grid.n);
        for p in self.partials.iter().filter(|p| keep(p)) {
            out.add_assign(&p.image);
        }
        out
    }

    /// Final image: the double sum over slices and parts.
    pub fn assemble(&self) -> Array2<f64> {
        self.sum_where(|_| true)
    }

    pub fn boundary_part(&self) -> Array2<f64> {
        self.sum_where(|p| p.step == 1)
    }

    pub fn halfwave_part(&self) -> Array2<f64> {
        self.sum_where(|p| p.step >= 2)
    }

    /// Stack another accumulator (another source) onto this one.
    pub fn stack(&mut self, other: &ImageAccumulator) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        if self.gathers.len() != other.gathers.len() {
            return Err(Error::invalid("gathers", "angle binning differs"));
        }
        for p in &other.partials {
            let k = self.partial(p.slice, p.step);
            self.partials[k].image.add_assign(&p.image);
        }
        for (a, b) in self.gathers.iter_mut().zip(&other.gathers) {
            a.add_assign(b);
        }
        Ok(())
    }

    /// Angle gathers at lateral grid indices.
    /// Gathers at grid columns `positions`, each averaged over
    /// `half_width` columns on either side.
    pub fn angle_gather(&self, positions: &[usize], half_width: usize) -> Result<AngleGather> {
        AngleGather::from_bins(&self.grid, &self.gathers, self.angle_bin_deg, positions, half_width)
    }
}

/// Image traces sorted by incidence angle.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleGather {
    pub positions: Vec<f64>,
    pub depth: Vec<f64>,
    pub bin_width_deg: f64,
    /// `values[position][bin][depth]`.
    pub values: Vec<Vec<Vec<f64>>>,
}

impl AngleGather {
    /// Traces at lateral grid columns `positions` of per-bin images, each
    /// the mean over columns within `half_width` (clipped at the edges).
    pub fn from_bins(grid: &GridSpec, bins: &[Array2<f64>], bin_width_deg: f64, positions: &[usize], half_width: usize) -> Result<Self> {
        if let Some(&p) = positions.iter().find(|&&p| p >= grid.n[0]) {
            return Err(Error::invalid("positions", format!("index {p} outside the grid")));
        }
        if let Some(b) = bins.iter().find(|b| b.n != grid.n) {
            return Err(Error::GridMismatch { expected: grid.n.to_vec(), got: b.n.to_vec() });
        }
        let trace = |b: &Array2<f64>, i: usize| -> Vec<f64> {
            let cols = i.saturating_sub(half_width)..(i + half_width + 1).min(grid.n[0]);
            let w = 1.0 / cols.len() as f64;
            (0..grid.n[1]).map(|j| cols.clone().map(|c| b.get(c, j)).sum::<f64>() * w).collect()
        };
        let values = positions.iter().map(|&i| bins.iter().map(|b| trace(b, i)).collect()).collect();
        Ok(Self {
            positions: positions.iter().map(|&i| grid.coord(0, i)).collect(),
            depth: (0..grid.n[1]).map(|j| grid.coord(1, j)).collect(),
            bin_width_deg,
            values,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("position,depth,angle_bin,value\n");
        for (p, per_pos) in self.positions.iter().zip(&self.values) {
            for (b, trace) in per_pos.iter().enumerate() {
                for (z, v) in self.depth.iter().zip(trace) {
                    let _ = writeln!(s, "{p},{z},{b},{v:e}");
                }
            }
        }
        s
    }

    /// Centre of bin `b` in degrees.
    pub fn bin_angle(&self, b: usize) -> f64 {
        -90.0 + (b as f64 + 0.5) * self.bin_width_deg
    }

    /// Depth of the largest positive value in `window` (depth indices) per
    /// bin, for bins holding at least `min_fraction` of the strongest bin's
    /// energy in the window. Reflectors with positive reflectivity image
    /// with a positive main lobe, so side lobes of either sign are skipped.
    pub fn picks(&self, position: usize, window: std::ops::Range<usize>, min_fraction: f64) -> Vec<Option<f64>> {
        let per = &self.values[position];
        let energy: Vec<f64> = per.iter().map(|t| t[window.clone()].iter().map(|v| v * v).sum()).collect();
        let emax = energy.iter().cloned().fold(0.0, f64::max);
        per.iter()
            .zip(&energy)
            .map(|(t, &e)| {
                if emax == 0.0 || e < min_fraction * emax {
                    return None;
                }
                let j = window.clone().max_by(|&a, &b| t[a].total_cmp(&t[b]))?;
                (t[j] > 0.0).then(|| self.depth[j])
            })
            .collect()
    }
}

/// Population standard deviation of the picked values.
pub fn pick_spread(picks: &[Option<f64>]) -> Option<f64> {
    let v: Vec<f64> = picks.iter().flatten().copied().collect();
    if v.len() < 2 {
        return None;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    Some((v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt())
}

/// Run the whole imaging algorithm on preconditioned data `g`
/// (see `precondition`).
pub fn migrate<S: Speed + ?Sized + Sync>(engine: &Engine<S>, g: &Record, cfg: &ImagingConfig) -> Result<ImageAccumulator> {
    engine.grid.check_same(&cfg.tables.grid)?;
    let sch = engine.cfg.schedule;
    let sf = SourceField::new(cfg);
    let mut acc = ImageAccumulator::new(engine.grid, cfg.bins(), cfg.angle_bin_deg);
    let slices = slice_data(g, &sch)?;
    // Part I for every slice, keeping the continued fields for Part II
    let mut fields: Vec<(usize, Array2<Complex64>)> = Vec::new();
    for (i, s) in slices.iter().enumerate() {
        let n = i + 1;
        let hits = boundary_image(engine, &sf, s, n)?;
        acc.deposit(n, 1, &hits);
        if n >= 2 {
            fields.push((n, engine.part1_continue(s, n)?));
        }
    }
    // Part II, one level of stamps at a time so ray families are shared
    for level in (1..sch.ns).rev() {
        let stamp = level as f64 * sch.t1;
        let live: Vec<&(usize, Array2<Complex64>)> = fields.iter().filter(|(n, _)| *n > level).collect();
        let hits = halfwave_image(engine, &sf, &live, stamp)?;
        for ((n, _), h) in live.iter().zip(&hits) {
            acc.deposit(*n, n - level + 1, h);
        }
        if level > 1 {
            for (n, w) in fields.iter_mut() {
                if *n > level {
                    *w = engine.halfwave_step(w)?;
                }
            }
        }
    }
    Ok(acc)
}

/// Preconditioning of a scattered-field record: mute and taper, `N`, then
/// the time-integration filter.
pub fn precondition(record: &Record, cfg: &ImagingConfig, c0: f64, f_peak: f64) -> Result<Record> {
    let muted = apply_psi(record, cfg.source[0], c0, cfg.delay, f_peak);
    let g = apply_n(&muted, c0)?;
    imaging_filter(&g, cfg.tau_min)
}

type Hits = Vec<(usize, usize, f64)>;

/// Run `f` over boxes in parallel chunks and concatenate in box order.
fn over_boxes<T: Send>(boxes: &[FrequencyBox], f: impl Fn(&FrequencyBox) -> Result<T> + Sync) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(boxes.len());
    for chunk in boxes.chunks(BOX_CHUNK) {
        let part: Vec<Result<T>> = chunk.par_iter().map(&f).collect();
        for r in part {
            out.push(r?);
        }
    }
    Ok(out)
}

fn boundary_image<S: Speed + ?Sized + Sync>(engine: &Engine<S>, sf: &SourceField, slice: &Record, n: usize) -> Result<Hits> {
    let stamp = engine.cfg.schedule.stamp(n);
    let spec = engine.window_spectrum(slice, stamp);
    let total: f64 = spec.data.iter().map(|v| v.norm_sqr()).sum();
    if total == 0.0 {
        return Ok(Vec::new());
    }
    let t_origin = engine.window_origin(&slice.grid, stamp);
    let w = engine.window;
    let domain = GridSpec::new(w.n, w.spacing, [w.origin[0], t_origin])?;
    let t_end = t_origin + domain.extent(1);
    let norm = Complex64::new(1.0 / w.len() as f64, 0.0);
    let grid_len = engine.grid.len();
    let per_box = over_boxes(&engine.record_tiling.boxes, |b| {
        let bs = engine.record_tiling.box_spectrum(&spec, b, 2);
        if bs.energy() <= SKIP_ENERGY * total {
            return Ok(Vec::new());
        }
        let Some(bb) = engine.boundary_box(b)? else { return Ok(Vec::new()) };
        let data: Vec<Complex64> = bs.data.iter().zip(&bb.multiplier).map(|(g, m)| g * m).collect();
        let mut pts = Vec::with_capacity(bb.coverage.points.len());
        let mut amp = Vec::with_capacity(bb.coverage.points.len());
        let mut bins = Vec::with_capacity(bb.coverage.points.len());
        for c in &bb.coverage.points {
            let ts = sf.time(c.index);
            let td = ts + c.param[1];
            match sf.weight(c.index, c.dir) {
                Some((wt, bin)) if ts >= stamp && td >= t_origin && td < t_end => {
                    pts.push([c.param[0], td]);
                    amp.push(c.amp * wt);
                    bins.push(bin);
                }
                _ => {
                    pts.push([0.0, 0.0]);
                    amp.push(0.0);
                    bins.push(0);
                }
            }
        }
        let mut out = vec![Complex64::default(); grid_len];
        let input = BoxInput { lo: bs.lo, m: bs.m, data: &data, q: &bb.q };
        apply_box(&input, &domain, &bb.expansion, &bb.coverage, &pts, &amp, norm, &mut out);
        Ok(collect_hits(&bb.coverage.points, &amp, &bins, &out))
    })?;
    Ok(per_box.into_iter().flatten().collect())
}

fn collect_hits(points: &[crate::fio::Covered], amp: &[f64], bins: &[usize], out: &[Complex64]) -> Hits {
    points
        .iter()
        .zip(amp)
        .zip(bins)
        .filter(|((_, a), _)| **a != 0.0)
        .map(|((c, _), &bin)| (c.index, bin, 2.0 * out[c.index].re))
        .collect()
}

fn halfwave_image<S: Speed + ?Sized + Sync>(
    engine: &Engine<S>,
    sf: &SourceField,
    fields: &[&(usize, Array2<Complex64>)],
    stamp: f64,
) -> Result<Vec<Hits>> {
    let g = engine.grid;
    let fft = Fft2::new(g.n);
    let spectra: Vec<(Array2<Complex64>, f64)> = fields
        .iter()
        .map(|(_, w)| {
            let mut s = w.clone();
            fft.forward(&mut s.data);
            let e = s.data.iter().map(|v| v.norm_sqr()).sum();
            (s, e)
        })
        .collect();
    if spectra.iter().all(|(_, e)| *e == 0.0) {
        return Ok(vec![Vec::new(); fields.len()]);
    }
    let t1 = engine.cfg.schedule.t1;
    let starts = engine.start_lattice();
    let norm = Complex64::new(1.0 / g.len() as f64, 0.0);
    let lookup = |y: Vector2<f64>| sf.lookup(y);
    let lo = g.origin;
    let hi = [g.origin[0] + g.extent(0), g.origin[1] + g.extent(1)];
    let per_box = over_boxes(&engine.grid_tiling.boxes, |b| {
        let active: Vec<_> = spectra
            .iter()
            .map(|(s, e)| {
                let bs = engine.grid_tiling.box_spectrum(s, b, 2);
                (bs.energy() > SKIP_ENERGY * e && *e > 0.0).then_some(bs)
            })
            .collect();
        if active.iter().all(Option::is_none) {
            return Ok(vec![Vec::new(); fields.len()]);
        }
        let ib = engine.interior_box(b)?;
        let dir = Vector2::new(b.nu[0], b.nu[1]).normalize();
        let family = imaging_family(engine.model, dir, &starts, t1, steps_for(t1, t1), stamp, &lookup);
        let mut coverage = rasterize(&family, &g);
        coverage.points.retain(|c| {
            let ts = sf.time(c.index);
            ts >= stamp - t1 && ts < stamp && c.param[0] >= lo[0] && c.param[0] < hi[0] && c.param[1] >= lo[1] && c.param[1] < hi[1]
        });
        let qs: Vec<f64> = ib.q.iter().zip(b.window()).filter(|(_, w)| **w > 0.0).map(|(v, _)| *v).collect();
        let expansion = match coverage.h_range() {
            Some(r) => SeparatedExpansion::build(r, &qs, scale_tolerance(b.k), RANK_MAX)?,
            None => return Ok(vec![Vec::new(); fields.len()]),
        };
        let mut pts = Vec::with_capacity(coverage.points.len());
        let mut amp = Vec::with_capacity(coverage.points.len());
        let mut bins = Vec::with_capacity(coverage.points.len());
        for c in &coverage.points {
            pts.push(c.param);
            match sf.weight(c.index, c.dir) {
                Some((wt, bin)) => {
                    amp.push(c.amp * wt);
                    bins.push(bin);
                }
                None => {
                    amp.push(0.0);
                    bins.push(0);
                }
            }
        }
        Ok(active
            .iter()
            .map(|bs| match bs {
                None => Vec::new(),
                Some(bs) => {
                    let mut out = vec![Complex64::default(); g.len()];
                    let input = BoxInput { lo: bs.lo, m: bs.m, data: &bs.data, q: &ib.q };
                    apply_box(&input, &g, &expansion, &coverage, &pts, &amp, norm, &mut out);
                    collect_hits(&coverage.points, &amp, &bins, &out)
                }
            })
            .collect())
    })?;
    let mut hits = vec![Vec::new(); fields.len()];
    for per in per_box {
        for (h, v) in hits.iter_mut().zip(per) {
            h.extend(v);
        }
    }
    Ok(hits)
}
