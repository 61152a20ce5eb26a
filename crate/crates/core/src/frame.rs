//! Dyadic parabolic tiling of a 2-D frequency plane and the associated
//! wave-packet transform pair.
//!
//! Tiling coordinates are FFT bins of a reference grid, so a square spatial
//! grid uses its own bins and a boundary record uses `(xi', tau / c0)`
//! rescaled to the bins of the interior grid. Windows are polar wedges:
//! a log-radial bump per scale times an angular bump per direction,
//! normalized so that `sum chi^2 = 1`.

use std::f64::consts::PI;

use nalgebra::Matrix2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{signed_bin, smooth_step, Array2, Fft2, GridSpec};

/// Base radial frequency in tiling units.
pub const XI_BASE: f64 = PI / 4.0;
/// Direction-count constant.
pub const C_DIR: f64 = 4.0;
/// Relative width of the window overlap zones.
const RAMP: f64 = 1.0 / 3.0;
/// Start of the final radial taper, as a fraction of Nyquist.
const NYQ_TAPER: f64 = 0.9;

fn round_to_even(x: f64) -> usize {
    let r = (x / 2.0).round() * 2.0;
    r.max(2.0) as usize
}

/// Number of directions over the full circle at scale `k`.
/// Finest scale a square `n x n` grid supports.
pub fn max_scale_for(n: usize) -> usize {
    (1..64).take_while(|&k| Tiling::new(k, 2, [n, n], [1.0, 1.0]).is_ok()).last().unwrap_or(0)
}

pub fn direction_count(k: usize) -> usize {
    2 * round_to_even(C_DIR * 2f64.powf(k as f64 / 2.0))
}

/// One frequency box: a polar wedge at scale `k` around direction `nu`.
/// The coarse isotropic box has `k = 0`.
#[derive(Clone)]
pub struct FrequencyBox {
    /// Position in `Tiling::all_boxes`, the coarse box being 0.
    pub index: usize,
    pub k: usize,
    pub nu_index: usize,
    pub nu: [f64; 2],
    pub rotation: Matrix2<f64>,
    pub center: f64,
    pub half_lengths: [f64; 2],
    /// Lowest signed bin of the support bounding box.
    pub lo: [i64; 2],
    /// Size of the support bounding box.
    pub m: [usize; 2],
    window: Vec<f64>,
    fft: Fft2,
}

impl std::fmt::Debug for FrequencyBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FrequencyBox")
            .field("index", &self.index)
            .field("k", &self.k)
            .field("nu_index", &self.nu_index)
            .field("nu", &self.nu)
            .field("lo", &self.lo)
            .field("m", &self.m)
            .finish()
    }
}

impl FrequencyBox {
    pub fn is_coarse(&self) -> bool {
        self.k == 0
    }

    /// Window `chi = beta` on the support bounding box, axis 0 fastest.
    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn len(&self) -> usize {
        self.m[0] * self.m[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Signed bins of local index `(i0, i1)`.
    #[inline]
    pub fn bins(&self, i0: usize, i1: usize) -> [i64; 2] {
        [self.lo[0] + i0 as i64, self.lo[1] + i1 as i64]
    }

    /// Angle of the direction in tiling coordinates.
    pub fn angle(&self) -> f64 {
        self.nu[1].atan2(self.nu[0])
    }
}

/// The tiling of one FFT grid shape.
#[derive(Clone, Debug)]
pub struct Tiling {
    pub n_dims: usize,
    pub k_max: usize,
    pub shape: [usize; 2],
    /// Tiling units per FFT bin along each axis.
    pub scale: [f64; 2],
    pub nyquist: f64,
    pub coarse_box: FrequencyBox,
    pub boxes: Vec<FrequencyBox>,
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Bump equal to 1 on `[a + w, b - w]`, 0 outside `[a, b]`.
fn bump(x: f64, a: f64, b: f64, w: f64) -> f64 {
    smooth_step((x - a) / w) * smooth_step((b - x) / w)
}

struct Spec {
    k: usize,
    nu_index: usize,
    angle: f64,
    spacing: f64,
}

impl Tiling {
    /// Tiling of a spatial grid; tiling units are the bins of axis 0.
    pub fn for_grid(k_max: usize, n_dims: usize, grid: &GridSpec) -> Result<Self> {
        let l = grid.extent(0);
        Self::new(k_max, n_dims, grid.n, [l / grid.extent(0), l / grid.extent(1)])
    }

    /// Tiling of a boundary record on `(x', t)` in units of the bins of an
    /// interior grid of lateral extent `l_ref`, using `(xi', tau / c0)`.
    pub fn for_record(k_max: usize, record: &GridSpec, c0: f64, l_ref: f64) -> Result<Self> {
        Self::new(k_max, 2, record.n, [l_ref / record.extent(0), l_ref / (c0 * record.extent(1))])
    }

    pub fn new(k_max: usize, n_dims: usize, shape: [usize; 2], scale: [f64; 2]) -> Result<Self> {
        if n_dims != 2 {
            return Err(Error::invalid("n_dims", "only two-dimensional tilings are implemented"));
        }
        if k_max < 1 {
            return Err(Error::invalid("k_max", "must be at least 1"));
        }
        let nyquist = (0.5 * shape[0] as f64 * scale[0]).min(0.5 * shape[1] as f64 * scale[1]);
        let needed = XI_BASE * 2f64.powi(k_max as i32) * 2f64.powf(2.0 / 3.0);
        if needed > nyquist {
            return Err(Error::ScaleExceedsNyquist { k_max, needed, nyquist });
        }
        let mut specs = vec![Spec { k: 0, nu_index: 0, angle: 0.0, spacing: 2.0 * PI }];
        for k in 1..=k_max {
            let m = direction_count(k);
            for j in 0..m {
                specs.push(Spec { k, nu_index: j, angle: 2.0 * PI * j as f64 / m as f64, spacing: 2.0 * PI / m as f64 });
            }
        }
        let coord = |m0: usize, m1: usize| {
            [signed_bin(m0, shape[0]) as f64 * scale[0], signed_bin(m1, shape[1]) as f64 * scale[1]]
        };
        // raw windows on the full grid, one box at a time, accumulating the norm
        let raw_of = |s: &Spec, q: [f64; 2]| raw_window(s.k, k_max, s.angle, s.spacing, q, nyquist);
        let total = shape[0] * shape[1];
        let per_box: Vec<(Vec<(usize, f64)>, [i64; 2], [i64; 2])> = specs
            .par_iter()
            .map(|s| {
                let mut vals = Vec::new();
                let mut lo = [i64::MAX; 2];
                let mut hi = [i64::MIN; 2];
                for m1 in 0..shape[1] {
                    for m0 in 0..shape[0] {
                        let w = raw_of(s, coord(m0, m1));
                        if w > 0.0 {
                            vals.push((m1 * shape[0] + m0, w));
                            let b = [signed_bin(m0, shape[0]), signed_bin(m1, shape[1])];
                            for a in 0..2 {
                                lo[a] = lo[a].min(b[a]);
                                hi[a] = hi[a].max(b[a]);
                            }
                        }
                    }
                }
                (vals, lo, hi)
            })
            .collect();
        let mut norm = vec![0.0; total];
        for (vals, _, _) in &per_box {
            for &(i, w) in vals {
                norm[i] += w * w;
            }
        }
        let mut boxes = Vec::with_capacity(specs.len());
        for (index, (s, (vals, lo, hi))) in specs.iter().zip(per_box).enumerate() {
            if vals.is_empty() {
                return Err(Error::invalid("k_max", format!("empty window for scale {} direction {}", s.k, s.nu_index)));
            }
            let m = [(hi[0] - lo[0] + 1) as usize, (hi[1] - lo[1] + 1) as usize];
            let mut window = vec![0.0; m[0] * m[1]];
            for (i, w) in vals {
                let m0 = i % shape[0];
                let m1 = i / shape[0];
                let r = coord(m0, m1);
                let t = nyquist_taper((r[0] * r[0] + r[1] * r[1]).sqrt(), nyquist);
                let l0 = (signed_bin(m0, shape[0]) - lo[0]) as usize;
                let l1 = (signed_bin(m1, shape[1]) - lo[1]) as usize;
                window[l1 * m[0] + l0] = w / norm[i].sqrt() * t;
            }
            let center = if s.k == 0 { 0.0 } else { XI_BASE * 2f64.powi(s.k as i32) };
            let nu = [s.angle.cos(), s.angle.sin()];
            boxes.push(FrequencyBox {
                index,
                k: s.k,
                nu_index: s.nu_index,
                nu,
                rotation: Matrix2::new(nu[0], nu[1], -nu[1], nu[0]),
                center,
                half_lengths: if s.k == 0 {
                    [2.0 * XI_BASE, 2.0 * XI_BASE]
                } else {
                    [0.75 * center, 0.75 * (center * XI_BASE).sqrt()]
                },
                lo,
                m,
                window,
                fft: Fft2::new(m),
            });
        }
        let coarse_box = boxes.remove(0);
        Ok(Self { n_dims, k_max, shape, scale, nyquist, coarse_box, boxes })
    }

    /// Coarse box followed by all directional boxes.
    pub fn all_boxes(&self) -> impl Iterator<Item = &FrequencyBox> {
        std::iter::once(&self.coarse_box).chain(self.boxes.iter())
    }

    pub fn box_count(&self) -> usize {
        self.boxes.len() + 1
    }

    /// Tiling coordinates of FFT bin `(m0, m1)`.
    pub fn coord(&self, m0: usize, m1: usize) -> [f64; 2] {
        [signed_bin(m0, self.shape[0]) as f64 * self.scale[0], signed_bin(m1, self.shape[1]) as f64 * self.scale[1]]
    }

    fn raw(&self, b: &FrequencyBox, q: [f64; 2]) -> f64 {
        let spacing = if b.k == 0 { 2.0 * PI } else { 2.0 * PI / direction_count(b.k) as f64 };
        raw_window(b.k, self.k_max, b.angle(), spacing, q, self.nyquist)
    }

    /// `(chi, beta)` of a box at an arbitrary point in tiling coordinates.
    pub fn window_pair(&self, b: &FrequencyBox, q: [f64; 2]) -> (f64, f64) {
        let w = self.raw(b, q);
        if w == 0.0 {
            return (0.0, 0.0);
        }
        let n: f64 = self.all_boxes().map(|o| self.raw(o, q).powi(2)).sum();
        let r = (q[0] * q[0] + q[1] * q[1]).sqrt();
        let v = w / n.sqrt() * nyquist_taper(r, self.nyquist);
        (v, v)
    }

    /// Number of boxes (coarse included) whose window is nonzero at `q`.
    pub fn covering_count(&self, q: [f64; 2]) -> usize {
        self.all_boxes().filter(|b| self.raw(b, q) > 0.0).count()
    }

    /// Largest `|sum_b window_b^2 - 1|` over FFT bins within
    /// `fraction * nyquist` of the origin.
    pub fn partition_residual(&self, fraction: f64) -> f64 {
        let [n0, n1] = self.shape;
        let mut sum = vec![0.0; n0 * n1];
        for b in self.all_boxes() {
            for l1 in 0..b.m[1] {
                for l0 in 0..b.m[0] {
                    let bb = b.bins(l0, l1);
                    sum[bin_index(bb[1], n1) * n0 + bin_index(bb[0], n0)] += b.window()[l1 * b.m[0] + l0].powi(2);
                }
            }
        }
        let mut worst: f64 = 0.0;
        for m1 in 0..n1 {
            for m0 in 0..n0 {
                let q = self.coord(m0, m1);
                if (q[0] * q[0] + q[1] * q[1]).sqrt() <= fraction * self.nyquist {
                    worst = worst.max((sum[m1 * n0 + m0] - 1.0).abs());
                }
            }
        }
        worst
    }

    /// Zero every FFT bin of `spec` beyond `fraction * nyquist`.
    pub fn band_limit(&self, spec: &mut Array2<Complex64>, fraction: f64) -> Result<()> {
        self.check_shape(spec.n)?;
        for m1 in 0..self.shape[1] {
            for m0 in 0..self.shape[0] {
                let q = self.coord(m0, m1);
                if (q[0] * q[0] + q[1] * q[1]).sqrt() > fraction * self.nyquist {
                    *spec.get_mut(m0, m1) = Complex64::default();
                }
            }
        }
        Ok(())
    }

    /// Radius below which only the coarse box is active.
    pub fn coarse_cutoff(&self) -> f64 {
        XI_BASE * 2f64.powf(1.0 / 3.0)
    }

    fn check_shape(&self, n: [usize; 2]) -> Result<()> {
        if n != self.shape {
            return Err(Error::GridMismatch { expected: self.shape.to_vec(), got: n.to_vec() });
        }
        Ok(())
    }

    /// Windowed spectrum `spec * window^pow` on the box support.
    pub fn box_spectrum(&self, spectrum: &Array2<Complex64>, b: &FrequencyBox, pow: i32) -> BoxSpectrum {
        let mut data = vec![Complex64::default(); b.len()];
        for l1 in 0..b.m[1] {
            let g1 = bin_index(b.lo[1] + l1 as i64, self.shape[1]);
            for l0 in 0..b.m[0] {
                let w = b.window[l1 * b.m[0] + l0];
                if w != 0.0 {
                    let g0 = bin_index(b.lo[0] + l0 as i64, self.shape[0]);
                    data[l1 * b.m[0] + l0] = *spectrum.get(g0, g1) * w.powi(pow);
                }
            }
        }
        BoxSpectrum { lo: b.lo, m: b.m, data }
    }

    /// `spectrum * chi * beta` of one box, on the full grid.
    pub fn box_component(&self, spectrum: &Array2<Complex64>, b: &FrequencyBox) -> Result<Array2<Complex64>> {
        self.check_shape(spectrum.n)?;
        let bs = self.box_spectrum(spectrum, b, 2);
        let mut out = Array2::zeros(self.shape);
        bs.add_to(&mut out);
        Ok(out)
    }

    /// Wave-packet coefficients of a complex field.
    pub fn analyze(&self, field: &Array2<Complex64>) -> Result<PacketCoefficients> {
        self.check_shape(field.n)?;
        let mut spec = field.clone();
        Fft2::new(self.shape).forward(&mut spec.data);
        Ok(self.analyze_spectrum(&spec))
    }

    pub fn analyze_real(&self, field: &Array2<f64>) -> Result<PacketCoefficients> {
        self.analyze(&field.to_complex())
    }

    /// Coefficients from an (unnormalized, forward) spectrum.
    pub fn analyze_spectrum(&self, spec: &Array2<Complex64>) -> PacketCoefficients {
        let total = (self.shape[0] * self.shape[1]) as f64;
        let boxes: Vec<&FrequencyBox> = self.all_boxes().collect();
        let coeffs = boxes
            .par_iter()
            .map(|b| {
                let bs = self.box_spectrum(spec, b, 1);
                let mut c = Array2 { n: b.m, data: bs.data };
                b.fft.inverse(&mut c.data);
                // samples of the box field on its lattice, scaled to a tight frame
                let s = (b.len() as f64 / total) * (total / b.len() as f64).sqrt();
                let ph = lattice_phase(b);
                for l1 in 0..b.m[1] {
                    for l0 in 0..b.m[0] {
                        let v = c.get_mut(l0, l1);
                        *v *= ph(l0, l1) * s;
                    }
                }
                c
            })
            .collect();
        PacketCoefficients { shape: self.shape, coeffs }
    }

    /// Spectrum `sum_gamma u_gamma phi_gamma` (forward, unnormalized).
    pub fn synthesize_spectrum(&self, pc: &PacketCoefficients) -> Result<Array2<Complex64>> {
        if pc.shape != self.shape || pc.coeffs.len() != self.box_count() {
            return Err(Error::GridMismatch { expected: self.shape.to_vec(), got: pc.shape.to_vec() });
        }
        let total = (self.shape[0] * self.shape[1]) as f64;
        let mut out = Array2::zeros(self.shape);
        for (b, c) in self.all_boxes().zip(&pc.coeffs) {
            if c.n != b.m {
                return Err(Error::GridMismatch { expected: b.m.to_vec(), got: c.n.to_vec() });
            }
            let ph = lattice_phase(b);
            let mut d = c.clone();
            for l1 in 0..b.m[1] {
                for l0 in 0..b.m[0] {
                    *d.get_mut(l0, l1) *= ph(l0, l1).conj();
                }
            }
            b.fft.forward(&mut d.data);
            let s = (total / b.len() as f64).sqrt();
            for (v, w) in d.data.iter_mut().zip(&b.window) {
                *v *= *w * s;
            }
            BoxSpectrum { lo: b.lo, m: b.m, data: d.data }.add_to(&mut out);
        }
        Ok(out)
    }

    pub fn synthesize(&self, pc: &PacketCoefficients) -> Result<Array2<Complex64>> {
        let mut s = self.synthesize_spectrum(pc)?;
        Fft2::new(self.shape).inverse(&mut s.data);
        Ok(s)
    }
}

fn raw_window(k: usize, k_max: usize, angle: f64, spacing: f64, q: [f64; 2], nyquist: f64) -> f64 {
    let r = (q[0] * q[0] + q[1] * q[1]).sqrt();
    if r >= nyquist {
        return 0.0;
    }
    let lo_edge = 0.5 - RAMP / 2.0;
    if k == 0 {
        if r == 0.0 {
            return 1.0;
        }
        let u = (r / XI_BASE).log2();
        return smooth_step((0.5 + RAMP / 2.0 - u) / RAMP);
    }
    if r == 0.0 {
        return 0.0;
    }
    let u = (r / XI_BASE).log2();
    let kf = k as f64;
    let radial = if k == k_max {
        smooth_step((u - (kf - lo_edge - RAMP)) / RAMP)
    } else {
        bump(u, kf - lo_edge - RAMP, kf + lo_edge + RAMP, RAMP)
    };
    if radial == 0.0 {
        return 0.0;
    }
    let d = wrap_angle(q[1].atan2(q[0]) - angle) / spacing;
    radial * bump(d, -0.5 - RAMP / 2.0, 0.5 + RAMP / 2.0, RAMP)
}

fn nyquist_taper(r: f64, nyquist: f64) -> f64 {
    smooth_step((nyquist - r) / ((1.0 - NYQ_TAPER) * nyquist))
}

#[inline]
fn bin_index(b: i64, n: usize) -> usize {
    b.rem_euclid(n as i64) as usize
}

/// Phase `exp(2 pi i lo . j / m)` relating the local FFT to lattice samples.
fn lattice_phase(b: &FrequencyBox) -> impl Fn(usize, usize) -> Complex64 + '_ {
    move |l0, l1| {
        let a = 2.0 * PI * (b.lo[0] as f64 * l0 as f64 / b.m[0] as f64 + b.lo[1] as f64 * l1 as f64 / b.m[1] as f64);
        Complex64::from_polar(1.0, a)
    }
}

/// Spectrum values on a box support, indexed by local offsets from `lo`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSpectrum {
    pub lo: [i64; 2],
    pub m: [usize; 2],
    pub data: Vec<Complex64>,
}

impl BoxSpectrum {
    pub fn add_to(&self, out: &mut Array2<Complex64>) {
        let n = out.n;
        for l1 in 0..self.m[1] {
            let g1 = bin_index(self.lo[1] + l1 as i64, n[1]);
            for l0 in 0..self.m[0] {
                let g0 = bin_index(self.lo[0] + l0 as i64, n[0]);
                *out.get_mut(g0, g1) += self.data[l1 * self.m[0] + l0];
            }
        }
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }
}

/// Packet coefficients per box (coarse first), on each box's lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketCoefficients {
    pub shape: [usize; 2],
    pub coeffs: Vec<Array2<Complex64>>,
}

impl PacketCoefficients {
    pub fn zeros_like(t: &Tiling) -> Self {
        Self { shape: t.shape, coeffs: t.all_boxes().map(|b| Array2::zeros(b.m)).collect() }
    }

    /// Energy per box, coarse first.
    pub fn energies(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c.norm2().powi(2)).collect()
    }

    pub fn total_energy(&self) -> f64 {
        self.energies().iter().sum()
    }
}

/// Inverse-FFT field of a single packet `(box, lattice index)` with unit coefficient.
pub fn packet(t: &Tiling, box_index: usize, j: [usize; 2]) -> Result<Array2<Complex64>> {
    let mut pc = PacketCoefficients::zeros_like(t);
    let c = pc.coeffs.get_mut(box_index).ok_or_else(|| Error::invalid("box_index", "out of range"))?;
    if j[0] >= c.n[0] || j[1] >= c.n[1] {
        return Err(Error::invalid("lattice index", "out of range"));
    }
    *c.get_mut(j[0], j[1]) = Complex64::new(1.0, 0.0);
    t.synthesize(&pc)
}
