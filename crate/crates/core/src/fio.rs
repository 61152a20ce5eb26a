//! Box-wise evaluation of the continuation operators: coordinate transforms
//! from ray families, second-order phase data, a low-rank separation of the
//! residual phase factor and summation by type-2 NUFFT.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix2, Vector2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::model::Speed;
use crate::nufft::Nufft2;
use crate::rays::{integrate, Direction, Phase, Propagator, CAUSTIC_THRESHOLD, STEPS_PER_INTERVAL};

/// Maximum separation rank before the caller must shorten the interval.
pub const RANK_MAX: usize = 64;
/// Nodes of the tabulated phase coefficient.
const H_NODES: usize = 64;
/// Upper bound on frequency samples in the separation.
const Q_SAMPLES: usize = 256;

/// Relative accuracy target of the separation at scale `k`.
pub fn scale_tolerance(k: usize) -> f64 {
    2f64.powf(-(k as f64) / 2.0)
}

/// `(d^2 theta / dy dxi, d^2 theta / dxi^2, d^2 theta / dy^2)` of the
/// generating phase, from the propagator matrix.
pub fn phase_hessians(w: &Propagator) -> Result<(Matrix2<f64>, Matrix2<f64>, Matrix2<f64>)> {
    let w1 = w.w1();
    let det = w1.determinant();
    let inv = w1.try_inverse().filter(|_| det.abs() >= 1e-14).ok_or(Error::Caustic { det: det.abs(), threshold: CAUSTIC_THRESHOLD })?;
    let h_xx = -inv * w.w2();
    let h_yy = w.w3() * inv;
    Ok((inv, 0.5 * (h_xx + h_xx.transpose()), 0.5 * (h_yy + h_yy.transpose())))
}

/// One sample of a ray family: where it lands, how it moves with its
/// parameters, and what it carries.
#[derive(Debug, Clone, Copy)]
pub struct MappedSample {
    pub y: Vector2<f64>,
    /// `dy / d(param)`.
    pub jac: Matrix2<f64>,
    pub param: [f64; 2],
    pub amp: f64,
    /// Coefficient of the quadratic phase residual.
    pub h: f64,
    /// Unit propagation direction at `y`.
    pub dir: Vector2<f64>,
    /// Preference when several samples cover a point (smaller wins).
    pub key: f64,
    pub valid: bool,
}

/// Samples on a regular parameter lattice, axis 0 fastest.
#[derive(Debug, Clone)]
pub struct SampleGrid {
    pub n: [usize; 2],
    pub spacing: [f64; 2],
    pub samples: Vec<MappedSample>,
}

impl SampleGrid {
    fn at(&self, a: usize, b: usize) -> &MappedSample {
        &self.samples[b * self.n[0] + a]
    }
}

/// Transform data at one target grid point.
#[derive(Debug, Clone, Copy)]
pub struct Covered {
    pub index: usize,
    pub param: [f64; 2],
    pub amp: f64,
    pub h: f64,
    pub dir: [f64; 2],
    key: f64,
}

/// Target grid points reached by a ray family.
#[derive(Debug, Clone, Default)]
pub struct Coverage {
    pub points: Vec<Covered>,
}

impl Coverage {
    pub fn h_range(&self) -> Option<[f64; 2]> {
        let mut r = [f64::INFINITY, f64::NEG_INFINITY];
        for p in &self.points {
            r[0] = r[0].min(p.h);
            r[1] = r[1].max(p.h);
        }
        (r[0] <= r[1]).then_some(r)
    }
}

/// Invert the parameter-to-target map of a family onto a grid. Inside each
/// lattice cell the parameter is a bilinear blend of the four first-order
/// Taylor inversions at the corners.
pub fn rasterize(family: &SampleGrid, grid: &GridSpec) -> Coverage {
    let n = grid.n;
    let mut best: Vec<Option<Covered>> = vec![None; grid.len()];
    let [na, nb] = family.n;
    for b in 0..nb.saturating_sub(1) {
        for a in 0..na.saturating_sub(1) {
            let c = [family.at(a, b), family.at(a + 1, b), family.at(a + 1, b + 1), family.at(a, b + 1)];
            if c.iter().any(|s| !s.valid) {
                continue;
            }
            let mut lo = [f64::INFINITY; 2];
            let mut hi = [f64::NEG_INFINITY; 2];
            for s in &c {
                for ax in 0..2 {
                    lo[ax] = lo[ax].min(s.y[ax]);
                    hi[ax] = hi[ax].max(s.y[ax]);
                }
            }
            let i0a = grid.frac_index(0, lo[0]).ceil().max(0.0);
            let i0b = grid.frac_index(0, hi[0]).floor().min((n[0] - 1) as f64);
            let i1a = grid.frac_index(1, lo[1]).ceil().max(0.0);
            let i1b = grid.frac_index(1, hi[1]).floor().min((n[1] - 1) as f64);
            if i0b < i0a || i1b < i1a {
                continue;
            }
            let inv: Vec<Option<Matrix2<f64>>> = c.iter().map(|s| s.jac.try_inverse()).collect();
            let Some(inv0) = inv[0] else { continue };
            for i1 in i1a as usize..=i1b as usize {
                for i0 in i0a as usize..=i0b as usize {
                    let y = Vector2::from(grid.point(i0, i1));
                    if !in_quad(&y, [c[0].y, c[1].y, c[2].y, c[3].y]) {
                        continue;
                    }
                    let u = inv0 * (y - c[0].y);
                    let la = (u[0] / family.spacing[0]).clamp(0.0, 1.0);
                    let lb = (u[1] / family.spacing[1]).clamp(0.0, 1.0);
                    let wts = [(1.0 - la) * (1.0 - lb), la * (1.0 - lb), la * lb, (1.0 - la) * lb];
                    let mut param = [0.0; 2];
                    let mut amp = 0.0;
                    let mut h = 0.0;
                    let mut dir = Vector2::zeros();
                    let mut key = 0.0;
                    for ((s, w), iv) in c.iter().zip(wts).zip(&inv) {
                        let d = match iv {
                            Some(m) => m * (y - s.y),
                            None => inv0 * (y - s.y),
                        };
                        param[0] += w * (s.param[0] + d[0]);
                        param[1] += w * (s.param[1] + d[1]);
                        amp += w * s.amp;
                        h += w * s.h;
                        dir += w * s.dir;
                        key += w * s.key;
                    }
                    let dn = dir.norm();
                    let cand = Covered { index: i1 * n[0] + i0, param, amp, h, dir: [dir[0] / dn, dir[1] / dn], key };
                    let slot = &mut best[cand.index];
                    if slot.map_or(true, |o| cand.key < o.key) {
                        *slot = Some(cand);
                    }
                }
            }
        }
    }
    Coverage { points: best.into_iter().flatten().collect() }
}

fn cross(a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn in_tri(p: &Vector2<f64>, a: Vector2<f64>, b: Vector2<f64>, c: Vector2<f64>) -> bool {
    let area = cross(b - a, c - a);
    if area == 0.0 {
        return false;
    }
    let s = area.signum();
    let tol = -1e-12 * area.abs();
    s * cross(b - a, p - a) >= tol && s * cross(c - b, p - b) >= tol && s * cross(a - c, p - c) >= tol
}

fn in_quad(p: &Vector2<f64>, q: [Vector2<f64>; 4]) -> bool {
    in_tri(p, q[0], q[1], q[2]) || in_tri(p, q[0], q[2], q[3])
}

/// Rays leaving the boundary `x_n = 0` with unit direction
/// `(sin a, cos a)`, parametrized by `(x0', s)`.
///
/// `s` runs over `[0, s_max]` in `steps` RK4 steps. The quadratic phase
/// coefficient multiplies `(xi' - p tau)^2 / tau` where `p = sin a / c0`.
pub fn boundary_family<S: Speed + ?Sized>(
    model: &S,
    c0: f64,
    sin_angle: f64,
    x0: &[f64],
    s_max: f64,
    steps: usize,
) -> SampleGrid {
    let cos_a = (1.0 - sin_angle * sin_angle).sqrt();
    let eta0 = Vector2::new(sin_angle, cos_a) / c0;
    // d eta0 / dp at fixed boundary speed
    let v = Vector2::new(1.0, -sin_angle / cos_a);
    let ds = s_max / steps as f64;
    let ref_det = c0 * cos_a;
    let mut samples = vec![None; x0.len() * (steps + 1)];
    let sample = |p: &Phase, s: f64| -> MappedSample {
        let q = model.eval([p.state.y[0], p.state.y[1]]);
        let e = p.state.eta / p.state.eta.norm();
        let jac = Matrix2::from_columns(&[p.w.w1().column(0).into_owned(), q.c * e]);
        let det = jac.determinant();
        let (amp, h, valid) = match jac.try_inverse() {
            Some(inv) if det.abs() >= CAUSTIC_THRESHOLD * ref_det => (det.abs().powf(-0.5), -(inv * p.w.w2() * v)[0], true),
            _ => (0.0, 0.0, false),
        };
        MappedSample { y: p.state.y, jac, param: [0.0, s], amp, h, dir: e, key: s, valid }
    };
    let nx = x0.len();
    let rows: Vec<Vec<MappedSample>> = {
        use rayon::prelude::*;
        x0.par_iter()
            .map(|&x| {
                let start = Phase::new([x, 0.0], [eta0[0], eta0[1]]);
                let mut out = Vec::with_capacity(steps + 1);
                out.push(sample(&start, 0.0));
                integrate(model, start, s_max, steps, Direction::Forward, true, |i, p| {
                    out.push(sample(p, i as f64 * ds));
                    true
                });
                for m in out.iter_mut() {
                    m.param[0] = x;
                }
                out
            })
            .collect()
    };
    for (i, row) in rows.into_iter().enumerate() {
        for (j, m) in row.into_iter().enumerate() {
            samples[j * nx + i] = Some(m);
        }
    }
    let dx = if nx > 1 { x0[1] - x0[0] } else { 1.0 };
    SampleGrid { n: [nx, steps + 1], spacing: [dx, ds], samples: samples.into_iter().map(|s| s.unwrap()).collect() }
}

/// Rays started on a lattice of interior points with the common unit
/// direction `dir`, evolved for time `t`. Parameters are the start points;
/// the quadratic phase coefficient multiplies `zeta_perp^2 / |zeta|`.
pub fn interior_family<S: Speed + ?Sized>(model: &S, dir: Vector2<f64>, starts: &GridSpec, t: f64, steps: usize) -> SampleGrid {
    use rayon::prelude::*;
    let perp = Vector2::new(-dir[1], dir[0]);
    let samples: Vec<MappedSample> = (0..starts.len())
        .into_par_iter()
        .map(|k| {
            let x = starts.point(k % starts.n[0], k / starts.n[0]);
            let cx = model.speed(x);
            let eta0 = dir / cx;
            let p = integrate(model, Phase::new(x, [eta0[0], eta0[1]]), t, steps, Direction::Forward, true, |_, _| true);
            let w1 = p.w.w1();
            let det = w1.determinant();
            let e = p.state.eta / p.state.eta.norm();
            let (amp, h, valid) = match w1.try_inverse() {
                Some(inv) if det.abs() >= CAUSTIC_THRESHOLD => {
                    (det.abs().powf(-0.5), perp.dot(&(-inv * p.w.w2() * perp)) * eta0.norm(), true)
                }
                _ => (0.0, 0.0, false),
            };
            MappedSample { y: p.state.y, jac: w1, param: x, amp, h, dir: e, key: -det.abs(), valid }
        })
        .collect();
    SampleGrid { n: starts.n, spacing: starts.spacing, samples }
}

/// Smallest `1 + n . eta_hat` kept by the imaging condition; below it the
/// continued wave travels with the source wave (transmission).
pub const MIN_OBLIQUITY: f64 = 0.1;

/// Steps of extrapolation allowed beyond the evolution interval when
/// locating imaging roots.
pub const SEAM_STEPS: usize = 2;

/// Source travel time `T` and unit normal `grad T / |grad T|` at a point,
/// `None` outside the illuminated region.
pub type SourceLookup<'a> = dyn Fn(Vector2<f64>) -> Option<(f64, Vector2<f64>)> + Sync + 'a;

/// Rays of an interior family stopped where they meet the source isochron:
/// from start `x`, the first `s` in `(0, t]` with `t_target - s = T(y^s)`.
/// Parameters are the starts; `jac` is `d y^{s*} / d x` including the
/// variation of `s*`.
pub fn imaging_family<S: Speed + ?Sized>(
    model: &S,
    dir: Vector2<f64>,
    starts: &GridSpec,
    t: f64,
    steps: usize,
    t_target: f64,
    source: &SourceLookup,
) -> SampleGrid {
    use rayon::prelude::*;
    let perp = Vector2::new(-dir[1], dir[0]);
    let h_step = t / steps.max(1) as f64;
    let invalid = |x: [f64; 2]| MappedSample {
        y: Vector2::new(x[0], x[1]),
        jac: Matrix2::identity(),
        param: x,
        amp: 0.0,
        h: 0.0,
        dir,
        key: 0.0,
        valid: false,
    };
    let samples: Vec<MappedSample> = (0..starts.len())
        .into_par_iter()
        .map(|k| {
            let x = starts.point(k % starts.n[0], k / starts.n[0]);
            let eta0 = dir / model.speed(x);
            let start = Phase::new(x, [eta0[0], eta0[1]]);
            let Some((t0, _)) = source(start.state.y) else { return invalid(x) };
            // Roots up to SEAM_STEPS past either end of (0, t] are extrapolated
            // so cells straddling a seam keep all their vertices
            let f0 = t_target - t0;
            let mut f_prev = f0;
            let mut prev = start;
            let mut hit: Option<Phase> = None;
            let total = steps + SEAM_STEPS;
            integrate(model, start, h_step * total as f64, total, Direction::Forward, true, |i, p| {
                let Some((tp, _)) = source(p.state.y) else { return false };
                let f = t_target - i as f64 * h_step - tp;
                let a = if f0 <= 0.0 {
                    if f >= f0 {
                        return false;
                    }
                    f0 / (f0 - f)
                } else if f <= 0.0 {
                    f_prev / (f_prev - f)
                } else {
                    f_prev = f;
                    prev = *p;
                    return true;
                };
                if a < -(SEAM_STEPS as f64) {
                    return false;
                }
                hit = Some(Phase {
                    state: crate::rays::RayState {
                        y: prev.state.y + a * (p.state.y - prev.state.y),
                        eta: prev.state.eta + a * (p.state.eta - prev.state.eta),
                    },
                    w: Propagator(prev.w.0 + a * (p.w.0 - prev.w.0)),
                });
                false
            });
            let Some(p) = hit else { return invalid(x) };
            let Some((_, n)) = source(p.state.y) else { return invalid(x) };
            let e = p.state.eta / p.state.eta.norm();
            let ob = 1.0 + n.dot(&e);
            let w1 = p.w.w1();
            let det = w1.determinant();
            match w1.try_inverse() {
                Some(inv) if det.abs() >= CAUSTIC_THRESHOLD && ob >= MIN_OBLIQUITY => {
                    let jac = (Matrix2::identity() - e * n.transpose() / ob) * w1;
                    MappedSample {
                        y: p.state.y,
                        jac,
                        param: x,
                        amp: det.abs().powf(-0.5),
                        h: perp.dot(&(-inv * p.w.w2() * perp)) * eta0.norm(),
                        dir: e,
                        key: -det.abs(),
                        valid: true,
                    }
                }
                _ => invalid(x),
            }
        })
        .collect();
    SampleGrid { n: starts.n, spacing: starts.spacing, samples }
}

/// Default RK4 step count for evolving over `t` with interval length `t1`.
pub fn steps_for(t: f64, t1: f64) -> usize {
    ((t / t1 * STEPS_PER_INTERVAL as f64).ceil() as usize).max(1)
}

/// `exp(i h q / 2) ~ sum_r alpha_r(h) theta_r(q)` on a box.
#[derive(Debug, Clone)]
pub struct SeparatedExpansion {
    h0: f64,
    dh: f64,
    /// `alpha[r][i]` at node `h0 + i dh`.
    alpha: Vec<Vec<Complex64>>,
    nodes: Vec<f64>,
    /// Max reconstruction error measured on off-node samples.
    pub error: f64,
}

impl SeparatedExpansion {
    /// Single-term expansion for a constant coefficient.
    pub fn constant(h: f64) -> Self {
        Self { h0: h, dh: 0.0, alpha: vec![vec![Complex64::new(1.0, 0.0)]], nodes: vec![h], error: 0.0 }
    }

    pub fn rank(&self) -> usize {
        self.alpha.len()
    }

    /// Separation over `h in h_range` and the given frequency samples,
    /// truncated at the smallest rank whose max error is at most `eps`.
    pub fn build(h_range: [f64; 2], q: &[f64], eps: f64, rank_max: usize) -> Result<Self> {
        let q_abs = q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if (h_range[1] - h_range[0]) * q_abs < 1e-9 || q.is_empty() {
            return Ok(Self::constant(0.5 * (h_range[0] + h_range[1])));
        }
        let qs = subsample(q, Q_SAMPLES);
        let dh = (h_range[1] - h_range[0]) / (H_NODES - 1) as f64;
        let nodes: Vec<f64> = (0..H_NODES).map(|i| h_range[0] + i as f64 * dh).collect();
        let e = DMatrix::from_fn(H_NODES, qs.len(), |i, j| Complex64::from_polar(1.0, 0.5 * nodes[i] * qs[j]));
        let svd = e.svd(true, false);
        let u = svd.u.expect("left singular vectors");
        let cols = u.ncols();
        // off-node test points where interpolation is weakest
        let test_h: Vec<f64> = (0..H_NODES - 1).map(|i| h_range[0] + (i as f64 + 0.5) * dh).collect();
        let mut alpha: Vec<Vec<Complex64>> = Vec::new();
        for r in 0..cols.min(rank_max) {
            alpha.push((0..H_NODES).map(|i| u[(i, r)]).collect());
            let cand = Self { h0: h_range[0], dh, alpha: alpha.clone(), nodes: nodes.clone(), error: 0.0 };
            let mut err: f64 = 0.0;
            for &qv in &qs {
                let th = cand.theta(qv);
                for &hv in test_h.iter().chain(nodes.iter().step_by(7)) {
                    let a = cand.alpha(hv);
                    let approx: Complex64 = a.iter().zip(&th).map(|(x, y)| x * y).sum();
                    err = err.max((approx - Complex64::from_polar(1.0, 0.5 * hv * qv)).norm());
                }
            }
            if err <= eps {
                return Ok(Self { error: err, ..cand });
            }
        }
        Err(Error::RankBlowUp { rank: cols.min(rank_max) + 1, max: rank_max })
    }

    /// Spatial factors at coefficient `h` (cubic interpolation in `h`).
    pub fn alpha(&self, h: f64) -> Vec<Complex64> {
        if self.dh == 0.0 {
            return self.alpha.iter().map(|a| a[0]).collect();
        }
        let n = self.nodes.len();
        let x = ((h - self.h0) / self.dh).clamp(0.0, (n - 1) as f64);
        let i = (x.floor() as usize).min(n - 2);
        let t = x - i as f64;
        let idx = |k: i64| k.clamp(0, n as i64 - 1) as usize;
        let (i0, i1, i2, i3) = (idx(i as i64 - 1), i, i + 1, idx(i as i64 + 2));
        let w = catmull_rom(t);
        self.alpha.iter().map(|a| a[i0] * w[0] + a[i1] * w[1] + a[i2] * w[2] + a[i3] * w[3]).collect()
    }

    /// Frequency factors `theta_r(q) = sum_i conj(alpha_r[i]) exp(i h_i q / 2)`.
    pub fn theta(&self, q: f64) -> Vec<Complex64> {
        if self.dh == 0.0 {
            return vec![Complex64::from_polar(1.0, 0.5 * self.h0 * q)];
        }
        let phases: Vec<Complex64> = self.nodes.iter().map(|&h| Complex64::from_polar(1.0, 0.5 * h * q)).collect();
        self.alpha.iter().map(|a| a.iter().zip(&phases).map(|(u, p)| u.conj() * p).sum()).collect()
    }
}

fn catmull_rom(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

/// At most `k` values spread over the sorted range of `q`.
fn subsample(q: &[f64], k: usize) -> Vec<f64> {
    let mut s: Vec<f64> = q.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    s.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    if s.len() <= k {
        return s;
    }
    (0..k).map(|i| s[i * (s.len() - 1) / (k - 1)]).collect()
}

/// Windowed spectrum of one box on its sub-lattice of input-domain bins.
#[derive(Debug, Clone)]
pub struct BoxInput<'a> {
    pub lo: [i64; 2],
    pub m: [usize; 2],
    pub data: &'a [Complex64],
    /// Quadratic phase variable per bin.
    pub q: &'a [f64],
}

/// Accumulate `a(y) sum_r alpha_r(h(y)) sum_zeta exp(i <T(y), zeta>)
/// spec(zeta) theta_r(q(zeta))` into `out` at the covered points.
///
/// `points[i]` is the transform `T` of `coverage.points[i]`, in the input
/// domain's coordinates; `domain` is the input sampling (period and
/// origin). `scale` multiplies every contribution.
pub fn apply_box(
    input: &BoxInput,
    domain: &GridSpec,
    expansion: &SeparatedExpansion,
    coverage: &Coverage,
    points: &[[f64; 2]],
    amp: &[f64],
    scale: Complex64,
    out: &mut [Complex64],
) {
    let plan = Nufft2::new(input.m, input.lo);
    let r = expansion.rank();
    let theta: Vec<Vec<Complex64>> =
        input.data.iter().zip(input.q).map(|(g, &q)| if g.norm_sqr() == 0.0 { Vec::new() } else { expansion.theta(q) }).collect();
    let prepared: Vec<Vec<Complex64>> = (0..r)
        .map(|k| {
            let spec: Vec<Complex64> = input.data.iter().zip(&theta).map(|(g, th)| if th.is_empty() { Complex64::default() } else { g * th[k] }).collect();
            plan.prepare(&spec)
        })
        .collect();
    let to_rad = |t: [f64; 2]| [2.0 * PI * (t[0] - domain.origin[0]) / domain.extent(0), 2.0 * PI * (t[1] - domain.origin[1]) / domain.extent(1)];
    for ((c, t), &a) in coverage.points.iter().zip(points).zip(amp) {
        if a == 0.0 {
            continue;
        }
        let pw = plan.weights(to_rad(*t));
        let alpha = expansion.alpha(c.h);
        let mut acc = Complex64::default();
        for (p, al) in prepared.iter().zip(&alpha) {
            acc += al * plan.eval_prepared(p, &pw);
        }
        out[c.index] += scale * a * acc;
    }
}
