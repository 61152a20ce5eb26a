//! Bicharacteristics of the half-wave symbol `c(y)|eta|`, their propagator
//! matrices, boundary launch data, caustic-free time splitting and
//! point-source travel-time tables.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix4, Vector2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Array2, GridSpec};
use crate::io::{Container, GridFile};
use crate::model::Speed;

/// Below this `|det W1|` a subinterval is considered too close to a caustic.
pub const CAUSTIC_THRESHOLD: f64 = 0.1;
/// Fixed RK4 steps per subinterval of length `t1`.
pub const STEPS_PER_INTERVAL: usize = 64;
/// Upper bound on the number of time intervals.
pub const NS_MAX: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayState {
    pub y: Vector2<f64>,
    pub eta: Vector2<f64>,
}

/// `W = d(y, eta)^t / d(x, xi)` as a 4x4 matrix with 2x2 blocks
/// `[[W1, W2], [W3, W4]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Propagator(pub Matrix4<f64>);

impl Propagator {
    pub fn identity() -> Self {
        Self(Matrix4::identity())
    }

    pub fn from_blocks(w1: Matrix2<f64>, w2: Matrix2<f64>, w3: Matrix2<f64>, w4: Matrix2<f64>) -> Self {
        let mut m = Matrix4::zeros();
        m.fixed_view_mut::<2, 2>(0, 0).copy_from(&w1);
        m.fixed_view_mut::<2, 2>(0, 2).copy_from(&w2);
        m.fixed_view_mut::<2, 2>(2, 0).copy_from(&w3);
        m.fixed_view_mut::<2, 2>(2, 2).copy_from(&w4);
        Self(m)
    }

    fn block(&self, r: usize, c: usize) -> Matrix2<f64> {
        self.0.fixed_view::<2, 2>(r, c).into_owned()
    }

    pub fn w1(&self) -> Matrix2<f64> {
        self.block(0, 0)
    }
    pub fn w2(&self) -> Matrix2<f64> {
        self.block(0, 2)
    }
    pub fn w3(&self) -> Matrix2<f64> {
        self.block(2, 0)
    }
    pub fn w4(&self) -> Matrix2<f64> {
        self.block(2, 2)
    }

    /// `|| W^T J W - J ||_max`.
    pub fn symplectic_defect(&self) -> f64 {
        let j = symplectic_j();
        (self.0.transpose() * j * self.0 - j).amax()
    }
}

pub fn symplectic_j() -> Matrix4<f64> {
    let mut j = Matrix4::zeros();
    j[(0, 2)] = 1.0;
    j[(1, 3)] = 1.0;
    j[(2, 0)] = -1.0;
    j[(3, 1)] = -1.0;
    j
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

/// Ray state together with its propagator matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phase {
    pub state: RayState,
    pub w: Propagator,
}

impl Phase {
    pub fn new(x: [f64; 2], xi: [f64; 2]) -> Self {
        Self {
            state: RayState { y: Vector2::new(x[0], x[1]), eta: Vector2::new(xi[0], xi[1]) },
            w: Propagator::identity(),
        }
    }
}

/// Result of a trace: final phase and whether the ray left the model bounds.
#[derive(Debug, Clone, Copy)]
pub struct Trace {
    pub phase: Phase,
    pub escaped: bool,
}

#[derive(Clone, Copy)]
struct Deriv {
    dy: Vector2<f64>,
    deta: Vector2<f64>,
    dw: Matrix4<f64>,
}

fn rhs<S: Speed + ?Sized>(model: &S, p: &Phase, sign: f64, with_w: bool) -> Deriv {
    let s = model.eval([p.state.y[0], p.state.y[1]]);
    let n = p.state.eta.norm();
    let e = p.state.eta / n;
    let dy = sign * s.c * e;
    let deta = -sign * n * s.grad;
    let dw = if with_w {
        // Hessian blocks of H = c |eta|
        let h_yy = n * s.hess;
        let h_ye = s.grad * e.transpose();
        let h_ee = s.c * (Matrix2::identity() - e * e.transpose()) / n;
        let mut a = Matrix4::zeros();
        a.fixed_view_mut::<2, 2>(0, 0).copy_from(&h_ye.transpose());
        a.fixed_view_mut::<2, 2>(0, 2).copy_from(&h_ee);
        a.fixed_view_mut::<2, 2>(2, 0).copy_from(&(-h_yy));
        a.fixed_view_mut::<2, 2>(2, 2).copy_from(&(-h_ye));
        sign * a * p.w.0
    } else {
        Matrix4::zeros()
    };
    Deriv { dy, deta, dw }
}

fn advance(p: &Phase, d: &Deriv, h: f64) -> Phase {
    Phase {
        state: RayState { y: p.state.y + d.dy * h, eta: p.state.eta + d.deta * h },
        w: Propagator(p.w.0 + d.dw * h),
    }
}

/// One classical RK4 step.
pub fn rk4_step<S: Speed + ?Sized>(model: &S, p: &Phase, h: f64, dir: Direction, with_w: bool) -> Phase {
    let sg = dir.sign();
    let k1 = rhs(model, p, sg, with_w);
    let k2 = rhs(model, &advance(p, &k1, 0.5 * h), sg, with_w);
    let k3 = rhs(model, &advance(p, &k2, 0.5 * h), sg, with_w);
    let k4 = rhs(model, &advance(p, &k3, h), sg, with_w);
    let w = h / 6.0;
    Phase {
        state: RayState {
            y: p.state.y + (k1.dy + 2.0 * k2.dy + 2.0 * k3.dy + k4.dy) * w,
            eta: p.state.eta + (k1.deta + 2.0 * k2.deta + 2.0 * k3.deta + k4.deta) * w,
        },
        w: Propagator(p.w.0 + (k1.dw + 2.0 * k2.dw + 2.0 * k3.dw + k4.dw) * w),
    }
}

/// Integrate for time `t` in `steps` equal RK4 steps. `observe` sees the
/// phase after every step (step index from 1) and may stop the trace by
/// returning `false`.
pub fn integrate<S: Speed + ?Sized>(
    model: &S,
    start: Phase,
    t: f64,
    steps: usize,
    dir: Direction,
    with_w: bool,
    mut observe: impl FnMut(usize, &Phase) -> bool,
) -> Phase {
    let steps = steps.max(1);
    let h = t / steps as f64;
    let mut p = start;
    for i in 1..=steps {
        p = rk4_step(model, &p, h, dir, with_w);
        if !observe(i, &p) {
            break;
        }
    }
    p
}

fn steps_for(t: f64, h_max: f64) -> usize {
    ((t / h_max).ceil() as usize).max(1)
}

fn check_start(t: f64, xi: [f64; 2]) -> Result<()> {
    if !(t >= 0.0) {
        return Err(Error::invalid("t", format!("must be non-negative, got {t}")));
    }
    if xi[0] == 0.0 && xi[1] == 0.0 {
        return Err(Error::invalid("xi", "covector must be nonzero"));
    }
    Ok(())
}

fn outside(bounds: Option<[[f64; 2]; 2]>, y: &Vector2<f64>) -> bool {
    match bounds {
        Some(b) => y[0] < b[0][0] || y[0] > b[0][1] || y[1] < b[1][0] || y[1] > b[1][1],
        None => false,
    }
}

/// Ray from `(x, xi)` after time `t`, using steps no longer than `h_max`.
/// `bounds` is the padded domain used for the escape flag.
pub fn flow<S: Speed + ?Sized>(
    model: &S,
    x: [f64; 2],
    xi: [f64; 2],
    t: f64,
    dir: Direction,
    h_max: f64,
    bounds: Option<[[f64; 2]; 2]>,
) -> Result<Trace> {
    trace(model, x, xi, t, dir, h_max, bounds, false)
}

/// As [`flow`], also solving the linearized system for `W` from identity.
pub fn propagate_w<S: Speed + ?Sized>(
    model: &S,
    x: [f64; 2],
    xi: [f64; 2],
    t: f64,
    dir: Direction,
    h_max: f64,
    bounds: Option<[[f64; 2]; 2]>,
) -> Result<Trace> {
    trace(model, x, xi, t, dir, h_max, bounds, true)
}

#[allow(clippy::too_many_arguments)]
fn trace<S: Speed + ?Sized>(
    model: &S,
    x: [f64; 2],
    xi: [f64; 2],
    t: f64,
    dir: Direction,
    h_max: f64,
    bounds: Option<[[f64; 2]; 2]>,
    with_w: bool,
) -> Result<Trace> {
    check_start(t, xi)?;
    let mut escaped = false;
    let phase = integrate(model, Phase::new(x, xi), t, steps_for(t, h_max), dir, with_w, |_, p| {
        escaped |= outside(bounds, &p.state.y);
        true
    });
    Ok(Trace { phase, escaped })
}

/// `|det W1|^{-1/2}`, refusing to evaluate near a caustic.
pub fn amplitude_from_w(w: &Propagator, threshold: f64) -> Result<f64> {
    let det = w.w1().determinant().abs();
    if det < threshold {
        return Err(Error::Caustic { det, threshold });
    }
    Ok(det.powf(-0.5))
}

/// Initial covector and propagator matrices for a ray leaving the boundary
/// with data direction `nu = (xi', tau) / |(xi', tau)|` where the boundary
/// speed is `c0`.
pub fn boundary_launch(nu: [f64; 2], c0: f64) -> Result<(Vector2<f64>, Propagator)> {
    let (np, nn) = (nu[0], nu[1]);
    let ratio = if nn == 0.0 { f64::INFINITY } else { c0 * np.abs() / nn.abs() };
    if !(ratio < 1.0) {
        return Err(Error::Grazing { ratio });
    }
    let root = (nn * nn / (c0 * c0) - np * np).sqrt();
    let eta = Vector2::new(c0 / nn * np, c0 / nn * root);
    let w1 = Matrix2::new(1.0, 0.0, c0 * eta[0], c0 * eta[1]);
    let s = c0 / nn;
    let w4 = s * Matrix2::new(1.0, c0 * np / (nn * eta[1]), np / nn, c0 * np * np / (nn * nn * eta[1]));
    Ok((eta, Propagator::from_blocks(w1, Matrix2::zeros(), Matrix2::zeros(), w4)))
}

/// Unit downgoing direction of a boundary ray with horizontal slowness
/// `p = xi'/tau`: `(c0 p, sqrt(1 - c0^2 p^2))`.
pub fn launch_direction(c0: f64, p: f64) -> Result<Vector2<f64>> {
    let s = c0 * p;
    if !(s.abs() < 1.0) {
        return Err(Error::Grazing { ratio: s.abs() });
    }
    Ok(Vector2::new(s, (1.0 - s * s).sqrt()))
}

/// A monitored boundary ray: lateral start and normalized slowness `c0 p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Launch {
    pub x0: f64,
    pub sin_angle: f64,
}

/// Monitored set: every direction times evenly spaced boundary positions.
/// Rays depend on the data direction only through `c0 xi'/tau`, so the
/// radial frequency does not enter.
pub fn launch_set(sin_angles: &[f64], x_range: [f64; 2], positions: usize) -> Vec<Launch> {
    let mut out = Vec::new();
    for &s in sin_angles {
        for i in 0..positions {
            let x0 = x_range[0] + (i as f64 + 0.5) / positions as f64 * (x_range[1] - x_range[0]);
            out.push(Launch { x0, sin_angle: s });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSchedule {
    pub t_start: f64,
    pub t_end: f64,
    pub ns: usize,
    pub t1: f64,
    pub delta: f64,
}

impl SplitSchedule {
    pub fn new(t_start: f64, t_end: f64, ns: usize, delta: f64) -> Result<Self> {
        if ns == 0 || !(t_end > t_start) {
            return Err(Error::invalid("schedule", format!("need ns >= 1 and t_end > t_start, got ns = {ns}, [{t_start}, {t_end}]")));
        }
        let t1 = (t_end - t_start) / ns as f64;
        if delta >= 0.5 * t1 {
            return Err(Error::OverlapTooLarge { delta, half: 0.5 * t1 });
        }
        Ok(Self { t_start, t_end, ns, t1, delta })
    }

    /// Field time stamp attached to slice `n` (1-based).
    pub fn stamp(&self, n: usize) -> f64 {
        self.t_start + (n - 1) as f64 * self.t1
    }
}

/// Smallest `|det W1|` along each subinterval of a ray restarted with
/// identity `W` at every multiple of `t1`.
pub fn min_det_per_interval<S: Speed + ?Sized>(model: &S, c0: f64, launch: &Launch, t1: f64, ns: usize) -> Vec<f64> {
    let dir = Vector2::new(launch.sin_angle, (1.0 - launch.sin_angle.powi(2)).max(0.0).sqrt()) / c0;
    let mut p = Phase::new([launch.x0, 0.0], [dir[0], dir[1]]);
    let mut mins = Vec::with_capacity(ns);
    for _ in 0..ns {
        p.w = Propagator::identity();
        let mut m = f64::INFINITY;
        p = integrate(model, p, t1, STEPS_PER_INTERVAL, Direction::Forward, true, |_, q| {
            m = m.min(q.w.w1().determinant().abs());
            true
        });
        mins.push(m);
    }
    mins
}

/// Smallest number of intervals keeping every monitored ray caustic-free.
pub fn split_schedule<S: Speed + ?Sized>(
    model: &S,
    c0: f64,
    launches: &[Launch],
    t_start: f64,
    t_end: f64,
    delta: f64,
    threshold: f64,
    ns_max: usize,
) -> Result<SplitSchedule> {
    for ns in 1..=ns_max {
        let t1 = (t_end - t_start) / ns as f64;
        if delta >= 0.5 * t1 {
            break;
        }
        let ok = launches
            .par_iter()
            .all(|l| min_det_per_interval(model, c0, l, t1, ns).iter().all(|&d| d >= threshold));
        if ok {
            return SplitSchedule::new(t_start, t_end, ns, delta);
        }
    }
    Err(Error::TooStronglyFocusing { max: ns_max })
}

/// First-arrival travel time, geometric amplitude and incidence direction of
/// a point source, sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceTables {
    pub source: [f64; 2],
    pub grid: GridSpec,
    pub time: Array2<f64>,
    pub amplitude: Array2<f64>,
    /// Unit vector `grad T / |grad T|`, per component.
    pub normal: [Array2<f64>; 2],
    pub mask: Array2<bool>,
}

/// Ray samples: position, covector and `dy/dphi`, `deta/dphi`.
#[derive(Clone, Copy)]
struct FanSample {
    y: Vector2<f64>,
    eta: Vector2<f64>,
    dy: Vector2<f64>,
    deta: Vector2<f64>,
}

impl SourceTables {
    /// Trace a fan of rays over the lower half-plane and grid the first
    /// arrival. `rays` launch angles, time step `h`, total time `t_max`.
    pub fn compute<S: Speed + ?Sized>(model: &S, source: [f64; 2], grid: &GridSpec, rays: usize, h: f64, t_max: f64) -> Self {
        let cs = model.speed(source);
        let steps = steps_for(t_max, h);
        let h = t_max / steps as f64;
        let eps = 1e-3;
        let fan: Vec<Vec<FanSample>> = (0..rays)
            .into_par_iter()
            .map(|i| {
                let phi = eps + (PI - 2.0 * eps) * i as f64 / (rays - 1) as f64;
                let e = Vector2::new(phi.cos(), phi.sin());
                let de = Vector2::new(-phi.sin(), phi.cos());
                let mut out = Vec::with_capacity(steps + 1);
                let start = Phase::new(source, [e[0] / cs, e[1] / cs]);
                let tangent = |p: &Phase| FanSample {
                    y: p.state.y,
                    eta: p.state.eta,
                    dy: p.w.w2() * de / cs,
                    deta: p.w.w4() * de / cs,
                };
                out.push(tangent(&start));
                let span = [[grid.origin[0] - 2.0 * grid.spacing[0], grid.max_coord(0) + 2.0 * grid.spacing[0]], [grid.origin[1] - 2.0 * grid.spacing[1], grid.max_coord(1) + 2.0 * grid.spacing[1]]];
                integrate(model, start, t_max, steps, Direction::Forward, true, |_, p| {
                    out.push(tangent(p));
                    !outside(Some(span), &p.state.y)
                });
                out
            })
            .collect();

        let n = grid.n;
        let mut time = Array2::from_fn(n, |_, _| f64::INFINITY);
        let mut amplitude = Array2::zeros(n);
        let mut normal = [Array2::zeros(n), Array2::zeros(n)];
        let mut mask = Array2::zeros(n);
        for i in 0..rays - 1 {
            let (ra, rb) = (&fan[i], &fan[i + 1]);
            let len = ra.len().min(rb.len());
            for j in 0..len.saturating_sub(1) {
                let corners = [(&ra[j], j), (&rb[j], j), (&rb[j + 1], j + 1), (&ra[j + 1], j + 1)];
                let mut lo = [f64::INFINITY; 2];
                let mut hi = [f64::NEG_INFINITY; 2];
                for (c, _) in &corners {
                    for a in 0..2 {
                        lo[a] = lo[a].min(c.y[a]);
                        hi[a] = hi[a].max(c.y[a]);
                    }
                }
                let i0a = (grid.frac_index(0, lo[0]).ceil().max(0.0)) as usize;
                let i0b = grid.frac_index(0, hi[0]).floor().min((n[0] - 1) as f64);
                let i1a = (grid.frac_index(1, lo[1]).ceil().max(0.0)) as usize;
                let i1b = grid.frac_index(1, hi[1]).floor().min((n[1] - 1) as f64);
                if i0b < 0.0 || i1b < 0.0 {
                    continue;
                }
                for i1 in i1a..=i1b as usize {
                    for i0 in i0a..=i0b as usize {
                        let y = Vector2::from(grid.point(i0, i1));
                        if !in_quad(&y, [corners[0].0.y, corners[1].0.y, corners[2].0.y, corners[3].0.y]) {
                            continue;
                        }
                        // second-order Taylor from the nearest corner
                        let (c, jc) = corners
                            .iter()
                            .min_by(|a, b| (a.0.y - y).norm_squared().total_cmp(&(b.0.y - y).norm_squared()))
                            .unwrap();
                        let cy = model.eval([c.y[0], c.y[1]]);
                        let ydot = cy.c * c.eta / c.eta.norm();
                        let edot = -c.eta.norm() * cy.grad;
                        let jy = Matrix2::from_columns(&[ydot, c.dy]);
                        let je = Matrix2::from_columns(&[edot, c.deta]);
                        let m = match jy.try_inverse() {
                            Some(inv) => je * inv,
                            None => Matrix2::zeros(),
                        };
                        let d = y - c.y;
                        // osculating circle across the front, Taylor terms along the ray
                        let e0 = c.eta / c.eta.norm();
                        let ep = Vector2::new(-e0[1], e0[0]);
                        let (a, b) = (e0.dot(&d), ep.dot(&d));
                        let kappa = cy.c * ep.dot(&(m * ep));
                        let across = (2.0 * a + kappa * d.norm_squared()) / ((e0 + kappa * d).norm() + 1.0) / cy.c;
                        let t = *jc as f64 * h + across + 0.5 * a * a * e0.dot(&(m * e0)) + a * b * e0.dot(&(m * ep));
                        if t < *time.get(i0, i1) {
                            // exact for circular fronts, first order along the ray
                            let g = e0 + kappa * d + cy.c * a * (m * e0);
                            let cy_at = model.speed([y[0], y[1]]);
                            // advance the ray-tube width to the arrival time
                            let dt = t - *jc as f64 * h;
                            let e = c.eta / c.eta.norm();
                            let ddy = e * cy.grad.dot(&c.dy) + cy.c * (c.deta - e * e.dot(&c.deta)) / c.eta.norm();
                            let spread = (c.dy + dt * ddy).norm().max(1e-300);
                            *time.get_mut(i0, i1) = t;
                            *amplitude.get_mut(i0, i1) = (cs / cy_at).sqrt() / spread.sqrt();
                            let gn = g.norm();
                            *normal[0].get_mut(i0, i1) = g[0] / gn;
                            *normal[1].get_mut(i0, i1) = g[1] / gn;
                            *mask.get_mut(i0, i1) = true;
                        }
                    }
                }
            }
        }
        for (t, m) in time.data.iter_mut().zip(&mask.data) {
            if !m {
                *t = 0.0;
            }
        }
        Self { source, grid: *grid, time, amplitude, normal, mask }
    }

    /// Default fan density and step for a grid.
    pub fn for_grid<S: Speed + ?Sized>(model: &S, source: [f64; 2], grid: &GridSpec, c_min: f64) -> Self {
        let diag = (grid.extent(0).powi(2) + grid.extent(1).powi(2)).sqrt();
        let h = 0.5 * grid.spacing[0].min(grid.spacing[1]) / c_min;
        Self::compute(model, source, grid, 2048, h, 1.05 * diag / c_min)
    }

    /// Export as a grid container: time, amplitude, normal x2, mask.
    pub fn to_grid_file(&self) -> GridFile {
        GridFile {
            kind: Container::Grid,
            grid: self.grid,
            channels: vec![
                self.time.clone(),
                self.amplitude.clone(),
                self.normal[0].clone(),
                self.normal[1].clone(),
                self.mask.map(|&m| if m { 1.0 } else { 0.0 }),
            ],
        }
    }
}

fn cross(a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Point in a (possibly non-convex, possibly folded) quadrilateral by
/// splitting into two triangles.
fn in_quad(p: &Vector2<f64>, q: [Vector2<f64>; 4]) -> bool {
    in_tri(p, q[0], q[1], q[2]) || in_tri(p, q[0], q[2], q[3])
}

fn in_tri(p: &Vector2<f64>, a: Vector2<f64>, b: Vector2<f64>, c: Vector2<f64>) -> bool {
    let area = cross(b - a, c - a);
    if area == 0.0 {
        return false;
    }
    let tol = -1e-12 * area.abs();
    let s = area.signum();
    s * cross(b - a, p - a) >= tol && s * cross(c - b, p - b) >= tol && s * cross(a - c, p - c) >= tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_gaussian_lens, VelocityModel};

    fn lens() -> VelocityModel {
        make_gaussian_lens(1.0, 0.4, [0.0, 0.6], [0.25, 0.25]).unwrap()
    }

    #[test]
    fn straight_ray() {
        let m = VelocityModel::constant(1.0).unwrap();
        let t = flow(&m, [0.0, 0.0], [0.0, 1.0], 2.0, Direction::Forward, 0.01, None).unwrap();
        assert!((t.phase.state.y - Vector2::new(0.0, 2.0)).norm() < 1e-12);
        assert!((t.phase.state.eta - Vector2::new(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn ray_through_lens_centre_stays_straight() {
        let m = lens();
        let t = flow(&m, [0.0, 0.0], [0.0, 2.0], 1.2, Direction::Forward, 1e-3, None).unwrap();
        assert!(t.phase.state.y[0].abs() < 1e-12);
        assert!(t.phase.state.eta[0].abs() < 1e-12);
    }

    #[test]
    fn richardson_against_half_step() {
        let m = lens();
        let a = propagate_w(&m, [0.1, 0.0], [0.2, 1.0], 1.0, Direction::Forward, 2e-3, None).unwrap();
        let b = propagate_w(&m, [0.1, 0.0], [0.2, 1.0], 1.0, Direction::Forward, 1e-3, None).unwrap();
        assert!((a.phase.state.y - b.phase.state.y).norm() < 1e-8);
        assert!((a.phase.state.eta - b.phase.state.eta).norm() < 1e-8);
    }

    #[test]
    fn constant_medium_w_closed_form() {
        let c0 = 1.7;
        let m = VelocityModel::constant(c0).unwrap();
        let xi = Vector2::new(0.6, -0.8) * 2.5;
        let t = 1.3;
        let tr = propagate_w(&m, [0.3, 0.4], [xi[0], xi[1]], t, Direction::Forward, 1e-2, None).unwrap();
        let nh = xi / xi.norm();
        let w2 = t * c0 * (Matrix2::identity() - nh * nh.transpose()) / xi.norm();
        let want = Propagator::from_blocks(Matrix2::identity(), w2, Matrix2::zeros(), Matrix2::identity());
        assert!((tr.phase.w.0 - want.0).amax() < 1e-12);
        assert!((amplitude_from_w(&tr.phase.w, CAUSTIC_THRESHOLD).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn amplitude_grows_towards_caustic() {
        let m = lens();
        let mut prev = 0.0;
        let mut grew = 0;
        integrate(&m, Phase::new([0.05, 0.0], [0.0, 1.0]), 1.0, 200, Direction::Forward, true, |_, p| {
            let d = p.w.w1().determinant().abs();
            if d < CAUSTIC_THRESHOLD {
                assert!(amplitude_from_w(&p.w, CAUSTIC_THRESHOLD).is_err());
                return false;
            }
            let a = amplitude_from_w(&p.w, CAUSTIC_THRESHOLD).unwrap();
            if p.state.y[1] > 0.6 {
                assert!(a >= prev - 1e-12);
                grew += 1;
            }
            prev = a;
            true
        });
        assert!(grew > 10);
    }

    #[test]
    fn boundary_launch_normal_incidence() {
        let (eta, w) = boundary_launch([0.0, 1.0], 1.0).unwrap();
        assert!((eta - Vector2::new(0.0, 1.0)).norm() < 1e-15);
        assert_eq!(w.w2(), Matrix2::zeros());
        assert_eq!(w.w3(), Matrix2::zeros());
        assert_eq!(w.w1(), Matrix2::new(1.0, 0.0, 0.0, 1.0));
        assert!(matches!(boundary_launch([0.8, 0.6], 1.0), Err(Error::Grazing { .. })));
    }

    #[test]
    fn boundary_launch_matches_slowness_solve() {
        // Brute force: find the unit covector whose horizontal slowness
        // c0 eta'/|eta| matches xi'/tau, by bisection on the angle.
        let nu = [0.3, 0.954];
        let c0 = 1.0;
        let (eta, _) = boundary_launch(nu, c0).unwrap();
        let target = nu[0] / nu[1];
        let (mut a, mut b) = (0.0f64, PI / 2.0);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if c0 * mid.sin() < target * c0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        let want = Vector2::new(a.sin(), a.cos());
        assert!((eta - want).norm() < 1e-12);
    }

    #[test]
    fn schedule_constant_medium_is_single_interval() {
        let m = VelocityModel::constant(1.0).unwrap();
        let l = launch_set(&[-0.5, 0.0, 0.5], [-1.0, 1.0], 16);
        let s = split_schedule(&m, 1.0, &l, 0.0, 2.0, 0.01, CAUSTIC_THRESHOLD, NS_MAX).unwrap();
        assert_eq!(s.ns, 1);
    }

    #[test]
    fn schedule_lens_needs_splitting() {
        let m = lens();
        let l = launch_set(&[0.0], [-0.3, 0.3], 16);
        let s = split_schedule(&m, 1.0, &l, 0.0, 2.0, 0.01, CAUSTIC_THRESHOLD, NS_MAX).unwrap();
        assert!(s.ns > 1);
        for x in &l {
            assert!(min_det_per_interval(&m, 1.0, x, s.t1, s.ns).iter().all(|&d| d >= CAUSTIC_THRESHOLD));
        }
    }

    #[test]
    fn source_tables_constant_medium() {
        let g = GridSpec::square(64, 2.0).unwrap();
        let m = VelocityModel::constant(1.0).unwrap();
        let src = [0.0, 0.0];
        let st = SourceTables::for_grid(&m, src, &g, 1.0);
        let mut worst_t: f64 = 0.0;
        let mut worst_n: f64 = 0.0;
        for i1 in 2..64 {
            for i0 in 0..64 {
                assert!(*st.mask.get(i0, i1));
                let y = g.point(i0, i1);
                let r = (y[0] * y[0] + y[1] * y[1]).sqrt();
                worst_t = worst_t.max((st.time.get(i0, i1) - r).abs());
                worst_n = worst_n.max((st.normal[0].get(i0, i1) - y[0] / r).abs());
                assert!((st.amplitude.get(i0, i1) - r.powf(-0.5)).abs() < 1e-3 * r.powf(-0.5));
            }
        }
        assert!(worst_t < 1e-6, "{worst_t}");
        assert!(worst_n < 1e-6, "{worst_n}");
    }

    #[test]
    fn source_tables_lens_eikonal_residual() {
        let g = GridSpec::square(64, 2.0).unwrap();
        let m = make_gaussian_lens(1.0, 0.2, [0.0, 1.0], [0.4, 0.4]).unwrap();
        let st = SourceTables::for_grid(&m, [0.0, 0.0], &g, 0.8);
        let h = g.spacing[0];
        let mut worst: f64 = 0.0;
        for i1 in 16..63 {
            for i0 in 1..63 {
                let tx = (st.time.get(i0 + 1, i1) - st.time.get(i0 - 1, i1)) / (2.0 * h);
                let tz = (st.time.get(i0, i1 + 1) - st.time.get(i0, i1 - 1)) / (2.0 * h);
                let c = m.speed(g.point(i0, i1));
                worst = worst.max((c * (tx * tx + tz * tz).sqrt() - 1.0).abs());
            }
        }
        assert!(worst < 1e-3, "{worst}");
    }
}
