//! Smooth velocity models with analytic derivatives, and line-reflector
//! models used only by the finite-difference data generator.

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::grid::{Array2, GridSpec};

/// Speed with gradient and Hessian at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedSample {
    pub c: f64,
    pub grad: Vector2<f64>,
    pub hess: Matrix2<f64>,
}

/// Anything that can report `c`, `grad c` and `Hess c`.
pub trait Speed: Send + Sync {
    fn eval(&self, x: [f64; 2]) -> SpeedSample;

    fn speed(&self, x: [f64; 2]) -> f64 {
        self.eval(x).c
    }
}

/// One Gaussian low-velocity (or high-velocity, for negative contrast) lens.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lens {
    pub contrast: f64,
    pub center: [f64; 2],
    pub widths: [f64; 2],
}

/// `c(x) = c0 (1 - taper(x_n) sum_i f_i exp(-|(x - x_i) / w_i|^2))`.
///
/// `taper` is a quintic ramp that vanishes identically for
/// `x_n <= boundary_layer`, so the speed is laterally constant at the surface.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityModel {
    pub c0: f64,
    pub lenses: Vec<Lens>,
    pub boundary_layer: f64,
    pub bounds: Option<[[f64; 2]; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Constant,
    GaussianLens,
    Sum,
}

impl VelocityModel {
    pub fn constant(c0: f64) -> Result<Self> {
        if !(c0 > 0.0) {
            return Err(Error::invalid("c0", "speed must be positive"));
        }
        Ok(Self { c0, lenses: Vec::new(), boundary_layer: 0.0, bounds: None })
    }

    pub fn kind(&self) -> ModelKind {
        match self.lenses.len() {
            0 => ModelKind::Constant,
            1 => ModelKind::GaussianLens,
            _ => ModelKind::Sum,
        }
    }

    pub fn with_lens(mut self, lens: Lens) -> Result<Self> {
        validate_lens(&lens)?;
        self.lenses.push(lens);
        self.check_positive()?;
        Ok(self)
    }

    pub fn with_boundary_layer(mut self, depth: f64) -> Self {
        self.boundary_layer = depth.max(0.0);
        self
    }

    pub fn with_bounds(mut self, grid: &GridSpec) -> Self {
        self.bounds = Some([[grid.origin[0], grid.max_coord(0)], [grid.origin[1], grid.max_coord(1)]]);
        self
    }

    /// Lower bound on the speed, used for positivity checks and CFL.
    pub fn min_speed_bound(&self) -> f64 {
        let pos: f64 = self.lenses.iter().map(|l| l.contrast.max(0.0)).sum();
        self.c0 * (1.0 - pos)
    }

    pub fn max_speed_bound(&self) -> f64 {
        let neg: f64 = self.lenses.iter().map(|l| (-l.contrast).max(0.0)).sum();
        self.c0 * (1.0 + neg)
    }

    fn check_positive(&self) -> Result<()> {
        if self.min_speed_bound() <= 0.0 {
            return Err(Error::invalid("contrast", "lens contrasts allow non-positive speed"));
        }
        Ok(())
    }

    /// Copy with every lens shifted by `dx`.
    pub fn shifted(&self, dx: [f64; 2]) -> Self {
        let mut m = self.clone();
        for l in &mut m.lenses {
            l.center[0] += dx[0];
            l.center[1] += dx[1];
        }
        m
    }

    fn taper(&self, z: f64) -> (f64, f64, f64) {
        let w = self.boundary_layer;
        if w <= 0.0 {
            return (1.0, 0.0, 0.0);
        }
        // ramp over [w, 2w]
        let t = (z - w) / w;
        if t <= 0.0 {
            (0.0, 0.0, 0.0)
        } else if t >= 1.0 {
            (1.0, 0.0, 0.0)
        } else {
            let v = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
            let d = 30.0 * t * t * (1.0 - t) * (1.0 - t) / w;
            let dd = 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t) / (w * w);
            (v, d, dd)
        }
    }
}

fn validate_lens(l: &Lens) -> Result<()> {
    if !(l.widths[0] > 0.0 && l.widths[1] > 0.0) {
        return Err(Error::invalid("widths", "lens widths must be positive"));
    }
    if !(l.contrast.abs() < 1.0) {
        return Err(Error::invalid("contrast_fraction", "must satisfy |f| < 1"));
    }
    Ok(())
}

/// Gaussian low-velocity lens: `c = c0 (1 - f exp(-|(x - center)/widths|^2))`.
pub fn make_gaussian_lens(c0: f64, contrast_fraction: f64, center: [f64; 2], widths: [f64; 2]) -> Result<VelocityModel> {
    if !(contrast_fraction > 0.0 && contrast_fraction < 1.0) {
        return Err(Error::invalid("contrast_fraction", "must lie in (0, 1)"));
    }
    VelocityModel::constant(c0)?.with_lens(Lens { contrast: contrast_fraction, center, widths })
}

impl Speed for VelocityModel {
    fn eval(&self, x: [f64; 2]) -> SpeedSample {
        let mut p = x;
        let mut frozen = [false, false];
        if let Some(b) = self.bounds {
            for a in 0..2 {
                if p[a] < b[a][0] {
                    p[a] = b[a][0];
                    frozen[a] = true;
                } else if p[a] > b[a][1] {
                    p[a] = b[a][1];
                    frozen[a] = true;
                }
            }
        }
        // perturbation q = sum_i g_i, c = c0 (1 - s(z) q)
        let mut q = 0.0;
        let mut gq = Vector2::zeros();
        let mut hq = Matrix2::zeros();
        for l in &self.lenses {
            let u = [(p[0] - l.center[0]) / l.widths[0], (p[1] - l.center[1]) / l.widths[1]];
            let g = l.contrast * (-(u[0] * u[0] + u[1] * u[1])).exp();
            let d = Vector2::new(-2.0 * u[0] / l.widths[0], -2.0 * u[1] / l.widths[1]);
            q += g;
            gq += d * g;
            let mut h = d * d.transpose();
            h[(0, 0)] -= 2.0 / (l.widths[0] * l.widths[0]);
            h[(1, 1)] -= 2.0 / (l.widths[1] * l.widths[1]);
            hq += h * g;
        }
        let (s, ds, dds) = self.taper(p[1]);
        let gs = Vector2::new(0.0, ds);
        // r = s q
        let r = s * q;
        let gr = gq * s + gs * q;
        let mut hr = hq * s + gq * gs.transpose() + gs * gq.transpose();
        hr[(1, 1)] += dds * q;
        let mut grad = -gr * self.c0;
        let mut hess = -hr * self.c0;
        for a in 0..2 {
            if frozen[a] {
                grad[a] = 0.0;
                for b in 0..2 {
                    hess[(a, b)] = 0.0;
                    hess[(b, a)] = 0.0;
                }
            }
        }
        SpeedSample { c: self.c0 * (1.0 - r), grad, hess }
    }
}

/// Bicubic (Catmull-Rom) interpolation of a sampled speed, for cross-checks
/// against gridded models.
#[derive(Debug, Clone)]
pub struct GriddedModel {
    pub grid: GridSpec,
    pub values: Array2<f64>,
}

impl GriddedModel {
    pub fn sample<S: Speed + ?Sized>(model: &S, grid: &GridSpec) -> Self {
        let values = Array2::from_fn(grid.n, |i, j| model.speed(grid.point(i, j)));
        Self { grid: *grid, values }
    }

    fn at(&self, i: i64, j: i64) -> f64 {
        let i = i.clamp(0, self.grid.n[0] as i64 - 1) as usize;
        let j = j.clamp(0, self.grid.n[1] as i64 - 1) as usize;
        *self.values.get(i, j)
    }
}

/// Catmull-Rom weights and their first two derivatives at fraction `t`.
fn cr_weights(t: f64) -> ([f64; 4], [f64; 4], [f64; 4]) {
    let t2 = t * t;
    let t3 = t2 * t;
    let w = [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ];
    let d = [
        0.5 * (-3.0 * t2 + 4.0 * t - 1.0),
        0.5 * (9.0 * t2 - 10.0 * t),
        0.5 * (-9.0 * t2 + 8.0 * t + 1.0),
        0.5 * (3.0 * t2 - 2.0 * t),
    ];
    let dd = [0.5 * (-6.0 * t + 4.0), 0.5 * (18.0 * t - 10.0), 0.5 * (-18.0 * t + 8.0), 0.5 * (6.0 * t - 2.0)];
    (w, d, dd)
}

impl Speed for GriddedModel {
    fn eval(&self, x: [f64; 2]) -> SpeedSample {
        let f0 = self.grid.frac_index(0, x[0]).clamp(0.0, (self.grid.n[0] - 1) as f64);
        let f1 = self.grid.frac_index(1, x[1]).clamp(0.0, (self.grid.n[1] - 1) as f64);
        let i0 = f0.floor() as i64;
        let i1 = f1.floor() as i64;
        let (w0, d0, dd0) = cr_weights(f0 - i0 as f64);
        let (w1, d1, dd1) = cr_weights(f1 - i1 as f64);
        let (h0, h1) = (self.grid.spacing[0], self.grid.spacing[1]);
        let mut c = 0.0;
        let mut g = [0.0; 2];
        let mut h = [0.0; 3];
        for b in 0..4 {
            for a in 0..4 {
                let v = self.at(i0 - 1 + a as i64, i1 - 1 + b as i64);
                c += w0[a] * w1[b] * v;
                g[0] += d0[a] * w1[b] * v;
                g[1] += w0[a] * d1[b] * v;
                h[0] += dd0[a] * w1[b] * v;
                h[1] += d0[a] * d1[b] * v;
                h[2] += w0[a] * dd1[b] * v;
            }
        }
        SpeedSample {
            c,
            grad: Vector2::new(g[0] / h0, g[1] / h1),
            hess: Matrix2::new(h[0] / (h0 * h0), h[1] / (h0 * h1), h[1] / (h0 * h1), h[2] / (h1 * h1)),
        }
    }
}

/// Straight line reflector with a normal-incidence reflectivity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineReflector {
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub reflectivity: f64,
}

impl LineReflector {
    /// Dip angle in radians, measured from the horizontal.
    pub fn dip(&self) -> f64 {
        (self.b[1] - self.a[1]).atan2(self.b[0] - self.a[0])
    }

    pub fn length(&self) -> f64 {
        ((self.b[0] - self.a[0]).powi(2) + (self.b[1] - self.a[1]).powi(2)).sqrt()
    }

    /// Unit normal pointing downward (positive depth component).
    pub fn normal(&self) -> [f64; 2] {
        let l = self.length();
        let t = [(self.b[0] - self.a[0]) / l, (self.b[1] - self.a[1]) / l];
        let n = [-t[1], t[0]];
        if n[1] < 0.0 {
            [-n[0], -n[1]]
        } else {
            n
        }
    }

    /// Distance from a point to the segment.
    pub fn distance(&self, x: [f64; 2]) -> f64 {
        let d = [self.b[0] - self.a[0], self.b[1] - self.a[1]];
        let l2 = d[0] * d[0] + d[1] * d[1];
        let t = (((x[0] - self.a[0]) * d[0] + (x[1] - self.a[1]) * d[1]) / l2).clamp(0.0, 1.0);
        let p = [self.a[0] + t * d[0], self.a[1] + t * d[1]];
        ((x[0] - p[0]).powi(2) + (x[1] - p[1]).powi(2)).sqrt()
    }

    /// Signed distance from the infinite line (positive below).
    pub fn signed_offset(&self, x: [f64; 2]) -> f64 {
        let n = self.normal();
        (x[0] - self.a[0]) * n[0] + (x[1] - self.a[1]) * n[1]
    }
}

/// Collection of line reflectors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReflectivityModel {
    pub segments: Vec<LineReflector>,
}

impl ReflectivityModel {
    pub fn new(segments: Vec<LineReflector>, grid: &GridSpec) -> Result<Self> {
        let lo = [grid.origin[0], grid.origin[1]];
        let hi = [grid.max_coord(0), grid.max_coord(1)];
        for s in &segments {
            for p in [s.a, s.b] {
                if !(p[0] > lo[0] && p[0] < hi[0] && p[1] > lo[1] && p[1] < hi[1]) {
                    return Err(Error::invalid("reflector", format!("endpoint {p:?} not strictly inside the grid")));
                }
            }
        }
        Ok(Self { segments })
    }

    /// Fractional speed perturbation on a grid: one-cell thick lines.
    pub fn perturbation(&self, grid: &GridSpec) -> Array2<f64> {
        let half = 0.5 * grid.spacing[0].min(grid.spacing[1]);
        Array2::from_fn(grid.n, |i, j| {
            let x = grid.point(i, j);
            self.segments.iter().filter(|s| s.distance(x) <= half).map(|s| s.reflectivity).sum()
        })
    }
}
