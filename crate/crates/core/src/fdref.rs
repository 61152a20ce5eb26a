//! Finite-difference acoustic solver for the normalized field `u = p / c`:
//! `u_tt - c Lap(c u) = f`, stepped as `v = c u` with
//! `v_tt = c^2 Lap v + c f`. Fourth order in space, leapfrog in time,
//! Cerjan sponge plus first-order one-way edges.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Array2, GridSpec};
use crate::model::Speed;
use crate::rtc::Record;

/// Largest admissible `c_max dt / h`.
pub const CFL_LIMIT: f64 = 0.5;
/// Minimum sponge width in cells.
pub const MIN_SPONGE: usize = 20;

/// Ricker wavelet with peak frequency `f`, centred at `t = 0`.
pub fn ricker(f: f64, t: f64) -> f64 {
    let a = (PI * f * t).powi(2);
    (1.0 - 2.0 * a) * (-a).exp()
}

/// How the wave field is excited.
#[derive(Debug, Clone)]
pub enum Excitation {
    /// Ricker point source peaking at `delay`.
    Point { position: [f64; 2], f_peak: f64, delay: f64 },
    /// Initial field `u(., 0)` and optional `u_t(., 0)` on the interior grid.
    Initial { u0: Array2<f64>, u1: Option<Array2<f64>> },
}

#[derive(Debug, Clone)]
pub struct FdConfig {
    pub dt: f64,
    pub t_max: f64,
    /// Sponge width in cells on every side, including above the surface.
    pub pad: usize,
    /// Record every this many steps.
    pub record_every: usize,
    pub snapshot_times: Vec<f64>,
}

impl FdConfig {
    pub fn new(dt: f64, t_max: f64) -> Self {
        Self { dt, t_max, pad: 40, record_every: 1, snapshot_times: Vec::new() }
    }
}

#[derive(Debug, Clone)]
pub struct FdOutput {
    /// `u` along the row `x_n = 0` of the interior grid.
    pub record: Record,
    pub snapshots: Vec<(f64, Array2<f64>)>,
    /// Total `sum v^2` after every step, for absorption checks.
    pub energy: Vec<f64>,
}

/// Run the solver. `perturbation` scales the speed as `c (1 + p)` on the
/// interior grid (thin reflectors).
pub fn simulate<S: Speed + ?Sized>(
    model: &S,
    perturbation: Option<&Array2<f64>>,
    grid: &GridSpec,
    excitation: &Excitation,
    cfg: &FdConfig,
) -> Result<FdOutput> {
    if (grid.spacing[0] - grid.spacing[1]).abs() > 1e-12 * grid.spacing[0] {
        return Err(Error::invalid("grid", "finite differences need square cells"));
    }
    if cfg.pad < MIN_SPONGE {
        return Err(Error::invalid("pad", format!("sponge must be at least {MIN_SPONGE} cells")));
    }
    if cfg.record_every == 0 || !(cfg.dt > 0.0) || !(cfg.t_max > 0.0) {
        return Err(Error::invalid("fd", "dt, t_max and record_every must be positive"));
    }
    let h = grid.spacing[0];
    let p = cfg.pad;
    let nx = grid.n[0] + 2 * p;
    let nz = grid.n[1] + 2 * p;
    let coord = |i: usize, j: usize| [grid.origin[0] + (i as f64 - p as f64) * h, grid.origin[1] + (j as f64 - p as f64) * h];
    let mut c = vec![0.0; nx * nz];
    for j in 0..nz {
        for i in 0..nx {
            let mut v = model.speed(coord(i, j));
            if let Some(pert) = perturbation {
                if i >= p && j >= p && i - p < grid.n[0] && j - p < grid.n[1] {
                    v *= 1.0 + pert.get(i - p, j - p);
                }
            }
            c[j * nx + i] = v;
        }
    }
    let c_max = c.iter().cloned().fold(0.0, f64::max);
    let cfl = c_max * cfg.dt / h;
    if cfl > CFL_LIMIT {
        return Err(Error::Cfl { cfl, limit: CFL_LIMIT });
    }
    let dt = cfg.dt;
    let coef: Vec<f64> = c.iter().map(|v| v * v * dt * dt / (h * h)).collect();
    // Cerjan damping profile
    let damp_1d = |i: usize, n: usize| -> f64 {
        let d = i.min(n - 1 - i);
        if d >= p {
            1.0
        } else {
            let x = (p - d) as f64 / p as f64;
            (-(0.35 * x).powi(2)).exp()
        }
    };
    let damp: Vec<f64> = (0..nx * nz).map(|k| damp_1d(k % nx, nx) * damp_1d(k / nx, nz)).collect();

    let mut prev = vec![0.0; nx * nz];
    let mut cur = vec![0.0; nx * nz];
    let steps = (cfg.t_max / dt).round() as usize;
    let lap = |v: &[f64], i: usize, j: usize| -> f64 {
        let k = j * nx + i;
        let s = |o: isize| v[(k as isize + o) as usize];
        let w = nx as isize;
        -(s(-2) + s(2) + s(-2 * w) + s(2 * w)) / 12.0 + 4.0 / 3.0 * (s(-1) + s(1) + s(-w) + s(w)) - 5.0 * v[k]
    };
    let mut src_term: Option<(usize, usize, f64, f64)> = None;
    match excitation {
        Excitation::Point { position, f_peak, delay } => {
            let i = (((position[0] - grid.origin[0]) / h).round() as isize + p as isize) as usize;
            let j = (((position[1] - grid.origin[1]) / h).round() as isize + p as isize) as usize;
            if i < 2 || j < 2 || i >= nx - 2 || j >= nz - 2 {
                return Err(Error::invalid("source", "outside the computational grid"));
            }
            src_term = Some((i, j, *f_peak, *delay));
        }
        Excitation::Initial { u0, u1 } => {
            if u0.n != grid.n || u1.as_ref().is_some_and(|a| a.n != grid.n) {
                return Err(Error::GridMismatch { expected: grid.n.to_vec(), got: u0.n.to_vec() });
            }
            for j in 0..grid.n[1] {
                for i in 0..grid.n[0] {
                    let k = (j + p) * nx + i + p;
                    cur[k] = c[k] * u0.get(i, j);
                }
            }
            // v(-dt) by Taylor expansion
            for j in 2..nz - 2 {
                for i in 2..nx - 2 {
                    let k = j * nx + i;
                    let mut v = cur[k] + 0.5 * coef[k] * lap(&cur, i, j);
                    if let Some(u1) = u1 {
                        if i >= p && j >= p && i - p < grid.n[0] && j - p < grid.n[1] {
                            v -= dt * c[k] * u1.get(i - p, j - p);
                        }
                    }
                    prev[k] = v;
                }
            }
        }
    }

    let nrec = steps / cfg.record_every + 1;
    let mut rec = Array2::zeros([grid.n[0], nrec]);
    let row = p;
    let store = |rec: &mut Array2<f64>, v: &[f64], slot: usize| {
        for i in 0..grid.n[0] {
            let k = row * nx + i + p;
            *rec.get_mut(i, slot) = v[k] / c[k];
        }
    };
    store(&mut rec, &cur, 0);
    let mut snaps: Vec<(f64, Array2<f64>)> = Vec::new();
    let mut wanted: Vec<(usize, f64)> = cfg.snapshot_times.iter().map(|&t| ((t / dt).round() as usize, t)).collect();
    wanted.sort_by_key(|w| w.0);
    let snap = |v: &[f64]| Array2::from_fn(grid.n, |i, j| {
        let k = (j + p) * nx + i + p;
        v[k] / c[k]
    });
    let mut wi = 0;
    while wi < wanted.len() && wanted[wi].0 == 0 {
        snaps.push((wanted[wi].1, snap(&cur)));
        wi += 1;
    }
    let mut energy = Vec::with_capacity(steps);
    let mut next = vec![0.0; nx * nz];
    for n in 1..=steps {
        let t_prev = (n - 1) as f64 * dt;
        next.par_chunks_mut(nx).enumerate().for_each(|(j, out)| {
            if j < 2 || j >= nz - 2 {
                return;
            }
            for i in 2..nx - 2 {
                let k = j * nx + i;
                out[i] = 2.0 * cur[k] - prev[k] + coef[k] * lap(&cur, i, j);
            }
        });
        if let Some((i, j, f, delay)) = src_term {
            let k = j * nx + i;
            next[k] += dt * dt * c[k] * ricker(f, t_prev - delay) / (h * h);
        }
        // one-way edges: v_t = c dv/dn towards the interior
        let edge = |next: &mut [f64], k: usize, inner: usize| {
            let r = c[k] * dt / h;
            next[k] = cur[k] + r * (cur[inner] - cur[k]);
        };
        for j in 0..nz {
            let b = j * nx;
            for (i, ii) in [(0, 1), (1, 2), (nx - 1, nx - 2), (nx - 2, nx - 3)] {
                edge(&mut next, b + i, b + ii);
            }
        }
        for i in 0..nx {
            for (j, jj) in [(0, 1), (1, 2), (nz - 1, nz - 2), (nz - 2, nz - 3)] {
                edge(&mut next, j * nx + i, jj * nx + i);
            }
        }
        for k in 0..nx * nz {
            next[k] *= damp[k];
            cur[k] *= damp[k];
        }
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
        energy.push(cur.iter().map(|v| v * v).sum());
        if n % cfg.record_every == 0 {
            store(&mut rec, &cur, n / cfg.record_every);
        }
        while wi < wanted.len() && wanted[wi].0 == n {
            snaps.push((wanted[wi].1, snap(&cur)));
            wi += 1;
        }
    }
    let rg = GridSpec::new([grid.n[0], nrec], [h, dt * cfg.record_every as f64], [grid.origin[0], 0.0])?;
    Ok(FdOutput { record: Record::new(rg, rec)?, snapshots: snaps, energy })
}

/// Record of the scattered field: run with and without the perturbation
/// and subtract.
pub fn scattered_record<S: Speed + ?Sized>(
    model: &S,
    perturbation: &Array2<f64>,
    grid: &GridSpec,
    excitation: &Excitation,
    cfg: &FdConfig,
) -> Result<Record> {
    let full = simulate(model, Some(perturbation), grid, excitation, cfg)?;
    let reference = simulate(model, None, grid, excitation, cfg)?;
    let mut d = full.record.data.clone();
    for (a, b) in d.data.iter_mut().zip(&reference.record.data.data) {
        *a -= b;
    }
    Record::new(full.record.grid, d)
}
