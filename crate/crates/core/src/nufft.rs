//! Type-2 nonuniform FFT in two dimensions: evaluation of a Fourier series
//! with a rectangular block of integer modes at arbitrary points.
//!
//! Gaussian gridding with oversampling factor 2; small mode blocks are
//! summed directly, which is both exact and cheaper.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::grid::{signed_bin, Array2, Fft2};

/// Half-width of the spreading kernel in fine-grid cells.
pub const SPREAD: usize = 7;
const OVERSAMPLE: usize = 2;

/// Plan for series `f(p) = sum_k F[k - lo] exp(i <p, k>)` with
/// `k_a in [lo_a, lo_a + m_a)` and `p` in radians.
#[derive(Clone, Debug)]
pub struct Nufft2 {
    pub m: [usize; 2],
    pub lo: [i64; 2],
    /// Centre mode; the series is evaluated as `exp(i <p, c>)` times a
    /// centred series.
    center: [i64; 2],
    kind: Kind,
}

#[derive(Clone, Debug)]
enum Kind {
    Direct,
    Gridded(Box<Gridding>),
}

#[derive(Clone, Debug)]
struct Gridding {
    mr: [usize; 2],
    tau: [f64; 2],
    h: [f64; 2],
    fft: Fft2,
    /// Deconvolution factors per axis, indexed by centred mode offset.
    deconv: [Vec<f64>; 2],
    /// `exp(-(a h)^2 / (4 tau))` for `a = 0..=SPREAD`.
    gauss: [Vec<f64>; 2],
}

/// Precomputed per-point data, reusable across spectra sharing a plan.
#[derive(Clone, Debug)]
pub struct PointWeights {
    phase: Complex64,
    base: [usize; 2],
    w: [[f64; 2 * SPREAD]; 2],
    e: [Vec<Complex64>; 2],
}

impl Nufft2 {
    pub fn new(m: [usize; 2], lo: [i64; 2]) -> Self {
        let center = [lo[0] + (m[0] / 2) as i64, lo[1] + (m[1] / 2) as i64];
        let kind = if m[0] * m[1] <= (2 * SPREAD) * (2 * SPREAD) {
            Kind::Direct
        } else {
            let mut mr = [0; 2];
            let mut tau = [0.0; 2];
            let mut h = [0.0; 2];
            let mut deconv = [Vec::new(), Vec::new()];
            let mut gauss = [Vec::new(), Vec::new()];
            for a in 0..2 {
                let me = m[a].max(2).next_multiple_of(2);
                mr[a] = (OVERSAMPLE * me).max(2 * SPREAD + 2);
                let r = mr[a] as f64 / me as f64;
                tau[a] = PI * SPREAD as f64 / ((me * me) as f64 * r * (r - 0.5));
                h[a] = 2.0 * PI / mr[a] as f64;
                let c = center[a] - lo[a];
                deconv[a] = (0..m[a])
                    .map(|i| {
                        let k = (i as i64 - c) as f64;
                        (k * k * tau[a]).exp() / (2.0 * (PI * tau[a]).sqrt())
                    })
                    .collect();
                gauss[a] = (0..=SPREAD).map(|j| (-(j as f64 * h[a]).powi(2) / (4.0 * tau[a])).exp()).collect();
            }
            Kind::Gridded(Box::new(Gridding { mr, tau, h, fft: Fft2::new(mr), deconv, gauss }))
        };
        Self { m, lo, center, kind }
    }

    /// Plan for a full FFT-ordered spectrum of shape `n` (signed bins).
    pub fn for_full(n: [usize; 2]) -> Self {
        Self::new(n, [-((n[0] / 2) as i64), -((n[1] / 2) as i64)])
    }

    pub fn is_direct(&self) -> bool {
        matches!(self.kind, Kind::Direct)
    }

    /// Prepared representation of a spectrum stored with local indices
    /// (axis 0 fastest).
    pub fn prepare(&self, spec: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(spec.len(), self.m[0] * self.m[1], "spectrum size mismatch");
        match &self.kind {
            Kind::Direct => spec.to_vec(),
            Kind::Gridded(g) => {
                let [mr0, mr1] = g.mr;
                let mut fine = vec![Complex64::default(); mr0 * mr1];
                let c = [self.center[0] - self.lo[0], self.center[1] - self.lo[1]];
                for i1 in 0..self.m[1] {
                    let k1 = (i1 as i64 - c[1]).rem_euclid(mr1 as i64) as usize;
                    for i0 in 0..self.m[0] {
                        let k0 = (i0 as i64 - c[0]).rem_euclid(mr0 as i64) as usize;
                        fine[k1 * mr0 + k0] = spec[i1 * self.m[0] + i0] * (g.deconv[0][i0] * g.deconv[1][i1]);
                    }
                }
                // f_-(j h) = sum_k F_k exp(i k j h): unnormalized inverse transform
                g.fft.inverse(&mut fine);
                let s = (mr0 * mr1) as f64;
                for v in fine.iter_mut() {
                    *v *= s;
                }
                fine
            }
        }
    }

    pub fn weights(&self, p: [f64; 2]) -> PointWeights {
        let phase = Complex64::from_polar(1.0, p[0] * self.center[0] as f64 + p[1] * self.center[1] as f64);
        match &self.kind {
            Kind::Direct => {
                let mut e = [Vec::new(), Vec::new()];
                for a in 0..2 {
                    let c = self.center[a] - self.lo[a];
                    let step = Complex64::from_polar(1.0, p[a]);
                    let mut v = Complex64::from_polar(1.0, -p[a] * c as f64);
                    e[a] = (0..self.m[a])
                        .map(|_| {
                            let out = v;
                            v *= step;
                            out
                        })
                        .collect();
                }
                PointWeights { phase, base: [0, 0], w: [[0.0; 2 * SPREAD]; 2], e }
            }
            Kind::Gridded(g) => {
                let mut base = [0; 2];
                let mut w = [[0.0; 2 * SPREAD]; 2];
                for a in 0..2 {
                    let x = p[a].rem_euclid(2.0 * PI);
                    let j0 = (x / g.h[a]).floor();
                    let d = x - j0 * g.h[a];
                    // offsets a = -(SPREAD-1) ..= SPREAD relative to j0
                    let e0 = (-d * d / (4.0 * g.tau[a])).exp();
                    let q = (d * g.h[a] / (2.0 * g.tau[a])).exp();
                    let qi = 1.0 / q;
                    let mut up = e0;
                    let mut dn = e0;
                    w[a][SPREAD - 1] = e0;
                    for s in 1..=SPREAD {
                        up *= q;
                        w[a][SPREAD - 1 + s] = up * g.gauss[a][s];
                        if s < SPREAD {
                            dn *= qi;
                            w[a][SPREAD - 1 - s] = dn * g.gauss[a][s];
                        }
                    }
                    let scale = g.h[a];
                    for v in w[a].iter_mut() {
                        *v *= scale;
                    }
                    base[a] = (j0 as i64 - (SPREAD as i64 - 1)).rem_euclid(g.mr[a] as i64) as usize;
                }
                PointWeights { phase, base, w, e: [Vec::new(), Vec::new()] }
            }
        }
    }

    /// Evaluate a prepared spectrum with precomputed point weights.
    #[inline]
    pub fn eval_prepared(&self, prepared: &[Complex64], pw: &PointWeights) -> Complex64 {
        match &self.kind {
            Kind::Direct => {
                let mut acc = Complex64::default();
                for i1 in 0..self.m[1] {
                    let row = &prepared[i1 * self.m[0]..(i1 + 1) * self.m[0]];
                    let mut s = Complex64::default();
                    for (v, e) in row.iter().zip(&pw.e[0]) {
                        s += v * e;
                    }
                    acc += s * pw.e[1][i1];
                }
                acc * pw.phase
            }
            Kind::Gridded(g) => {
                let [mr0, mr1] = g.mr;
                let mut acc = Complex64::default();
                for b in 0..2 * SPREAD {
                    let j1 = (pw.base[1] + b) % mr1;
                    let row = &prepared[j1 * mr0..(j1 + 1) * mr0];
                    let mut s = Complex64::default();
                    let start = pw.base[0];
                    if start + 2 * SPREAD <= mr0 {
                        for (a, &wa) in pw.w[0].iter().enumerate() {
                            s += row[start + a] * wa;
                        }
                    } else {
                        for (a, &wa) in pw.w[0].iter().enumerate() {
                            s += row[(start + a) % mr0] * wa;
                        }
                    }
                    acc += s * pw.w[1][b];
                }
                acc * pw.phase
            }
        }
    }

    /// Evaluate a spectrum (local indices) at points in radians.
    pub fn eval(&self, spec: &[Complex64], points: &[[f64; 2]]) -> Vec<Complex64> {
        let prepared = self.prepare(spec);
        points.iter().map(|&p| self.eval_prepared(&prepared, &self.weights(p))).collect()
    }
}

/// Type-2 NUFFT of a full FFT-ordered spectrum at points `p` (radians):
/// `f(p) = sum_m spectrum[m] exp(i <p, signed_bin(m)>)`.
pub fn nufft_t2(points: &[[f64; 2]], spectrum: &Array2<Complex64>) -> Vec<Complex64> {
    let n = spectrum.n;
    let plan = Nufft2::for_full(n);
    plan.eval(&to_local(spectrum, plan.lo), points)
}

fn to_local(spectrum: &Array2<Complex64>, lo: [i64; 2]) -> Vec<Complex64> {
    let n = spectrum.n;
    let mut local = vec![Complex64::default(); n[0] * n[1]];
    for m1 in 0..n[1] {
        let l1 = (signed_bin(m1, n[1]) - lo[1]) as usize;
        for m0 in 0..n[0] {
            let l0 = (signed_bin(m0, n[0]) - lo[0]) as usize;
            local[l1 * n[0] + l0] = *spectrum.get(m0, m1);
        }
    }
    local
}

/// Direct `O(N^2)` summation; the reference for [`nufft_t2`].
pub fn direct_t2(points: &[[f64; 2]], spectrum: &Array2<Complex64>) -> Vec<Complex64> {
    let n = spectrum.n;
    points
        .iter()
        .map(|p| {
            let mut acc = Complex64::default();
            for m1 in 0..n[1] {
                let k1 = signed_bin(m1, n[1]) as f64;
                for m0 in 0..n[0] {
                    let k0 = signed_bin(m0, n[0]) as f64;
                    acc += spectrum.get(m0, m1) * Complex64::from_polar(1.0, p[0] * k0 + p[1] * k1);
                }
            }
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spectrum(n: [usize; 2], seed: u64) -> Array2<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_fn(n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    fn rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
        let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
        (num / den).sqrt()
    }

    #[test]
    fn grid_points_match_inverse_fft() {
        let n = [24, 20];
        let s = random_spectrum(n, 1);
        let mut u = s.clone();
        Fft2::new(n).inverse(&mut u.data);
        let pts: Vec<[f64; 2]> = (0..n[1])
            .flat_map(|j| (0..n[0]).map(move |i| [2.0 * PI * i as f64 / n[0] as f64, 2.0 * PI * j as f64 / n[1] as f64]))
            .collect();
        let f = nufft_t2(&pts, &s);
        let scale = (n[0] * n[1]) as f64;
        let fu: Vec<Complex64> = u.data.iter().map(|v| v * scale).collect();
        assert!(rel_err(&f, &fu) < 1e-6);
    }

    #[test]
    fn single_mode() {
        let n = [32, 32];
        let mut s = Array2::zeros(n);
        *s.get_mut(5, 29) = Complex64::new(1.0, 0.0);
        let pts = [[0.3, 1.7], [5.9, 0.01], [2.0, 4.0]];
        for (p, v) in pts.iter().zip(nufft_t2(&pts, &s)) {
            let e = Complex64::from_polar(1.0, 5.0 * p[0] - 3.0 * p[1]);
            assert!((v - e).norm() < 1e-6);
        }
    }

    #[test]
    fn random_points_match_direct_sum() {
        let n = [48, 40];
        let s = random_spectrum(n, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<[f64; 2]> = (0..300).map(|_| [rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI)]).collect();
        assert!(rel_err(&nufft_t2(&pts, &s), &direct_t2(&pts, &s)) < 1e-6);
    }

    #[test]
    fn sub_band_plan() {
        let m = [9, 30];
        let lo = [-3, 11];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec: Vec<Complex64> = (0..m[0] * m[1]).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let plan = Nufft2::new(m, lo);
        assert!(!plan.is_direct());
        let pts: Vec<[f64; 2]> = (0..200).map(|_| [rng.gen_range(-7.0..7.0), rng.gen_range(-7.0..7.0)]).collect();
        let got = plan.eval(&spec, &pts);
        let want: Vec<Complex64> = pts
            .iter()
            .map(|p| {
                let mut acc = Complex64::default();
                for i1 in 0..m[1] {
                    for i0 in 0..m[0] {
                        let k = [(lo[0] + i0 as i64) as f64, (lo[1] + i1 as i64) as f64];
                        acc += spec[i1 * m[0] + i0] * Complex64::from_polar(1.0, p[0] * k[0] + p[1] * k[1]);
                    }
                }
                acc
            })
            .collect();
        assert!(rel_err(&got, &want) < 1e-6);
        let small = Nufft2::new([3, 4], [2, -1]);
        assert!(small.is_direct());
        let sp: Vec<Complex64> = spec[..12].to_vec();
        let v = small.eval(&sp, &[[0.4, -0.9]])[0];
        let mut acc = Complex64::default();
        for i1 in 0..4 {
            for i0 in 0..3 {
                acc += sp[i1 * 3 + i0] * Complex64::from_polar(1.0, 0.4 * (2 + i0) as f64 - 0.9 * (i1 as f64 - 1.0));
            }
        }
        assert!((v - acc).norm() < 1e-12);
    }
}
