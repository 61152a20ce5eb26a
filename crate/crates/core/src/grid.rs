//! Uniform 2-D grids, dense arrays and FFT helpers.
//!
//! Axis 0 is the fast (lateral) axis, axis 1 the slow one (depth for
//! fields, time for boundary records). Storage is row-major with axis 0
//! contiguous.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Uniform sampling of a rectangle. For spatial grids axis 1 is depth and
/// the boundary `x_n = 0` is the first row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub n: [usize; 2],
    pub spacing: [f64; 2],
    pub origin: [f64; 2],
}

impl GridSpec {
    pub fn new(n: [usize; 2], spacing: [f64; 2], origin: [f64; 2]) -> Result<Self> {
        if n[0] < 2 || n[1] < 2 {
            return Err(Error::invalid("n", format!("need at least 2 samples per axis, got {n:?}")));
        }
        if !(spacing[0] > 0.0 && spacing[1] > 0.0) {
            return Err(Error::invalid("spacing", format!("must be positive, got {spacing:?}")));
        }
        Ok(Self { n, spacing, origin })
    }

    /// Square grid of `n` x `n` samples covering `[-w/2, w/2) x [0, w)`.
    pub fn square(n: usize, width: f64) -> Result<Self> {
        let h = width / n as f64;
        Self::new([n, n], [h, h], [-0.5 * width, 0.0])
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + i as f64 * self.spacing[axis]
    }

    #[inline]
    pub fn point(&self, i0: usize, i1: usize) -> [f64; 2] {
        [self.coord(0, i0), self.coord(1, i1)]
    }

    /// Fractional index of a coordinate.
    #[inline]
    pub fn frac_index(&self, axis: usize, x: f64) -> f64 {
        (x - self.origin[axis]) / self.spacing[axis]
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.n[axis] as f64 * self.spacing[axis]
    }

    pub fn max_coord(&self, axis: usize) -> f64 {
        self.coord(axis, self.n[axis] - 1)
    }

    /// Physical angular frequency of FFT bin `m` along `axis`.
    #[inline]
    pub fn freq(&self, axis: usize, m: usize) -> f64 {
        2.0 * PI * signed_bin(m, self.n[axis]) as f64 / self.extent(axis)
    }

    /// Physical angular frequency of signed bin `k` along `axis`.
    #[inline]
    pub fn freq_of(&self, axis: usize, k: i64) -> f64 {
        2.0 * PI * k as f64 / self.extent(axis)
    }

    pub fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self.n != other.n {
            return Err(Error::GridMismatch { expected: self.n.to_vec(), got: other.n.to_vec() });
        }
        Ok(())
    }
}

/// Signed FFT bin index in `[-n/2, n/2)`.
#[inline]
pub fn signed_bin(m: usize, n: usize) -> i64 {
    if m >= n.div_ceil(2) {
        m as i64 - n as i64
    } else {
        m as i64
    }
}

/// Dense row-major 2-D array.
#[derive(Debug, Clone, PartialEq)]
pub struct Array2<T> {
    pub n: [usize; 2],
    pub data: Vec<T>,
}

impl<T: Clone + Default> Array2<T> {
    pub fn zeros(n: [usize; 2]) -> Self {
        Self { n, data: vec![T::default(); n[0] * n[1]] }
    }
}

impl<T> Array2<T> {
    pub fn from_vec(n: [usize; 2], data: Vec<T>) -> Result<Self> {
        if data.len() != n[0] * n[1] {
            return Err(Error::invalid("data", format!("length {} does not match {:?}", data.len(), n)));
        }
        Ok(Self { n, data })
    }

    pub fn from_fn(n: [usize; 2], mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(n[0] * n[1]);
        for i1 in 0..n[1] {
            for i0 in 0..n[0] {
                data.push(f(i0, i1));
            }
        }
        Self { n, data }
    }

    #[inline]
    pub fn idx(&self, i0: usize, i1: usize) -> usize {
        i1 * self.n[0] + i0
    }

    #[inline]
    pub fn get(&self, i0: usize, i1: usize) -> &T {
        &self.data[i1 * self.n[0] + i0]
    }

    #[inline]
    pub fn get_mut(&mut self, i0: usize, i1: usize) -> &mut T {
        let n0 = self.n[0];
        &mut self.data[i1 * n0 + i0]
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> Array2<U> {
        Array2 { n: self.n, data: self.data.iter().map(f).collect() }
    }
}

impl Array2<f64> {
    pub fn norm2(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_complex(&self) -> Array2<Complex64> {
        self.map(|&v| Complex64::new(v, 0.0))
    }

    pub fn add_assign(&mut self, other: &Array2<f64>) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Bilinear interpolation at fractional indices; outside the array the
    /// nearest edge value is used.
    pub fn bilinear(&self, f0: f64, f1: f64) -> f64 {
        let f0 = f0.clamp(0.0, (self.n[0] - 1) as f64);
        let f1 = f1.clamp(0.0, (self.n[1] - 1) as f64);
        let i0 = (f0.floor() as usize).min(self.n[0] - 2);
        let i1 = (f1.floor() as usize).min(self.n[1] - 2);
        let a = f0 - i0 as f64;
        let b = f1 - i1 as f64;
        let v00 = *self.get(i0, i1);
        let v10 = *self.get(i0 + 1, i1);
        let v01 = *self.get(i0, i1 + 1);
        let v11 = *self.get(i0 + 1, i1 + 1);
        (1.0 - b) * ((1.0 - a) * v00 + a * v10) + b * ((1.0 - a) * v01 + a * v11)
    }
}

impl Array2<Complex64> {
    pub fn norm2(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn re(&self) -> Array2<f64> {
        self.map(|v| v.re)
    }

    pub fn add_assign(&mut self, other: &Array2<Complex64>) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Cached 2-D FFT plans for one array shape.
#[derive(Clone)]
pub struct Fft2 {
    n: [usize; 2],
    fwd: [Arc<dyn Fft<f64>>; 2],
    inv: [Arc<dyn Fft<f64>>; 2],
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("n", &self.n).finish()
    }
}

impl Fft2 {
    pub fn new(n: [usize; 2]) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = [planner.plan_fft_forward(n[0]), planner.plan_fft_forward(n[1])];
        let inv = [planner.plan_fft_inverse(n[0]), planner.plan_fft_inverse(n[1])];
        Self { n, fwd, inv }
    }

    pub fn shape(&self) -> [usize; 2] {
        self.n
    }

    fn run(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>; 2]) {
        let [n0, n1] = self.n;
        assert_eq!(data.len(), n0 * n1, "fft shape mismatch");
        plans[0].process(data);
        let mut col = vec![Complex64::default(); n1];
        let mut scratch = vec![Complex64::default(); plans[1].get_inplace_scratch_len()];
        for i0 in 0..n0 {
            for (i1, c) in col.iter_mut().enumerate() {
                *c = data[i1 * n0 + i0];
            }
            plans[1].process_with_scratch(&mut col, &mut scratch);
            for (i1, c) in col.iter().enumerate() {
                data[i1 * n0 + i0] = *c;
            }
        }
    }

    /// Unnormalized forward transform, `e^{-i}` kernel.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.fwd);
    }

    /// Inverse transform including the `1/N` normalization.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inv);
        let s = 1.0 / (self.n[0] * self.n[1]) as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }

    pub fn forward_real(&self, a: &Array2<f64>) -> Array2<Complex64> {
        let mut c = a.to_complex();
        self.forward(&mut c.data);
        c
    }
}

/// Smooth step rising from 0 at `t <= 0` to 1 at `t >= 1` (C-infinity).
#[inline]
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / t).exp();
    let b = (-1.0 / (1.0 - t)).exp();
    a / (a + b)
}

/// Raised-cosine step, 0 at `t <= 0`, 1 at `t >= 1`.
#[inline]
pub fn cosine_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        0.5 - 0.5 * (PI * t).cos()
    }
}
