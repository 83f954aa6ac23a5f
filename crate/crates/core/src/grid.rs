//! Multi-index boxes over Zᵈ (d ≤ 3), dense arrays on them, and FFT-based
//! linear convolution.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub const MAX_DIM: usize = 3;

pub type Point = [f64; MAX_DIM];
pub type Index = [i64; MAX_DIM];

pub fn norm2(d: usize, x: &Point) -> f64 {
    x[..d].iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn norm1(d: usize, x: &Point) -> f64 {
    x[..d].iter().map(|v| v.abs()).sum()
}

pub fn norm_inf_index(d: usize, k: &Index) -> i64 {
    k[..d].iter().map(|v| v.abs()).max().unwrap_or(0)
}

pub fn point_from(d: usize, coords: &[f64]) -> Point {
    let mut p = [0.0; MAX_DIM];
    p[..d].copy_from_slice(&coords[..d]);
    p
}

/// All k ∈ Zᵈ with lo_i ≤ k_i ≤ hi_i, in row-major order (last axis fastest).
pub fn box_indices(d: usize, lo: Index, hi: Index) -> impl Iterator<Item = Index> {
    let mut lo_full = [0i64; MAX_DIM];
    let mut hi_full = [0i64; MAX_DIM];
    lo_full[..d].copy_from_slice(&lo[..d]);
    hi_full[..d].copy_from_slice(&hi[..d]);
    let empty = (0..d).any(|i| hi_full[i] < lo_full[i]);
    let mut cur = lo_full;
    let mut done = empty;
    std::iter::from_fn(move || {
        if done {
            return None;
        }
        let out = cur;
        let mut axis = MAX_DIM;
        loop {
            if axis == 0 {
                done = true;
                break;
            }
            axis -= 1;
            if axis >= d {
                continue;
            }
            if cur[axis] < hi_full[axis] {
                cur[axis] += 1;
                break;
            }
            cur[axis] = lo_full[axis];
        }
        Some(out)
    })
}

/// The cube ‖k‖_∞ ≤ r.
pub fn cube_indices(d: usize, r: i64) -> impl Iterator<Item = Index> {
    box_indices(d, [-r; MAX_DIM], [r; MAX_DIM])
}

/// Dense real array on a box of Zᵈ.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxArray {
    pub d: usize,
    pub lo: Index,
    pub len: [usize; MAX_DIM],
    pub data: Vec<f64>,
}

impl BoxArray {
    pub fn zeros(d: usize, lo: Index, len: [usize; MAX_DIM]) -> Self {
        let mut lo_full = [0; MAX_DIM];
        let mut len_full = [1; MAX_DIM];
        lo_full[..d].copy_from_slice(&lo[..d]);
        len_full[..d].copy_from_slice(&len[..d]);
        let total = len_full.iter().product();
        Self { d, lo: lo_full, len: len_full, data: vec![0.0; total] }
    }

    /// Array on the cube ‖k‖_∞ ≤ r.
    pub fn cube(d: usize, r: i64) -> Self {
        let n = (2 * r + 1) as usize;
        Self::zeros(d, [-r; MAX_DIM], [n; MAX_DIM])
    }

    pub fn from_fn(d: usize, lo: Index, len: [usize; MAX_DIM], mut f: impl FnMut(Index) -> f64) -> Self {
        let mut out = Self::zeros(d, lo, len);
        let hi = out.hi();
        for (slot, k) in out.data.iter_mut().zip(box_indices(d, out.lo, hi)) {
            *slot = f(k);
        }
        out
    }

    pub fn hi(&self) -> Index {
        let mut hi = [0; MAX_DIM];
        for i in 0..MAX_DIM {
            hi[i] = self.lo[i] + self.len[i] as i64 - 1;
        }
        hi
    }

    pub fn indices(&self) -> impl Iterator<Item = Index> {
        box_indices(self.d, self.lo, self.hi())
    }

    pub fn offset(&self, k: &Index) -> Option<usize> {
        let mut off = 0usize;
        for i in 0..MAX_DIM {
            let rel = if i < self.d { k[i] - self.lo[i] } else { 0 };
            if rel < 0 || rel >= self.len[i] as i64 {
                return None;
            }
            off = off * self.len[i] + rel as usize;
        }
        Some(off)
    }

    pub fn get(&self, k: &Index) -> f64 {
        self.offset(k).map_or(0.0, |o| self.data[o])
    }

    pub fn set(&mut self, k: &Index, v: f64) {
        if let Some(o) = self.offset(k) {
            self.data[o] = v;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Index, f64)> + '_ {
        self.indices().zip(self.data.iter().copied())
    }
}

fn fft_len(n: usize) -> usize {
    n.next_power_of_two()
}

/// In-place n-dimensional FFT on a row-major buffer.
fn fft_nd(buf: &mut [Complex64], dims: [usize; MAX_DIM], plans: &[Arc<dyn Fft<f64>>; MAX_DIM]) {
    let mut line = Vec::new();
    for axis in 0..MAX_DIM {
        let n = dims[axis];
        if n == 1 {
            continue;
        }
        let stride: usize = dims[axis + 1..].iter().product();
        let outer: usize = dims[..axis].iter().product();
        line.resize(n, Complex64::new(0.0, 0.0));
        for o in 0..outer {
            for s in 0..stride {
                let base = o * n * stride + s;
                for i in 0..n {
                    line[i] = buf[base + i * stride];
                }
                plans[axis].process(&mut line);
                for i in 0..n {
                    buf[base + i * stride] = line[i];
                }
            }
        }
    }
}

/// Linear convolution with one fixed operand whose spectrum is reused.
pub struct Convolver {
    d: usize,
    fixed_lo: Index,
    fixed_len: [usize; MAX_DIM],
    other_len: [usize; MAX_DIM],
    dims: [usize; MAX_DIM],
    spectrum: Vec<Complex64>,
    forward: [Arc<dyn Fft<f64>>; MAX_DIM],
    inverse: [Arc<dyn Fft<f64>>; MAX_DIM],
}

impl Convolver {
    /// Prepares convolution of `fixed` with arrays of extent `other_len`.
    pub fn new(fixed: &BoxArray, other_len: [usize; MAX_DIM]) -> Self {
        let d = fixed.d;
        let mut dims = [1usize; MAX_DIM];
        for i in 0..d {
            dims[i] = fft_len(fixed.len[i] + other_len[i] - 1);
        }
        let mut planner = FftPlanner::<f64>::new();
        let forward = [0, 1, 2].map(|i| planner.plan_fft_forward(dims[i]));
        let inverse = [0, 1, 2].map(|i| planner.plan_fft_inverse(dims[i]));
        let mut spectrum = embed(fixed, dims);
        fft_nd(&mut spectrum, dims, &forward);
        let mut other = [1; MAX_DIM];
        other[..d].copy_from_slice(&other_len[..d]);
        Self { d, fixed_lo: fixed.lo, fixed_len: fixed.len, other_len: other, dims, spectrum, forward, inverse }
    }

    /// Full linear convolution `fixed ∗ other`.
    pub fn apply(&self, other: &BoxArray) -> BoxArray {
        assert_eq!(other.len, self.other_len, "operand extent mismatch");
        let mut buf = embed(other, self.dims);
        fft_nd(&mut buf, self.dims, &self.forward);
        for (b, s) in buf.iter_mut().zip(&self.spectrum) {
            *b *= s;
        }
        fft_nd(&mut buf, self.dims, &self.inverse);
        let scale = 1.0 / self.dims.iter().product::<usize>() as f64;
        let mut lo = [0; MAX_DIM];
        let mut len = [1; MAX_DIM];
        for i in 0..self.d {
            lo[i] = self.fixed_lo[i] + other.lo[i];
            len[i] = self.fixed_len[i] + other.len[i] - 1;
        }
        let mut out = BoxArray::zeros(self.d, lo, len);
        let mut idx = 0;
        for i0 in 0..len[0] {
            for i1 in 0..len[1] {
                for i2 in 0..len[2] {
                    let src = (i0 * self.dims[1] + i1) * self.dims[2] + i2;
                    out.data[idx] = buf[src].re * scale;
                    idx += 1;
                }
            }
        }
        out
    }
}

fn embed(a: &BoxArray, dims: [usize; MAX_DIM]) -> Vec<Complex64> {
    let mut buf = vec![Complex64::new(0.0, 0.0); dims.iter().product()];
    let mut idx = 0;
    for i0 in 0..a.len[0] {
        for i1 in 0..a.len[1] {
            for i2 in 0..a.len[2] {
                buf[(i0 * dims[1] + i1) * dims[2] + i2] = Complex64::new(a.data[idx], 0.0);
                idx += 1;
            }
        }
    }
    buf
}

/// Neumaier-compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}
