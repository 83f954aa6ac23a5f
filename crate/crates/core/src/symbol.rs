//! The cardinal symbol σ(t,h) = Σ_k Φ_h(k)e^{ik·t} on a uniform grid of the
//! period cell, its inverse ω = ρh^{2m−d}/σ, and the synthesis condition.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::consts::{POISSON_CAP_1D, POISSON_CAP_2D, POISSON_CAP_3D, SPATIAL_CAP_1D, SPATIAL_CAP_2D, SPATIAL_CAP_3D};
use crate::error::{Error, Result};
use crate::grid::{box_indices, CompensatedSum, Index, Point, MAX_DIM};
use crate::kernels::{rho, KernelFamily, KernelSpec};
use crate::lattice::{truncated_sum, truncated_tail_bound, LatticeSum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Spatial,
    Poisson,
}

/// How the Poisson lattice sum is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PoissonMethod {
    /// Gaussian-split evaluation with exponentially small truncation error.
    Ewald,
    /// Plain truncation ‖k‖_∞ ≤ K with an integral-comparison tail bound.
    Direct,
}

#[derive(Debug, Clone, Serialize)]
pub struct SymbolGrid {
    pub kernel: String,
    pub d: usize,
    pub m: u32,
    pub h: f64,
    pub grid_size: usize,
    pub route: Route,
    pub poisson_method: Option<PoissonMethod>,
    pub truncation_radius: usize,
    /// Absolute bound on the truncation error of every σ value.
    pub tail_bound: f64,
    /// ω = omega_scale/σ; ρh^{2m−d} for Matérn kernels, 1 at h = 0 (σ then
    /// holds the un-normalized lattice sum) and for compact kernels.
    pub omega_scale: f64,
    /// Relative truncation tolerance the grid was built with.
    pub tol: f64,
    #[serde(skip)]
    pub sigma: Vec<f64>,
    #[serde(skip)]
    pub omega: Option<Vec<f64>>,
}

impl SymbolGrid {
    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    /// Grid node t_l = 2πl/M.
    pub fn node(&self, l: &Index) -> Point {
        node(self.d, self.grid_size, l)
    }

    pub fn indices(&self) -> impl Iterator<Item = Index> {
        let hi = [self.grid_size as i64 - 1; MAX_DIM];
        box_indices(self.d, [0; MAX_DIM], hi)
    }

    pub fn offset(&self, l: &Index) -> usize {
        let m = self.grid_size;
        l[..self.d].iter().fold(0, |acc, &v| acc * m + v.rem_euclid(m as i64) as usize)
    }

    pub fn sigma_at(&self, l: &Index) -> f64 {
        self.sigma[self.offset(l)]
    }

    /// CSV with t components, σ, ω and their uncertainties.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.d {
            let _ = write!(out, "t{},", i + 1);
        }
        out.push_str("sigma,sigma_err,omega,omega_err\n");
        for (idx, l) in self.indices().enumerate() {
            let t = self.node(&l);
            for v in &t[..self.d] {
                let _ = write!(out, "{v:.16e},");
            }
            let s = self.sigma[idx];
            let (w, werr) = match &self.omega {
                Some(om) => {
                    let w = om[idx];
                    (w, if s.is_finite() { w * self.tail_bound / s } else { 0.0 })
                }
                None => (f64::NAN, f64::NAN),
            };
            let _ = writeln!(out, "{s:.16e},{:.16e},{w:.16e},{werr:.16e}", self.tail_bound);
        }
        out
    }

    /// JSON with the route and truncation metadata.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("symbol metadata serializes")
    }
}

fn node(d: usize, m: usize, l: &Index) -> Point {
    let mut t = [0.0; MAX_DIM];
    for i in 0..d {
        t[i] = 2.0 * PI * l[i] as f64 / m as f64;
    }
    t
}

fn check_grid_size(m: usize) -> Result<()> {
    if m < 2 || m % 2 != 0 {
        return Err(Error::Domain(format!("grid size must be even and >= 2, got {m}")));
    }
    Ok(())
}

pub fn spatial_cap(d: usize) -> usize {
    [SPATIAL_CAP_1D, SPATIAL_CAP_2D, SPATIAL_CAP_3D][d.clamp(1, 3) - 1]
}

pub fn poisson_cap(d: usize) -> usize {
    [POISSON_CAP_1D, POISSON_CAP_2D, POISSON_CAP_3D][d.clamp(1, 3) - 1]
}

/// Lower bound of σ over the cell for Matérn kernels: the k = 0 Poisson
/// term at the corner t = (π, …, π).
fn sigma_lower_bound(spec: &KernelSpec, h: f64) -> Result<f64> {
    let r = rho(spec.m, spec.d)?;
    Ok(r * h.powi(2 * spec.m as i32 - spec.d as i32) * (h * h + spec.d as f64 * PI * PI).powi(-(spec.m as i32)))
}

/// Evaluates an even, 2π-periodic function at folded nodes l_i ≤ M/2 and
/// mirrors, so the grid is exactly symmetric under t ↦ −t.
fn fill_symmetric(d: usize, m: usize, folded: &[f64]) -> Vec<f64> {
    let half = m / 2 + 1;
    let hi = [m as i64 - 1; MAX_DIM];
    box_indices(d, [0; MAX_DIM], hi)
        .map(|l| {
            let off = l[..d].iter().fold(0, |acc, &v| {
                let f = v.min(m as i64 - v) as usize;
                acc * half + f
            });
            folded[off]
        })
        .collect()
}

fn folded_indices(d: usize, m: usize) -> Vec<Index> {
    box_indices(d, [0; MAX_DIM], [(m / 2) as i64; MAX_DIM]).collect()
}

/// Geometric tail bound Σ_{n>K} shell(n)·c0·e^{−αhn}, shell(n) ≤ 2d(2n+1)^{d−1}.
fn spatial_tail(d: usize, c0: f64, alpha_h: f64, k: usize) -> f64 {
    let x = (-alpha_h).exp();
    let n = (k + 1) as f64;
    let first = 2.0 * d as f64 * (2.0 * n + 1.0).powi(d as i32 - 1) * x.powf(n);
    let ratio = ((2.0 * n + 3.0) / (2.0 * n + 1.0)).powi(d as i32 - 1) * x;
    if ratio >= 1.0 {
        return f64::INFINITY;
    }
    c0 * first / (1.0 - ratio)
}

/// σ by direct summation of the lattice samples (Fourier series route).
pub fn symbol_spatial(spec: &KernelSpec, h: f64, grid_size: usize, tol: f64) -> Result<SymbolGrid> {
    symbol_spatial_capped(spec, h, grid_size, tol, spatial_cap(spec.d))
}

pub fn symbol_spatial_capped(spec: &KernelSpec, h: f64, grid_size: usize, tol: f64, cap: usize) -> Result<SymbolGrid> {
    check_grid_size(grid_size)?;
    if h.is_nan() || h <= 0.0 || h > 1.0 {
        return Err(Error::Domain(format!("spatial route needs h in (0, 1], got {h}")));
    }
    let d = spec.d;
    let (k, tail, omega_scale) = match spec.family {
        KernelFamily::Matern => {
            let decay = spec.decay.expect("Matérn specs carry a decay bound");
            let target = tol * sigma_lower_bound(spec, h)?;
            let mut k = 0;
            while spatial_tail(d, decay.c0, decay.alpha * h, k) >= target {
                k += 1;
                if k > cap {
                    let needed = ((target.ln().abs() + 10.0) / (decay.alpha * h)).ceil() as usize;
                    return Err(Error::RouteInfeasible { needed: needed.max(cap + 1), cap });
                }
            }
            let rho = rho(spec.m, d)?;
            (k, spatial_tail(d, decay.c0, decay.alpha * h, k), rho * h.powi(2 * spec.m as i32 - d as i32))
        }
        KernelFamily::Eta2 | KernelFamily::Psi2 | KernelFamily::Psi32 => {
            let radius = spec.support_radius().expect("compact kernel");
            let k = (radius / h).ceil() as usize;
            if k > cap {
                return Err(Error::RouteInfeasible { needed: k, cap });
            }
            (k, 0.0, 1.0)
        }
        KernelFamily::MHarmonic => {
            return Err(Error::InvalidSpec("the m-harmonic kernel has no convergent lattice series".into()))
        }
    };
    let folded = spatial_folded(spec, h, grid_size, k);
    let sigma = fill_symmetric(d, grid_size, &folded);
    let grid = SymbolGrid {
        kernel: spec.id(),
        d,
        m: spec.m,
        h,
        grid_size,
        route: Route::Spatial,
        poisson_method: None,
        truncation_radius: k,
        tail_bound: tail,
        omega_scale,
        tol,
        sigma,
        omega: None,
    };
    check_positive(spec, &grid)?;
    Ok(grid)
}

fn check_positive(spec: &KernelSpec, grid: &SymbolGrid) -> Result<()> {
    if let Some((index, &value)) = grid.sigma.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        if spec.is_compact() {
            return Err(Error::IllPosed { value });
        }
        return Err(Error::CorruptedGrid { index, value });
    }
    Ok(())
}

/// Separable cosine transform of the quadrant samples w(k)Φ_h(k), k ∈ [0,K]ᵈ,
/// onto folded nodes l ∈ [0, M/2]ᵈ.
fn spatial_folded(spec: &KernelSpec, h: f64, m: usize, k: usize) -> Vec<f64> {
    let d = spec.d;
    let data: Vec<f64> = box_indices(d, [0; MAX_DIM], [k as i64; MAX_DIM])
        .map(|kk| {
            let w: f64 = kk[..d].iter().map(|&v| if v == 0 { 1.0 } else { 2.0 }).product();
            let mut y = [0.0; MAX_DIM];
            for i in 0..d {
                y[i] = kk[i] as f64;
            }
            w * spec.scaled_eval(h, &y)
        })
        .collect();
    cosine_transform(d, data, k + 1, m / 2 + 1, m)
}

/// out[j] = Σ_i in[i] Π_axes cos(2π i_a j_a / M) for a row-major cube of side
/// `n_in`, producing a cube of side `n_out`; compensated inner sums.
pub(crate) fn cosine_transform(d: usize, mut data: Vec<f64>, n_in: usize, n_out: usize, m: usize) -> Vec<f64> {
    // cos(2πi/M) with exact symmetry i ↔ M − i
    let table: Vec<f64> = (0..m).map(|i| (2.0 * PI * i.min(m - i) as f64 / m as f64).cos()).collect();
    let mut dims = [1usize; MAX_DIM];
    for dim in dims.iter_mut().take(d) {
        *dim = n_in;
    }
    for axis in 0..d {
        let mut out_dims = dims;
        out_dims[axis] = n_out;
        let stride: usize = dims[axis + 1..].iter().product();
        let outer: usize = dims[..axis].iter().product();
        let len = dims[axis];
        let out: Vec<f64> = (0..outer * n_out * stride)
            .into_par_iter()
            .map(|idx| {
                let s = idx % stride;
                let l = (idx / stride) % n_out;
                let o = idx / (stride * n_out);
                let mut acc = CompensatedSum::default();
                for kk in 0..len {
                    acc.add(data[(o * len + kk) * stride + s] * table[(kk * l) % m]);
                }
                acc.value()
            })
            .collect();
        data = out;
        dims = out_dims;
    }
    data
}

/// σ via Poisson summation, ρh^{2m−d}Σ_k(h² + ‖t + 2πk‖²)^{−m}; at h = 0 the
/// un-normalized sum Σ_k‖t + 2πk‖^{−2m}, infinite at t = 0.
pub fn symbol_poisson(spec: &KernelSpec, h: f64, grid_size: usize, tol: f64) -> Result<SymbolGrid> {
    symbol_poisson_with(spec, h, grid_size, tol, PoissonMethod::Ewald, poisson_cap(spec.d))
}

pub fn symbol_poisson_with(
    spec: &KernelSpec,
    h: f64,
    grid_size: usize,
    tol: f64,
    method: PoissonMethod,
    cap: usize,
) -> Result<SymbolGrid> {
    check_grid_size(grid_size)?;
    if !matches!(spec.family, KernelFamily::Matern | KernelFamily::MHarmonic) {
        return Err(Error::InvalidSpec(format!("the Poisson route needs a Matérn transform, got {}", spec.id())));
    }
    if h.is_nan() || !(0.0..=1.0).contains(&h) {
        return Err(Error::Domain(format!("h must lie in [0, 1], got {h}")));
    }
    let (d, m) = (spec.d, spec.m);
    let scale = if h > 0.0 { rho(m, d)? * h.powi(2 * m as i32 - d as i32) } else { 1.0 };
    let folded_idx = folded_indices(d, grid_size);
    let (folded, radius, tail): (Vec<f64>, usize, f64) = match method {
        PoissonMethod::Ewald => {
            let sum = LatticeSum::new(d, m, h);
            let vals =
                folded_idx.par_iter().map(|l| scale * sum.sum(&node(d, grid_size, l))).collect();
            (vals, 4, scale * sum.tail_bound())
        }
        PoissonMethod::Direct => {
            // relative target against the smallest k = 0 term
            let target = tol * (h * h + d as f64 * PI * PI).powi(-(m as i32));
            let mut k = 2usize;
            while truncated_tail_bound(d, m, k as i64) >= target {
                if k >= cap {
                    return Err(Error::Truncation {
                        requested: tol,
                        achieved: truncated_tail_bound(d, m, cap as i64) / (target / tol),
                    });
                }
                k = (k * 2).min(cap);
            }
            let vals = folded_idx
                .par_iter()
                .map(|l| scale * truncated_sum(d, m, h, &node(d, grid_size, l), k as i64))
                .collect();
            (vals, k, scale * truncated_tail_bound(d, m, k as i64))
        }
    };
    let sigma = fill_symmetric(d, grid_size, &folded);
    let grid = SymbolGrid {
        kernel: spec.id(),
        d,
        m,
        h,
        grid_size,
        route: Route::Poisson,
        poisson_method: Some(method),
        truncation_radius: radius,
        tail_bound: tail,
        omega_scale: scale,
        tol,
        sigma,
        omega: None,
    };
    if h > 0.0 {
        check_positive(spec, &grid)?;
    }
    Ok(grid)
}

/// Default route: Poisson for h ≤ 1/4, spatial otherwise; compact kernels
/// always use their finite spatial sum.
pub fn symbol(spec: &KernelSpec, h: f64, grid_size: usize, tol: f64) -> Result<SymbolGrid> {
    if spec.is_compact() || (h > 0.25 && spec.family == KernelFamily::Matern) {
        symbol_spatial(spec, h, grid_size, tol)
    } else {
        symbol_poisson(spec, h, grid_size, tol)
    }
}

/// Fills ω = omega_scale/σ; at h = 0 uses q^m/(1 + q^m G), so ω(0,0) = 0.
pub fn inverse_symbol(grid: &SymbolGrid) -> Result<SymbolGrid> {
    let mut out = grid.clone();
    if grid.h == 0.0 {
        let sum = LatticeSum::new(grid.d, grid.m, 0.0);
        let folded_idx = folded_indices(grid.d, grid.grid_size);
        let folded: Vec<f64> =
            folded_idx.par_iter().map(|l| sum.reciprocal(&node(grid.d, grid.grid_size, l))).collect();
        out.omega = Some(fill_symmetric(grid.d, grid.grid_size, &folded));
        return Ok(out);
    }
    let mut omega = Vec::with_capacity(grid.len());
    for (index, &s) in grid.sigma.iter().enumerate() {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::CorruptedGrid { index, value: s });
        }
        omega.push(grid.omega_scale / s);
    }
    out.omega = Some(omega);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SynthesisEstimate {
    pub measured_sup: f64,
    pub proof_bound: f64,
}

/// sup_{‖t‖≤δ} Σ_{0<‖j‖_∞≤K} Φ̂_h(ht + 2πj)/Φ̂_h(ht) on a sample of the
/// ball, and the bound h^{2m}(1+δ²)^m Σ_j (2π‖j‖ − δ)^{−2m}.
pub fn synthesis_condition(spec: &KernelSpec, h: f64, delta: f64, k_sum: usize) -> Result<SynthesisEstimate> {
    if !(delta > 0.0 && delta < PI) {
        return Err(Error::Domain(format!("delta must lie in (0, π), got {delta}")));
    }
    if h.is_nan() || h <= 0.0 || h > 1.0 {
        return Err(Error::Domain(format!("h must lie in (0, 1], got {h}")));
    }
    let (d, m) = (spec.d, spec.m as i32);
    let js: Vec<Index> = crate::grid::cube_indices(d, k_sum as i64)
        .filter(|j| j[..d].iter().any(|&v| v != 0))
        .collect();
    let ratio_sum = |t: &Point| -> f64 {
        let tt: f64 = t[..d].iter().map(|v| v * v).sum();
        let num = h.powi(2 * m) * (1.0 + tt).powi(m);
        js.iter()
            .map(|j| {
                let mut a = h * h;
                for i in 0..d {
                    let u = h * t[i] + 2.0 * PI * j[i] as f64;
                    a += u * u;
                }
                num * a.powi(-m)
            })
            .collect::<CompensatedSum>()
            .value()
    };
    let measured_sup = ball_samples(d, delta).iter().map(ratio_sum).fold(0.0, f64::max);
    let proof_bound = h.powi(2 * m)
        * (1.0 + delta * delta).powi(m)
        * js.iter()
            .map(|j| {
                let n: f64 = j[..d].iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt();
                (2.0 * PI * n - delta).powi(-2 * m)
            })
            .collect::<CompensatedSum>()
            .value();
    Ok(SynthesisEstimate { measured_sup, proof_bound })
}

/// Deterministic sample of the ball ‖t‖ ≤ δ: radial shells times directions.
fn ball_samples(d: usize, delta: f64) -> Vec<Point> {
    const SHELLS: usize = 40;
    let mut pts = vec![[0.0; MAX_DIM]];
    match d {
        1 => {
            for i in 1..=SHELLS * 4 {
                let r = delta * i as f64 / (SHELLS * 4) as f64;
                pts.push([r, 0.0, 0.0]);
                pts.push([-r, 0.0, 0.0]);
            }
        }
        2 => {
            for i in 1..=SHELLS {
                let r = delta * i as f64 / SHELLS as f64;
                for a in 0..144 {
                    let th = 2.0 * PI * a as f64 / 144.0;
                    pts.push([r * th.cos(), r * th.sin(), 0.0]);
                }
            }
        }
        _ => {
            for i in 1..=SHELLS / 2 {
                let r = delta * i as f64 / (SHELLS / 2) as f64;
                for a in 0..=24 {
                    let ph = PI * a as f64 / 24.0;
                    for b in 0..48 {
                        let th = 2.0 * PI * b as f64 / 48.0;
                        pts.push([r * ph.sin() * th.cos(), r * ph.sin() * th.sin(), r * ph.cos()]);
                    }
                }
            }
        }
    }
    pts
}
