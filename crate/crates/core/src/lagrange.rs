//! Lagrange functions χ̃_h(y) = Σ_k a_k Φ_h(y − k) of cardinal interpolation,
//! with a_k the Fourier coefficients of 1/σ(·,h).

use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::consts::{
    CARDINAL_RADIUS, CARDINAL_TOL, COEFF_NOISE_FLOOR, DECAY_FLOOR, DECAY_MIN_SAMPLES, DECAY_NOISE_FACTOR, DEFAULT_COEFF_TOL, DEFAULT_GRID,
    DEFAULT_SYMBOL_TOL, MAX_GRID_1D, MAX_GRID_2D, MAX_GRID_3D, MAX_HALO,
};
use crate::error::{Error, Result};
use crate::grid::{box_indices, cube_indices, norm1, norm_inf_index, BoxArray, CompensatedSum, Convolver, Index, Point, MAX_DIM};
use crate::kernels::KernelSpec;
use crate::lattice::{truncated_tail_bound, LatticeSum};
use crate::quad::GaussLegendre;
use crate::symbol::{cosine_transform, symbol_poisson, symbol_spatial, Route, SymbolGrid};

pub fn max_grid(d: usize) -> usize {
    [MAX_GRID_1D, MAX_GRID_2D, MAX_GRID_3D][d.clamp(1, 3) - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LagrangeConfig {
    pub grid_size: usize,
    pub symbol_tol: f64,
    /// Coefficient tolerance relative to max_k |a_k|.
    pub coeff_tol: f64,
    pub max_grid: Option<usize>,
    pub route: Option<Route>,
}

impl Default for LagrangeConfig {
    fn default() -> Self {
        Self { grid_size: DEFAULT_GRID, symbol_tol: DEFAULT_SYMBOL_TOL, coeff_tol: DEFAULT_COEFF_TOL, max_grid: None, route: None }
    }
}

/// A Lagrange function stored as χ̃_h = Σ_k b_k Ψ(· − k) with Ψ = p ∗ Φ_h,
/// where p are the Fourier coefficients of the trigonometric polynomial P below and
/// b those of 1/(Pσ). The plain coefficients a = p ∗ b are kept for export.
/// Evaluating through b avoids the cancellation in Σ a_k Φ_h, whose |a_k|
/// grow like h^{d−2m} with alternating signs.
#[derive(Debug, Clone, Serialize)]
pub struct LagrangeFunction {
    pub spec: KernelSpec,
    pub h: f64,
    /// b_k are stored for ‖k‖_∞ ≤ radius; a_k for ‖k‖_∞ ≤ radius + m.
    pub radius: usize,
    /// Σ of dropped |b_k| plus the aliasing allowance on the kept ones.
    pub coefficient_tail: f64,
    pub grid_size: usize,
    pub route: Route,
    pub coeff_tol: f64,
    /// Tolerance actually applied: the requested one raised to the DFT noise floor.
    pub effective_tol: f64,
    pub max_coefficient: f64,
    pub max_reduced: f64,
    /// Largest change of b at the last grid doubling, relative to max|b|.
    pub aliasing_change: f64,
    /// max_{‖j‖_∞ ≤ 5} |χ̃_h(j) − δ_{j0}|.
    pub cardinal_error: f64,
    #[serde(skip)]
    pub coefficients: BoxArray,
    #[serde(skip)]
    pub reduced: BoxArray,
    #[serde(skip)]
    pub stencil: BoxArray,
}

/// Terms kept of t² = Σ_n g_n uⁿ, u = 2 − 2cos t, g_n = 2/(n²·C(2n, n)).
/// One term is exact in d = 1; in higher d three terms match the singular
/// set of the lattice sum to sixth order.
pub fn stencil_terms(d: usize) -> usize {
    if d == 1 {
        1
    } else {
        3
    }
}

fn series_coefficients(terms: usize) -> Vec<f64> {
    (1..=terms)
        .map(|n| {
            let binom: f64 = (1..=n).map(|k| (n + k) as f64 / k as f64).product();
            2.0 / ((n * n) as f64 * binom)
        })
        .collect()
}

fn ell(terms: usize, u: f64) -> f64 {
    series_coefficients(terms).iter().enumerate().map(|(i, g)| g * u.powi(i as i32 + 1)).sum()
}

/// Constant making P vanish at t = ±ih e_i + 2πk, where the lattice sum is
/// singular; this keeps 1/(Pσ) analytic in a wide strip.
fn stencil_shift(terms: usize, h: f64) -> f64 {
    -ell(terms, 2.0 - 2.0 * h.cosh())
}

fn convolve_small(a: &BoxArray, b: &BoxArray, r: i64) -> BoxArray {
    let d = a.d;
    let mut out = BoxArray::cube(d, r);
    for (k, v) in a.iter() {
        if v == 0.0 {
            continue;
        }
        for (j, w) in b.iter() {
            if w == 0.0 {
                continue;
            }
            let mut t = [0; MAX_DIM];
            for i in 0..d {
                t[i] = k[i] + j[i];
            }
            out.set(&t, out.get(&t) + v * w);
        }
    }
    out
}

/// Coefficients of P(t) = (c + Σ_i ℓ(2 − 2cos t_i))^m, ℓ the truncated series
/// of t², on ‖j‖_∞ ≤ m·stencil_terms(d).
pub fn stencil(d: usize, m: u32, h: f64) -> BoxArray {
    let terms = stencil_terms(d);
    let n = terms as i64;
    let g = series_coefficients(terms);
    // one axis at a time: ℓ(u_i) with u_i the [−1, 2, −1] stencil
    let mut base = BoxArray::cube(d, n);
    base.set(&[0; MAX_DIM], stencil_shift(terms, h));
    for i in 0..d {
        let mut e = [0; MAX_DIM];
        let mut u = BoxArray::cube(d, 1);
        u.set(&[0; MAX_DIM], 2.0);
        e[i] = 1;
        u.set(&e, -1.0);
        e[i] = -1;
        u.set(&e, -1.0);
        let mut power = u.clone();
        for (p, gp) in g.iter().enumerate() {
            if p > 0 {
                power = convolve_small(&power, &u, n);
            }
            for (k, v) in power.iter() {
                base.set(&k, base.get(&k) + gp * v);
            }
        }
    }
    let r = m as i64 * n;
    let mut out = BoxArray::cube(d, r);
    out.set(&[0; MAX_DIM], 1.0);
    for _ in 0..m {
        out = convolve_small(&out, &base, r);
    }
    out
}

/// Power of the stencil factor; compactly supported kernels have no poles
/// at ±ih to cancel, so their factor is trivial.
pub fn stencil_order(spec: &KernelSpec) -> u32 {
    if spec.is_compact() {
        0
    } else {
        spec.m
    }
}

fn stencil_symbol(d: usize, m: u32, h: f64, t: &Point) -> f64 {
    let terms = stencil_terms(d);
    let s: f64 = t[..d].iter().map(|v| ell(terms, 2.0 - 2.0 * v.cos())).sum();
    (stencil_shift(terms, h) + s).powi(m as i32)
}

/// b on the folded range k ∈ [0, M/2]ᵈ from a symbol grid.
fn folded_coefficients(grid: &SymbolGrid, order: u32) -> Vec<f64> {
    let d = grid.d;
    let m = grid.grid_size;
    let half = m / 2;
    let data: Vec<f64> = box_indices(d, [0; MAX_DIM], [half as i64; MAX_DIM])
        .map(|l| {
            let w: f64 = l[..d].iter().map(|&v| if v == 0 || v == half as i64 { 1.0 } else { 2.0 }).product();
            w / (grid.sigma_at(&l) * stencil_symbol(d, order, grid.h, &grid.node(&l)))
        })
        .collect();
    let scale = (m as f64).powi(-(d as i32));
    cosine_transform(d, data, half + 1, half + 1, m).into_iter().map(|v| v * scale).collect()
}

fn folded_offset(d: usize, side: usize, k: &Index) -> usize {
    k[..d].iter().fold(0, |acc, &v| acc * side + v.unsigned_abs() as usize)
}

fn rebuild(spec: &KernelSpec, h: f64, m: usize, tol: f64, route: Route) -> Result<SymbolGrid> {
    match route {
        Route::Spatial => symbol_spatial(spec, h, m, tol),
        Route::Poisson => symbol_poisson(spec, h, m, tol),
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

/// Coefficients by the inverse DFT over the symbol grid, doubling M until
/// they settle and the boundary band ‖k‖_∞ ≥ M/4 is below tolerance.
pub fn lagrange_coefficients(grid: &SymbolGrid, tol: f64) -> Result<LagrangeFunction> {
    lagrange_coefficients_capped(grid, tol, max_grid(grid.d))
}

pub fn lagrange_coefficients_capped(grid: &SymbolGrid, tol: f64, cap: usize) -> Result<LagrangeFunction> {
    if !(grid.h > 0.0) {
        return Err(Error::Domain("Lagrange coefficients need h > 0".into()));
    }
    let spec = KernelSpec::parse(&grid.kernel)?;
    let requested = tol;
    let d = grid.d;
    let mut m = grid.grid_size;
    let order = stencil_order(&spec);
    let mut current = folded_coefficients(grid, order);
    let (coeffs, m_final, change) = loop {
        let m2 = 2 * m;
        if m2 > cap {
            let boundary = boundary_max(d, m, &current) / max_abs(&current);
            return Err(Error::Aliasing { grid_size: m, achieved: boundary, requested });
        }
        let next_grid = rebuild(&spec, grid.h, m2, grid.tol, grid.route)?;
        let next = folded_coefficients(&next_grid, order);
        let max_b = max_abs(&next);
        let side = m / 2 + 1;
        let side2 = m2 / 2 + 1;
        let mut change = 0.0f64;
        for k in box_indices(d, [0; MAX_DIM], [(m / 2) as i64; MAX_DIM]) {
            let diff = (next[folded_offset(d, side2, &k)] - current[folded_offset(d, side, &k)]).abs();
            change = change.max(diff / max_b);
        }
        let boundary = boundary_max(d, m2, &next) / max_b;
        let tol = requested.max(coefficient_noise_floor(d, m2));
        if change < tol && boundary < tol {
            break (next, m2, change);
        }
        current = next;
        m = m2;
    };
    let tol = requested.max(coefficient_noise_floor(d, m_final));
    let side = m_final / 2 + 1;
    let max_b = max_abs(&coeffs);
    let mut radius = 0usize;
    for k in box_indices(d, [0; MAX_DIM], [(m_final / 2) as i64; MAX_DIM]) {
        if coeffs[folded_offset(d, side, &k)].abs() >= tol * max_b {
            radius = radius.max(norm_inf_index(d, &k) as usize);
        }
    }
    let r = radius as i64;
    let mut dropped = CompensatedSum::default();
    let half = (m_final / 2) as i64;
    for k in box_indices(d, [-half + 1; MAX_DIM], [half; MAX_DIM]) {
        if norm_inf_index(d, &k) > r {
            dropped.add(coeffs[folded_offset(d, side, &k)].abs());
        }
    }
    let reduced = BoxArray::from_fn(d, [-r; MAX_DIM], [(2 * r + 1) as usize; MAX_DIM], |k| {
        coeffs[folded_offset(d, side, &k)]
    });
    let p = stencil(d, order, grid.h);
    let ra = r + order as i64 * stencil_terms(spec.d) as i64;
    let coefficients = BoxArray::from_fn(d, [-ra; MAX_DIM], [(2 * ra + 1) as usize; MAX_DIM], |k| {
        // evaluated on the first orthant so that a_k = a_{−k} exactly
        let k = [k[0].abs(), k[1].abs(), k[2].abs()];
        let mut acc = CompensatedSum::default();
        for (j, pj) in p.iter() {
            if pj != 0.0 {
                let mut t = [0; MAX_DIM];
                for a in 0..d {
                    t[a] = k[a] - j[a];
                }
                acc.add(pj * reduced.get(&t));
            }
        }
        acc.value()
    });
    let kept = reduced.data.len() as f64;
    let mut l = LagrangeFunction {
        spec,
        h: grid.h,
        radius,
        coefficient_tail: dropped.value() + kept * change * max_b,
        grid_size: m_final,
        route: grid.route,
        coeff_tol: requested,
        effective_tol: tol,
        max_coefficient: max_abs(&coefficients.data),
        max_reduced: max_b,
        aliasing_change: change,
        cardinal_error: f64::NAN,
        coefficients,
        reduced,
        stencil: p,
    };
    l.cardinal_error = l.cardinal_check(CARDINAL_RADIUS);
    Ok(l)
}

/// Rounding floor of the coefficient DFT on an Mᵈ grid, relative to max |b|.
pub fn coefficient_noise_floor(d: usize, grid_size: usize) -> f64 {
    COEFF_NOISE_FLOOR.max(4.0 * f64::EPSILON * d as f64 * (grid_size as f64).log2())
}

fn boundary_max(d: usize, m: usize, folded: &[f64]) -> f64 {
    let side = m / 2 + 1;
    let band = (m / 4) as i64;
    box_indices(d, [0; MAX_DIM], [(m / 2) as i64; MAX_DIM])
        .filter(|k| norm_inf_index(d, k) >= band)
        .map(|k| folded[folded_offset(d, side, &k)].abs())
        .fold(0.0, f64::max)
}

/// Builds the symbol and the coefficients. Without `cfg.route`, Matérn kernels
/// use the Poisson route at every h: rounding in the spatial sum reaches 1e−13
/// relative for m = 3, above the coefficient tolerance.
pub fn lagrange_function(spec: &KernelSpec, h: f64, cfg: &LagrangeConfig) -> Result<LagrangeFunction> {
    let route = cfg.route.unwrap_or(if spec.is_compact() { Route::Spatial } else { Route::Poisson });
    let grid = rebuild(spec, h, cfg.grid_size, cfg.symbol_tol, route)?;
    let cap = cfg.max_grid.unwrap_or_else(|| max_grid(spec.d));
    lagrange_coefficients_capped(&grid, cfg.coeff_tol, cap)
}

/// Samples χ̃_h(o + n) for ‖n‖_∞ ≤ radius.
#[derive(Debug, Clone)]
pub struct OffsetSamples {
    pub offset: Point,
    pub values: BoxArray,
    /// Uncertainty: rounding in the sums plus the coefficient error allowance.
    pub noise: BoxArray,
}

/// Work above which offset sampling switches from direct sums to FFT convolution.
const DIRECT_WORK_LIMIT: f64 = 6e7;

impl LagrangeFunction {
    pub fn d(&self) -> usize {
        self.spec.d
    }

    /// Plain coefficient a_k of χ̃_h = Σ a_k Φ_h(· − k).
    pub fn coefficient(&self, k: &Index) -> f64 {
        self.coefficients.get(k)
    }

    /// Ψ(o + p) and Σ_j |p_j Φ_h(o + p − j)| for ‖p‖_∞ ≤ reach.
    fn psi_tables(&self, o: &Point, reach: i64) -> (BoxArray, BoxArray) {
        let d = self.d();
        let rm = stencil_order(&self.spec) as i64 * stencil_terms(d) as i64;
        let outer = reach + rm;
        let phi = BoxArray::from_fn(d, [-outer; MAX_DIM], [(2 * outer + 1) as usize; MAX_DIM], |p| {
            let mut y = [0.0; MAX_DIM];
            for i in 0..d {
                y[i] = o[i] + p[i] as f64;
            }
            self.spec.scaled_eval(self.h, &y)
        });
        let taps: Vec<(Index, f64)> = self.stencil.iter().filter(|(_, v)| *v != 0.0).collect();
        let side = (2 * reach + 1) as usize;
        let idx: Vec<Index> = cube_indices(d, reach).collect();
        let pairs: Vec<(f64, f64)> = idx
            .par_iter()
            .map(|p| {
                let mut acc = CompensatedSum::default();
                let mut abs = 0.0;
                for (j, c) in &taps {
                    let mut t = [0; MAX_DIM];
                    for a in 0..d {
                        t[a] = p[a] - j[a];
                    }
                    let v = c * phi.get(&t);
                    acc.add(v);
                    abs += v.abs();
                }
                (acc.value(), abs)
            })
            .collect();
        let mut psi = BoxArray::zeros(d, [-reach; MAX_DIM], [side; MAX_DIM]);
        let mut mass = psi.clone();
        for (slot, (v, a)) in pairs.into_iter().enumerate() {
            psi.data[slot] = v;
            mass.data[slot] = a;
        }
        (psi, mass)
    }

    /// χ̃_h(y) by the stored coefficient sum.
    pub fn eval(&self, y: &Point) -> f64 {
        let d = self.d();
        let mut o = [0.0; MAX_DIM];
        let mut base = [0; MAX_DIM];
        for i in 0..d {
            base[i] = y[i].round() as i64;
            o[i] = y[i] - base[i] as f64;
        }
        let n_reach = base[..d].iter().map(|v| v.abs()).max().unwrap_or(0);
        let (psi, _) = self.psi_tables(&o, self.radius as i64 + n_reach);
        self.reduced
            .iter()
            .map(|(k, b)| {
                let mut t = [0; MAX_DIM];
                for i in 0..d {
                    t[i] = base[i] - k[i];
                }
                b * psi.get(&t)
            })
            .collect::<CompensatedSum>()
            .value()
    }

    /// χ_h(x) = χ̃_h(x/h).
    pub fn eval_scaled(&self, x: &Point) -> f64 {
        let mut y = [0.0; MAX_DIM];
        for i in 0..self.d() {
            y[i] = x[i] / self.h;
        }
        self.eval(&y)
    }

    /// sup|Ψ| ≤ Σ_j |p_j| · sup|Φ|.
    fn psi_sup(&self) -> f64 {
        self.stencil.data.iter().map(|v| v.abs()).sum::<f64>() * self.spec.profile(0.0).abs()
    }

    /// Truncation error bound of `eval`: coefficient_tail · sup|Ψ|.
    pub fn eval_error_bound(&self) -> f64 {
        self.coefficient_tail * self.psi_sup()
    }

    pub fn cardinal_check(&self, radius: i64) -> f64 {
        let s = self.sample_offset(&[0.0; MAX_DIM], radius);
        s.values
            .iter()
            .map(|(j, v)| {
                let delta = if norm_inf_index(self.d(), &j) == 0 { 1.0 } else { 0.0 };
                (v - delta).abs()
            })
            .fold(0.0, f64::max)
    }

    /// χ̃_h(o + n), ‖n‖_∞ ≤ radius, by direct compensated sums when cheap and
    /// FFT convolution otherwise.
    pub fn sample_offset(&self, o: &Point, radius: i64) -> OffsetSamples {
        let d = self.d();
        let rc = self.radius as i64;
        let reach = rc + radius;
        let (psi, mass) = self.psi_tables(o, reach);
        let n_side = (2 * radius + 1) as usize;
        let coeff_err = self.aliasing_change.max(coefficient_noise_floor(d, self.grid_size)) * self.max_reduced;
        let work = (n_side as f64).powi(d as i32) * (self.reduced.data.len() as f64);
        let mut values = BoxArray::cube(d, radius);
        let mut noise = BoxArray::cube(d, radius);
        if work <= DIRECT_WORK_LIMIT {
            let idx: Vec<Index> = cube_indices(d, radius).collect();
            let rows: Vec<(f64, f64)> = idx
                .par_iter()
                .map(|n| {
                    let mut acc = CompensatedSum::default();
                    let mut err = 0.0;
                    for (k, b) in self.reduced.iter() {
                        let mut p = [0; MAX_DIM];
                        for i in 0..d {
                            p[i] = n[i] - k[i];
                        }
                        acc.add(b * psi.get(&p));
                        err += f64::EPSILON * (b * mass.get(&p)).abs() + coeff_err * psi.get(&p).abs();
                    }
                    (acc.value(), err)
                })
                .collect();
            for (slot, (v, e)) in rows.into_iter().enumerate() {
                values.data[slot] = v;
                noise.data[slot] = e;
            }
        } else {
            let full = Convolver::new(&self.reduced, psi.len).apply(&psi);
            let mut abs_b = self.reduced.clone();
            abs_b.data.iter_mut().for_each(|v| *v = v.abs());
            let mut abs_psi = psi.clone();
            abs_psi.data.iter_mut().for_each(|v| *v = v.abs());
            let ones = BoxArray::from_fn(d, self.reduced.lo, self.reduced.len, |_| 1.0);
            let rounding = Convolver::new(&abs_b, mass.len).apply(&mass);
            let psi_mass = Convolver::new(&ones, abs_psi.len).apply(&abs_psi);
            // FFT rounding scales with the total mass, not the local one
            let total = rounding.data.iter().fold(0.0f64, |a, v| a.max(*v));
            let log_n = ((2 * reach + 1) as f64).log2();
            for (slot, n) in cube_indices(d, radius).enumerate() {
                values.data[slot] = full.get(&n);
                noise.data[slot] =
                    f64::EPSILON * (rounding.get(&n) + 4.0 * total * log_n) + coeff_err * psi_mass.get(&n);
            }
        }
        OffsetSamples { offset: *o, values, noise }
    }

    /// Coefficient CSV: k components, a_k, uncertainty.
    pub fn coefficients_csv(&self) -> String {
        let d = self.d();
        let mut out = String::new();
        for i in 0..d {
            let _ = write!(out, "k{},", i + 1);
        }
        out.push_str("a,a_err\n");
        let taps: f64 = self.stencil.data.iter().map(|v| v.abs()).sum();
        let err = self.aliasing_change.max(coefficient_noise_floor(d, self.grid_size)) * self.max_reduced * taps;
        for (k, a) in self.coefficients.iter() {
            for v in &k[..d] {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{a:.16e},{err:.16e}");
        }
        out
    }

    /// Profile CSV along the first axis: |y|, χ̃(y), uncertainty.
    pub fn profile_csv(&self, r_max: f64, step: f64) -> String {
        let mut out = String::from("r,chi,chi_err\n");
        let n = (r_max / step).round() as usize;
        let err = self.eval_error_bound();
        for i in 0..=n {
            let r = i as f64 * step;
            let v = self.eval(&[r, 0.0, 0.0]);
            let _ = writeln!(out, "{r:.16e},{v:.16e},{err:.16e}");
        }
        out
    }
}

/// Evaluates χ̃_h(o + n), ‖n‖_∞ ≤ radius, for many offsets o sharing one
/// transform of the coefficients.
pub struct OffsetSampler<'a> {
    l: &'a LagrangeFunction,
    radius: i64,
    reach: i64,
    conv: Convolver,
}

impl LagrangeFunction {
    pub fn sampler(&self, radius: i64) -> OffsetSampler<'_> {
        let reach = self.radius as i64 + radius;
        let len = BoxArray::cube(self.d(), reach).len;
        OffsetSampler { l: self, radius, reach, conv: Convolver::new(&self.reduced, len) }
    }
}

impl OffsetSampler<'_> {
    pub fn radius(&self) -> i64 {
        self.radius
    }

    /// Values on the cube and one uncertainty bound valid for all of them.
    pub fn values(&self, o: &Point) -> (BoxArray, f64) {
        let l = self.l;
        let d = l.d();
        let (psi, mass) = l.psi_tables(o, self.reach);
        let full = self.conv.apply(&psi);
        let values = BoxArray::from_fn(d, [-self.radius; MAX_DIM], BoxArray::cube(d, self.radius).len, |n| full.get(&n));
        let b_abs: f64 = l.reduced.data.iter().map(|v| v.abs()).sum();
        let mass_max = mass.data.iter().fold(0.0f64, |a, v| a.max(*v));
        let psi_abs: f64 = psi.data.iter().map(|v| v.abs()).sum();
        let log_n = ((2 * self.reach + 1) as f64).log2();
        let coeff_err = l.aliasing_change.max(coefficient_noise_floor(d, l.grid_size)) * l.max_reduced;
        let err = f64::EPSILON * (4.0 * log_n + 2.0) * b_abs * mass_max
            + coeff_err * psi_abs
            + l.coefficient_tail * l.psi_sup();
        (values, err)
    }
}

/// Quadrature settings of the Fourier-integral route.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadConfig {
    /// Gauss–Legendre nodes per axis and period cell.
    pub nodes: usize,
    pub target: f64,
    pub max_cells: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self { nodes: 24, target: 1e-6, max_cells: 400 }
    }
}

/// χ̃_h(y) = (2π)^{−d} ∫ e^{iy·t} ω(t,h)(h² + ‖t‖²)^{−m} dt, summed cell by
/// cell over t + 2πk with ω sampled once on the base cell. The k = 0 cell
/// uses ω/q^m = 1/(1 + q^m G), which is 1 at q = 0.
pub fn lagrange_eval_fourier(spec: &KernelSpec, h: f64, y: &Point, cfg: &QuadConfig) -> Result<f64> {
    if h.is_nan() || !(0.0..=1.0).contains(&h) {
        return Err(Error::Domain(format!("h must lie in [0, 1], got {h}")));
    }
    let (d, m) = (spec.d, spec.m);
    let lattice = LatticeSum::new(d, m, h);
    let rule = GaussLegendre::cached(cfg.nodes);
    // tensor nodes on [−π, π)ᵈ
    let n = cfg.nodes;
    let mut nodes: Vec<(Point, f64)> = Vec::with_capacity(n.pow(d as u32));
    for idx in box_indices(d, [0; MAX_DIM], [n as i64 - 1; MAX_DIM]) {
        let mut t = [0.0; MAX_DIM];
        let mut w = 1.0;
        for i in 0..d {
            let j = idx[i] as usize;
            t[i] = PI * rule.nodes[j];
            w *= PI * rule.weights[j];
        }
        nodes.push((t, w));
    }
    // per node: ω, ω/q^m, cos(y·t), sin(y·t)
    let info: Vec<[f64; 4]> = nodes
        .iter()
        .map(|(t, _)| {
            let (q, g) = lattice.split(t);
            let qm = q.powi(m as i32);
            let phase: f64 = (0..d).map(|i| y[i] * t[i]).sum();
            [qm / (1.0 + qm * g), 1.0 / (1.0 + qm * g), phase.cos(), phase.sin()]
        })
        .collect();
    let mean_omega: f64 = nodes.iter().zip(&info).map(|((_, w), v)| w * v[0]).sum::<f64>() / (2.0 * PI).powi(d as i32);
    let mut cells = 1usize;
    while mean_omega * truncated_tail_bound(d, m, cells as i64) > cfg.target {
        cells += 1;
        if cells > cfg.max_cells {
            return Err(Error::Accuracy {
                estimate: mean_omega * truncated_tail_bound(d, m, cfg.max_cells as i64),
                target: cfg.target,
            });
        }
    }
    let tail = mean_omega * truncated_tail_bound(d, m, cells as i64);
    let h2 = h * h;
    let ks: Vec<Index> = cube_indices(d, cells as i64).collect();
    let partial: Vec<f64> = ks
        .par_iter()
        .map(|k| {
            let origin = k[..d].iter().all(|&v| v == 0);
            let shift: f64 = (0..d).map(|i| 2.0 * PI * y[i] * k[i] as f64).sum();
            let (sb, cb) = shift.sin_cos();
            let mut acc = CompensatedSum::default();
            for ((t, w), v) in nodes.iter().zip(&info) {
                let weight = if origin {
                    v[1]
                } else {
                    let mut a = h2;
                    for i in 0..d {
                        let u = t[i] + 2.0 * PI * k[i] as f64;
                        a += u * u;
                    }
                    v[0] / a.powi(m as i32)
                };
                acc.add(w * weight * (v[2] * cb - v[3] * sb));
            }
            acc.value()
        })
        .collect();
    let total: CompensatedSum = partial.into_iter().collect();
    let value = total.value() / (2.0 * PI).powi(d as i32);
    if !(tail <= cfg.target) {
        return Err(Error::Accuracy { estimate: tail, target: cfg.target });
    }
    Ok(value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayNorm {
    Ell1OfY,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecaySample {
    pub y: Point,
    /// ℓ1 radius |y|.
    pub r: f64,
    pub value: f64,
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    pub amplitude: f64,
    pub rate: f64,
    /// RMS deviation of the envelope points from the fitted line, in ln scale.
    pub residual: f64,
    pub annulus: [f64; 2],
    pub norm_used: DecayNorm,
    pub usable_samples: usize,
    pub floor: f64,
    /// Standard errors of B and of ln A from the regression.
    pub rate_stderr: f64,
    pub log_amplitude_stderr: f64,
}

impl DecayFit {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("decay fit serializes")
    }

    /// Σ_{j ∈ Zᵈ, ‖j‖_∞ > w} A e^{−B|j|}, bounding the truncated Lagrange series tail.
    pub fn tail_sum(&self, d: usize, w: usize) -> f64 {
        // Σ over ‖j‖_∞ = n ≥ w+1 with |j|₁ ≥ n and at most 2d(2n+1)^{d−1} points per shell
        let mut total = 0.0;
        for n in (w + 1)..(w + 2000) {
            let nf = n as f64;
            let t = 2.0 * d as f64 * (2.0 * nf + 1.0).powi(d as i32 - 1) * self.amplitude * (-self.rate * nf).exp();
            total += t;
            if t < 1e-18 * total {
                break;
            }
        }
        total
    }
}

/// χ̃_h on (1/2)Zᵈ with ℓ1 radius in [r_min, r_max].
pub fn decay_samples(l: &LagrangeFunction, r_min: f64, r_max: f64) -> Vec<DecaySample> {
    let d = l.d();
    let radius = r_max.ceil() as i64;
    let mut out = Vec::new();
    for o in box_indices(d, [0; MAX_DIM], [1; MAX_DIM]) {
        let mut off = [0.0; MAX_DIM];
        for i in 0..d {
            off[i] = 0.5 * o[i] as f64;
        }
        let s = l.sample_offset(&off, radius);
        for ((n, v), (_, e)) in s.values.iter().zip(s.noise.iter()) {
            let mut y = [0.0; MAX_DIM];
            for i in 0..d {
                y[i] = off[i] + n[i] as f64;
            }
            let r = norm1(d, &y);
            if r >= r_min && r <= r_max {
                out.push(DecaySample { y, r, value: v, noise: e });
            }
        }
    }
    out
}

/// Least-squares line through (|y|, ln|χ̃|) over the per-unit-shell maxima of
/// the samples above max(floor, 100·noise).
pub fn fit_decay(samples: &[DecaySample], floor: f64) -> Result<DecayFit> {
    let usable: Vec<&DecaySample> =
        samples.iter().filter(|s| s.value.abs() > floor.max(DECAY_NOISE_FACTOR * s.noise)).collect();
    let (r_lo, r_hi) = samples.iter().fold((f64::INFINITY, 0.0f64), |(a, b), s| (a.min(s.r), b.max(s.r)));
    if usable.len() < DECAY_MIN_SAMPLES {
        return Err(Error::InsufficientData { usable: usable.len(), needed: DECAY_MIN_SAMPLES });
    }
    let mut shells: Vec<(i64, f64, f64)> = Vec::new();
    for s in &usable {
        let key = s.r.floor() as i64;
        let v = s.value.abs();
        match shells.iter_mut().find(|(k, _, _)| *k == key) {
            Some(e) => {
                if v > e.2 {
                    e.1 = s.r;
                    e.2 = v;
                }
            }
            None => shells.push((key, s.r, v)),
        }
    }
    if shells.len() < 3 {
        return Err(Error::InsufficientData { usable: shells.len(), needed: 3 });
    }
    shells.sort_by_key(|e| e.0);
    let n = shells.len() as f64;
    let mx = shells.iter().map(|e| e.1).sum::<f64>() / n;
    let my = shells.iter().map(|e| e.2.ln()).sum::<f64>() / n;
    let sxx: f64 = shells.iter().map(|e| (e.1 - mx).powi(2)).sum();
    let sxy: f64 = shells.iter().map(|e| (e.1 - mx) * (e.2.ln() - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = shells.iter().map(|e| (e.2.ln() - intercept - slope * e.1).powi(2)).sum();
    let residual = (ssr / n).sqrt();
    let sigma = if n > 2.0 { (ssr / (n - 2.0)).sqrt() } else { 0.0 };
    let rate_stderr = sigma / sxx.sqrt();
    let log_amplitude_stderr = sigma * (1.0 / n + mx * mx / sxx).sqrt();
    Ok(DecayFit {
        amplitude: intercept.exp(),
        rate: -slope,
        residual,
        annulus: [r_lo, r_hi],
        norm_used: DecayNorm::Ell1OfY,
        usable_samples: usable.len(),
        floor,
        rate_stderr,
        log_amplitude_stderr,
    })
}

/// Outcome of a decay study: a fit, or every sample beyond r_min lies below
/// the floor (compactly supported Lagrange functions).
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayOutcome {
    Fitted(DecayFit),
    BelowFloor { r_min: f64, floor: f64 },
}

impl DecayOutcome {
    /// Halo W = ceil((ln A + ln(1/tol))/B), at least ceil(ln(1/tol)/B), capped.
    pub fn halo(&self, tol: f64) -> usize {
        match self {
            DecayOutcome::Fitted(f) => {
                let w = ((f.amplitude.ln().max(0.0) + (1.0 / tol).ln()) / f.rate).ceil();
                if w.is_finite() && w > 0.0 {
                    (w as usize).min(MAX_HALO)
                } else {
                    MAX_HALO
                }
            }
            DecayOutcome::BelowFloor { r_min, .. } => r_min.ceil() as usize,
        }
    }

    pub fn rate(&self) -> f64 {
        match self {
            DecayOutcome::Fitted(f) => f.rate,
            DecayOutcome::BelowFloor { .. } => f64::INFINITY,
        }
    }

    pub fn amplitude(&self) -> Option<f64> {
        match self {
            DecayOutcome::Fitted(f) => Some(f.amplitude),
            DecayOutcome::BelowFloor { .. } => None,
        }
    }

    /// Reported tail Σ_{‖j‖_∞ > w} A e^{−B|j|}; zero below the floor.
    pub fn tail_sum(&self, d: usize, w: usize) -> f64 {
        match self {
            DecayOutcome::Fitted(f) => f.tail_sum(d, w),
            DecayOutcome::BelowFloor { floor, .. } => *floor,
        }
    }
}

/// Default decay study: samples on (1/2)Zᵈ with 2 ≤ |y| ≤ r_max.
pub fn decay_study(l: &LagrangeFunction, r_max: f64, floor: f64) -> Result<DecayOutcome> {
    let r_min = 2.0;
    let samples = decay_samples(l, r_min, r_max);
    match fit_decay(&samples, floor) {
        Ok(f) => Ok(DecayOutcome::Fitted(f)),
        Err(Error::InsufficientData { .. })
            if samples.iter().all(|s| s.value.abs() <= floor.max(DECAY_NOISE_FACTOR * s.noise)) =>
        {
            Ok(DecayOutcome::BelowFloor { r_min, floor })
        }
        Err(e) => Err(e),
    }
}

pub fn default_decay_floor() -> f64 {
    DECAY_FLOOR
}

/// Fails with an accuracy error when the cardinal conditions are violated.
pub fn require_cardinal(l: &LagrangeFunction) -> Result<()> {
    if !(l.cardinal_error <= CARDINAL_TOL) {
        return Err(Error::Accuracy { estimate: l.cardinal_error, target: CARDINAL_TOL });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn l11(h: f64) -> LagrangeFunction {
        let spec = KernelSpec::matern(1, 1).unwrap();
        lagrange_function(&spec, h, &LagrangeConfig::default()).unwrap()
    }

    #[test]
    fn d1_m1_coefficients() {
        for &h in &[1.0, 0.5, 0.125] {
            let l = l11(h);
            let c = FRAC_PI_2.sqrt() * (1.0 - (-2.0 * h).exp());
            let a0 = (1.0 + (-2.0 * h).exp()) / c;
            let a1 = -(-h).exp() / c;
            assert!((l.coefficient(&[0, 0, 0]) - a0).abs() < 1e-10 * a0);
            assert!((l.coefficient(&[1, 0, 0]) - a1).abs() < 1e-10 * a0);
            assert!((l.coefficient(&[-1, 0, 0]) - a1).abs() < 1e-10 * a0);
            for k in 2..=(l.radius as i64 + 2) {
                assert!(l.coefficient(&[k, 0, 0]).abs() < 1e-10);
            }
            let half = l.eval(&[0.5, 0.0, 0.0]);
            assert!((half - 1.0 / (2.0 * (h / 2.0).cosh())).abs() < 1e-10, "h={h}");
            let scaled = l.eval_scaled(&[h / 2.0, 0.0, 0.0]);
            assert!((scaled - half).abs() < 1e-14);
        }
    }

    #[test]
    fn cardinal_and_symmetry() {
        for (m, d, h) in [(2, 1, 0.5), (2, 2, 0.5), (3, 2, 0.25)] {
            let spec = KernelSpec::matern(m, d).unwrap();
            let l = lagrange_function(&spec, h, &LagrangeConfig::default()).unwrap();
            assert!(l.cardinal_error < 1e-8, "m={m} d={d} h={h}: {}", l.cardinal_error);
            for (k, a) in l.coefficients.iter() {
                let neg = [-k[0], -k[1], -k[2]];
                assert_eq!(a, l.coefficient(&neg));
            }
        }
    }

    #[test]
    fn dft_reproduces_inverse_symbol() {
        let spec = KernelSpec::matern(2, 1).unwrap();
        let grid = crate::symbol::symbol(&spec, 0.5, 64, 1e-14).unwrap();
        let l = lagrange_coefficients(&grid, 1e-15).unwrap();
        for (i, &s) in grid.sigma.iter().enumerate() {
            let t = 2.0 * PI * i as f64 / 64.0;
            let series: f64 = l.coefficients.iter().map(|(k, a)| a * (k[0] as f64 * t).cos()).sum();
            assert!((series * s - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn aliasing_cap_is_reported() {
        let spec = KernelSpec::matern(2, 2).unwrap();
        let grid = crate::symbol::symbol(&spec, 0.125, 16, 1e-14).unwrap();
        assert!(matches!(lagrange_coefficients_capped(&grid, 1e-15, 32), Err(Error::Aliasing { .. })));
    }

    #[test]
    fn fourier_route_agrees() {
        for d in 1..=2 {
            let spec = KernelSpec::matern(2, d).unwrap();
            let l = lagrange_function(&spec, 0.5, &LagrangeConfig::default()).unwrap();
            let mut pts = vec![[0.0; 3], [0.5, 0.0, 0.0]];
            if d == 2 {
                pts.push([1.0, 0.5, 0.0]);
            }
            for y in pts {
                let f = lagrange_eval_fourier(&spec, 0.5, &y, &QuadConfig::default()).unwrap();
                assert!((f - l.eval(&y)).abs() < 1e-5, "d={d} y={y:?}: {f} vs {}", l.eval(&y));
            }
        }
    }

    #[test]
    fn madych_nelson_limit_is_cardinal_at_origin() {
        let spec = KernelSpec::m_harmonic(2, 2).unwrap();
        let v = lagrange_eval_fourier(&spec, 0.0, &[0.0; 3], &QuadConfig::default()).unwrap();
        assert!((v - 1.0).abs() < 1e-5, "{v}");
        let tight = QuadConfig { max_cells: 2, ..QuadConfig::default() };
        assert!(matches!(lagrange_eval_fourier(&spec, 0.0, &[0.0; 3], &tight), Err(Error::Accuracy { .. })));
    }

    #[test]
    fn decay_fit_on_matern() {
        let spec = KernelSpec::matern(2, 1).unwrap();
        let l = lagrange_function(&spec, 0.5, &LagrangeConfig::default()).unwrap();
        let samples = decay_samples(&l, 2.0, 40.0);
        let fit = fit_decay(&samples, 1e-13).unwrap();
        assert!(fit.rate > 0.2);
        let fit2 = fit_decay(&samples, 2e-13).unwrap();
        assert!((fit2.rate / fit.rate - 1.0).abs() < 0.05);
        let few: Vec<DecaySample> = samples.into_iter().take(5).collect();
        assert!(matches!(fit_decay(&few, 1e-13), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn d1_m1_lagrange_function_is_compactly_supported() {
        let l = l11(1.0);
        let out = decay_study(&l, 20.0, 1e-13).unwrap();
        assert!(matches!(out, DecayOutcome::BelowFloor { .. }));
        for i in 0..20 {
            let y = 1.0 + 0.25 * i as f64;
            assert!(l.eval(&[y, 0.0, 0.0]).abs() < 1e-14);
        }
    }
}
