//! The scaled interpolation operator I_h f(x) = Σ_j f(hj) χ_h(x − hj),
//! Lebesgue constants and convergence experiments.

use std::fmt;
use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::consts::{
    DECAY_FLOOR, DEFAULT_EVAL_TOL, ERROR_FLOOR, ERROR_OFFSETS, LEBESGUE_SAMPLES,
};
use crate::error::{Error, Result};
use crate::grid::{box_indices, cube_indices, norm2, BoxArray, CompensatedSum, Convolver, Index, Point, MAX_DIM};
use crate::kernels::KernelSpec;
use crate::lagrange::{decay_study, lagrange_function, DecayOutcome, LagrangeConfig, LagrangeFunction};

type Evaluator = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;

/// A target function with its membership in the Bessel potential space L^{2m,1}
/// certified by hand.
#[derive(Clone)]
pub struct TestFunction {
    pub name: String,
    pub d: usize,
    pub admissible: bool,
    pub certificate: String,
    f: Evaluator,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("name", &self.name)
            .field("d", &self.d)
            .field("admissible", &self.admissible)
            .finish()
    }
}

impl TestFunction {
    pub fn new(
        name: impl Into<String>,
        d: usize,
        admissible: bool,
        certificate: impl Into<String>,
        f: impl Fn(&Point) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { name: name.into(), d, admissible, certificate: certificate.into(), f: Arc::new(f) }
    }

    /// e^{−‖x‖²}.
    pub fn gaussian(d: usize) -> Self {
        Self::new("gaussian", d, true, "Fourier transform is a Gaussian", move |x| (-norm2(d, x).powi(2)).exp())
    }

    /// exp(−1/(1 − ‖x‖²)) inside the unit ball.
    pub fn bump(d: usize) -> Self {
        Self::new("bump", d, true, "C-infinity with compact support, so the transform is Schwartz", move |x| {
            let r2 = norm2(d, x).powi(2);
            if r2 < 1.0 {
                (-1.0 / (1.0 - r2)).exp()
            } else {
                0.0
            }
        })
    }

    /// Constant function; bounded but not integrable.
    pub fn constant(d: usize, c: f64) -> Self {
        Self::new("constant", d, false, "not integrable", move |_| c)
    }

    pub fn eval(&self, x: &Point) -> f64 {
        (self.f)(x)
    }
}

/// Samples f(hj) for ‖hj − center‖_∞ ≤ radius.
#[derive(Debug, Clone)]
pub struct DataWindow {
    pub d: usize,
    pub center: Point,
    pub radius: f64,
    pub h: f64,
    pub values: BoxArray,
}

impl DataWindow {
    pub fn sample(f: &TestFunction, h: f64, center: &Point, radius: f64) -> Self {
        Self::from_fn(f.d, h, center, radius, |x| f.eval(x))
    }

    pub fn from_fn(d: usize, h: f64, center: &Point, radius: f64, mut f: impl FnMut(&Point) -> f64) -> Self {
        let mut lo = [0; MAX_DIM];
        let mut len = [1; MAX_DIM];
        for i in 0..d {
            let a = ((center[i] - radius) / h - 1e-9).ceil() as i64;
            let b = ((center[i] + radius) / h + 1e-9).floor() as i64;
            lo[i] = a;
            len[i] = (b - a + 1).max(0) as usize;
        }
        let values = BoxArray::from_fn(d, lo, len, |j| {
            let mut x = [0.0; MAX_DIM];
            for i in 0..d {
                x[i] = h * j[i] as f64;
            }
            f(&x)
        });
        Self { d, center: *center, radius, h, values }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.data.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn ell1_norm(&self) -> f64 {
        self.values.data.iter().map(|v| v.abs()).sum()
    }
}

/// Truncation of the Lagrange series to ‖n‖_∞ ≤ width, with the omitted mass
/// Σ_{‖n‖_∞ > width} |χ̃_h(o + n)| bounded by the fitted envelope.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Halo {
    pub width: usize,
    pub tail: f64,
    pub tol: f64,
}

impl Halo {
    pub fn from_decay(decay: &DecayOutcome, d: usize, tol: f64) -> Self {
        let width = decay.halo(tol);
        // an offset in [0, 1)ᵈ lowers |o + n|₁ below ‖n‖_∞ by at most d
        let shift = match decay {
            DecayOutcome::Fitted(f) => (f.rate * d as f64).exp(),
            DecayOutcome::BelowFloor { .. } => 1.0,
        };
        Self { width, tail: decay.tail_sum(d, width) * shift, tol }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interpolated {
    pub value: f64,
    /// ‖f‖_∞ times the halo tail.
    pub truncation_bound: f64,
    pub rounding_bound: f64,
}

/// I_h f(x) from a data window; x must keep a halo of `halo.width` lattice
/// steps inside the window.
pub fn interpolate(l: &LagrangeFunction, data: &DataWindow, x: &Point, halo: &Halo) -> Result<Interpolated> {
    let d = l.d();
    if data.d != d || (data.h - l.h).abs() > 1e-15 * l.h {
        return Err(Error::Domain("data window does not match the Lagrange function".into()));
    }
    let w = halo.width as i64;
    let mut base = [0; MAX_DIM];
    let mut o = [0.0; MAX_DIM];
    for i in 0..d {
        let y = x[i] / l.h;
        base[i] = y.floor() as i64;
        o[i] = y - base[i] as f64;
        let lo = data.values.lo[i];
        let hi = lo + data.values.len[i] as i64 - 1;
        if base[i] - w < lo || base[i] + 1 + w > hi {
            return Err(Error::OutOfWindow(format!(
                "x = {:?} needs lattice indices {}..{} on axis {i}, window has {lo}..{hi}",
                &x[..d],
                base[i] - w,
                base[i] + 1 + w
            )));
        }
    }
    let s = l.sample_offset(&o, w);
    let mut acc = CompensatedSum::default();
    let mut rounding = 0.0;
    for ((n, g), (_, e)) in s.values.iter().zip(s.noise.iter()) {
        let mut j = [0; MAX_DIM];
        for i in 0..d {
            j[i] = base[i] - n[i];
        }
        let fj = data.values.get(&j);
        acc.add(fj * g);
        rounding += (fj * e).abs();
    }
    Ok(Interpolated { value: acc.value(), truncation_bound: data.sup_norm() * halo.tail, rounding_bound: rounding })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LebesgueConfig {
    /// Samples per axis on the unit cell, endpoints included.
    pub samples: usize,
    /// Rounds of local refinement around the running maximizer.
    pub refine_levels: usize,
    pub eval_tol: f64,
    pub decay_r_max: f64,
}

impl Default for LebesgueConfig {
    fn default() -> Self {
        Self { samples: LEBESGUE_SAMPLES, refine_levels: 3, eval_tol: DEFAULT_EVAL_TOL, decay_r_max: 40.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LebesgueEstimate {
    /// Largest sampled Σ_{‖n‖_∞ ≤ W}|χ̃_h(y − n)|, a lower bound of Λ(h) up to rounding.
    pub value: f64,
    /// Halo tail plus rounding; Λ(h) ≤ value + uncertainty on the sampled points.
    pub uncertainty: f64,
    pub argmax: Vec<f64>,
    pub halo: Halo,
    pub points_evaluated: usize,
}

/// Folds y into [0, 1/2]ᵈ with sorted coordinates; the Lebesgue function is
/// periodic, even and invariant under coordinate permutations.
fn fold_point(d: usize, y: &Point) -> Point {
    let mut out = [0.0; MAX_DIM];
    for i in 0..d {
        let v = y[i].rem_euclid(1.0);
        out[i] = if v > 0.5 { 1.0 - v } else { v };
    }
    out[..d].sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    out
}

/// Λ(h) = sup_y Σ_j |χ̃_h(y − j)| sampled on a grid of the unit cell and refined
/// around the maximizer.
pub fn lebesgue_constant(l: &LagrangeFunction, cfg: &LebesgueConfig) -> Result<LebesgueEstimate> {
    let decay = decay_study(l, cfg.decay_r_max, DECAY_FLOOR)?;
    lebesgue_with_halo(l, &Halo::from_decay(&decay, l.d(), cfg.eval_tol), cfg)
}

pub fn lebesgue_with_halo(l: &LagrangeFunction, halo: &Halo, cfg: &LebesgueConfig) -> Result<LebesgueEstimate> {
    if cfg.samples < 2 {
        return Err(Error::Config("lebesgue sampling needs at least 2 points per axis".into()));
    }
    let d = l.d();
    let w = halo.width as i64;
    let sampler = l.sampler(w);
    let count = (2 * w + 1).pow(d as u32) as f64;
    let eval = |p: &Point| -> (f64, f64) {
        // Σ_n |χ̃(o + n)| over the cube equals Σ_j |χ̃(y − j)| at y = −o by symmetry
        let (v, err) = sampler.values(p);
        let s: CompensatedSum = v.data.iter().map(|x| x.abs()).collect();
        (s.value(), err * count)
    };
    let mut seen: Vec<Point> = Vec::new();
    let mut best = (f64::NEG_INFINITY, 0.0, [0.0; MAX_DIM]);
    let run = |points: Vec<Point>, best: &mut (f64, f64, Point), seen: &mut Vec<Point>| {
        let mut fresh: Vec<Point> = Vec::new();
        for p in points {
            let p = fold_point(d, &p);
            let dup = |q: &Point| (0..d).all(|i| (q[i] - p[i]).abs() < 1e-12);
            if !seen.iter().any(dup) && !fresh.iter().any(dup) {
                fresh.push(p);
            }
        }
        let results: Vec<(f64, f64)> = fresh.par_iter().map(&eval).collect();
        for (p, (v, e)) in fresh.iter().zip(results) {
            if v > best.0 {
                *best = (v, e, *p);
            }
        }
        seen.extend(fresh);
    };
    let n = cfg.samples as i64 - 1;
    let step = 1.0 / n as f64;
    let coarse: Vec<Point> = box_indices(d, [0; MAX_DIM], [n / 2; MAX_DIM])
        .map(|i| {
            let mut p = [0.0; MAX_DIM];
            for a in 0..d {
                p[a] = i[a] as f64 * step;
            }
            p
        })
        .collect();
    run(coarse, &mut best, &mut seen);
    let mut delta = step;
    for _ in 0..cfg.refine_levels {
        delta /= 2.0;
        let center = best.2;
        let local: Vec<Point> = cube_indices(d, 2)
            .map(|k| {
                let mut p = [0.0; MAX_DIM];
                for a in 0..d {
                    p[a] = center[a] + delta * k[a] as f64;
                }
                p
            })
            .collect();
        run(local, &mut best, &mut seen);
    }
    let max_err = best.1;
    Ok(LebesgueEstimate {
        value: best.0,
        uncertainty: halo.tail + max_err,
        argmax: best.2[..d].to_vec(),
        halo: halo.clone(),
        points_evaluated: seen.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceConfig {
    pub lagrange: LagrangeConfig,
    /// Errors are sampled on ‖x‖_∞ ≤ eval_radius.
    pub eval_radius: f64,
    /// Offsets i/(offsets + 1), i = 1..offsets, per axis and cell.
    pub offsets: usize,
    pub eval_tol: f64,
    pub decay_r_max: f64,
    pub decay_floor: f64,
    /// Also estimate Λ(h) for every h.
    pub with_lebesgue: bool,
    pub lebesgue: LebesgueConfig,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            lagrange: LagrangeConfig::default(),
            eval_radius: 4.0,
            offsets: ERROR_OFFSETS,
            eval_tol: DEFAULT_EVAL_TOL,
            decay_r_max: 40.0,
            decay_floor: DECAY_FLOOR,
            with_lebesgue: false,
            lebesgue: LebesgueConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupError {
    pub error: f64,
    pub uncertainty: f64,
    pub points: usize,
}

/// sup |f − I_h f| over the offset grid h(o + n), ‖h(o + n)‖_∞ ≤ eval_radius.
pub fn sup_error(l: &LagrangeFunction, f: &TestFunction, halo: &Halo, cfg: &ConvergenceConfig) -> Result<SupError> {
    let d = l.d();
    if f.d != d {
        return Err(Error::Domain(format!("test function has d = {}, kernel has d = {d}", f.d)));
    }
    let h = l.h;
    let w = halo.width as i64;
    let n_eval = (cfg.eval_radius / h).ceil() as i64;
    let data = DataWindow::from_fn(d, h, &[0.0; MAX_DIM], (n_eval + w + 1) as f64 * h, |x| f.eval(x));
    let sampler = l.sampler(w);
    let conv = Convolver::new(&data.values, BoxArray::cube(d, w).len);
    let per_axis = cfg.offsets.max(1);
    let offsets: Vec<Point> = box_indices(d, [1; MAX_DIM], [per_axis as i64; MAX_DIM])
        .map(|i| {
            let mut o = [0.0; MAX_DIM];
            for a in 0..d {
                o[a] = i[a] as f64 / (per_axis + 1) as f64;
            }
            o
        })
        .collect();
    let sup_f = data.sup_norm();
    let l1 = data.ell1_norm();
    let results: Vec<(f64, f64, usize)> = offsets
        .par_iter()
        .map(|o| {
            let (g, gerr) = sampler.values(o);
            let g_abs: f64 = g.data.iter().map(|v| v.abs()).sum();
            let full = conv.apply(&g);
            let mut worst = 0.0f64;
            let mut points = 0;
            for n in cube_indices(d, n_eval) {
                let mut x = [0.0; MAX_DIM];
                for a in 0..d {
                    x[a] = h * (o[a] + n[a] as f64);
                }
                if x[..d].iter().any(|v| v.abs() > cfg.eval_radius) {
                    continue;
                }
                worst = worst.max((f.eval(&x) - full.get(&n)).abs());
                points += 1;
            }
            let log_n = (full.data.len() as f64).log2();
            let err = l1 * gerr + f64::EPSILON * (4.0 * log_n + 2.0) * sup_f * g_abs;
            (worst, err, points)
        })
        .collect();
    let mut out = SupError { error: 0.0, uncertainty: 0.0, points: 0 };
    for (e, u, p) in results {
        out.error = out.error.max(e);
        out.uncertainty = out.uncertainty.max(u);
        out.points += p;
    }
    out.uncertainty += sup_f * halo.tail;
    Ok(out)
}

/// Interpolates f by the shifted Lagrange functions at every lattice point of
/// the window, giving I_h f on the grid h(o + n).
pub fn interpolate_offset(l: &LagrangeFunction, data: &DataWindow, o: &Point, halo: &Halo) -> BoxArray {
    let w = halo.width as i64;
    let (g, _) = l.sampler(w).values(o);
    Convolver::new(&data.values, g.len).apply(&g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpanFit {
    /// Sampled sup of f − s_h for the least-squares s_h.
    pub sup_residual: f64,
    pub centers: usize,
    pub samples: usize,
}

/// Least-squares fit of f by Σ_j c_j Φ_h(x/h − j) over centers ‖hj‖_∞ ≤ radius,
/// sampled at spacing h/per_cell on ‖x‖_∞ ≤ radius + h. The sup residual is an
/// upper estimate of dist(f, span) away from the sampled set.
pub fn span_distance_estimate(spec: &KernelSpec, f: &TestFunction, h: f64, radius: f64, per_cell: usize) -> Result<SpanFit> {
    let d = spec.d;
    if f.d != d {
        return Err(Error::Domain(format!("test function has d = {}, kernel has d = {d}", f.d)));
    }
    let per_cell = per_cell.max(1) as i64;
    let j_max = (radius / h).floor() as i64;
    let centers: Vec<Index> = cube_indices(d, j_max).collect();
    let s_max = (j_max + 1) * per_cell;
    let samples: Vec<Point> = cube_indices(d, s_max)
        .map(|i| {
            let mut x = [0.0; MAX_DIM];
            for a in 0..d {
                x[a] = h * i[a] as f64 / per_cell as f64;
            }
            x
        })
        .collect();
    if samples.len() < centers.len() {
        return Err(Error::InsufficientData { usable: samples.len(), needed: centers.len() });
    }
    let basis = |x: &Point, j: &Index| {
        let mut y = [0.0; MAX_DIM];
        for a in 0..d {
            y[a] = x[a] / h - j[a] as f64;
        }
        spec.scaled_eval(h, &y)
    };
    let a = DMatrix::from_fn(samples.len(), centers.len(), |r, c| basis(&samples[r], &centers[c]));
    let b = DVector::from_iterator(samples.len(), samples.iter().map(|x| f.eval(x)));
    let c = a
        .clone()
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::Domain(format!("least-squares solve failed: {e}")))?;
    let residual = &b - &a * &c;
    Ok(SpanFit { sup_residual: residual.amax(), centers: centers.len(), samples: samples.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub h: f64,
    pub error: Option<f64>,
    pub error_err: Option<f64>,
    pub lebesgue: Option<f64>,
    pub lebesgue_err: Option<f64>,
    pub decay_a: Option<f64>,
    pub decay_a_err: Option<f64>,
    /// None when every sample beyond r_min is below the floor.
    pub decay_b: Option<f64>,
    pub decay_b_err: Option<f64>,
    pub decay_residual: Option<f64>,
    pub halo: usize,
    pub grid_size: usize,
    pub coeff_radius: usize,
    pub cardinal_error: f64,
    /// Error below the floating-point floor; excluded from the slope.
    pub floored: bool,
    /// Sampled sup residual of a least-squares fit from the span (compact study, coarse h).
    pub distance_estimate: Option<f64>,
    /// error ≤ (1 + Λ)·distance_estimate.
    pub distance_consistent: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Uniformity {
    pub lebesgue_min: Option<f64>,
    pub lebesgue_max: Option<f64>,
    pub lebesgue_ratio: Option<f64>,
    /// Smallest fitted rate; infinite rows (below floor) count as +∞.
    pub decay_rate_min: Option<f64>,
    /// max/min fitted amplitude over the fitted rows.
    pub decay_amplitude_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSettings {
    pub grid_size: usize,
    pub symbol_tol: f64,
    pub coeff_tol: f64,
    pub eval_tol: f64,
    pub eval_radius: f64,
    pub error_offsets: usize,
    pub lebesgue_samples: usize,
    pub refine_levels: usize,
    pub decay_floor: f64,
    pub decay_r_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub kernel: String,
    pub d: usize,
    pub m: u32,
    pub study: String,
    pub test_function: Option<String>,
    pub h_list: Vec<f64>,
    pub rows: Vec<ReportRow>,
    pub slope: Option<f64>,
    pub slope_stderr: Option<f64>,
    pub slope_points: usize,
    pub target_slope: f64,
    pub uniformity: Uniformity,
    pub warnings: Vec<String>,
    pub settings: ReportSettings,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| format!("{x:.16e}"))
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "h,error,error_err,lebesgue,lebesgue_err,decay_A,decay_A_err,decay_B,decay_B_err,halo,grid_size,coeff_radius,cardinal_error,distance\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:.16e},{},{},{},{},{},{},{},{},{},{},{},{:.16e},{}",
                r.h,
                opt(r.error),
                opt(r.error_err),
                opt(r.lebesgue),
                opt(r.lebesgue_err),
                opt(r.decay_a),
                opt(r.decay_a_err),
                opt(r.decay_b),
                opt(r.decay_b_err),
                r.halo,
                r.grid_size,
                r.coeff_radius,
                r.cardinal_error,
                opt(r.distance_estimate)
            );
        }
        out
    }

    /// `{family}_{d}d_m{m}_{study}` without extension.
    pub fn file_stem(&self) -> String {
        let family = self.kernel.split(':').next().unwrap_or(&self.kernel);
        format!("{family}_{}d_m{}_{}", self.d, self.m, self.study)
    }
}

/// Least-squares slope of ln(error) against ln(h) and its standard error.
pub fn fit_slope(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let ssr: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
    let stderr = if points.len() > 2 { (ssr / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    Some((slope, stderr))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Study {
    Converge,
    Compact,
    Lebesgue,
}

impl Study {
    fn name(self) -> &'static str {
        match self {
            Study::Converge => "converge",
            Study::Compact => "compact",
            Study::Lebesgue => "lebesgue",
        }
    }
}

struct Cell {
    row: ReportRow,
    warning: Option<String>,
}

fn run_cell(spec: &KernelSpec, h: f64, f: Option<&TestFunction>, cfg: &ConvergenceConfig, study: Study) -> Result<Cell> {
    let l = lagrange_function(spec, h, &cfg.lagrange)?;
    let decay = decay_study(&l, cfg.decay_r_max, cfg.decay_floor)?;
    let halo = Halo::from_decay(&decay, spec.d, cfg.eval_tol);
    let mut row = ReportRow {
        h,
        error: None,
        error_err: None,
        lebesgue: None,
        lebesgue_err: None,
        decay_a: None,
        decay_a_err: None,
        decay_b: None,
        decay_b_err: None,
        decay_residual: None,
        halo: halo.width,
        grid_size: l.grid_size,
        coeff_radius: l.radius,
        cardinal_error: l.cardinal_error,
        floored: false,
        distance_estimate: None,
        distance_consistent: None,
    };
    if let DecayOutcome::Fitted(fit) = &decay {
        row.decay_a = Some(fit.amplitude);
        row.decay_a_err = Some(fit.amplitude * fit.log_amplitude_stderr);
        row.decay_b = Some(fit.rate);
        row.decay_b_err = Some(fit.rate_stderr);
        row.decay_residual = Some(fit.residual);
    }
    let mut warning = None;
    if let Some(f) = f {
        let e = sup_error(&l, f, &halo, cfg)?;
        row.error = Some(e.error);
        row.error_err = Some(e.uncertainty);
        let scale = f.eval(&[0.0; MAX_DIM]).abs().max(1.0);
        if e.error < ERROR_FLOOR * scale {
            row.floored = true;
            warning = Some(format!("h = {h}: error {:.3e} below the floating-point floor; excluded from the slope", e.error));
        }
    }
    let span_fit = match f {
        Some(f) if study == Study::Compact && span_fit_affordable(spec.d, h) => {
            Some(span_distance_estimate(spec, f, h, SPAN_FIT_RADIUS, SPAN_FIT_PER_CELL)?)
        }
        _ => None,
    };
    if cfg.with_lebesgue || study == Study::Lebesgue || span_fit.is_some() {
        let lb = lebesgue_with_halo(&l, &halo, &cfg.lebesgue)?;
        row.lebesgue = Some(lb.value);
        row.lebesgue_err = Some(lb.uncertainty);
    }
    if let (Some(fit), Some(err), Some(lam), Some(lam_err)) = (span_fit, row.error, row.lebesgue, row.lebesgue_err) {
        row.distance_estimate = Some(fit.sup_residual);
        row.distance_consistent = Some(err <= (1.0 + lam + lam_err) * fit.sup_residual);
    }
    Ok(Cell { row, warning })
}

const SPAN_FIT_RADIUS: f64 = 3.5;
const SPAN_FIT_PER_CELL: usize = 2;

/// Keeps the dense least-squares solve below a few 10⁹ flops.
fn span_fit_affordable(d: usize, h: f64) -> bool {
    let j = (SPAN_FIT_RADIUS / h).floor();
    let cols = (2.0 * j + 1.0).powi(d as i32);
    let rows = (2.0 * (j + 1.0) * SPAN_FIT_PER_CELL as f64 + 1.0).powi(d as i32);
    rows * cols * cols <= 3e9
}

fn uniformity(rows: &[ReportRow]) -> Uniformity {
    let lb: Vec<f64> = rows.iter().filter_map(|r| r.lebesgue).collect();
    let (lmin, lmax) = lb.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let has_l = !lb.is_empty();
    let rates: Vec<f64> = rows.iter().map(|r| r.decay_b.unwrap_or(f64::INFINITY)).collect();
    let amps: Vec<f64> = rows.iter().filter_map(|r| r.decay_a).collect();
    let (amin, amax) = amps.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let rate_min = rates.iter().copied().fold(f64::INFINITY, f64::min);
    Uniformity {
        lebesgue_min: has_l.then_some(lmin),
        lebesgue_max: has_l.then_some(lmax),
        lebesgue_ratio: has_l.then_some(lmax / lmin),
        decay_rate_min: (!rows.is_empty() && rate_min.is_finite()).then_some(rate_min),
        decay_amplitude_ratio: (!amps.is_empty()).then_some(amax / amin),
    }
}

fn run_study(
    spec: &KernelSpec,
    f: Option<&TestFunction>,
    h_list: &[f64],
    cfg: &ConvergenceConfig,
    study: Study,
) -> Result<ExperimentReport> {
    if h_list.is_empty() {
        return Err(Error::Config("empty h list".into()));
    }
    if let Some(f) = f {
        if !f.admissible {
            return Err(Error::Domain(format!("test function `{}` is not admissible: {}", f.name, f.certificate)));
        }
    }
    let cells: Vec<Result<Cell>> = h_list.par_iter().map(|&h| run_cell(spec, h, f, cfg, study)).collect();
    let mut rows = Vec::with_capacity(cells.len());
    let mut warnings = Vec::new();
    for c in cells {
        let c = c?;
        if let Some(w) = c.warning {
            warnings.push(w);
        }
        rows.push(c.row);
    }
    let pts: Vec<(f64, f64)> =
        rows.iter().filter(|r| !r.floored).filter_map(|r| r.error.map(|e| (r.h, e))).filter(|p| p.1 > 0.0).collect();
    let fitted = if f.is_some() { fit_slope(&pts) } else { None };
    if f.is_some() && fitted.is_none() {
        warnings.push("fewer than two usable errors; slope undefined".into());
    }
    Ok(ExperimentReport {
        kernel: spec.id(),
        d: spec.d,
        m: spec.m,
        study: study.name().to_string(),
        test_function: f.map(|f| f.name.clone()),
        h_list: h_list.to_vec(),
        uniformity: uniformity(&rows),
        rows,
        slope: fitted.map(|s| s.0),
        slope_stderr: fitted.map(|s| s.1),
        slope_points: pts.len(),
        target_slope: 2.0 * spec.m as f64,
        warnings,
        settings: ReportSettings {
            grid_size: cfg.lagrange.grid_size,
            symbol_tol: cfg.lagrange.symbol_tol,
            coeff_tol: cfg.lagrange.coeff_tol,
            eval_tol: cfg.eval_tol,
            eval_radius: cfg.eval_radius,
            error_offsets: cfg.offsets,
            lebesgue_samples: cfg.lebesgue.samples,
            refine_levels: cfg.lebesgue.refine_levels,
            decay_floor: cfg.decay_floor,
            decay_r_max: cfg.decay_r_max,
        },
    })
}

/// Sup errors of I_h f over `h_list` and the fitted log-log slope.
pub fn convergence_study(spec: &KernelSpec, f: &TestFunction, h_list: &[f64], cfg: &ConvergenceConfig) -> Result<ExperimentReport> {
    run_study(spec, Some(f), h_list, cfg, Study::Converge)
}

/// Interpolation with a compactly supported kernel; the error bounds the
/// distance to the span from above.
pub fn compact_kernel_study(
    spec: &KernelSpec,
    f: &TestFunction,
    h_list: &[f64],
    cfg: &ConvergenceConfig,
) -> Result<ExperimentReport> {
    if !spec.is_compact() {
        return Err(Error::InvalidSpec(format!("{} is not a compactly supported kernel", spec.id())));
    }
    run_study(spec, Some(f), h_list, cfg, Study::Compact)
}

/// Λ(h) and decay fits over `h_list`.
pub fn lebesgue_study(spec: &KernelSpec, h_list: &[f64], cfg: &ConvergenceConfig) -> Result<ExperimentReport> {
    run_study(spec, None, h_list, cfg, Study::Lebesgue)
}

/// Σ_j c_j Φ_h(· − j) for finitely many j, as a function of the scaled variable y = x/h.
pub fn kernel_combination(spec: &KernelSpec, h: f64, coeffs: &[(Index, f64)]) -> impl Fn(&Point) -> f64 + Send + Sync {
    let spec = spec.clone();
    let coeffs = coeffs.to_vec();
    move |y: &Point| {
        coeffs
            .iter()
            .map(|(j, c)| {
                let mut p = [0.0; MAX_DIM];
                for i in 0..spec.d {
                    p[i] = y[i] - j[i] as f64;
                }
                c * spec.scaled_eval(h, &p)
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matern(m: u32, d: usize, h: f64) -> LagrangeFunction {
        lagrange_function(&KernelSpec::matern(m, d).unwrap(), h, &LagrangeConfig::default()).unwrap()
    }

    fn halo_for(l: &LagrangeFunction) -> Halo {
        let decay = decay_study(l, 40.0, DECAY_FLOOR).unwrap();
        Halo::from_decay(&decay, l.d(), DEFAULT_EVAL_TOL)
    }

    #[test]
    fn sum_of_translates_matches_poisson_formula() {
        // Σ_j χ̃_h(y − j) = Σ_k φ̂(2πk) cos(2πk·y) / Σ_k φ̂(2πk), φ̂(ξ) ∝ (h² + ‖ξ‖²)^{−m}
        use std::f64::consts::PI;
        for (m, d, h) in [(2, 1, 0.5), (2, 2, 0.5), (1, 1, 0.25), (2, 1, 0.0625)] {
            let l = matern(m, d, h);
            let halo = halo_for(&l);
            let one = TestFunction::constant(d, 1.0);
            let data = DataWindow::sample(&one, h, &[0.0; MAX_DIM], 40.0 * h + 100.0 * h);
            for y in [[0.1, 0.2, 0.0], [-1.3, 0.77, 0.0], [2.25, -3.5, 0.0]] {
                let mut num = CompensatedSum::default();
                let k_max = 400 / d as i64;
                for k in cube_indices(d, k_max) {
                    let kk: f64 = k[..d].iter().map(|&v| (2.0 * PI * v as f64).powi(2)).sum();
                    let w = (h * h + kk).powi(-(m as i32));
                    let phase: f64 = (0..d).map(|i| 2.0 * PI * k[i] as f64 * y[i]).sum();
                    num.add(w * phase.cos());
                }
                let den = crate::lattice::LatticeSum::new(d, m, h).sum(&[0.0; MAX_DIM]);
                let reference_err = crate::lattice::truncated_tail_bound(d, m, k_max) / den;
                let mut x = [0.0; MAX_DIM];
                for i in 0..d {
                    x[i] = h * y[i];
                }
                let v = interpolate(&l, &data, &x, &halo).unwrap();
                let want = num.value() / den;
                assert!((v.value - want).abs() < 1e-9 + reference_err, "m={m} d={d} h={h}: {} vs {want}", v.value);
                if h <= 0.0625 {
                    assert!((v.value - 1.0).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn delta_data_gives_the_lagrange_function() {
        let l = matern(2, 1, 0.25);
        let halo = halo_for(&l);
        let data = DataWindow::from_fn(1, 0.25, &[0.0; MAX_DIM], 20.0, |x| if x[0] == 0.0 { 1.0 } else { 0.0 });
        for x in [0.1, 0.3, 1.7] {
            let v = interpolate(&l, &data, &[x, 0.0, 0.0], &halo).unwrap();
            let direct = l.eval_scaled(&[x, 0.0, 0.0]);
            assert!((v.value - direct).abs() < 1e-10);
        }
        let err = interpolate(&l, &data, &[19.9, 0.0, 0.0], &halo);
        assert!(matches!(err, Err(Error::OutOfWindow(_))));
    }

    #[test]
    fn interpolation_is_linear() {
        let l = matern(2, 2, 0.5);
        let halo = halo_for(&l);
        let f = TestFunction::gaussian(2);
        let g = TestFunction::bump(2);
        let c = [0.0; MAX_DIM];
        let df = DataWindow::sample(&f, 0.5, &c, 30.0);
        let dg = DataWindow::sample(&g, 0.5, &c, 30.0);
        let dc = DataWindow::from_fn(2, 0.5, &c, 30.0, |x| 2.0 * f.eval(x) - 3.0 * g.eval(x));
        let x = [0.3, -0.45, 0.0];
        let a = interpolate(&l, &df, &x, &halo).unwrap().value;
        let b = interpolate(&l, &dg, &x, &halo).unwrap().value;
        let ab = interpolate(&l, &dc, &x, &halo).unwrap().value;
        assert!((ab - (2.0 * a - 3.0 * b)).abs() < 1e-10);
    }

    #[test]
    fn reproduces_the_space() {
        let spec = KernelSpec::matern(2, 1).unwrap();
        let h = 0.5;
        let l = lagrange_function(&spec, h, &LagrangeConfig::default()).unwrap();
        let halo = halo_for(&l);
        let s = kernel_combination(&spec, h, &[([0, 0, 0], 1.0), ([3, 0, 0], -0.5), ([-2, 0, 0], 0.25)]);
        let data = DataWindow::from_fn(1, h, &[0.0; MAX_DIM], 40.0, |x| s(&[x[0] / h, 0.0, 0.0]));
        for x in [0.13, 0.9, -1.41, 2.6] {
            let v = interpolate(&l, &data, &[x, 0.0, 0.0], &halo).unwrap();
            assert!((v.value - s(&[x / h, 0.0, 0.0])).abs() < 1e-9, "x={x}");
        }
    }

    #[test]
    fn d1_m1_lebesgue_constant_is_one() {
        // χ̃ = sinh(h(1 − |y|))/sinh h on [−1, 1]; Σ_j |χ̃(y − j)| peaks at y = 0
        let l = matern(1, 1, 0.5);
        let est = lebesgue_constant(&l, &LebesgueConfig::default()).unwrap();
        let dense = (0..=1000)
            .map(|i| {
                let y = i as f64 / 1000.0;
                let h = 0.5f64;
                ((h * (1.0 - y)).sinh() + (h * y).sinh()) / h.sinh()
            })
            .fold(0.0, f64::max);
        assert!((est.value - dense).abs() < 1e-4);
    }

    #[test]
    fn lebesgue_bounds_random_data() {
        use rand::{Rng, SeedableRng};
        let l = matern(2, 1, 0.5);
        let halo = halo_for(&l);
        let est = lebesgue_with_halo(&l, &halo, &LebesgueConfig::default()).unwrap();
        assert!(est.value >= 1.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let data = DataWindow::from_fn(1, 0.5, &[0.0; MAX_DIM], 40.0, |_| if rng.gen::<bool>() { 1.0 } else { -1.0 });
            let x = rng.gen_range(-5.0..5.0);
            let v = interpolate(&l, &data, &[x, 0.0, 0.0], &halo).unwrap();
            assert!(v.value.abs() <= est.value + est.uncertainty + 1e-9);
        }
    }

    #[test]
    fn interpolation_error_is_within_lebesgue_factor_of_a_span_fit() {
        let spec = KernelSpec::matern(2, 1).unwrap();
        let f = TestFunction::gaussian(1);
        for h in [0.5, 0.25] {
            let l = lagrange_function(&spec, h, &LagrangeConfig::default()).unwrap();
            let halo = halo_for(&l);
            let lam = lebesgue_with_halo(&l, &halo, &LebesgueConfig::default()).unwrap();
            let err = sup_error(&l, &f, &halo, &ConvergenceConfig::default()).unwrap();
            let fit = span_distance_estimate(&spec, &f, h, 7.0, 8).unwrap();
            assert!(fit.sup_residual < err.error, "h={h}: the fit is closer than I_h f");
            assert!(err.error <= (1.0 + lam.value + lam.uncertainty) * fit.sup_residual, "h={h}");
        }
    }

    #[test]
    fn slope_fit_recovers_powers() {
        let pts: Vec<(f64, f64)> = [1.0, 0.5, 0.25, 0.125].iter().map(|&h: &f64| (h, 3.0 * h.powi(4))).collect();
        let (s, e) = fit_slope(&pts).unwrap();
        assert!((s - 4.0).abs() < 1e-12 && e < 1e-10);
        assert!(fit_slope(&pts[..1]).is_none());
    }

    #[test]
    fn convergence_report_round_trip() {
        let spec = KernelSpec::matern(1, 1).unwrap();
        let f = TestFunction::gaussian(1);
        let rep = convergence_study(&spec, &f, &[0.5, 0.25, 0.125], &ConvergenceConfig::default()).unwrap();
        assert_eq!(rep.rows.len(), 3);
        assert_eq!(rep.file_stem(), "matern_1d_m1_converge");
        assert!(rep.slope.unwrap() > 1.5);
        assert_eq!(rep.to_csv().lines().count(), 4);
        assert!(rep.to_json().contains("\"slope\""));
        let bad = TestFunction::constant(1, 1.0);
        assert!(convergence_study(&spec, &bad, &[0.5], &ConvergenceConfig::default()).is_err());
        assert!(compact_kernel_study(&spec, &f, &[0.5], &ConvergenceConfig::default()).is_err());
    }
}
