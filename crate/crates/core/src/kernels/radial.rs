//! Radial Fourier transforms
//! (F_dψ)(r) = r^{1−d/2} ∫₀^∞ ψ(t) t^{d/2} J_{d/2−1}(rt) dt
//! and fits of perturbation-type transforms C r^{−2m} λ(r).

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{DecayBound, KernelSpec};
use crate::error::{Error, Result};
use crate::quad::{graded_integrate, panel_integrate, GaussLegendre};
use crate::specfun::bessel_j0;

const RULE_ORDER: usize = 24;
const MAX_PANEL: f64 = 0.5;
/// Exponent of the truncation point T = TRUNCATION_EXP / α for decaying profiles.
const TRUNCATION_EXP: f64 = 50.0;

/// A radial function profile r ↦ ψ(r) on [0, ∞).
#[derive(Clone)]
pub struct RadialProfile {
    pub d: usize,
    /// None means unbounded support; then `decay` must be set.
    pub support_radius: Option<f64>,
    pub normalization_rho: Option<f64>,
    pub decay: Option<DecayBound>,
    /// Interior points where ψ is only piecewise smooth.
    pub knots: Vec<f64>,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for RadialProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RadialProfile")
            .field("d", &self.d)
            .field("support_radius", &self.support_radius)
            .field("normalization_rho", &self.normalization_rho)
            .field("decay", &self.decay)
            .field("knots", &self.knots)
            .finish()
    }
}

impl RadialProfile {
    pub fn new(d: usize, f: Arc<dyn Fn(f64) -> f64 + Send + Sync>) -> Self {
        Self { d, support_radius: None, normalization_rho: None, decay: None, knots: Vec::new(), f }
    }

    pub fn with_support(mut self, radius: f64) -> Self {
        self.support_radius = Some(radius);
        self
    }

    pub fn with_decay(mut self, decay: DecayBound) -> Self {
        self.decay = Some(decay);
        self
    }

    pub fn with_knots(mut self, knots: Vec<f64>) -> Self {
        self.knots = knots;
        self
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.normalization_rho = Some(rho);
        self
    }

    /// Radial profile of a kernel; compact kernels carry their knots.
    pub fn from_kernel(spec: &KernelSpec) -> Self {
        let s = *spec;
        let base = Self::new(spec.d, Arc::new(move |r| s.profile(r)));
        match spec.support_radius() {
            Some(radius) => base.with_support(radius).with_knots(vec![1.0]),
            None => match spec.decay {
                Some(decay) => base.with_decay(decay),
                None => base,
            },
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        if let Some(s) = self.support_radius {
            if r > s {
                return 0.0;
            }
        }
        (self.f)(r)
    }

    /// Integration range [0, T] and the tail bound beyond T for dimension d.
    fn range(&self, d: usize) -> Result<(f64, f64)> {
        if let Some(s) = self.support_radius {
            return Ok((s, 0.0));
        }
        let decay = self.decay.ok_or_else(|| {
            Error::InvalidProfile("unbounded support without a decay bound is not integrable".into())
        })?;
        let t = TRUNCATION_EXP / decay.alpha;
        Ok((t, tail_bound(decay, d, t)))
    }

    fn breakpoints(&self, end: f64) -> Vec<f64> {
        let mut pts = vec![0.0];
        pts.extend(self.knots.iter().copied().filter(|&k| k > 0.0 && k < end));
        pts.push(end);
        pts
    }

    /// Integrates g over [0, T], splitting at knots and grading towards 0.
    fn integrate(&self, end: f64, panel: f64, g: impl Fn(f64) -> f64) -> f64 {
        let rule = GaussLegendre::cached(RULE_ORDER);
        let pts = self.breakpoints(end);
        let mut total = graded_integrate(&rule, pts[1], panel, &g);
        for w in pts[1..].windows(2) {
            total += panel_integrate(&rule, w[0], w[1], panel, &g);
        }
        total
    }
}

/// Bound on ∫_T^∞ c0 e^{−αt} t^{d−1} max(1, t) dt, covering every d-kernel.
fn tail_bound(decay: DecayBound, d: usize, t: f64) -> f64 {
    // ∫_T^∞ t^n e^{−αt} dt ≤ e^{−αT} T^n/α · Σ_k (n/(αT))^k for αT > n
    let n = d as f64;
    let ratio = n / (decay.alpha * t);
    if ratio >= 1.0 {
        return f64::INFINITY;
    }
    decay.c0 * (-decay.alpha * t).exp() * t.powf(n) / decay.alpha / (1.0 - ratio)
}

fn check_dim(d: usize) -> Result<()> {
    if !(1..=3).contains(&d) {
        return Err(Error::InvalidProfile(format!("radial transforms are implemented for d <= 3, got {d}")));
    }
    Ok(())
}

/// 1/(2^{d/2−1}Γ(d/2)), the value of r^{1−d/2}J_{d/2−1}(rt)/t^{d/2−1} at r = 0.
fn origin_factor(d: usize) -> f64 {
    match d {
        1 => (2.0 / PI).sqrt(),
        2 => 1.0,
        _ => (2.0 / PI).sqrt(),
    }
}

/// (F_dψ)(0) = ∫ψ(t)t^{d−1}dt / (2^{d/2−1}Γ(d/2)).
pub fn radial_ft_at_origin(profile: &RadialProfile, d: usize) -> Result<f64> {
    check_dim(d)?;
    let (end, _) = profile.range(d)?;
    let v = profile.integrate(end, MAX_PANEL, |t| profile.eval(t) * t.powi(d as i32 - 1));
    Ok(origin_factor(d) * v)
}

/// (F_dψ)(r) for r ≥ 0.
pub fn radial_ft(profile: &RadialProfile, d: usize, r: f64) -> Result<f64> {
    check_dim(d)?;
    if r.is_nan() || r < 0.0 {
        return Err(Error::Domain(format!("radial_ft needs r >= 0, got {r}")));
    }
    if r == 0.0 {
        return radial_ft_at_origin(profile, d);
    }
    let (end, _) = profile.range(d)?;
    // About one oscillation of the Bessel kernel per panel.
    let panel = MAX_PANEL.min(2.0 * PI / r);
    let c = (2.0 / PI).sqrt();
    let v = match d {
        1 => profile.integrate(end, panel, |t| profile.eval(t) * (r * t).cos()) * c,
        2 => profile.integrate(end, panel, |t| profile.eval(t) * t * bessel_j0(r * t)),
        _ => profile.integrate(end, panel, |t| profile.eval(t) * t * (r * t).sin()) * c / r,
    };
    Ok(v)
}

/// Bound on the truncation error of `radial_ft` for decaying profiles.
pub fn radial_ft_tail_bound(profile: &RadialProfile, d: usize) -> Result<f64> {
    check_dim(d)?;
    Ok(profile.range(d)?.1)
}

/// x^{1−d/2} J_{d/2−1}(x).
pub fn bessel_basis(d: usize, x: f64) -> f64 {
    match d {
        1 => (2.0 / PI).sqrt() * x.cos(),
        2 => bessel_j0(x),
        _ => {
            if x == 0.0 {
                (2.0 / PI).sqrt()
            } else {
                (2.0 / PI).sqrt() * x.sin() / x
            }
        }
    }
}

/// A transform of the form C r^{−2m} λ(r) with
/// λ(r) = 1 + Σ_j a_j (r_j r)^{1−d/2} J_{d/2−1}(r_j r).
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PerturbationProfile {
    pub d: usize,
    pub m: u32,
    pub nodes: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub scale_c: f64,
    pub limit_beta: f64,
    /// Largest absolute deviation of the fitted form from the sampled transform.
    pub fit_residual: f64,
}

impl PerturbationProfile {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn lambda(&self, r: f64) -> f64 {
        1.0 + self
            .nodes
            .iter()
            .zip(&self.coefficients)
            .map(|(rj, a)| a * bessel_basis(self.d, rj * r))
            .sum::<f64>()
    }

    pub fn transform(&self, r: f64) -> f64 {
        self.scale_c * r.powi(-2 * self.m as i32) * self.lambda(r)
    }

    /// Least-squares fit of r^{2m}(F_dψ)(r) ≈ C + Σ_j C a_j φ_j(r) on
    /// `samples` equispaced radii of [r_min, r_max].
    pub fn fit(
        profile: &RadialProfile,
        d: usize,
        m: u32,
        nodes: &[f64],
        r_min: f64,
        r_max: f64,
        samples: usize,
    ) -> Result<Self> {
        if nodes.is_empty() || !(r_min > 0.0 && r_max > r_min) || samples < nodes.len() + 2 {
            return Err(Error::InvalidProfile("degenerate perturbation fit setup".into()));
        }
        let radii: Vec<f64> =
            (0..samples).map(|i| r_min + (r_max - r_min) * i as f64 / (samples - 1) as f64).collect();
        let values: Vec<f64> = radii.iter().map(|&r| radial_ft(profile, d, r)).collect::<Result<_>>()?;
        let cols = nodes.len() + 1;
        let design = DMatrix::from_fn(samples, cols, |i, j| {
            if j == 0 {
                1.0
            } else {
                bessel_basis(d, nodes[j - 1] * radii[i])
            }
        });
        let rhs = DVector::from_iterator(samples, radii.iter().zip(&values).map(|(r, v)| r.powi(2 * m as i32) * v));
        let sol = design
            .svd(true, true)
            .solve(&rhs, 1e-15)
            .map_err(|e| Error::InvalidProfile(format!("least-squares fit failed: {e}")))?;
        let scale_c = sol[0];
        let coefficients = (1..cols).map(|j| sol[j] / scale_c).collect();
        let mut fitted = Self {
            d,
            m,
            nodes: nodes.to_vec(),
            coefficients,
            scale_c,
            limit_beta: radial_ft_at_origin(profile, d)?,
            fit_residual: 0.0,
        };
        fitted.fit_residual =
            radii.iter().zip(&values).map(|(&r, v)| (fitted.transform(r) - v).abs()).fold(0.0, f64::max);
        Ok(fitted)
    }

    /// Smallest λ on `samples` equispaced radii of (0, r_max].
    pub fn min_lambda(&self, r_max: f64, samples: usize) -> f64 {
        (1..=samples)
            .map(|i| self.lambda(r_max * i as f64 / samples as f64))
            .fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::compact::{psi2_derivatives, Side};

    #[test]
    fn matern_transform_law() {
        for (m, d) in [(1, 1), (2, 1), (3, 1), (2, 2), (3, 2), (2, 3), (3, 3)] {
            let spec = KernelSpec::matern(m, d).unwrap();
            let profile = RadialProfile::from_kernel(&spec);
            let rho = crate::kernels::rho(m, d).unwrap();
            let norm = (2.0 * PI).powf(d as f64 / 2.0);
            for i in 0..=20 {
                let r = i as f64;
                let got = norm * radial_ft(&profile, d, r).unwrap();
                let want = rho * (1.0 + r * r).powi(-(m as i32));
                assert!((got / want - 1.0).abs() < 1e-6, "m={m} d={d} r={r}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn transform_of_exponential() {
        // √(π/2)e^{−t} in d = 1 has normalized transform 1/(1+r²)
        let spec = KernelSpec::matern(1, 1).unwrap();
        let profile = RadialProfile::from_kernel(&spec);
        for r in [0.0, 0.5, 2.0, 7.0] {
            let v = radial_ft(&profile, 1, r).unwrap();
            assert!((v - 1.0 / (1.0 + r * r)).abs() < 1e-13);
        }
        assert!(radial_ft_tail_bound(&profile, 1).unwrap() < 1e-15);
    }

    #[test]
    fn non_integrable_profile_is_rejected() {
        let p = RadialProfile::new(1, Arc::new(|_| 1.0));
        assert!(matches!(radial_ft(&p, 1, 1.0), Err(Error::InvalidProfile(_))));
        let spec = KernelSpec::matern(1, 1).unwrap();
        assert!(radial_ft(&RadialProfile::from_kernel(&spec), 1, -1.0).is_err());
    }

    #[test]
    fn psi2_transform_at_origin() {
        // ∫₀² ψ₂ = 24/5
        let p = RadialProfile::from_kernel(&KernelSpec::psi2());
        let v = radial_ft_at_origin(&p, 1).unwrap();
        assert!((v - (2.0 / PI).sqrt() * 4.8).abs() < 1e-14);
        assert_eq!(psi2_derivatives(0.0, Side::Left)[0], 8.0);
    }

    #[test]
    fn eta2_transform_has_perturbation_form() {
        let eta = RadialProfile::from_kernel(&KernelSpec::eta2());
        let fit = PerturbationProfile::fit(&eta, 2, 2, &[1.0, 2.0], 0.5, 20.0, 200).unwrap();
        // λ(r) = O(r⁴) at 0 forces a₁ = −4/3, a₂ = 1/3 and C = 4·[1!]² = 4
        assert!((fit.coefficients[0] + 4.0 / 3.0).abs() < 1e-10);
        assert!((fit.coefficients[1] - 1.0 / 3.0).abs() < 1e-10);
        assert!((fit.scale_c - 4.0).abs() < 1e-10);
        assert!((fit.limit_beta - 0.25).abs() < 1e-12);
        assert!(fit.min_lambda(60.0, 1000) > 0.0);
    }

    #[test]
    fn dimension_walk() {
        let p2 = RadialProfile::from_kernel(&KernelSpec::psi2());
        let p32 = RadialProfile::from_kernel(&KernelSpec::psi32());
        for i in 0..=60 {
            let r = i as f64 * 0.5;
            let a = radial_ft(&p2, 1, r).unwrap();
            let b = radial_ft(&p32, 3, r).unwrap();
            assert!((a - b).abs() < 1e-12, "r={r}");
        }
        // F₃ψ₃,₂ coefficients are √(π/2)·j·b_j with b = (−4/3, 1/6)
        let fit = PerturbationProfile::fit(&p32, 3, 2, &[1.0, 2.0], 0.5, 20.0, 200).unwrap();
        let c = (PI / 2.0).sqrt();
        assert!((fit.coefficients[0] + c * 4.0 / 3.0).abs() < 1e-10);
        assert!((fit.coefficients[1] - c * 2.0 / 6.0).abs() < 1e-10);
    }
}
