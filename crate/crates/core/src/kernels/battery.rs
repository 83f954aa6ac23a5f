//! Verification battery for the compactly supported profiles: knot
//! smoothness, support, transform positivity, the dimension walk and the
//! perturbation form of the η₂ transform.

use std::fmt::Write as _;

use serde::Serialize;

use super::compact::{eta2_derivatives, psi2_derivatives, psi32_branch, Side, SUPPORT};
use super::radial::{radial_ft, PerturbationProfile, RadialProfile};
use super::KernelSpec;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatteryCheck {
    pub name: String,
    pub passed: bool,
    /// Worst observed quantity; compared against `tolerance` or required positive.
    pub value: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatteryReport {
    pub checks: Vec<BatteryCheck>,
    pub samples: usize,
    pub r_max: f64,
    pub eta2_fit: PerturbationProfile,
}

impl BatteryReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&BatteryCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("battery serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,passed,value,tolerance\n");
        for c in &self.checks {
            let _ = writeln!(out, "{},{},{:.16e},{:.16e}", c.name, c.passed, c.value, c.tolerance);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BatteryConfig {
    /// Radii r_i = r_max·i/samples, i = 1..samples.
    pub samples: usize,
    pub r_max: f64,
    pub knot_tol: f64,
    pub walk_tol: f64,
    pub fit_tol: f64,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self { samples: 1000, r_max: 60.0, knot_tol: 1e-10, walk_tol: 1e-6, fit_tol: 1e-6 }
    }
}

fn below(name: &str, value: f64, tolerance: f64) -> BatteryCheck {
    BatteryCheck { name: name.into(), passed: value <= tolerance, value, tolerance }
}

fn positive(name: &str, value: f64) -> BatteryCheck {
    BatteryCheck { name: name.into(), passed: value > 0.0, value, tolerance: 0.0 }
}

fn jump<const N: usize>(f: impl Fn(f64, Side) -> [f64; N], knots: &[f64]) -> f64 {
    knots
        .iter()
        .flat_map(|&t| {
            let (l, r) = (f(t, Side::Left), f(t, Side::Right));
            (0..N).map(move |i| (l[i] - r[i]).abs())
        })
        .fold(0.0, f64::max)
}

/// Largest |profile(t)| over sampled t ∈ (SUPPORT, 2·SUPPORT].
fn outside_support(spec: &KernelSpec) -> f64 {
    (1..=200).map(|i| spec.profile(SUPPORT * (1.0 + i as f64 / 200.0)).abs()).fold(0.0, f64::max)
}

pub fn kernel_battery(cfg: &BatteryConfig) -> Result<BatteryReport> {
    let knots = [1.0, SUPPORT];
    let radii: Vec<f64> = (1..=cfg.samples).map(|i| cfg.r_max * i as f64 / cfg.samples as f64).collect();
    let eta = RadialProfile::from_kernel(&KernelSpec::eta2());
    let p2 = RadialProfile::from_kernel(&KernelSpec::psi2());
    let p32 = RadialProfile::from_kernel(&KernelSpec::psi32());

    let mut checks = vec![
        below("eta2_c2_knots", jump(eta2_derivatives, &knots), cfg.knot_tol),
        below("psi2_c1_knots", jump(psi2_derivatives, &knots), cfg.knot_tol),
        below("psi32_c0_knots", jump(|t, s| [psi32_branch(t, s)], &knots), cfg.knot_tol),
        below("eta2_support", outside_support(&KernelSpec::eta2()), 0.0),
        below("psi2_support", outside_support(&KernelSpec::psi2()), 0.0),
        below("psi32_support", outside_support(&KernelSpec::psi32()), 0.0),
    ];

    let f_eta: Vec<f64> = radii.iter().map(|&r| radial_ft(&eta, 2, r)).collect::<Result<_>>()?;
    let f_p2: Vec<f64> = radii.iter().map(|&r| radial_ft(&p2, 1, r)).collect::<Result<_>>()?;
    let f_p32: Vec<f64> = radii.iter().map(|&r| radial_ft(&p32, 3, r)).collect::<Result<_>>()?;
    checks.push(positive("eta2_transform_positive", f_eta.iter().copied().fold(f64::INFINITY, f64::min)));
    checks.push(positive("psi2_transform_positive", f_p2.iter().copied().fold(f64::INFINITY, f64::min)));
    let walk = f_p2.iter().zip(&f_p32).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    checks.push(below("dimension_walk", walk, cfg.walk_tol));

    let fit = PerturbationProfile::fit(&eta, 2, 2, &[1.0, 2.0], 0.5, 20.0, 200)?;
    let reproduction = radii
        .iter()
        .zip(&f_eta)
        .filter(|(&r, _)| r >= 0.5)
        .map(|(&r, v)| (fit.transform(r) - v).abs())
        .fold(0.0, f64::max);
    checks.push(below("eta2_perturbation_fit", reproduction, cfg.fit_tol));
    checks.push(positive("eta2_lambda_positive", fit.min_lambda(cfg.r_max, cfg.samples)));

    Ok(BatteryReport { checks, samples: cfg.samples, r_max: cfg.r_max, eta2_fit: fit })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn battery_passes() {
        let report = kernel_battery(&BatteryConfig { samples: 200, ..BatteryConfig::default() }).unwrap();
        for c in &report.checks {
            assert!(c.passed, "{c:?}");
        }
        assert_eq!(report.to_csv().lines().count(), report.checks.len() + 1);
    }

    #[test]
    fn jumps_are_detected() {
        let step = |t: f64, s: Side| [if t == 1.0 && s == Side::Left { 0.0 } else { 1.0 }, 0.0];
        assert_eq!(jump(step, &[1.0, 2.0]), 1.0);
        assert_eq!(jump(|_, _| [3.0], &[1.0]), 0.0);
    }
}
