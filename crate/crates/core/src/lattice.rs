//! Periodized algebraic lattice sums
//! S(t) = Σ_{k∈Zᵈ} (h² + ‖t + 2πk‖²)^{−m}
//! by an Ewald split of a^{−m} = Γ(m)^{−1} ∫₀^∞ s^{m−1} e^{−sa} ds at s₀:
//! the part s > s₀ is summed in space, the part s < s₀ on the dual lattice.

use std::f64::consts::PI;

use crate::grid::{cube_indices, norm2, CompensatedSum, Index, Point, MAX_DIM};
use crate::quad::GaussLegendre;

/// Split point; s₀(2π)² = π balances the two Gaussian tails.
const S0: f64 = 1.0 / (4.0 * PI);
/// Both sums run over ‖k‖_∞ ≤ RADIUS; the omitted terms are below e^{−16π}.
const RADIUS: i64 = 4;
const PANELS: usize = 3;
const NODES: usize = 20;

/// Γ(n) for small positive integers.
fn gamma_int(n: u32) -> f64 {
    (1..n).map(|k| k as f64).product()
}

/// Upper regularized incomplete gamma Q(m, x) = e^{−x} Σ_{n<m} xⁿ/n!.
fn upper_q(m: u32, x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 1..m {
        term *= x / n as f64;
        sum += term;
    }
    (-x).exp() * sum
}

/// Γ(m)^{−1} ∫₀^{s₀} s^{m−1} e^{−sq} ds, by its power series.
fn lower_part(m: u32, q: f64) -> f64 {
    let x = S0 * q;
    let mut term = 1.0;
    let mut sum = 1.0 / m as f64;
    for n in 1..200 {
        term *= -x / n as f64;
        let add = term / (m + n) as f64;
        sum += add;
        if add.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    S0.powi(m as i32) / gamma_int(m) * sum
}

/// Reduces each coordinate into [−π, π).
pub fn reduce(d: usize, t: &Point) -> Point {
    let mut out = [0.0; MAX_DIM];
    for i in 0..d {
        let two_pi = 2.0 * PI;
        let mut v = t[i].rem_euclid(two_pi);
        if v >= PI {
            v -= two_pi;
        }
        out[i] = v;
    }
    out
}

/// Precomputed Ewald evaluator for fixed (d, m, h).
#[derive(Debug, Clone)]
pub struct LatticeSum {
    pub d: usize,
    pub m: u32,
    pub h: f64,
    dual: Vec<(Index, f64)>,
    dual_zero: f64,
}

impl LatticeSum {
    pub fn new(d: usize, m: u32, h: f64) -> Self {
        assert!((1..=MAX_DIM).contains(&d) && 2 * m as usize > d && h >= 0.0);
        let p = m as f64 - d as f64 / 2.0;
        let pref = (4.0 * PI).powf(-(d as f64) / 2.0) / gamma_int(m);
        let h2 = h * h;
        // c₀ = pref ∫₀^{s₀} s^{p−1} e^{−sh²} ds
        let mut c0 = 0.0;
        let mut term = 1.0;
        for n in 0..200 {
            if n > 0 {
                term *= -h2 * S0 / n as f64;
            }
            let add = term / (p + n as f64);
            c0 += add;
            if add.abs() < 1e-18 * c0.abs() {
                break;
            }
        }
        c0 *= pref * S0.powf(p);
        let rule = GaussLegendre::cached(NODES);
        let mut dual = Vec::new();
        let mut cache: Vec<(i64, f64)> = Vec::new();
        for j in cube_indices(d, RADIUS) {
            let jj: i64 = j[..d].iter().map(|v| v * v).sum();
            if jj == 0 {
                continue;
            }
            // keep one of each ±j pair and double it
            let first = j[..d].iter().find(|&&v| v != 0).copied().unwrap_or(0);
            if first < 0 {
                continue;
            }
            let c = match cache.iter().find(|(q, _)| *q == jj) {
                Some(&(_, c)) => c,
                None => {
                    let c = 2.0 * pref * dual_integral(&rule, p, h2, jj as f64);
                    cache.push((jj, c));
                    c
                }
            };
            dual.push((j, c));
        }
        Self { d, m, h, dual, dual_zero: c0 }
    }

    /// Σ_j c_j cos(j·t) over the dual lattice.
    fn dual_sum(&self, t: &Point) -> f64 {
        let mut acc = CompensatedSum::default();
        acc.add(self.dual_zero);
        for (j, c) in &self.dual {
            let phase: f64 = (0..self.d).map(|i| j[i] as f64 * t[i]).sum();
            acc.add(c * phase.cos());
        }
        acc.value()
    }

    /// Returns (q, G) with t reduced to [−π, π)ᵈ, q = h² + ‖t‖² and
    /// G = Σ_{k≠0}(h² + ‖t + 2πk‖²)^{−m}, so S = q^{−m} + G.
    pub fn split(&self, t: &Point) -> (f64, f64) {
        let t = reduce(self.d, t);
        let d = self.d;
        let h2 = self.h * self.h;
        let q = h2 + norm2(d, &t).powi(2);
        let mut acc = CompensatedSum::default();
        for k in cube_indices(d, RADIUS) {
            if k[..d].iter().all(|&v| v == 0) {
                continue;
            }
            let mut a = h2;
            for i in 0..d {
                let u = t[i] + 2.0 * PI * k[i] as f64;
                a += u * u;
            }
            acc.add(upper_q(self.m, S0 * a) * a.powi(-(self.m as i32)));
        }
        acc.add(self.dual_sum(&t));
        acc.add(-lower_part(self.m, q));
        (q, acc.value())
    }

    /// S(t); infinite when h = 0 and t ∈ 2πZᵈ.
    pub fn sum(&self, t: &Point) -> f64 {
        let (q, g) = self.split(t);
        if q == 0.0 {
            return f64::INFINITY;
        }
        q.powi(-(self.m as i32)) + g
    }

    /// 1/S(t) = q^m/(1 + q^m G), which is 0 at the singular point.
    pub fn reciprocal(&self, t: &Point) -> f64 {
        let (q, g) = self.split(t);
        let qm = q.powi(self.m as i32);
        qm / (1.0 + qm * g)
    }

    /// Bound on the neglected Gaussian tails of both sums.
    pub fn tail_bound(&self) -> f64 {
        let shells = |n: i64| ((2 * n + 1).pow(self.d as u32) - (2 * n - 1).pow(self.d as u32)) as f64;
        let mut total = 0.0;
        for n in (RADIUS + 1)..(RADIUS + 40) {
            // space side: ‖t + 2πk‖ ≥ 2π(n − 1/2) for reduced t
            let a = (2.0 * PI * (n as f64 - 0.5)).powi(2);
            total += shells(n) * upper_q(self.m, S0 * a) * a.powi(-(self.m as i32));
            // dual side: |c_j| ≤ pref s₀^p e^{−π‖j‖²}·(1/p) bound via the s = s₀ endpoint
            let p = self.m as f64 - self.d as f64 / 2.0;
            let pref = (4.0 * PI).powf(-(self.d as f64) / 2.0) / gamma_int(self.m);
            total += shells(n) * pref * S0.powf(p) / p * (-PI * (n * n) as f64).exp();
        }
        total
    }
}

/// ∫₀^{s₀} s^{p−1} e^{−sh² − J/(4s)} ds with s = s₀u on graded panels.
fn dual_integral(rule: &GaussLegendre, p: f64, h2: f64, jj: f64) -> f64 {
    let mut total = 0.0;
    for panel in 0..PANELS {
        let a = panel as f64 / PANELS as f64;
        let b = (panel + 1) as f64 / PANELS as f64;
        total += rule.integrate(a, b, |u| {
            if u <= 0.0 {
                return 0.0;
            }
            u.powf(p - 1.0) * (-S0 * u * h2 - jj / (4.0 * S0 * u)).exp()
        });
    }
    total * S0.powf(p)
}

/// Σ_{‖k‖_∞ ≤ K}(h² + ‖t + 2πk‖²)^{−m} summed directly.
pub fn truncated_sum(d: usize, m: u32, h: f64, t: &Point, k_max: i64) -> f64 {
    let t = reduce(d, t);
    let h2 = h * h;
    let mut acc = CompensatedSum::default();
    for k in cube_indices(d, k_max) {
        let mut a = h2;
        for i in 0..d {
            let u = t[i] + 2.0 * PI * k[i] as f64;
            a += u * u;
        }
        acc.add(a.powi(-(m as i32)));
    }
    acc.value()
}

/// Integral-comparison bound on Σ_{‖k‖_∞ > K}‖t + 2πk‖^{−2m} for reduced t.
pub fn truncated_tail_bound(d: usize, m: u32, k_max: i64) -> f64 {
    let k_max = k_max.max(2);
    let two_m = 2 * m as i32;
    let shells = |n: i64| ((2 * n + 1).pow(d as u32) - (2 * n - 1).pow(d as u32)) as f64;
    let explicit_end = 4 * k_max;
    let mut total = 0.0;
    for n in (k_max + 1)..=explicit_end {
        total += shells(n) * (2.0 * PI * (n as f64 - 0.5)).powi(-two_m);
    }
    // shells(n) ≤ 2d(2n+1)^{d−1} ≤ 2d(5(n − 1/2))^{d−1}, then compare with ∫_E^∞
    let dd = d as i32;
    let e = explicit_end as f64 - 0.5;
    total + 2.0 * d as f64 * 5f64.powi(dd - 1) * (2.0 * PI).powi(-two_m) * e.powi(dd - two_m) / (two_m - dd) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p1(x: f64) -> Point {
        [x, 0.0, 0.0]
    }

    #[test]
    fn one_dimensional_closed_forms() {
        // Σ_k 1/(h² + (t+2πk)²) = sinh h / (2h(cosh h − cos t))
        for &h in &[1.0, 0.5, 0.125, 1.0 / 32.0] {
            let s = LatticeSum::new(1, 1, h);
            for i in 0..16 {
                let t = 2.0 * PI * i as f64 / 16.0;
                let exact = h.sinh() / (2.0 * h * (h.cosh() - t.cos()));
                let got = s.sum(&p1(t));
                assert!((got / exact - 1.0).abs() < 1e-13, "h={h} t={t}: {got} vs {exact}");
            }
        }
        // h = 0: Σ_k (t+2πk)^{−2} = 1/(4 sin²(t/2))
        let s = LatticeSum::new(1, 1, 0.0);
        for i in 1..16 {
            let t = 2.0 * PI * i as f64 / 16.0;
            let exact = 1.0 / (4.0 * (t / 2.0).sin().powi(2));
            assert!((s.sum(&p1(t)) / exact - 1.0).abs() < 1e-13);
        }
        assert_eq!(s.sum(&p1(0.0)), f64::INFINITY);
        assert_eq!(s.reciprocal(&p1(0.0)), 0.0);
        // G(0) = 2ζ(2)/(2π)² = 1/12
        assert!((s.split(&p1(0.0)).1 - 1.0 / 12.0).abs() < 1e-14);
    }

    #[test]
    fn matches_direct_summation() {
        for (d, m) in [(1, 2), (1, 3), (2, 2), (2, 3), (3, 2), (3, 3)] {
            for &h in &[1.0, 0.25, 0.0] {
                let s = LatticeSum::new(d, m, h);
                let k_max = if d == 3 { 12 } else { 60 };
                let bound = truncated_tail_bound(d, m, k_max);
                for t in [[0.3, -1.1, 2.0], [PI, PI, PI], [1.0, 0.2, -0.7]] {
                    let direct = truncated_sum(d, m, h, &t, k_max);
                    let ewald = s.sum(&t);
                    assert!(ewald >= direct * (1.0 - 1e-14));
                    assert!(ewald - direct <= bound + 1e-13 * ewald, "d={d} m={m} h={h}");
                }
            }
        }
    }

    #[test]
    fn tails_are_tiny() {
        assert!(LatticeSum::new(2, 2, 0.5).tail_bound() < 1e-18);
        assert!(truncated_tail_bound(1, 1, 10) > truncated_tail_bound(1, 1, 100));
    }
}
