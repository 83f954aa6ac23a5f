//! Gauss–Legendre quadrature on panels.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

/// Nodes and weights on [−1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Computes the rule by Newton iteration on P_n.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Shared cached rule of order `n`.
    pub fn cached(n: usize) -> std::sync::Arc<GaussLegendre> {
        static CACHE: OnceLock<Mutex<HashMap<usize, std::sync::Arc<GaussLegendre>>>> =
            OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("quadrature cache poisoned");
        guard
            .entry(n)
            .or_insert_with(|| std::sync::Arc::new(GaussLegendre::new(n)))
            .clone()
    }

    /// Nodes and weights mapped onto [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (mid + half * x, half * w))
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

/// (P_n(x), P_n'(x)).
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Integrates over [a, b] with uniform panels no wider than `max_width`.
pub fn panel_integrate(
    rule: &GaussLegendre,
    a: f64,
    b: f64,
    max_width: f64,
    mut f: impl FnMut(f64) -> f64,
) -> f64 {
    if b <= a {
        return 0.0;
    }
    let panels = ((b - a) / max_width).ceil().max(1.0) as usize;
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * width;
        total += rule.integrate(lo, lo + width, &mut f);
    }
    total
}

/// Integrates over [0, b] with panels refined geometrically towards 0,
/// for integrands carrying t^k ln t type singular derivatives at the origin.
pub fn graded_integrate(
    rule: &GaussLegendre,
    b: f64,
    max_width: f64,
    mut f: impl FnMut(f64) -> f64,
) -> f64 {
    let first = b.min(max_width);
    let mut total = panel_integrate(rule, first, b, max_width, &mut f);
    let mut hi = first;
    for _ in 0..40 {
        let lo = 0.5 * hi;
        total += rule.integrate(lo, hi, &mut f);
        hi = lo;
    }
    total + rule.integrate(0.0, hi, &mut f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let rule = GaussLegendre::new(10);
        // degree 19 is exact for 10 nodes
        let v = rule.integrate(0.0, 2.0, |x| x.powi(19));
        let exact = 2f64.powi(20) / 20.0;
        assert!((v - exact).abs() < 1e-12 * exact);
        let w: f64 = rule.weights.iter().sum();
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn odd_rule_has_center_node() {
        let rule = GaussLegendre::new(7);
        assert_eq!(rule.nodes[3], 0.0);
        assert!(rule.nodes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn graded_handles_log_singularity() {
        let rule = GaussLegendre::new(16);
        // ∫_0^1 t² ln t dt = −1/9
        let v = graded_integrate(&rule, 1.0, 0.25, |t| t * t * t.ln());
        assert!((v + 1.0 / 9.0).abs() < 1e-14);
        // ∫_0^1 ln t dt = −1
        let v = graded_integrate(&rule, 1.0, 0.25, |t| t.ln());
        assert!((v + 1.0).abs() < 1e-11);
    }
}
