//! Modified Bessel functions K_ν and Bessel functions J_ν for the orders the
//! kernels need: integer and half-integer ν for K, ν ∈ {−1/2, 0, 1/2} for J.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::consts::{
    BESSEL_J0_ASYMPTOTIC_SWITCH, BESSEL_J0_SERIES_SWITCH, BESSEL_K_ASYMPTOTIC_SWITCH,
    BESSEL_K_SERIES_SWITCH, BESSEL_K_UNDERFLOW,
};
use crate::error::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Bessel order stored as `2ν` so half-integer orders are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BesselOrder {
    pub twice_nu: i32,
}

impl BesselOrder {
    pub fn new(twice_nu: i32) -> Result<Self> {
        if twice_nu < -1 {
            return Err(Error::UnsupportedOrder { twice_nu });
        }
        Ok(Self { twice_nu })
    }

    /// Order ν = m − d/2 of the Matérn kernel Φ_{m,d}.
    pub fn matern(m: u32, d: u32) -> Result<Self> {
        let twice = 2 * m as i32 - d as i32;
        if twice <= 0 {
            return Err(Error::InvalidSpec(format!("need 2m > d, got m={m}, d={d}")));
        }
        Self::new(twice)
    }

    pub fn nu(self) -> f64 {
        self.twice_nu as f64 / 2.0
    }

    pub fn is_half_integer(self) -> bool {
        self.twice_nu % 2 != 0
    }
}

/// Γ(ν) for positive integer or half-integer ν.
pub fn gamma_half_integer(twice_nu: i32) -> f64 {
    assert!(twice_nu > 0, "gamma_half_integer needs a positive argument");
    // Γ(1/2) = √π, Γ(1) = 1, then Γ(x + 1) = xΓ(x).
    let (mut x, mut g) = if twice_nu % 2 == 0 { (1.0, 1.0) } else { (0.5, PI.sqrt()) };
    let target = twice_nu as f64 / 2.0;
    while x < target - 0.25 {
        g *= x;
        x += 1.0;
    }
    g
}

/// The limit lim_{z→0⁺} z^ν K_ν(z) = 2^{ν−1} Γ(ν), for ν > 0.
pub fn scaled_bessel_k_at_zero(order: BesselOrder) -> f64 {
    2f64.powf(order.nu() - 1.0) * gamma_half_integer(order.twice_nu)
}

/// Modified Bessel function of the third kind K_ν(z).
///
/// Half-integer orders use the closed exponential-polynomial form; integer
/// orders compute K₀, K₁ (log series for small z, Steed's continued fraction
/// in the middle range, Hankel asymptotics for large z) and recur upward.
/// Values whose `e^{−z}` factor underflows saturate to zero.
pub fn bessel_k(order: BesselOrder, z: f64) -> Result<f64> {
    if z.is_nan() || z <= 0.0 {
        return Err(Error::Domain(format!("bessel_k needs z > 0, got {z}")));
    }
    if order.twice_nu < 0 {
        return Err(Error::UnsupportedOrder { twice_nu: order.twice_nu });
    }
    if z > BESSEL_K_UNDERFLOW {
        return Ok(0.0);
    }
    if order.is_half_integer() {
        return Ok(bessel_k_half_integer(order.twice_nu, z));
    }
    let n = (order.twice_nu / 2) as usize;
    let (k0, k1) = bessel_k01(z);
    Ok(upward_recurrence(n, z, k0, k1))
}

/// z^ν K_ν(z), continuous at z = 0 for ν > 0.
pub fn scaled_bessel_k(order: BesselOrder, z: f64) -> Result<f64> {
    if z < 0.0 || z.is_nan() {
        return Err(Error::Domain(format!("scaled_bessel_k needs z >= 0, got {z}")));
    }
    if order.twice_nu <= 0 {
        if z == 0.0 {
            return Err(Error::Domain("z^0 K_0(z) diverges at z = 0".into()));
        }
        return bessel_k(order, z);
    }
    if z > BESSEL_K_UNDERFLOW {
        return Ok(0.0);
    }
    if order.is_half_integer() {
        // √(π/2) e^{−z} Σ_k c_k 2^{−k} z^{n−k}
        let n = ((order.twice_nu - 1) / 2) as usize;
        let mut poly = 0.0;
        let mut c = 1.0;
        let mut half_pow = 1.0;
        for k in 0..=n {
            poly += c * half_pow * z.powi((n - k) as i32);
            c *= ((n + k + 1) * (n - k)) as f64 / (k + 1) as f64;
            half_pow *= 0.5;
        }
        return Ok(FRAC_PI_2.sqrt() * (-z).exp() * poly);
    }
    if z < 1e-30 {
        return Ok(scaled_bessel_k_at_zero(order));
    }
    let n = order.twice_nu / 2;
    Ok(z.powi(n) * bessel_k(order, z)?)
}

/// Coefficients (n+k)!/(k!(n−k)!) of the half-integer closed form.
fn half_integer_coefficients(n: usize) -> Vec<f64> {
    let mut c = Vec::with_capacity(n + 1);
    let mut cur = 1.0;
    c.push(cur);
    for k in 0..n {
        // c_{k+1}/c_k = (n+k+1)(n−k)/(k+1)
        cur *= ((n + k + 1) * (n - k)) as f64 / (k + 1) as f64;
        c.push(cur);
    }
    c
}

fn bessel_k_half_integer(twice_nu: i32, z: f64) -> f64 {
    let n = ((twice_nu - 1) / 2) as usize;
    let coeffs = half_integer_coefficients(n);
    let inv = 1.0 / (2.0 * z);
    let mut sum = 0.0;
    let mut p = 1.0;
    for c in &coeffs {
        sum += c * p;
        p *= inv;
    }
    (PI / (2.0 * z)).sqrt() * (-z).exp() * sum
}

fn upward_recurrence(n: usize, z: f64, k0: f64, k1: f64) -> f64 {
    match n {
        0 => k0,
        1 => k1,
        _ => {
            let (mut prev, mut cur) = (k0, k1);
            for j in 1..n {
                let next = prev + 2.0 * j as f64 / z * cur;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// (K₀(z), K₁(z)) for z > 0.
fn bessel_k01(z: f64) -> (f64, f64) {
    if z < BESSEL_K_SERIES_SWITCH {
        bessel_k01_series(z)
    } else if z < BESSEL_K_ASYMPTOTIC_SWITCH {
        bessel_k01_steed(z)
    } else {
        (bessel_k_asymptotic(0.0, z), bessel_k_asymptotic(1.0, z))
    }
}

fn bessel_k01_series(z: f64) -> (f64, f64) {
    let y = 0.25 * z * z;
    let log_half = (0.5 * z).ln();
    // K0 = −(ln(z/2)+γ) I0 + Σ H_k y^k/(k!)²
    // K1 = 1/z + ln(z/2) I1 − (z/4) Σ (ψ(k+1)+ψ(k+2)) y^k/(k!(k+1)!)
    let mut i0 = 0.0;
    let mut h_sum = 0.0;
    let mut i1_sum = 0.0;
    let mut psi_sum = 0.0;
    let mut term0 = 1.0; // y^k/(k!)²
    let mut term1 = 1.0; // y^k/(k!(k+1)!)
    let mut harmonic = 0.0; // H_k
    for k in 0..60 {
        let kf = k as f64;
        if k > 0 {
            term0 *= y / (kf * kf);
            term1 *= y / (kf * (kf + 1.0));
            harmonic += 1.0 / kf;
        }
        i0 += term0;
        h_sum += harmonic * term0;
        i1_sum += term1;
        let psi_k1 = -EULER_GAMMA + harmonic;
        let psi_k2 = psi_k1 + 1.0 / (kf + 1.0);
        psi_sum += (psi_k1 + psi_k2) * term1;
        if term0 < 1e-18 * i0 && k > 2 {
            break;
        }
    }
    let k0 = -(log_half + EULER_GAMMA) * i0 + h_sum;
    let i1 = 0.5 * z * i1_sum;
    let k1 = 1.0 / z + log_half * i1 - 0.25 * z * psi_sum;
    (k0, k1)
}

/// Steed's algorithm for the continued fraction CF2 (Temme's normalization),
/// order ν = 0, returning K₀ and K₁.
fn bessel_k01_steed(z: f64) -> (f64, f64) {
    let mut b = 2.0 * (1.0 + z);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 1..10_000 {
        let fi = i as f64;
        a -= 2.0 * fi;
        c = -a * c / (fi + 1.0);
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < 1e-17 {
            break;
        }
    }
    let h = a1 * h;
    let k0 = (PI / (2.0 * z)).sqrt() * (-z).exp() / s;
    let k1 = k0 * (z + 0.5 - h) / z;
    (k0, k1)
}

/// Hankel expansion K_ν(z) ~ √(π/2z) e^{−z} Σ a_k(ν) z^{−k}.
fn bessel_k_asymptotic(nu: f64, z: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..80 {
        let kf = k as f64;
        let next = term * (mu - (2.0 * kf - 1.0).powi(2)) / (8.0 * kf * z);
        if next.abs() > term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    (PI / (2.0 * z)).sqrt() * (-z).exp() * sum
}

/// Bessel function of the first kind J_ν(z) for ν ∈ {−1/2, 0, 1/2}.
pub fn bessel_j(order: BesselOrder, z: f64) -> Result<f64> {
    if z < 0.0 || z.is_nan() {
        return Err(Error::Domain(format!("bessel_j needs z >= 0, got {z}")));
    }
    match order.twice_nu {
        1 => {
            if z == 0.0 {
                Ok(0.0)
            } else {
                Ok((2.0 / (PI * z)).sqrt() * z.sin())
            }
        }
        -1 => {
            if z == 0.0 {
                Ok(f64::INFINITY)
            } else {
                Ok((2.0 / (PI * z)).sqrt() * z.cos())
            }
        }
        0 => Ok(bessel_j0(z)),
        other => Err(Error::UnsupportedOrder { twice_nu: other }),
    }
}

/// J₀(z) for z ≥ 0.
pub fn bessel_j0(z: f64) -> f64 {
    if z <= BESSEL_J0_SERIES_SWITCH {
        let y = 0.25 * z * z;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..60 {
            let kf = k as f64;
            term *= -y / (kf * kf);
            sum += term;
            if term.abs() < 1e-18 {
                break;
            }
        }
        sum
    } else if z < BESSEL_J0_ASYMPTOTIC_SWITCH {
        // Bessel's integral; the trapezoid rule is spectrally accurate for
        // this periodic integrand once the node count exceeds z/2 comfortably.
        let n = (z.ceil() as usize) + 30;
        let step = PI / n as f64;
        let mut sum = 0.0;
        for i in 0..n {
            let theta = (i as f64 + 0.5) * step;
            sum += (z * theta.sin()).cos();
        }
        sum / n as f64
    } else {
        bessel_j_hankel(0.0, z)
    }
}

fn bessel_j_hankel(nu: f64, z: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    // a_k(ν) z^{-k}, accumulated into P (even k) and Q (odd k) with alternating signs.
    let mut p = 0.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut prev_abs = f64::INFINITY;
    for k in 0..80 {
        if k > 0 {
            let kf = k as f64;
            term *= (mu - (2.0 * kf - 1.0).powi(2)) / (8.0 * kf * z);
        }
        if term.abs() > prev_abs {
            break;
        }
        prev_abs = term.abs();
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            p += sign * term;
        } else {
            q += sign * term;
        }
        if term.abs() < 1e-18 {
            break;
        }
    }
    let chi = z - (0.5 * nu + 0.25) * PI;
    (2.0 / (PI * z)).sqrt() * (p * chi.cos() - q * chi.sin())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// K_ν(z) = ∫_0^∞ e^{−z cosh t} cosh(νt) dt, trapezoid rule (double-exponential decay).
    fn k_integral_oracle(nu: f64, z: f64) -> f64 {
        let step: f64 = 1.0 / 512.0;
        let mut sum = 0.5 * (-z).exp();
        let mut t = step;
        loop {
            let arg = z * t.cosh();
            let term = (-arg).exp() * (nu * t).cosh();
            sum += term;
            if arg > 800.0 || term < 1e-300 {
                break;
            }
            t += step;
        }
        sum * step
    }

    fn j0_integral_oracle(z: f64) -> f64 {
        let n = 4000 + 2 * z.ceil() as usize;
        let step = PI / n as f64;
        (0..n).map(|i| (z * ((i as f64 + 0.5) * step).sin()).cos()).sum::<f64>() / n as f64
    }

    fn k(twice: i32, z: f64) -> f64 {
        bessel_k(BesselOrder::new(twice).unwrap(), z).unwrap()
    }

    #[test]
    fn half_integer_examples() {
        let v = k(1, 1.0);
        let expected = (PI / 2.0).sqrt() * (-1.0f64).exp();
        assert!((v - expected).abs() <= 1e-15 * expected);
        assert!((v - 0.461_068_504_447_895_6).abs() < 1e-12);
        assert!((k_integral_oracle(0.5, 1.0) - expected).abs() < 1e-12 * expected);

        let v = k(3, 2.0);
        let expected = 1.5 * (PI / 4.0).sqrt() * (-2.0f64).exp();
        assert!((v - expected).abs() <= 1e-15 * expected);
    }

    #[test]
    fn small_argument_limit() {
        let z = 1e-8;
        assert!((z * k(2, z) - 1.0).abs() < 1e-12);
        let order = BesselOrder::new(2).unwrap();
        assert!((scaled_bessel_k(order, 0.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn integer_orders_match_integral_oracle() {
        for &twice in &[0, 2, 4, 6] {
            let nu = twice as f64 / 2.0;
            let mut z = 1e-3;
            while z < 700.0 {
                let v = k(twice, z);
                let o = k_integral_oracle(nu, z);
                let rel = (v - o).abs() / o;
                assert!(rel < 1e-12, "nu={nu} z={z} v={v} oracle={o} rel={rel:e}");
                z *= 1.37;
            }
        }
    }

    #[test]
    fn half_integer_orders_match_integral_oracle() {
        for &twice in &[1, 3, 5, 7] {
            let nu = twice as f64 / 2.0;
            let mut z = 1e-2;
            while z < 600.0 {
                let v = k(twice, z);
                let o = k_integral_oracle(nu, z);
                assert!((v - o).abs() < 1e-12 * o, "nu={nu} z={z}");
                z *= 1.29;
            }
        }
    }

    #[test]
    fn regime_switches_are_continuous() {
        for &s in &[BESSEL_K_SERIES_SWITCH, BESSEL_K_ASYMPTOTIC_SWITCH] {
            for &twice in &[0, 2] {
                let below = k(twice, s * (1.0 - 1e-15));
                let above = k(twice, s);
                assert!((below - above).abs() < 1e-11 * above);
            }
        }
    }

    #[test]
    fn recurrence_consistency() {
        // K_{ν+1} = K_{ν−1} + (2ν/z) K_ν over adjacent supported triples.
        let triples: [(i32, i32, i32); 5] = [(0, 2, 4), (2, 4, 6), (1, 3, 5), (3, 5, 7), (4, 6, 8)];
        for (lo, mid, hi) in triples {
            let nu = mid as f64 / 2.0;
            let mut z = 0.1;
            while z <= 50.0 {
                let lhs = k(hi, z);
                let rhs = k(lo, z) + 2.0 * nu / z * k(mid, z);
                assert!((lhs - rhs).abs() <= 1e-10 * lhs, "triple {lo},{mid},{hi} z={z}");
                z += 0.173;
            }
        }
        // K_{1/2} = K_{−1/2}: K_{3/2} = K_{1/2} + (1/z) K_{1/2}
        let mut z = 0.1;
        while z <= 50.0 {
            assert!((k(3, z) - (k(1, z) + k(1, z) / z)).abs() <= 1e-12 * k(3, z));
            z += 0.31;
        }
    }

    #[test]
    fn scaled_k_is_strictly_decreasing() {
        for twice in 1..=8 {
            let order = BesselOrder::new(twice).unwrap();
            let mut prev = scaled_bessel_k(order, 0.0).unwrap();
            for i in 1..2000 {
                let z = i as f64 * 0.02;
                let v = scaled_bessel_k(order, z).unwrap();
                assert!(v < prev, "twice_nu={twice} z={z}");
                prev = v;
            }
        }
    }

    #[test]
    fn domain_and_order_errors() {
        let o = BesselOrder::new(2).unwrap();
        assert!(matches!(bessel_k(o, 0.0), Err(Error::Domain(_))));
        assert!(matches!(bessel_k(o, -1.0), Err(Error::Domain(_))));
        assert!(matches!(BesselOrder::new(-3), Err(Error::UnsupportedOrder { .. })));
        let neg = BesselOrder::new(-1).unwrap();
        assert!(matches!(bessel_k(neg, 1.0), Err(Error::UnsupportedOrder { .. })));
        assert!(matches!(bessel_j(BesselOrder::new(2).unwrap(), 1.0), Err(Error::UnsupportedOrder { .. })));
        assert!(matches!(bessel_j(BesselOrder::new(0).unwrap(), -1.0), Err(Error::Domain(_))));
        assert_eq!(k(2, 800.0), 0.0);
    }

    #[test]
    fn bessel_j_examples() {
        let half = BesselOrder::new(1).unwrap();
        let zero = BesselOrder::new(0).unwrap();
        assert!(bessel_j(half, PI).unwrap().abs() < 1e-16);
        assert_eq!(bessel_j(zero, 0.0).unwrap(), 1.0);
        assert!(bessel_j(zero, 2.404_825_557_695_773).unwrap().abs() < 1e-9);
    }

    #[test]
    fn first_zero_of_j0_by_bisection_on_series() {
        fn series(z: f64) -> f64 {
            let y = 0.25 * z * z;
            let (mut term, mut sum) = (1.0, 1.0);
            for k in 1..40 {
                term *= -y / (k * k) as f64;
                sum += term;
            }
            sum
        }
        let (mut lo, mut hi) = (2.0, 3.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if series(lo) * series(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert!((lo - 2.404_825_557_695_773).abs() < 1e-12);
    }

    #[test]
    fn j0_matches_integral_oracle() {
        let mut z = 0.0;
        while z < 1e4 {
            let v = bessel_j0(z);
            let o = j0_integral_oracle(z);
            let err = (v - o).abs();
            assert!(err < 1e-10 * o.abs().max(1e-3), "z={z} v={v} o={o}");
            z = if z < 40.0 { z + 0.137 } else { z * 1.07 };
        }
    }

    #[test]
    fn half_orders_j() {
        let plus = BesselOrder::new(1).unwrap();
        let minus = BesselOrder::new(-1).unwrap();
        for i in 1..200 {
            let z = i as f64 * 0.37;
            let s = bessel_j(plus, z).unwrap();
            let c = bessel_j(minus, z).unwrap();
            // J_{1/2}² + J_{−1/2}² = 2/(πz)
            assert!((s * s + c * c - 2.0 / (PI * z)).abs() < 1e-14);
        }
    }
}
