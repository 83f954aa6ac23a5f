//! The Matérn kernel Φ_{m,d}(x) = ‖x‖^{m−d/2} K_{m−d/2}(‖x‖), its dilations,
//! its Fourier profile, and the m-harmonic kernel Φ₀.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use super::radial::{radial_ft_at_origin, RadialProfile};
use super::{DecayBound, KernelFamily, KernelSpec};
use crate::consts::{DECAY_RADIUS_MAX, DECAY_SAMPLES, MATERN_DECAY_ALPHA};
use crate::error::{Error, Result};
use crate::grid::{norm2, Point};
use crate::specfun::{scaled_bessel_k, BesselOrder};

/// Φ_{m,d}(r) for r ≥ 0; callers guarantee 2m > d.
pub fn matern_profile(m: u32, d: usize, r: f64) -> f64 {
    let order = BesselOrder { twice_nu: 2 * m as i32 - d as i32 };
    scaled_bessel_k(order, r.abs()).unwrap_or(f64::NAN)
}

/// Φ₀(r) = r^{2m−d} ln r for even d, r^{2m−d} for odd d; Φ₀(0) = 0.
pub fn m_harmonic_profile(m: u32, d: usize, r: f64) -> f64 {
    let r = r.abs();
    if r == 0.0 {
        return 0.0;
    }
    let p = r.powi(2 * m as i32 - d as i32);
    if d % 2 == 0 {
        p * r.ln()
    } else {
        p
    }
}

fn require_family(spec: &KernelSpec, family: KernelFamily) -> Result<()> {
    if spec.family != family {
        return Err(Error::InvalidSpec(format!("expected a {family:?} kernel, got {}", spec.id())));
    }
    if 2 * spec.m as usize <= spec.d {
        return Err(Error::InvalidSpec(format!("need 2m > d, got m={}, d={}", spec.m, spec.d)));
    }
    Ok(())
}

fn check_point(d: usize, x: &Point) -> Result<()> {
    if x[..d].iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite point {x:?}")));
    }
    Ok(())
}

pub fn matern_eval(spec: &KernelSpec, x: &Point) -> Result<f64> {
    require_family(spec, KernelFamily::Matern)?;
    check_point(spec.d, x)?;
    Ok(matern_profile(spec.m, spec.d, norm2(spec.d, x)))
}

/// Φ_h(y) = Φ(h·y).
pub fn matern_scaled_eval(spec: &KernelSpec, h: f64, y: &Point) -> Result<f64> {
    if h.is_nan() || h <= 0.0 {
        return Err(Error::Domain(format!("scale h must be > 0, got {h}")));
    }
    require_family(spec, KernelFamily::Matern)?;
    check_point(spec.d, y)?;
    Ok(matern_profile(spec.m, spec.d, h * norm2(spec.d, y)))
}

pub fn m_harmonic_eval(m: u32, d: usize, x: &Point) -> Result<f64> {
    if 2 * m as usize <= d {
        return Err(Error::InvalidSpec(format!("need 2m > d, got m={m}, d={d}")));
    }
    check_point(d, x)?;
    Ok(m_harmonic_profile(m, d, norm2(d, x)))
}

type Cache<V> = OnceLock<Mutex<HashMap<(u32, usize), V>>>;

/// Sampled decay certificate with α = 0.9; the amplitude is the sampled
/// maximum of Φ(r)e^{αr} on [0, 50] with a small margin for the gaps.
pub(crate) fn decay_bound(m: u32, d: usize) -> Result<DecayBound> {
    static CACHE: Cache<DecayBound> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(b) = cache.lock().expect("decay cache poisoned").get(&(m, d)) {
        return Ok(*b);
    }
    let alpha = MATERN_DECAY_ALPHA;
    let mut c0: f64 = 0.0;
    for i in 0..DECAY_SAMPLES {
        let r = i as f64 * DECAY_RADIUS_MAX / (DECAY_SAMPLES - 1) as f64;
        let v = matern_profile(m, d, r);
        if !v.is_finite() {
            return Err(Error::InvalidSpec(format!("Matérn profile not finite at r={r}")));
        }
        c0 = c0.max(v.abs() * (alpha * r).exp());
    }
    let bound = DecayBound { alpha, c0: c0 * 1.001 };
    cache.lock().expect("decay cache poisoned").insert((m, d), bound);
    Ok(bound)
}

/// ρ_{m,d} in Φ̂(t) = ρ_{m,d}(1+‖t‖²)^{−m}, with Φ̂(t) = ∫Φ(x)e^{−ix·t}dx.
/// Computed once per (m, d) from the radial transform at the origin.
pub fn rho(m: u32, d: usize) -> Result<f64> {
    static CACHE: Cache<f64> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = cache.lock().expect("rho cache poisoned").get(&(m, d)) {
        return Ok(*v);
    }
    let spec = KernelSpec::matern(m, d)?;
    let profile = RadialProfile::from_kernel(&spec);
    let value = (2.0 * PI).powf(d as f64 / 2.0) * radial_ft_at_origin(&profile, d)?;
    // Concurrent first calls compute the same value; the first insert wins.
    let mut guard = cache.lock().expect("rho cache poisoned");
    Ok(*guard.entry((m, d)).or_insert(value))
}

/// r ↦ Φ̂_h(r) = ρ_{m,d}h^{2m−d}(h² + r²)^{−m}.
pub fn matern_ft_profile(spec: &KernelSpec, h: f64) -> Result<RadialProfile> {
    require_family(spec, KernelFamily::Matern)?;
    if h.is_nan() || h <= 0.0 || h > 1.0 {
        return Err(Error::Domain(format!("scale h must lie in (0, 1], got {h}")));
    }
    let (m, d) = (spec.m, spec.d);
    let rho = rho(m, d)?;
    let scale = rho * h.powi(2 * m as i32 - d as i32);
    let f = Arc::new(move |r: f64| scale * (h * h + r * r).powi(-(m as i32)));
    Ok(RadialProfile::new(d, f).with_rho(rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn p1(x: f64) -> Point {
        [x, 0.0, 0.0]
    }

    fn rho_closed_form(m: u32, d: usize) -> f64 {
        let fact: f64 = (1..m).map(|k| k as f64).product();
        (2.0 * PI).powf(d as f64 / 2.0) * 2f64.powi(m as i32 - 1) * fact
    }

    #[test]
    fn closed_form_values() {
        let s11 = KernelSpec::matern(1, 1).unwrap();
        assert!((matern_eval(&s11, &p1(0.0)).unwrap() - FRAC_PI_2.sqrt()).abs() < 1e-15);
        let v = matern_eval(&s11, &p1(2.5)).unwrap();
        assert!((v / (FRAC_PI_2.sqrt() * (-2.5f64).exp()) - 1.0).abs() < 1e-14);
        let s21 = KernelSpec::matern(2, 1).unwrap();
        let v = matern_eval(&s21, &p1(1.0)).unwrap();
        assert!((v - FRAC_PI_2.sqrt() * 2.0 / 1f64.exp()).abs() < 1e-14);
    }

    #[test]
    fn scaled_values() {
        let s11 = KernelSpec::matern(1, 1).unwrap();
        let v = matern_scaled_eval(&s11, 0.5, &p1(2.0)).unwrap();
        assert!((v - FRAC_PI_2.sqrt() / 1f64.exp()).abs() < 1e-15);
        let y = [0.3, -1.2, 0.0];
        let s22 = KernelSpec::matern(2, 2).unwrap();
        assert_eq!(matern_scaled_eval(&s22, 1.0, &y).unwrap(), matern_eval(&s22, &y).unwrap());
        assert!((matern_scaled_eval(&s22, 0.25, &[0.0; 3]).unwrap() - 1.0).abs() < 1e-15);
        assert!(matern_scaled_eval(&s22, 0.0, &y).is_err());
        assert!(matern_scaled_eval(&s22, -1.0, &y).is_err());
    }

    #[test]
    fn m_harmonic_values() {
        assert_eq!(m_harmonic_eval(2, 2, &p1(1.0)).unwrap(), 0.0);
        assert!((m_harmonic_eval(2, 3, &[2.0, 0.0, 0.0]).unwrap() - 2.0).abs() < 1e-15);
        let e = 1f64.exp();
        assert!((m_harmonic_eval(2, 2, &[e, 0.0, 0.0]).unwrap() - e * e).abs() < 1e-14);
        assert_eq!(m_harmonic_eval(2, 2, &[0.0; 3]).unwrap(), 0.0);
        assert!(m_harmonic_eval(1, 2, &p1(1.0)).is_err());
    }

    #[test]
    fn rho_matches_closed_form() {
        for m in 1..=4u32 {
            for d in 1..=3usize {
                if 2 * m as usize <= d {
                    continue;
                }
                let r = rho(m, d).unwrap();
                let exact = rho_closed_form(m, d);
                assert!((r / exact - 1.0).abs() < 1e-11, "m={m} d={d}: {r} vs {exact}");
            }
        }
        // Φ_{1,1} = √(π/2)e^{−|x|} has transform √(π/2)·2/(1+t²)
        assert!((rho(1, 1).unwrap() - (2.0 * PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ft_profile_shape() {
        let spec = KernelSpec::matern(2, 2).unwrap();
        let p = matern_ft_profile(&spec, 1.0).unwrap();
        let p0 = p.eval(0.0);
        for r in [0.5, 1.0, 3.0, 10.0] {
            assert!((p.eval(r) / p0 - (1.0 + r * r).powi(-2)).abs() < 1e-15);
        }
        let mut last = p0;
        for i in 1..100 {
            let v = p.eval(i as f64);
            assert!(v < last && v > 0.0);
            last = v;
        }
        assert!(matern_ft_profile(&spec, 0.0).is_err());
    }
}
