//! Compactly supported piecewise polyharmonic profiles: η₂ on R², the
//! B-spline profile ψ₂ on R, and ψ₃,₂ = −ψ₂′/t on R³.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};

/// Support radius shared by all three profiles.
pub const SUPPORT: f64 = 2.0;

fn check(t: f64) -> Result<()> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::Domain(format!("profile argument must be >= 0, got {t}")));
    }
    Ok(())
}

/// Which one-sided branch to use at a knot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

fn branch(t: f64, side: Side) -> usize {
    let on_left = |knot: f64| t < knot || (t == knot && side == Side::Left);
    if on_left(1.0) {
        0
    } else if on_left(2.0) {
        1
    } else {
        2
    }
}

/// η₂(t), with η₂(0) = (4 ln 2)/3 by continuity.
pub fn eta2_eval(t: f64) -> Result<f64> {
    check(t)?;
    Ok(eta2_derivatives(t, Side::Left)[0])
}

/// [η₂, η₂′, η₂″] on the branch selected by `side` (only matters at knots).
/// At t = 0 the t² ln t terms use their limits; η₂″ diverges there.
pub fn eta2_derivatives(t: f64, side: Side) -> [f64; 3] {
    let third = 1.0 / 3.0;
    match branch(t, side) {
        0 => {
            if t == 0.0 {
                return [4.0 * LN_2 * third, 0.0, f64::NEG_INFINITY];
            }
            let l = t.ln();
            let v = 4.0 * LN_2 + (LN_2 - 3.0) * t * t + 3.0 * t * t * l;
            let d1 = 2.0 * (LN_2 - 3.0) * t + 6.0 * t * l + 3.0 * t;
            let d2 = 2.0 * LN_2 + 3.0 + 6.0 * l;
            [third * v, third * d1, third * d2]
        }
        1 => {
            let l = t.ln();
            let v = (4.0 * LN_2 - 4.0) - 4.0 * l + (LN_2 + 1.0) * t * t - t * t * l;
            let d1 = -4.0 / t + 2.0 * (LN_2 + 1.0) * t - 2.0 * t * l - t;
            let d2 = 4.0 / (t * t) + 2.0 * LN_2 - 1.0 - 2.0 * l;
            [third * v, third * d1, third * d2]
        }
        _ => [0.0; 3],
    }
}

pub fn psi2_eval(t: f64) -> Result<f64> {
    check(t)?;
    Ok(psi2_derivatives(t, Side::Left)[0])
}

/// [ψ₂, ψ₂′] on the selected branch.
pub fn psi2_derivatives(t: f64, side: Side) -> [f64; 2] {
    match branch(t, side) {
        0 => {
            let t2 = t * t;
            [
                8.0 - 24.0 * t2 + 24.0 * t2 * t - 7.0 * t2 * t2,
                -48.0 * t + 72.0 * t2 - 28.0 * t2 * t,
            ]
        }
        1 => {
            let u = 2.0 - t;
            [u.powi(4), -4.0 * u.powi(3)]
        }
        _ => [0.0; 2],
    }
}

/// ψ₃,₂(t) = −ψ₂′(t)/t, in closed form on each piece; 48 at t = 0.
pub fn psi32_eval(t: f64) -> Result<f64> {
    check(t)?;
    Ok(psi32_branch(t, Side::Left))
}

pub fn psi32_branch(t: f64, side: Side) -> f64 {
    match branch(t, side) {
        0 => 48.0 - 72.0 * t + 28.0 * t * t,
        1 => 4.0 * (2.0 - t).powi(3) / t,
        _ => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eta2_values() {
        let left = eta2_derivatives(1.0, Side::Left)[0];
        let right = eta2_derivatives(1.0, Side::Right)[0];
        let expected = (5.0 * LN_2 - 3.0) / 3.0;
        assert!((left - expected).abs() < 1e-15);
        assert!((right - expected).abs() < 1e-15);
        assert!(eta2_derivatives(2.0, Side::Left)[0].abs() < 1e-15);
        assert_eq!(eta2_eval(0.0).unwrap(), 4.0 * LN_2 / 3.0);
        // continuity at 0 through the t² ln t limit
        assert!((eta2_eval(1e-9).unwrap() - 4.0 * LN_2 / 3.0).abs() < 1e-15);
        assert_eq!(eta2_eval(2.5).unwrap(), 0.0);
        assert!(eta2_eval(-0.1).is_err());
    }

    #[test]
    fn eta2_is_c2_at_knots() {
        for knot in [1.0, 2.0] {
            let l = eta2_derivatives(knot, Side::Left);
            let r = eta2_derivatives(knot, Side::Right);
            for i in 0..3 {
                assert!((l[i] - r[i]).abs() < 1e-10, "knot {knot} derivative {i}");
            }
        }
    }

    #[test]
    fn eta2_derivatives_match_finite_differences() {
        let step = 1e-5;
        for &t in &[0.3, 0.8, 1.4, 1.9] {
            let f = |x: f64| eta2_derivatives(x, Side::Left);
            let fd1 = (f(t + step)[0] - f(t - step)[0]) / (2.0 * step);
            let fd2 = (f(t + step)[1] - f(t - step)[1]) / (2.0 * step);
            assert!((fd1 - f(t)[1]).abs() < 1e-8);
            assert!((fd2 - f(t)[2]).abs() < 1e-7);
        }
    }

    #[test]
    fn psi2_values_and_knots() {
        let l = psi2_derivatives(1.0, Side::Left);
        let r = psi2_derivatives(1.0, Side::Right);
        assert_eq!(l[0], 1.0);
        assert_eq!(r[0], 1.0);
        assert_eq!(l[1], -4.0);
        assert_eq!(r[1], -4.0);
        assert_eq!(psi2_derivatives(2.0, Side::Left), [0.0, -0.0]);
        for t in [2.0, 2.1, 5.0] {
            assert_eq!(psi2_eval(t).unwrap(), 0.0);
            assert_eq!(psi32_eval(t).unwrap(), 0.0);
        }
    }

    #[test]
    fn psi32_is_minus_derivative_over_t() {
        assert_eq!(psi32_eval(0.0).unwrap(), 48.0);
        assert!((psi32_eval(0.0).unwrap() / 48.0 - 1.0).abs() < 1e-15);
        for i in 1..400 {
            let t = i as f64 * 0.005;
            let expected = -psi2_derivatives(t, Side::Left)[1] / t;
            assert!((psi32_eval(t).unwrap() - expected).abs() < 1e-12 * expected.abs().max(1.0));
        }
        assert!((psi32_branch(1.0, Side::Left) - psi32_branch(1.0, Side::Right)).abs() < 1e-14);
    }
}
