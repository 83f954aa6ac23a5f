//! Kernel families: the Matérn kernel Φ_{m,d}, its m-harmonic limit, and the
//! compactly supported profiles η₂, ψ₂, ψ₃,₂.

pub mod battery;
pub mod compact;
pub mod matern;
pub mod radial;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{norm2, Point};

pub use compact::{eta2_eval, psi2_eval, psi32_eval};
pub use matern::{m_harmonic_eval, matern_eval, matern_ft_profile, matern_scaled_eval, rho};
pub use radial::{radial_ft, radial_ft_at_origin, PerturbationProfile, RadialProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Matern,
    MHarmonic,
    Eta2,
    Psi2,
    Psi32,
}

/// |Φ(x)| ≤ c0·e^{−α‖x‖}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayBound {
    pub alpha: f64,
    pub c0: f64,
}

impl DecayBound {
    pub fn bound(&self, r: f64) -> f64 {
        self.c0 * (-self.alpha * r).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub m: u32,
    pub d: usize,
    /// None for the m-harmonic kernel, which grows.
    pub decay: Option<DecayBound>,
}

pub const SUPPORTED_IDS: &str = "matern:m=<m>,d=<d>, mharmonic:m=<m>,d=<d>, eta2, psi2, psi32";

impl KernelSpec {
    pub fn matern(m: u32, d: usize) -> Result<Self> {
        validate(m, d)?;
        let decay = matern::decay_bound(m, d)?;
        Ok(Self { family: KernelFamily::Matern, m, d, decay: Some(decay) })
    }

    pub fn m_harmonic(m: u32, d: usize) -> Result<Self> {
        validate(m, d)?;
        Ok(Self { family: KernelFamily::MHarmonic, m, d, decay: None })
    }

    pub fn eta2() -> Self {
        Self::compact(KernelFamily::Eta2, 2, 2)
    }

    pub fn psi2() -> Self {
        Self::compact(KernelFamily::Psi2, 2, 1)
    }

    pub fn psi32() -> Self {
        Self::compact(KernelFamily::Psi32, 2, 3)
    }

    fn compact(family: KernelFamily, m: u32, d: usize) -> Self {
        let mut spec = Self { family, m, d, decay: None };
        // The profiles are decreasing on [0, 2] up to sampling; take the
        // sampled sup and certify with α = 1 on the support.
        let sup = (0..=2000)
            .map(|i| spec.profile(i as f64 * compact::SUPPORT / 2000.0).abs())
            .fold(0.0, f64::max);
        spec.decay = Some(DecayBound { alpha: 1.0, c0: sup * compact::SUPPORT.exp() });
        spec
    }

    /// Parses ids such as `matern:m=2,d=2`, `mharmonic:m=2,d=3`, `eta2`.
    pub fn parse(id: &str) -> Result<Self> {
        let unknown = || Error::UnknownKernel { id: id.to_string(), supported: SUPPORTED_IDS.to_string() };
        let id_trim = id.trim();
        match id_trim {
            "eta2" => return Ok(Self::eta2()),
            "psi2" => return Ok(Self::psi2()),
            "psi32" => return Ok(Self::psi32()),
            _ => {}
        }
        let (family, params) = id_trim.split_once(':').ok_or_else(unknown)?;
        let mut m = None;
        let mut d = None;
        for kv in params.split(',') {
            let (k, v) = kv.split_once('=').ok_or_else(unknown)?;
            let v: u32 = v.trim().parse().map_err(|_| unknown())?;
            match k.trim() {
                "m" => m = Some(v),
                "d" => d = Some(v as usize),
                _ => return Err(unknown()),
            }
        }
        let (m, d) = (m.ok_or_else(unknown)?, d.ok_or_else(unknown)?);
        match family {
            "matern" => Self::matern(m, d),
            "mharmonic" => Self::m_harmonic(m, d),
            _ => Err(unknown()),
        }
    }

    pub fn id(&self) -> String {
        match self.family {
            KernelFamily::Matern => format!("matern:m={},d={}", self.m, self.d),
            KernelFamily::MHarmonic => format!("mharmonic:m={},d={}", self.m, self.d),
            KernelFamily::Eta2 => "eta2".into(),
            KernelFamily::Psi2 => "psi2".into(),
            KernelFamily::Psi32 => "psi32".into(),
        }
    }

    /// Short family name used in output file names.
    pub fn family_name(&self) -> &'static str {
        match self.family {
            KernelFamily::Matern => "matern",
            KernelFamily::MHarmonic => "mharmonic",
            KernelFamily::Eta2 => "eta2",
            KernelFamily::Psi2 => "psi2",
            KernelFamily::Psi32 => "psi32",
        }
    }

    pub fn support_radius(&self) -> Option<f64> {
        match self.family {
            KernelFamily::Eta2 | KernelFamily::Psi2 | KernelFamily::Psi32 => Some(compact::SUPPORT),
            _ => None,
        }
    }

    pub fn is_compact(&self) -> bool {
        self.support_radius().is_some()
    }

    /// Radial profile r ↦ Φ(r), r ≥ 0. Arguments are assumed valid.
    pub fn profile(&self, r: f64) -> f64 {
        match self.family {
            KernelFamily::Matern => matern::matern_profile(self.m, self.d, r),
            KernelFamily::MHarmonic => matern::m_harmonic_profile(self.m, self.d, r),
            KernelFamily::Eta2 => compact::eta2_derivatives(r, compact::Side::Left)[0],
            KernelFamily::Psi2 => compact::psi2_derivatives(r, compact::Side::Left)[0],
            KernelFamily::Psi32 => compact::psi32_branch(r, compact::Side::Left),
        }
    }

    pub fn eval(&self, x: &Point) -> f64 {
        self.profile(norm2(self.d, x))
    }

    /// Φ_h(y) = Φ(h·y).
    pub fn scaled_eval(&self, h: f64, y: &Point) -> f64 {
        self.profile(h * norm2(self.d, y))
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

fn validate(m: u32, d: usize) -> Result<()> {
    if m == 0 || d == 0 || d > crate::grid::MAX_DIM {
        return Err(Error::InvalidSpec(format!("need m >= 1 and 1 <= d <= 3, got m={m}, d={d}")));
    }
    if 2 * m as usize <= d {
        return Err(Error::InvalidSpec(format!("need 2m > d, got m={m}, d={d}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for id in ["matern:m=2,d=2", "matern:m=1,d=1", "mharmonic:m=2,d=3", "eta2", "psi2", "psi32"] {
            assert_eq!(KernelSpec::parse(id).unwrap().id(), id);
        }
        assert_eq!(KernelSpec::parse("matern:d=2,m=3").unwrap().id(), "matern:m=3,d=2");
    }

    #[test]
    fn bad_ids_are_rejected() {
        assert!(matches!(KernelSpec::parse("gauss"), Err(Error::UnknownKernel { .. })));
        assert!(matches!(KernelSpec::parse("matern:m=2"), Err(Error::UnknownKernel { .. })));
        assert!(matches!(KernelSpec::parse("matern:m=1,d=2"), Err(Error::InvalidSpec(_))));
        assert!(matches!(KernelSpec::parse("matern:m=2,d=4"), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn compact_specs_have_expected_orders() {
        let e = KernelSpec::eta2();
        assert_eq!((e.m, e.d), (2, 2));
        assert_eq!((KernelSpec::psi32().m, KernelSpec::psi32().d), (2, 3));
        assert_eq!(KernelSpec::psi2().d, 1);
        let c0 = KernelSpec::psi32().decay.unwrap().c0;
        assert!((c0 - 48.0 * 2f64.exp()).abs() < 1e-9);
        assert!(KernelSpec::m_harmonic(2, 2).unwrap().decay.is_none());
    }

    #[test]
    fn decay_certificates_hold() {
        for m in 1..=4u32 {
            for d in 1..=3usize {
                if 2 * m as usize <= d {
                    continue;
                }
                let spec = KernelSpec::matern(m, d).unwrap();
                let b = spec.decay.unwrap();
                assert_eq!(b.alpha, 0.9);
                for i in 0..10_000 {
                    let r = i as f64 * 50.0 / 9_999.0;
                    assert!(spec.profile(r).abs() <= b.bound(r), "m={m} d={d} r={r}");
                }
            }
        }
        for spec in [KernelSpec::eta2(), KernelSpec::psi2(), KernelSpec::psi32()] {
            let b = spec.decay.unwrap();
            for i in 0..1000 {
                let r = i as f64 * 0.003;
                assert!(spec.profile(r).abs() <= b.bound(r));
            }
        }
    }
}
