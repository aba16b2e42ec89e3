//! Gamma-law equation of state in the (p, s) variables.
//!
//! `v = A(s) p^(-1/gamma)` with `A(s) = (k_ref e^s)^(1/gamma)`. Every routine
//! has an `_a` twin taking the entropy constant `A` directly, which is what the
//! profile and evolution code use.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaLawEos {
    pub gamma: f64,
    #[serde(default = "default_k_ref")]
    pub k_ref: f64,
}

fn default_k_ref() -> f64 {
    1.0
}

impl GammaLawEos {
    pub fn new(gamma: f64, k_ref: f64) -> Result<Self> {
        if !(gamma > 1.0) || !gamma.is_finite() {
            return Err(Error::Domain(format!("gamma must exceed 1, got {gamma}")));
        }
        if !(k_ref > 0.0) || !k_ref.is_finite() {
            return Err(Error::Domain(format!(
                "k_ref must be positive, got {k_ref}"
            )));
        }
        Ok(Self { gamma, k_ref })
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.gamma, self.k_ref).map(|_| ())
    }

    /// Entropy constant `A(s)`.
    pub fn a_of_s(&self, s: f64) -> f64 {
        (self.k_ref * s.exp()).powf(1.0 / self.gamma)
    }

    /// Inverse of [`a_of_s`](Self::a_of_s).
    pub fn s_of_a(&self, a: f64) -> f64 {
        (a.powf(self.gamma) / self.k_ref).ln()
    }

    pub fn specific_volume(&self, p: f64, s: f64) -> Result<f64> {
        self.specific_volume_a(p, self.a_of_s(s))
    }

    pub fn dv_dp(&self, p: f64, s: f64) -> Result<f64> {
        self.dv_dp_a(p, self.a_of_s(s))
    }

    pub fn d2v_dp2(&self, p: f64, s: f64) -> Result<f64> {
        self.d2v_dp2_a(p, self.a_of_s(s))
    }

    /// Linear wavespeed coefficient `sqrt(-v_p(p_bar, s))`.
    pub fn sigma_of(&self, p_bar: f64, s: f64) -> Result<f64> {
        self.sigma_of_a(p_bar, self.a_of_s(s))
    }

    pub fn specific_volume_a(&self, p: f64, a: f64) -> Result<f64> {
        check_pressure(p)?;
        Ok(a * p.powf(-1.0 / self.gamma))
    }

    pub fn dv_dp_a(&self, p: f64, a: f64) -> Result<f64> {
        let v = self.specific_volume_a(p, a)?;
        Ok(-v / (self.gamma * p))
    }

    pub fn d2v_dp2_a(&self, p: f64, a: f64) -> Result<f64> {
        let v = self.specific_volume_a(p, a)?;
        let g = 1.0 / self.gamma;
        Ok(g * (g + 1.0) * v / (p * p))
    }

    pub fn sigma_of_a(&self, p_bar: f64, a: f64) -> Result<f64> {
        Ok((-self.dv_dp_a(p_bar, a)?).sqrt())
    }

    /// Entropy constant that produces wavespeed coefficient `sigma` at `p_bar`.
    pub fn a_for_sigma(&self, p_bar: f64, sigma: f64) -> Result<f64> {
        check_pressure(p_bar)?;
        if !(sigma > 0.0) {
            return Err(Error::Domain(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        Ok(self.gamma * sigma * sigma * p_bar.powf(1.0 + 1.0 / self.gamma))
    }

    /// `v(p_bar + dp) - v(p_bar)` without cancellation for small `dp`.
    ///
    /// Returns `None` when `p_bar + dp <= 0`.
    #[inline]
    pub fn volume_increment_a(&self, p_bar: f64, dp: f64, a: f64) -> Option<f64> {
        let q = dp / p_bar;
        if !(q > -1.0) {
            return None;
        }
        let v0 = a * p_bar.powf(-1.0 / self.gamma);
        Some(v0 * (-q.ln_1p() / self.gamma).exp_m1())
    }
}

fn check_pressure(p: f64) -> Result<()> {
    if p > 0.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("pressure must be positive, got {p}")))
    }
}

/// Ambient state: constant pressure over a fixed entropy profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuietState {
    pub p_bar: f64,
}

impl QuietState {
    pub fn new(p_bar: f64) -> Result<Self> {
        check_pressure(p_bar)?;
        Ok(Self { p_bar })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(gamma: f64) -> GammaLawEos {
        GammaLawEos::new(gamma, 1.0).unwrap()
    }

    #[test]
    fn unit_state_values() {
        let e = unit(2.0);
        assert_eq!(e.specific_volume_a(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(e.specific_volume_a(4.0, 1.0).unwrap(), 0.5);
        assert_eq!(e.dv_dp_a(1.0, 1.0).unwrap(), -0.5);
        assert_eq!(e.d2v_dp2_a(1.0, 1.0).unwrap(), 0.75);
        assert!((e.sigma_of_a(1.0, 1.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        // s = 0 with k_ref = 1 gives A = 1
        assert_eq!(e.specific_volume(1.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn gamma_1_4_values() {
        let e = unit(1.4);
        // mpmath, 40 digits
        let v = e.specific_volume_a(2.0, 1.0).unwrap();
        assert!((v - 0.609_506_827_102_237_7).abs() < 1e-15);
        let s = e.sigma_of_a(1.0, 1.0).unwrap();
        assert!((s - 0.845_154_254_728_516_6).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        let e = unit(2.0);
        assert!(e.specific_volume_a(0.0, 1.0).is_err());
        assert!(e.dv_dp_a(-1.0, 1.0).is_err());
        assert!(e.sigma_of_a(0.0, 1.0).is_err());
        assert!(GammaLawEos::new(1.0, 1.0).is_err());
        assert!(GammaLawEos::new(1.4, 0.0).is_err());
    }

    #[test]
    fn a_sigma_round_trip() {
        let e = unit(1.4);
        for &sig in &[0.3, 1.0, 2.5] {
            let a = e.a_for_sigma(1.7, sig).unwrap();
            assert!((e.sigma_of_a(1.7, a).unwrap() - sig).abs() < 1e-14 * sig);
        }
        let a = e.a_of_s(0.3);
        assert!((e.s_of_a(a) - 0.3).abs() < 1e-14);
    }

    #[test]
    fn increment_matches_direct_difference() {
        let e = unit(1.4);
        let (pb, a) = (1.3, 0.8);
        for &dp in &[0.5, -0.2, 1e-3] {
            let direct =
                e.specific_volume_a(pb + dp, a).unwrap() - e.specific_volume_a(pb, a).unwrap();
            let inc = e.volume_increment_a(pb, dp, a).unwrap();
            assert!((direct - inc).abs() < 1e-14);
        }
        assert_eq!(e.volume_increment_a(pb, 0.0, a), Some(0.0));
        assert_eq!(e.volume_increment_a(pb, -pb, a), None);
        // tiny increments keep full relative accuracy: v_p * dp
        let dp = 1e-12;
        let lin = e.dv_dp_a(pb, a).unwrap() * dp;
        assert!(((e.volume_increment_a(pb, dp, a).unwrap() - lin) / lin).abs() < 1e-11);
    }
}
