//! Two-mode Gaussian states in standard form and the reverse-reconciliation
//! key rate.
//!
//! Conventions: shot-noise units, vacuum quadrature variance 1. A covariance
//! matrix in standard form is
//!
//! ```text
//! [ v1·I      phi·Z ]
//! [ phi·Z     v2·I  ]      I = diag(1, 1),  Z = diag(1, -1)
//! ```
//!
//! Mode A is measured by heterodyne detection, mode B by homodyne detection,
//! and the key is distilled in the reverse direction.

use libm::{log2, sqrt};

use crate::error::{domain, Error, Result};

/// Tolerance on the smallest symplectic eigenvalue (and on `v1`, `v2`) below 1.
pub const PHYSICALITY_TOL: f64 = 1e-9;

/// Discriminants within this distance below zero are treated as zero.
const DISCRIMINANT_CLIP: f64 = 1e-12;

/// Standard-form two-mode covariance matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoModeCovariance {
    pub v1: f64,
    pub v2: f64,
    pub phi: f64,
}

impl TwoModeCovariance {
    pub const fn new(v1: f64, v2: f64, phi: f64) -> Self {
        Self { v1, v2, phi }
    }

    /// Two-mode squeezed vacuum with quadrature variance `v`.
    pub fn tmsv(v: f64) -> Self {
        Self::new(v, v, sqrt((v * v - 1.0).max(0.0)))
    }

    /// Dense 4×4 matrix in (x_A, p_A, x_B, p_B) ordering.
    pub fn to_matrix(&self) -> [[f64; 4]; 4] {
        let Self { v1, v2, phi } = *self;
        [
            [v1, 0.0, phi, 0.0],
            [0.0, v1, 0.0, -phi],
            [phi, 0.0, v2, 0.0],
            [0.0, -phi, 0.0, v2],
        ]
    }

    /// `D = v1 v2 - phi²`, so that `det γ = D²`.
    pub fn d(&self) -> f64 {
        self.v1 * self.v2 - self.phi * self.phi
    }

    /// `Δ = v1² + v2² - 2 phi²`
    pub fn delta(&self) -> f64 {
        self.v1 * self.v1 + self.v2 * self.v2 - 2.0 * self.phi * self.phi
    }

    pub fn symplectic_eigenvalues(&self) -> Result<(f64, f64)> {
        symplectic_eigenvalues(self)
    }

    pub fn is_physical(&self) -> bool {
        check_physicality(self)
    }

    fn raw_symplectic(&self) -> Option<(f64, f64)> {
        let (delta, d) = (self.delta(), self.d());
        if !(d > 0.0) {
            return None;
        }
        let mut disc = delta * delta - 4.0 * d * d;
        if disc < 0.0 {
            if disc < -DISCRIMINANT_CLIP * delta.abs().max(1.0) * delta.abs().max(1.0) {
                return None;
            }
            disc = 0.0;
        }
        let root = sqrt(disc);
        let hi = 0.5 * (delta + root);
        // (Δ - √disc)/2 suffers cancellation when one eigenvalue dominates;
        // λ1² λ2² = D² gives the small one accurately.
        if !(hi > 0.0) {
            return None;
        }
        let lo = d * d / hi;
        Some((sqrt(hi), sqrt(lo)))
    }
}

/// Symplectic spectrum `(λ1, λ2)` with `λ1 ≥ λ2`.
pub fn symplectic_eigenvalues(cov: &TwoModeCovariance) -> Result<(f64, f64)> {
    match cov.raw_symplectic() {
        Some((l1, l2)) if l2 >= 1.0 - PHYSICALITY_TOL && cov.v1 >= 1.0 - PHYSICALITY_TOL && cov.v2 >= 1.0 - PHYSICALITY_TOL => {
            Ok((l1, l2))
        }
        Some((_, l2)) => Err(Error::InvalidState { min_symplectic: l2 }),
        None => Err(Error::InvalidState { min_symplectic: f64::NAN }),
    }
}

pub fn check_physicality(cov: &TwoModeCovariance) -> bool {
    cov.v1.is_finite()
        && cov.v2.is_finite()
        && cov.phi.is_finite()
        && symplectic_eigenvalues(cov).is_ok()
}

/// `G(x) = (x+1) log2(x+1) - x log2 x`, with `G(0) = 0`.
pub fn entropy_term(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(domain("entropy argument", x));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    Ok((x + 1.0) * log2(x + 1.0) - x * log2(x))
}

/// `G((λ-1)/2)` with rounding below `λ = 1` absorbed.
fn entropy_of_symplectic(lambda: f64) -> f64 {
    let x = (0.5 * (lambda - 1.0)).max(0.0);
    entropy_term(x).unwrap_or(0.0)
}

/// Lossy channel with transmittance `t_c` and input-referred excess noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelSpec {
    pub t_c: f64,
    pub epsilon: f64,
    pub distance_km: Option<f64>,
    pub loss_db_per_km: Option<f64>,
}

impl ChannelSpec {
    pub fn new(t_c: f64, epsilon: f64) -> Result<Self> {
        if !(t_c > 0.0 && t_c <= 1.0) {
            return Err(domain("channel transmittance", t_c));
        }
        if !(epsilon >= 0.0) {
            return Err(domain("excess noise", epsilon));
        }
        Ok(Self { t_c, epsilon, distance_km: None, loss_db_per_km: None })
    }

    /// Fibre link: `t_c = 10^(-a·d/10)`.
    pub fn from_distance(distance_km: f64, loss_db_per_km: f64, epsilon: f64) -> Result<Self> {
        if !(distance_km >= 0.0) {
            return Err(domain("distance", distance_km));
        }
        if !(loss_db_per_km >= 0.0) {
            return Err(domain("loss coefficient", loss_db_per_km));
        }
        let t_c = libm::pow(10.0, -loss_db_per_km * distance_km / 10.0);
        let mut ch = Self::new(t_c, epsilon)?;
        ch.distance_km = Some(distance_km);
        ch.loss_db_per_km = Some(loss_db_per_km);
        Ok(ch)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) {
            return Err(domain("excess noise", epsilon));
        }
        self.epsilon = epsilon;
        Ok(self)
    }

    /// Input-referred total noise `χ = (1 - t_c)/t_c + ε`.
    pub fn chi(&self) -> f64 {
        (1.0 - self.t_c) / self.t_c + self.epsilon
    }
}

/// Sends mode B through the channel.
pub fn apply_channel(cov: &TwoModeCovariance, ch: &ChannelSpec) -> Result<TwoModeCovariance> {
    if !(ch.t_c > 0.0 && ch.t_c <= 1.0) {
        return Err(domain("channel transmittance", ch.t_c));
    }
    if !(ch.epsilon >= 0.0) {
        return Err(domain("excess noise", ch.epsilon));
    }
    Ok(TwoModeCovariance {
        v1: cov.v1,
        v2: ch.t_c * (cov.v2 + ch.chi()),
        phi: sqrt(ch.t_c) * cov.phi,
    })
}

/// Key-rate breakdown, all in bits per channel use.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KeyRateReport {
    pub mutual_info: f64,
    pub holevo: f64,
    /// `β·I - χ_E`, before the success-probability prefactor.
    pub raw_rate: f64,
    pub success_prob: f64,
    /// `success_prob · raw_rate`; may be negative.
    pub key_rate: f64,
    pub beta: f64,
}

impl KeyRateReport {
    pub fn is_secure(&self) -> bool {
        self.key_rate > 0.0
    }
}

/// Asymptotic reverse-reconciliation rate with heterodyne at A and homodyne
/// at B, against collective attacks. Negative rates are returned unchanged.
pub fn key_rate_homodyne(cov: &TwoModeCovariance, beta: f64, success_prob: f64) -> Result<KeyRateReport> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(domain("reconciliation efficiency", beta));
    }
    if !(0.0..=1.0).contains(&success_prob) {
        return Err(domain("success probability", success_prob));
    }
    if cov.v2 == 0.0 {
        return Err(Error::Singular("v2 = 0"));
    }
    let (l1, l2) = symplectic_eigenvalues(cov)?;

    let phi2_over_v2 = cov.phi * cov.phi / cov.v2;
    let v_a = 0.5 * (cov.v1 + 1.0);
    let v_a_given_b = v_a - 0.5 * phi2_over_v2;
    if !(v_a_given_b > 0.0) {
        return Err(Error::InvalidState { min_symplectic: l2 });
    }
    let mutual_info = 0.5 * log2(v_a / v_a_given_b);

    let l3 = sqrt((cov.v1 * (cov.v1 - phi2_over_v2)).max(0.0));
    let holevo = entropy_of_symplectic(l1) + entropy_of_symplectic(l2) - entropy_of_symplectic(l3);

    let raw_rate = beta * mutual_info - holevo;
    Ok(KeyRateReport {
        mutual_info,
        holevo,
        raw_rate,
        success_prob,
        key_rate: success_prob * raw_rate,
        beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn pure_tmsv_has_unit_spectrum() {
        for v in [1.0, 1.5, 2.0, 5.0, 20.0, 100.0] {
            let (l1, l2) = TwoModeCovariance::tmsv(v).symplectic_eigenvalues().unwrap();
            assert!(close(l1, 1.0, 1e-9) && close(l2, 1.0, 1e-9), "V={v}: {l1} {l2}");
        }
    }

    #[test]
    fn product_state_spectrum_is_diagonal() {
        let (l1, l2) = TwoModeCovariance::new(5.0, 3.0, 0.0).symplectic_eigenvalues().unwrap();
        assert!(close(l1, 5.0, 1e-12) && close(l2, 3.0, 1e-12));
    }

    #[test]
    fn lossy_tmsv_spectrum() {
        let cov = TwoModeCovariance::new(20.0, 2.901, 6.3166);
        let (l1, l2) = cov.symplectic_eigenvalues().unwrap();
        assert!(close(l1, 18.100, 1e-3), "{l1}");
        assert!(close(l2, 1.0011, 1e-3), "{l2}");
    }

    #[test]
    fn unphysical_state_is_rejected() {
        let bad = TwoModeCovariance::new(20.0, 20.0, 25.0);
        assert!(!bad.is_physical());
        assert!(matches!(bad.symplectic_eigenvalues(), Err(Error::InvalidState { .. })));
        assert!(TwoModeCovariance::new(1.0, 1.0, 0.0).is_physical());
        assert!(TwoModeCovariance::tmsv(20.0).is_physical());
        assert!(!TwoModeCovariance::new(0.5, 0.5, 0.0).is_physical());
        // Slightly above the pure-state bound.
        assert!(!TwoModeCovariance::new(20.0, 20.0, 399f64.sqrt() + 1e-3).is_physical());
    }

    #[test]
    fn entropy_term_values() {
        assert_eq!(entropy_term(0.0).unwrap(), 0.0);
        assert!(close(entropy_term(1.0).unwrap(), 2.0, 1e-15));
        assert!(close(entropy_term(0.5).unwrap(), 1.37744, 1e-5));
        assert!(entropy_term(-0.1).is_err());
        assert!(entropy_term(f64::NAN).is_err());
    }

    #[test]
    fn channel_examples() {
        let cov = TwoModeCovariance::tmsv(20.0);
        let id = ChannelSpec::new(1.0, 0.0).unwrap();
        assert_eq!(apply_channel(&cov, &id).unwrap(), cov);

        let ch = ChannelSpec::new(0.1, 0.01).unwrap();
        let out = apply_channel(&cov, &ch).unwrap();
        assert!(close(out.v1, 20.0, 1e-12));
        assert!(close(out.v2, 2.901, 1e-4));
        assert!(close(out.phi, 6.3166, 1e-4));

        let unc = TwoModeCovariance::new(7.0, 7.0, 0.0);
        let out = apply_channel(&unc, &ChannelSpec::new(0.5, 0.0).unwrap()).unwrap();
        assert!(close(out.v2, 4.0, 1e-12) && out.phi == 0.0);
    }

    #[test]
    fn channel_rejects_bad_transmittance() {
        assert!(ChannelSpec::new(0.0, 0.0).is_err());
        assert!(ChannelSpec::new(1.2, 0.0).is_err());
        assert!(ChannelSpec::new(0.5, -0.1).is_err());
        let raw = ChannelSpec { t_c: 1.5, epsilon: 0.0, distance_km: None, loss_db_per_km: None };
        assert!(apply_channel(&TwoModeCovariance::tmsv(2.0), &raw).is_err());
    }

    #[test]
    fn distance_form() {
        let ch = ChannelSpec::from_distance(50.0, 0.2, 0.01).unwrap();
        assert!(close(ch.t_c, 0.1, 1e-12));
        assert_eq!(ch.distance_km, Some(50.0));
        assert!(close(ChannelSpec::from_distance(0.0, 0.2, 0.0).unwrap().t_c, 1.0, 1e-15));
    }

    #[test]
    fn noiseless_tmsv_rate_is_half_log_v() {
        let r = key_rate_homodyne(&TwoModeCovariance::tmsv(20.0), 1.0, 1.0).unwrap();
        assert!(close(r.key_rate, 0.5 * 20f64.log2(), 1e-6), "{r:?}");
        assert!(close(r.holevo, 0.0, 1e-9));
    }

    #[test]
    fn uncorrelated_modes_give_no_key() {
        let r = key_rate_homodyne(&TwoModeCovariance::new(3.0, 2.0, 0.0), 0.9, 0.7).unwrap();
        assert_eq!(r.mutual_info, 0.0);
        assert!(r.key_rate <= 0.0);
    }

    #[test]
    fn lossy_rate_matches_high_precision_evaluation() {
        // Reference evaluated at 30 digits outside this crate.
        let r = key_rate_homodyne(&TwoModeCovariance::new(20.0, 2.901, 6.3166), 0.95, 1.0).unwrap();
        assert!(close(r.mutual_info, 0.767534791862763, 1e-9), "{r:?}");
        assert!(close(r.holevo, 0.703562051568192, 1e-9), "{r:?}");
        assert!(close(r.key_rate, 0.025596000701433, 1e-9), "{r:?}");
    }

    #[test]
    fn key_rate_errors() {
        let cov = TwoModeCovariance::tmsv(5.0);
        assert!(key_rate_homodyne(&cov, 0.0, 1.0).is_err());
        assert!(key_rate_homodyne(&cov, 1.1, 1.0).is_err());
        assert!(key_rate_homodyne(&cov, 0.9, 1.5).is_err());
        assert_eq!(
            key_rate_homodyne(&TwoModeCovariance::new(2.0, 0.0, 0.0), 0.9, 1.0),
            Err(Error::Singular("v2 = 0"))
        );
    }

    #[test]
    fn report_prefactor() {
        let cov = apply_channel(&TwoModeCovariance::tmsv(20.0), &ChannelSpec::new(0.3, 0.02).unwrap()).unwrap();
        let r = key_rate_homodyne(&cov, 0.95, 0.2).unwrap();
        assert!(close(r.key_rate, 0.2 * r.raw_rate, 1e-12));
    }
}
