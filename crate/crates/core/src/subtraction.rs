//! Closed-form photon subtraction on a split two-mode squeezed vacuum.
//!
//! Mode B of a TMSV with variance `V` is split on a beamsplitter of
//! transmittance `T`; the reflected arm `B1` is measured by a photon-number
//! diagonal detector and the pair `A, B2` is kept on a click. Every
//! conditioned state has zero mean, so its covariance matrix is fixed by
//! the second moments. For an ideal `m`-photon event the moments depend on a
//! single number `Ṽ_m = (m+1)/(1 - Tλ²)`, and any photon-number-diagonal
//! detector yields a mixture over `m`.

use libm::{exp, expm1, log, pow, sqrt};

use crate::error::{domain, Error, Result};
use crate::gaussian::TwoModeCovariance;
use crate::math::{binomial_pmf, ln_factorial, CompensatedSum};

/// Largest photon number accepted by the public interface.
pub const MAX_K: u32 = 64;
/// Mixture series stop once the omitted weight falls below this.
pub const SERIES_TAIL_TOL: f64 = 1e-12;
/// Hard cap on the number of mixture terms.
pub const SERIES_MAX_TERMS: u32 = 10_000;

/// Detector outcome on which the state is kept.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    /// No splitting, no postselection.
    None,
    /// Exactly `k` photons detected.
    KPhoton(u32),
    /// At least one photon detected.
    OnOff,
}

impl core::fmt::Display for Scheme {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Scheme::None => f.write_str("none"),
            Scheme::KPhoton(k) => write!(f, "k{k}"),
            Scheme::OnOff => f.write_str("onoff"),
        }
    }
}

/// Source at Alice: TMSV variance, splitting ratio, herald and detector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SourceSpec {
    pub v: f64,
    pub t: f64,
    pub scheme: Scheme,
    pub eta_d: f64,
}

impl SourceSpec {
    pub fn new(v: f64, t: f64, scheme: Scheme) -> Result<Self> {
        let src = Self { v, t, scheme, eta_d: 1.0 };
        src.validate()?;
        Ok(src)
    }

    /// Plain TMSV source without subtraction.
    pub fn plain(v: f64) -> Result<Self> {
        Self::new(v, 1.0, Scheme::None)
    }

    pub fn k_photon(v: f64, t: f64, k: u32) -> Result<Self> {
        Self::new(v, t, Scheme::KPhoton(k))
    }

    pub fn with_detector_efficiency(mut self, eta_d: f64) -> Result<Self> {
        self.eta_d = eta_d;
        self.validate()?;
        Ok(self)
    }

    pub fn with_t(mut self, t: f64) -> Result<Self> {
        self.t = t;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v >= 1.0 && self.v.is_finite()) {
            return Err(domain("TMSV variance", self.v));
        }
        if !(self.t > 0.0 && self.t <= 1.0) {
            return Err(domain("beamsplitter transmittance", self.t));
        }
        if !(self.eta_d > 0.0 && self.eta_d <= 1.0) {
            return Err(domain("detector efficiency", self.eta_d));
        }
        if let Scheme::KPhoton(k) = self.scheme {
            if k > MAX_K {
                return Err(domain("photon number", k as f64));
            }
        }
        if !(self.effective_t() * self.lambda_sq() < 1.0) {
            return Err(domain("T·λ² (series convergence)", self.effective_t() * self.lambda_sq()));
        }
        Ok(())
    }

    /// `λ² = (V-1)/(V+1)`
    pub fn lambda_sq(&self) -> f64 {
        lambda_sq(self.v)
    }

    pub fn lambda(&self) -> f64 {
        sqrt(self.lambda_sq())
    }

    /// Beamsplitter transmittance actually in effect (`1` without subtraction).
    pub fn effective_t(&self) -> f64 {
        match self.scheme {
            Scheme::None => 1.0,
            _ => self.t,
        }
    }

    pub fn is_ideal_detector(&self) -> bool {
        self.eta_d == 1.0
    }

    /// Ratio of the geometric photon-number law on `B1`:
    /// `P(m) = (1-r) r^m`, `r = λ²(1-T)/(1-Tλ²)`.
    pub fn reflected_ratio(&self) -> f64 {
        let l2 = self.lambda_sq();
        let t = self.effective_t();
        l2 * (1.0 - t) / (1.0 - t * l2)
    }
}

pub fn lambda_sq(v: f64) -> f64 {
    (v - 1.0) / (v + 1.0)
}

/// Probability that an ideal detector sees `m` photons in the reflected arm.
pub fn photon_count_prob(src: &SourceSpec, m: u32) -> f64 {
    let r = src.reflected_ratio();
    if r == 0.0 {
        return if m == 0 { 1.0 } else { 0.0 };
    }
    (1.0 - r) * pow(r, m as f64)
}

/// `Ṽ_m = (m+1)/(1 - Tλ²)` for an ideal `m`-photon event.
fn v_tilde_ideal(src: &SourceSpec, m: u32) -> f64 {
    (m as f64 + 1.0) / (1.0 - src.effective_t() * src.lambda_sq())
}

fn require_k(src: &SourceSpec) -> Result<u32> {
    src.validate()?;
    match src.scheme {
        Scheme::KPhoton(k) => Ok(k),
        _ => Err(Error::Domain { what: "scheme (k-photon required)", value: f64::NAN }),
    }
}

fn require_ideal(src: &SourceSpec) -> Result<()> {
    if src.is_ideal_detector() {
        Ok(())
    } else {
        Err(domain("detector efficiency (ideal detector required)", src.eta_d))
    }
}

/// Ideal `k`-photon heralding probability
/// `(1-λ²)/(1-Tλ²) · [λ²(1-T)/(1-Tλ²)]^k`.
pub fn success_prob_k(src: &SourceSpec) -> Result<f64> {
    let k = require_k(src)?;
    require_ideal(src)?;
    Ok(photon_count_prob(src, k))
}

/// Ideal on-off heralding probability `(1-T)λ²/(1-λ²T)`.
pub fn success_prob_onoff(src: &SourceSpec) -> Result<f64> {
    src.validate()?;
    if src.scheme != Scheme::OnOff {
        return Err(Error::Domain { what: "scheme (on-off required)", value: f64::NAN });
    }
    require_ideal(src)?;
    Ok(src.reflected_ratio())
}

/// Heralded variance parameter `Ṽ = (k+1)/(1-Tλ²)`.
pub fn v_tilde(src: &SourceSpec) -> Result<f64> {
    let k = require_k(src)?;
    require_ideal(src)?;
    Ok(v_tilde_ideal(src, k))
}

/// Weight of the `|m⟩⟨m|` component in the detector POVM element.
pub fn povm_weight(scheme: Scheme, eta_d: f64, m: u32) -> f64 {
    match scheme {
        Scheme::None => 1.0,
        Scheme::KPhoton(k) => {
            if eta_d == 1.0 {
                if m == k {
                    1.0
                } else {
                    0.0
                }
            } else {
                binomial_pmf(m, k, eta_d)
            }
        }
        Scheme::OnOff => {
            if m == 0 {
                0.0
            } else {
                -expm1(m as f64 * libm::log1p(-eta_d))
            }
        }
    }
}

/// Result of conditioning the split TMSV on the herald.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubtractionReport {
    pub success_prob: f64,
    /// Heralded mean of `x'²` for Alice's heterodyne record.
    pub v_tilde: f64,
    /// State of `A, B2` before the channel.
    pub cov: TwoModeCovariance,
    /// Equivalent source loss.
    pub eta_a: f64,
    /// Equivalent EPR variance, `2Ṽ - 1`.
    pub v_a: f64,
    /// Mixture terms summed (1 for closed-form cases).
    pub terms: u32,
}

fn covariance_from_v_tilde(src: &SourceSpec, vt: f64) -> TwoModeCovariance {
    let t = src.effective_t();
    let l2 = src.lambda_sq();
    TwoModeCovariance {
        v1: 2.0 * vt - 1.0,
        v2: 2.0 * t * l2 * vt + 1.0,
        phi: 2.0 * sqrt(t) * src.lambda() * vt,
    }
}

/// `η_A = Tλ²Ṽ/(Ṽ - 1)`; reduces to `λ²T(k+1)/(k+λ²T)` for ideal `k`.
fn eta_a_from_v_tilde(src: &SourceSpec, vt: f64) -> f64 {
    let tl2 = src.effective_t() * src.lambda_sq();
    if vt - 1.0 <= 1e-300 {
        1.0
    } else {
        tl2 * vt / (vt - 1.0)
    }
}

/// Mixture over detector-arm photon numbers: total weight and weighted `Ṽ`.
fn mixture(src: &SourceSpec) -> (f64, f64, u32) {
    let r = src.reflected_ratio();
    let mut total = CompensatedSum::new();
    let mut weighted = CompensatedSum::new();
    let mut terms = 0;
    let start = match src.scheme {
        Scheme::KPhoton(k) => k,
        _ => 0,
    };
    // Terms below `start` have zero POVM weight. Beyond m the omitted mass
    // of P is r^(m+1), which bounds the omitted weight.
    let mut m = start;
    loop {
        let w = povm_weight(src.scheme, src.eta_d, m) * photon_count_prob(src, m);
        total.add(w);
        weighted.add(w * v_tilde_ideal(src, m));
        terms += 1;
        let tail = if r == 0.0 { 0.0 } else { pow(r, m as f64 + 1.0) };
        if tail < SERIES_TAIL_TOL || terms >= SERIES_MAX_TERMS {
            break;
        }
        m += 1;
    }
    (total.value(), weighted.value(), terms)
}

/// Conditioned `A, B2` covariance and heralding probability for any scheme
/// and detector efficiency.
pub fn covariance_subtracted(src: &SourceSpec) -> Result<SubtractionReport> {
    src.validate()?;
    let (success_prob, vt, terms) = match src.scheme {
        Scheme::None => (1.0, 0.5 * (src.v + 1.0), 1),
        Scheme::KPhoton(k) if src.is_ideal_detector() => (photon_count_prob(src, k), v_tilde_ideal(src, k), 1),
        _ => {
            let (total, weighted, terms) = mixture(src);
            if !(total > 1e-300) {
                return Err(Error::Conditioning { probability: total });
            }
            (total, weighted / total, terms)
        }
    };
    let cov = match src.scheme {
        Scheme::None => TwoModeCovariance::tmsv(src.v),
        _ => covariance_from_v_tilde(src, vt),
    };
    Ok(SubtractionReport {
        success_prob,
        v_tilde: vt,
        cov,
        eta_a: eta_a_from_v_tilde(src, vt),
        v_a: 2.0 * vt - 1.0,
        terms,
    })
}

/// Heralding probability for any scheme and detector efficiency.
pub fn success_probability(src: &SourceSpec) -> Result<f64> {
    match covariance_subtracted(src) {
        Ok(rep) => Ok(rep.success_prob),
        Err(Error::Conditioning { probability }) => Ok(probability),
        Err(e) => Err(e),
    }
}

/// Equivalent-loss parameters `(V_A, η_A)` of an ideal `k`-photon source.
pub fn equivalent_loss_params(src: &SourceSpec) -> Result<(f64, f64)> {
    let k = require_k(src)?;
    require_ideal(src)?;
    let tl2 = src.t * src.lambda_sq();
    let eta_a = if k == 0 { 1.0 } else { tl2 * (k as f64 + 1.0) / (k as f64 + tl2) };
    Ok((2.0 * v_tilde_ideal(src, k) - 1.0, eta_a))
}

/// EPR source of variance `v_a` followed by a pure loss `eta_a` on mode B.
pub fn equivalent_loss_covariance(v_a: f64, eta_a: f64) -> TwoModeCovariance {
    let chi_a = (1.0 - eta_a) / eta_a;
    TwoModeCovariance {
        v1: v_a,
        v2: eta_a * (v_a + chi_a),
        phi: sqrt(eta_a * (v_a * v_a - 1.0)),
    }
}

/// `u = (1-T)λ²(x² + p²)/2`, the mean photon number reflected to the
/// detector given Alice's heterodyne outcome.
#[inline]
pub fn reflected_mean_photons(x_a: f64, p_a: f64, src: &SourceSpec) -> f64 {
    0.5 * (1.0 - src.effective_t()) * src.lambda_sq() * (x_a * x_a + p_a * p_a)
}

/// Postselection acceptance probability for Alice's outcome `(x_a, p_a)`.
///
/// `e^{-u} u^k / k!` for `k` photons and `1 - e^{-u}` for an on-off herald;
/// with a lossy detector `u` is replaced by `η_d·u`.
#[inline]
pub fn filter_q(x_a: f64, p_a: f64, src: &SourceSpec) -> f64 {
    let u = src.eta_d * reflected_mean_photons(x_a, p_a, src);
    match src.scheme {
        Scheme::None => 1.0,
        Scheme::KPhoton(0) => exp(-u),
        Scheme::KPhoton(k) => {
            if u <= 0.0 {
                0.0
            } else {
                exp(-u + k as f64 * log(u) - ln_factorial(k))
            }
        }
        Scheme::OnOff => -expm1(-u),
    }
}

/// `sup Q = k^k e^{-k} / k!`, reached at `u = k`.
pub fn filter_q_max(k: u32) -> f64 {
    if k == 0 {
        1.0
    } else {
        exp(k as f64 * log(k as f64) - k as f64 - ln_factorial(k))
    }
}

/// Transmittance maximising the single-photon heralding probability,
/// `(2λ² - 1)/λ²`, defined when `λ² ≥ 1/2`.
pub fn single_photon_optimal_t(v: f64) -> Option<f64> {
    let l2 = lambda_sq(v);
    (l2 >= 0.5).then(|| (2.0 * l2 - 1.0) / l2)
}
