//! Truncated Fock-basis oracle for the heralded source.
//!
//! The split TMSV `U_BS |TMSV⟩|0⟩` is built literally as a real amplitude
//! tensor over `(n_A, n_B1, n_B2)`. Detector inefficiency is a pure-loss
//! channel on `B1` applied through its photon-count Kraus operators, which
//! keeps the state block-diagonal in the number of lost photons. Moments of
//! the conditioned `A, B2` state come from ladder-operator matrix elements.
//!
//! Nothing here shares code with [`crate::subtraction`]; the two are meant to
//! be compared.

use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, log, sqrt};

use crate::error::{domain, Error, Result};
use crate::gaussian::TwoModeCovariance;
use crate::math::{ln_binomial, CompensatedSum};
use crate::subtraction::{lambda_sq, Scheme, SourceSpec};

/// Largest acceptable `1 - Σ|ψ|²` after truncation.
pub const DEFAULT_NORM_TOL: f64 = 1e-9;

/// Conditioning below this probability is refused.
pub const MIN_CONDITIONING_PROB: f64 = 1e-15;

/// Real amplitudes of the split TMSV on `(n_A, n_B1, n_B2)`, each index in
/// `0..=cutoff`.
#[derive(Clone, Debug)]
pub struct FockState {
    cutoff: usize,
    amplitudes: Vec<f64>,
    norm_defect: f64,
}

impl FockState {
    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// `1 - Σ|amplitude|²`.
    pub fn norm_defect(&self) -> f64 {
        self.norm_defect
    }

    #[inline]
    fn index(&self, n_a: usize, n_b1: usize, n_b2: usize) -> usize {
        let d = self.cutoff + 1;
        (n_a * d + n_b1) * d + n_b2
    }

    pub fn amplitude(&self, n_a: usize, n_b1: usize, n_b2: usize) -> f64 {
        if n_a > self.cutoff || n_b1 > self.cutoff || n_b2 > self.cutoff {
            return 0.0;
        }
        self.amplitudes[self.index(n_a, n_b1, n_b2)]
    }

    pub fn norm_sq(&self) -> f64 {
        let mut s = CompensatedSum::new();
        for a in &self.amplitudes {
            s.add(a * a);
        }
        s.value()
    }
}

/// Smallest cutoff with `λ^{2(N+1)} ≤ tol`, never below the scale set by the
/// mean photon number.
pub fn suggested_cutoff(v: f64, tol: f64) -> usize {
    let l2 = lambda_sq(v);
    let heuristic = libm::ceil(10.0 + 8.0 * l2 / (1.0 - l2)) as usize;
    if l2 == 0.0 {
        return heuristic;
    }
    let tail = libm::ceil(log(tol) / log(l2)) as usize;
    heuristic.max(tail.saturating_sub(1))
}

/// Cutoff used when none is given: norm loss below `1e-12`.
pub fn default_cutoff(v: f64) -> usize {
    suggested_cutoff(v, 1e-12)
}

/// `U_BS|TMSV⟩⊗|0⟩` truncated at `n_A ≤ cutoff`, checked against
/// [`DEFAULT_NORM_TOL`].
pub fn build_split_tmsv(v: f64, t: f64, cutoff: usize) -> Result<FockState> {
    build_split_tmsv_with_tol(v, t, cutoff, DEFAULT_NORM_TOL)
}

pub fn build_split_tmsv_with_tol(v: f64, t: f64, cutoff: usize, tol: f64) -> Result<FockState> {
    if cutoff < 2 {
        return Err(domain("Fock cutoff", cutoff as f64));
    }
    if !(v >= 1.0 && v.is_finite()) {
        return Err(domain("TMSV variance", v));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(domain("beamsplitter transmittance", t));
    }
    let l2 = lambda_sq(v);
    let d = cutoff + 1;
    let mut state = FockState { cutoff, amplitudes: vec![0.0; d * d * d], norm_defect: 0.0 };

    let ln_l2 = log(l2);
    let ln_norm = 0.5 * libm::log1p(-l2);
    for n in 0..=cutoff {
        for l in 0..=n {
            // √(1-λ²) λⁿ √(C(n,l) T^{n-l} (1-T)^l)
            let mut ln_amp = ln_norm + 0.5 * ln_binomial(n as u32, l as u32);
            if n > 0 {
                ln_amp += 0.5 * n as f64 * ln_l2;
            }
            let amp = if (n - l > 0 && t == 0.0) || (l > 0 && t == 1.0) {
                0.0
            } else {
                if n - l > 0 {
                    ln_amp += 0.5 * (n - l) as f64 * log(t);
                }
                if l > 0 {
                    ln_amp += 0.5 * l as f64 * libm::log1p(-t);
                }
                exp(ln_amp)
            };
            let idx = state.index(n, l, n - l);
            state.amplitudes[idx] = amp;
        }
    }
    state.norm_defect = (1.0 - state.norm_sq()).max(0.0);
    if state.norm_defect > tol {
        return Err(Error::Truncation {
            norm_defect: state.norm_defect,
            suggested_cutoff: suggested_cutoff(v, tol),
        });
    }
    Ok(state)
}

/// The state after a pure loss of transmittance `eta_d` on `B1`.
///
/// Branch `r` (photons lost) has amplitudes
/// `ψ(n_A, j + r, n_B2) · √(C(j+r, r) η^j (1-η)^r)` on `(n_A, j, n_B2)`;
/// branches are mutually incoherent. They are evaluated on demand.
#[derive(Clone, Copy, Debug)]
pub struct LossEnsemble<'a> {
    state: &'a FockState,
    eta_d: f64,
}

pub fn apply_detector_loss(state: &FockState, eta_d: f64) -> Result<LossEnsemble<'_>> {
    if !(eta_d > 0.0 && eta_d <= 1.0) {
        return Err(domain("detector efficiency", eta_d));
    }
    Ok(LossEnsemble { state, eta_d })
}

impl<'a> LossEnsemble<'a> {
    pub fn state(&self) -> &'a FockState {
        self.state
    }

    pub fn eta_d(&self) -> f64 {
        self.eta_d
    }

    /// Number of photons that may be lost (inclusive bound).
    pub fn max_lost(&self) -> usize {
        if self.eta_d == 1.0 {
            0
        } else {
            self.state.cutoff
        }
    }

    /// Kraus factor `√(C(j+r, r) η^j (1-η)^r)`.
    pub fn kraus_factor(&self, detected: usize, lost: usize) -> f64 {
        if lost == 0 {
            return sqrt(libm::pow(self.eta_d, detected as f64));
        }
        if self.eta_d == 1.0 {
            return 0.0;
        }
        let n = (detected + lost) as u32;
        let ln = ln_binomial(n, lost as u32) + detected as f64 * log(self.eta_d) + lost as f64 * libm::log1p(-self.eta_d);
        exp(0.5 * ln)
    }

    pub fn branch_amplitude(&self, lost: usize, n_a: usize, detected: usize, n_b2: usize) -> f64 {
        let f = self.kraus_factor(detected, lost);
        if f == 0.0 {
            return 0.0;
        }
        f * self.state.amplitude(n_a, detected + lost, n_b2)
    }

    /// Distribution of the detected photon number on `B1`.
    pub fn detected_distribution(&self) -> Vec<f64> {
        let n = self.state.cutoff;
        let mut out = vec![CompensatedSum::new(); n + 1];
        for (j, slot) in out.iter_mut().enumerate() {
            for r in 0..=self.max_lost().min(n - j) {
                for a in 0..=n {
                    for b in 0..=n {
                        let amp = self.branch_amplitude(r, a, j, b);
                        slot.add(amp * amp);
                    }
                }
            }
        }
        out.iter().map(CompensatedSum::value).collect()
    }
}

/// Detector outcome used for conditioning.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Herald {
    Count(usize),
    OnOff,
}

impl Herald {
    fn accepts(&self, detected: usize) -> bool {
        match *self {
            Herald::Count(k) => detected == k,
            Herald::OnOff => detected >= 1,
        }
    }
}

impl TryFrom<Scheme> for Herald {
    type Error = Error;

    fn try_from(s: Scheme) -> Result<Self> {
        match s {
            Scheme::KPhoton(k) => Ok(Herald::Count(k as usize)),
            Scheme::OnOff => Ok(Herald::OnOff),
            Scheme::None => Err(Error::Domain { what: "herald (scheme none)", value: f64::NAN }),
        }
    }
}

/// Normalised moments of the heralded `A, B2` state.
#[derive(Clone, Debug, PartialEq)]
pub struct Conditioned {
    pub probability: f64,
    /// Built from the x quadratures: `(⟨x_A²⟩, ⟨x_B²⟩, ⟨x_A x_B⟩)`.
    pub cov: TwoModeCovariance,
    /// `(⟨p_A²⟩, ⟨p_B²⟩, ⟨p_A p_B⟩)`; standard form requires
    /// `(v1, v2, -phi)`.
    pub p_moments: (f64, f64, f64),
    /// `(⟨x_A⟩, ⟨x_B⟩)`; `⟨p⟩` vanishes identically for real amplitudes.
    pub mean_x: (f64, f64),
    /// Mode-A photon-number populations `⟨n|ρ_A|n⟩`.
    pub populations_a: Vec<f64>,
}

#[derive(Default)]
struct Moments {
    norm: CompensatedSum,
    na: CompensatedSum,
    nb: CompensatedSum,
    a: CompensatedSum,
    b: CompensatedSum,
    aa: CompensatedSum,
    bb: CompensatedSum,
    ab: CompensatedSum,
    ab_dag: CompensatedSum,
}

/// Projects `B1` onto the herald and returns the normalised moments.
pub fn condition_on_count(ens: &LossEnsemble<'_>, herald: Herald) -> Result<Conditioned> {
    let n = ens.state.cutoff;
    let mut m = Moments::default();
    let mut pops = vec![CompensatedSum::new(); n + 1];
    let sq = |k: usize| sqrt(k as f64);
    let d = n + 1;
    let mut c = vec![0.0; d * d];

    for j in (0..=n).filter(|&j| herald.accepts(j)) {
        for r in 0..=ens.max_lost().min(n - j) {
            let mut any = false;
            for a in 0..=n {
                for b in 0..=n {
                    let amp = ens.branch_amplitude(r, a, j, b);
                    c[a * d + b] = amp;
                    any |= amp != 0.0;
                }
            }
            if !any {
                continue;
            }
            for a in 0..=n {
                for b in 0..=n {
                    let x = c[a * d + b];
                    if x == 0.0 {
                        continue;
                    }
                    let x2 = x * x;
                    m.norm.add(x2);
                    pops[a].add(x2);
                    m.na.add(a as f64 * x2);
                    m.nb.add(b as f64 * x2);
                    if a + 1 <= n {
                        m.a.add(x * c[(a + 1) * d + b] * sq(a + 1));
                    }
                    if b + 1 <= n {
                        m.b.add(x * c[a * d + b + 1] * sq(b + 1));
                    }
                    if a + 2 <= n {
                        m.aa.add(x * c[(a + 2) * d + b] * sq((a + 1) * (a + 2)));
                    }
                    if b + 2 <= n {
                        m.bb.add(x * c[a * d + b + 2] * sq((b + 1) * (b + 2)));
                    }
                    if a + 1 <= n && b + 1 <= n {
                        // ⟨a,b| a b |a+1,b+1⟩
                        m.ab.add(x * c[(a + 1) * d + b + 1] * sq((a + 1) * (b + 1)));
                    }
                    if a + 1 <= n && b >= 1 {
                        // ⟨a,b| a b† |a+1,b-1⟩
                        m.ab_dag.add(x * c[(a + 1) * d + b - 1] * sq((a + 1) * b));
                    }
                }
            }
        }
    }

    let prob = m.norm.value();
    if !(prob > MIN_CONDITIONING_PROB) {
        return Err(Error::Conditioning { probability: prob });
    }
    let e = |s: &CompensatedSum| s.value() / prob;
    let (na, nb, aa, bb, ab, ab_dag) = (e(&m.na), e(&m.nb), e(&m.aa), e(&m.bb), e(&m.ab), e(&m.ab_dag));
    let mean_x = (2.0 * e(&m.a), 2.0 * e(&m.b));

    let xa2 = 2.0 * na + 1.0 + 2.0 * aa;
    let xb2 = 2.0 * nb + 1.0 + 2.0 * bb;
    let xaxb = 2.0 * (ab + ab_dag);
    let pa2 = 2.0 * na + 1.0 - 2.0 * aa;
    let pb2 = 2.0 * nb + 1.0 - 2.0 * bb;
    let papb = 2.0 * (ab_dag - ab);

    Ok(Conditioned {
        probability: prob,
        cov: TwoModeCovariance::new(
            xa2 - mean_x.0 * mean_x.0,
            xb2 - mean_x.1 * mean_x.1,
            xaxb - mean_x.0 * mean_x.1,
        ),
        p_moments: (pa2, pb2, papb),
        mean_x,
        populations_a: pops.iter().map(|p| p.value() / prob).collect(),
    })
}

/// Builds, applies the detector model and conditions in one go.
pub fn oracle_for_source(src: &SourceSpec, cutoff: usize) -> Result<Conditioned> {
    src.validate()?;
    let herald = Herald::try_from(src.scheme)?;
    let state = build_split_tmsv(src.v, src.t, cutoff)?;
    let ens = apply_detector_loss(&state, src.eta_d)?;
    condition_on_count(&ens, herald)
}

/// Photon-number law of mode A after an ideal `k`-photon herald:
/// `p_n ∝ λ^{2n} C(n,k) Tⁿ`, `n ≥ k`.
pub fn photon_number_dist(src: &SourceSpec, k: u32, n: u32) -> f64 {
    if n < k {
        return 0.0;
    }
    let x = src.effective_t() * src.lambda_sq();
    if x == 0.0 {
        return if n == k { 1.0 } else { 0.0 };
    }
    // Σ_{n≥k} C(n,k) xⁿ = x^k / (1-x)^{k+1}
    exp(ln_binomial(n, k) + (n - k) as f64 * log(x) + (k as f64 + 1.0) * libm::log1p(-x))
}
