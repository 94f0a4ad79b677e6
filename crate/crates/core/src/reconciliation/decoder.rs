//! Sum-product belief propagation for syndrome (coset) decoding.

use alloc::vec;
use alloc::vec::Vec;

use libm::{expm1, log1p};

use super::ldpc::LdpcCode;

/// Channel LLRs are clipped to this magnitude.
pub const LLR_MAX: f64 = 40.0;

pub const DEFAULT_MAX_ITER: u32 = 200;

/// Keeps `atanh` finite when every incoming message is saturated.
const TANH_CLAMP: f64 = 1.0 - 1e-15;

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeOutcome {
    pub bits: Vec<u8>,
    /// Syndrome satisfied, with an unchanged decision, on two consecutive
    /// iterations.
    pub success: bool,
    /// Iterations run (the channel-only decision counts as iteration 0).
    pub iterations: u32,
}

/// Reusable message buffers for one code.
///
/// Check-to-variable messages are stored in check order, and each variable
/// keeps its running total `llr + Σ c2v`, from which the outgoing message
/// on an edge is recovered as `total − c2v`. An iteration is the ordinary
/// flooding schedule, split into a gather, a per-check update and a
/// scatter so that the transcendental work runs over contiguous memory.
pub struct BpDecoder<'a> {
    code: &'a LdpcCode,
    c2v: Vec<f64>,
    /// Per edge: incoming message, then its `tanh(·/2)`.
    t: Vec<f64>,
    total: Vec<f64>,
}

impl<'a> BpDecoder<'a> {
    pub fn new(code: &'a LdpcCode) -> Self {
        let e = code.n_edges();
        Self { code, c2v: vec![0.0; e], t: vec![0.0; e], total: vec![0.0; code.n()] }
    }

    /// Decodes the bit vector whose syndrome is `syndrome`, given LLRs
    /// `ln P(b=0)/P(b=1)`.
    pub fn decode(&mut self, llr: &[f64], syndrome: &[u8], max_iter: u32) -> DecodeOutcome {
        let code = self.code;
        assert_eq!(llr.len(), code.n(), "LLR length");
        assert_eq!(syndrome.len(), code.m(), "syndrome length");
        let llr: Vec<f64> = llr.iter().map(|l| l.clamp(-LLR_MAX, LLR_MAX)).collect();
        let vars = code.row_indices();
        let offsets = code.row_offsets();

        let mut bits: Vec<u8> = llr.iter().map(|&l| u8::from(l < 0.0)).collect();
        let mut prev_ok = code.satisfies(&bits, syndrome);
        self.c2v.fill(0.0);
        self.total.copy_from_slice(&llr);

        for it in 1..=max_iter {
            for ((t, &v), &m) in self.t.iter_mut().zip(vars).zip(&self.c2v) {
                *t = self.total[v as usize] - m;
            }
            for t in self.t.iter_mut() {
                *t = half_tanh(*t);
            }
            for c in 0..code.m() {
                let (a, b) = (offsets[c] as usize, offsets[c + 1] as usize);
                let t = &self.t[a..b];
                let msgs = &mut self.c2v[a..b];
                // Leave-one-out products via a forward and a backward pass.
                let mut acc = if syndrome[c] == 1 { -1.0 } else { 1.0 };
                for (m, &ti) in msgs.iter_mut().zip(t) {
                    *m = acc;
                    acc *= ti;
                }
                acc = 1.0;
                for (m, &ti) in msgs.iter_mut().zip(t).rev() {
                    *m = (*m * acc).clamp(-TANH_CLAMP, TANH_CLAMP);
                    acc *= ti;
                }
            }
            for m in self.c2v.iter_mut() {
                *m = two_atanh(*m);
            }
            self.total.copy_from_slice(&llr);
            for (&v, &m) in vars.iter().zip(&self.c2v) {
                self.total[v as usize] += m;
            }

            let mut changed = false;
            for (b, &tot) in bits.iter_mut().zip(&self.total) {
                let nb = u8::from(tot < 0.0);
                changed |= nb != *b;
                *b = nb;
            }
            let ok = code.satisfies(&bits, syndrome);
            if ok && prev_ok && !changed {
                return DecodeOutcome { bits, success: true, iterations: it };
            }
            prev_ok = ok;
        }
        DecodeOutcome { bits, success: false, iterations: max_iter }
    }
}

/// `tanh(x/2)`, via one `expm1`.
#[inline]
fn half_tanh(x: f64) -> f64 {
    let e = expm1(-x.abs());
    let t = -e / (e + 2.0);
    if x < 0.0 {
        -t
    } else {
        t
    }
}

/// `2 atanh(p) = ln((1+p)/(1-p))`, via one `log1p`.
#[inline]
fn two_atanh(p: f64) -> f64 {
    let a = p.abs();
    let l = log1p(2.0 * a / (1.0 - a));
    if p < 0.0 {
        -l
    } else {
        l
    }
}

pub fn decode_syndrome(code: &LdpcCode, llr: &[f64], syndrome: &[u8], max_iter: u32) -> DecodeOutcome {
    BpDecoder::new(code).decode(llr, syndrome, max_iter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reconciliation::ldpc::{peg, DegreeProfile, PegOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn code() -> LdpcCode {
        peg(4000, 3600, &DegreeProfile::rate_tenth(), PegOptions::default(), 1).unwrap()
    }

    #[test]
    fn box_plus_helpers() {
        for x in [-50.0, -3.0, -1e-9, 0.0, 1e-6, 0.7, 12.0, 80.0] {
            assert!((half_tanh(x) - libm::tanh(0.5 * x)).abs() < 1e-15);
        }
        for p in [-0.999, -0.3, 0.0, 1e-8, 0.5, 0.99999] {
            assert!((two_atanh(p) - 2.0 * libm::atanh(p)).abs() < 1e-12 * (1.0 + two_atanh(p).abs()));
        }
    }

    #[test]
    fn noiseless_succeeds_immediately() {
        let h = code();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bits: Vec<u8> = (0..h.n()).map(|_| rng.random_range(0..2)).collect();
        let llr: Vec<f64> = bits.iter().map(|&b| if b == 0 { LLR_MAX } else { -LLR_MAX }).collect();
        let out = decode_syndrome(&h, &llr, &h.syndrome(&bits), 50);
        assert!(out.success && out.iterations <= 2);
        assert_eq!(out.bits, bits);
    }

    #[test]
    fn corrects_single_flip() {
        let h = code();
        let mut llr = vec![10.0; h.n()];
        llr[1234] = -10.0;
        let out = decode_syndrome(&h, &llr, &vec![0; h.m()], 200);
        assert!(out.success && out.iterations <= 10, "{}", out.iterations);
        assert!(out.bits.iter().all(|&b| b == 0));
    }

    #[test]
    fn fails_without_information() {
        let h = code();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let bits: Vec<u8> = (0..h.n()).map(|_| rng.random_range(0..2)).collect();
        let llr: Vec<f64> = (0..h.n()).map(|_| rng.random_range(-0.5..0.5)).collect();
        let out = decode_syndrome(&h, &llr, &h.syndrome(&bits), 30);
        assert!(!out.success);
        assert_eq!(out.iterations, 30);
    }
}
