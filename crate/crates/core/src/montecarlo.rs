//! Prepare-and-measure simulation with non-Gaussian postselection.
//!
//! Alice draws her heterodyne pair `(x_a, p_a)` from a centred Gaussian of
//! variance `(V+1)/2` and keeps it with probability `Q(x_a, p_a)`. Bob is
//! simulated through the conditional law of his homodyne outcome,
//! `x_b = √(2 T T_C) λ x_a + n` with `n ~ N(0, 1 + T_C ε)`.
//!
//! Samples come in fixed-size chunks; chunk `j` owns ChaCha stream `j` of
//! the run seed. Moment accumulators use compensated sums and are merged in
//! chunk order, so results depend on the seed only, never on how chunks are
//! distributed over threads.

use alloc::vec::Vec;

use libm::sqrt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{domain, Error, Result};
use crate::gaussian::{apply_channel, ChannelSpec, TwoModeCovariance};
use crate::math::CompensatedSum;
use crate::subtraction::{covariance_subtracted, filter_q, lambda_sq, Scheme, SourceSpec};

/// Samples per chunk (and per RNG stream).
pub const CHUNK_SIZE: u64 = 1 << 16;

/// Smallest run accepted by [`run_experiment`].
pub const MIN_SAMPLES: u64 = 10_000;

/// Widening applied to Gaussian-formula standard errors, since the accepted
/// marginals are not Gaussian.
pub const SE_INFLATION: f64 = 1.2;

/// Streams at or above this offset drive the refiltering draws of
/// [`rescale_chunk`], keeping them disjoint from the sampling streams.
const REFILTER_STREAM_BASE: u64 = 1 << 62;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleRecord {
    pub x_a: f64,
    pub p_a: f64,
    pub accepted: bool,
    pub x_b: f64,
}

/// Everything that determines a record stream.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub src: SourceSpec,
    pub channel: ChannelSpec,
    pub n_samples: u64,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(src: SourceSpec, channel: ChannelSpec, n_samples: u64, seed: u64) -> Result<Self> {
        src.validate()?;
        Ok(Self { src, channel, n_samples, seed })
    }

    pub fn n_chunks(&self) -> u64 {
        self.n_samples.div_ceil(CHUNK_SIZE)
    }

    fn chunk_len(&self, chunk: u64) -> u64 {
        let start = chunk * CHUNK_SIZE;
        CHUNK_SIZE.min(self.n_samples.saturating_sub(start))
    }

    /// Conditional mean gain `√(2 T T_C) λ` of Bob's outcome.
    pub fn bob_gain(&self) -> f64 {
        sqrt(2.0 * self.src.effective_t() * self.channel.t_c) * self.src.lambda()
    }

    pub fn bob_noise_std(&self) -> f64 {
        sqrt(1.0 + self.channel.t_c * self.channel.epsilon)
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Records of one chunk, in stream order.
pub fn chunk_records(cfg: &ExperimentConfig, chunk: u64) -> Vec<SampleRecord> {
    let mut out = Vec::with_capacity(cfg.chunk_len(chunk) as usize);
    for_each_record(cfg, chunk, |r| out.push(r));
    out
}

fn for_each_record<F: FnMut(SampleRecord)>(cfg: &ExperimentConfig, chunk: u64, mut f: F) {
    let mut rng = stream_rng(cfg.seed, chunk);
    let sa = sqrt(0.5 * (cfg.src.v + 1.0));
    let gain = cfg.bob_gain();
    let sb = cfg.bob_noise_std();
    let filtered = cfg.src.scheme != Scheme::None;
    for _ in 0..cfg.chunk_len(chunk) {
        let x_a = sa * rng.sample::<f64, _>(StandardNormal);
        let p_a = sa * rng.sample::<f64, _>(StandardNormal);
        let u: f64 = rng.random();
        let accepted = !filtered || u < filter_q(x_a, p_a, &cfg.src);
        let x_b = gain * x_a + sb * rng.sample::<f64, _>(StandardNormal);
        f(SampleRecord { x_a, p_a, accepted, x_b });
    }
}

/// Raw power sums over a record stream. Merging is exact up to the
/// compensated-sum error, and deterministic for a fixed merge order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MomentAccumulator {
    pub n: u64,
    pub n_accepted: u64,
    sx: CompensatedSum,
    sp: CompensatedSum,
    sxx: CompensatedSum,
    spp: CompensatedSum,
    sxb: CompensatedSum,
    sbb: CompensatedSum,
    sb: CompensatedSum,
    dxx: CompensatedSum,
}

impl MomentAccumulator {
    pub fn push(&mut self, r: &SampleRecord) {
        self.n += 1;
        if r.accepted {
            self.n_accepted += 1;
            self.sx.add(r.x_a);
            self.sp.add(r.p_a);
            self.sxx.add(r.x_a * r.x_a);
            self.spp.add(r.p_a * r.p_a);
            self.sxb.add(r.x_a * r.x_b);
            self.sbb.add(r.x_b * r.x_b);
            self.sb.add(r.x_b);
        } else {
            self.dxx.add(r.x_a * r.x_a);
        }
    }

    pub fn merge(&mut self, o: &MomentAccumulator) {
        self.n += o.n;
        self.n_accepted += o.n_accepted;
        self.sx.merge(&o.sx);
        self.sp.merge(&o.sp);
        self.sxx.merge(&o.sxx);
        self.spp.merge(&o.spp);
        self.sxb.merge(&o.sxb);
        self.sbb.merge(&o.sbb);
        self.sb.merge(&o.sb);
        self.dxx.merge(&o.dxx);
    }

    pub fn from_records<'a, I: IntoIterator<Item = &'a SampleRecord>>(records: I) -> Self {
        let mut acc = Self::default();
        for r in records {
            acc.push(r);
        }
        acc
    }

    /// Turns the sums into estimates with standard errors.
    pub fn finish(&self) -> Result<EmpiricalStats> {
        if self.n_accepted == 0 {
            return Err(Error::Estimation("no accepted samples"));
        }
        let n = self.n as f64;
        let na = self.n_accepted as f64;
        let mean_x = self.sx.value() / na;
        let mean_p = self.sp.value() / na;
        let mean_b = self.sb.value() / na;
        let var_x = self.sxx.value() / na - mean_x * mean_x;
        let var_p = self.spp.value() / na - mean_p * mean_p;
        let exb = self.sxb.value() / na;
        let ebb = self.sbb.value() / na;
        let exx = self.sxx.value() / na;
        let rate = na / n;

        let cov = TwoModeCovariance { v1: 2.0 * var_x - 1.0, v2: ebb, phi: core::f64::consts::SQRT_2 * exb };
        let se_var_x = var_x * sqrt(2.0 / na);
        let cov_se = TwoModeCovariance {
            v1: 2.0 * se_var_x,
            v2: ebb * sqrt(2.0 / na),
            phi: core::f64::consts::SQRT_2 * sqrt((exx * ebb + exb * exb) / na),
        };
        let n_discarded = self.n - self.n_accepted;
        Ok(EmpiricalStats {
            n: self.n,
            n_accepted: self.n_accepted,
            accept_rate: rate,
            accept_rate_se: sqrt(rate * (1.0 - rate) / n),
            mean_x,
            mean_x_se: sqrt(var_x / na),
            mean_p,
            mean_p_se: sqrt(var_p / na),
            mean_b,
            var_x,
            var_x_se: se_var_x,
            var_p,
            cov,
            cov_se,
            discarded_var_x: (n_discarded > 0).then(|| self.dxx.value() / n_discarded as f64),
        })
    }
}

/// Estimates from the accepted subset.
///
/// `cov` is in the post-channel convention of
/// `apply_channel(covariance_subtracted(..))`: `v1 = 2 Var(x_a) − 1`,
/// `v2 = E[x_b²]`, `phi = √2 E[x_a x_b]`. Standard errors use the Gaussian
/// fourth-moment formulas, before [`SE_INFLATION`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmpiricalStats {
    pub n: u64,
    pub n_accepted: u64,
    pub accept_rate: f64,
    pub accept_rate_se: f64,
    pub mean_x: f64,
    pub mean_x_se: f64,
    pub mean_p: f64,
    pub mean_p_se: f64,
    pub mean_b: f64,
    pub var_x: f64,
    pub var_x_se: f64,
    pub var_p: f64,
    pub cov: TwoModeCovariance,
    pub cov_se: TwoModeCovariance,
    /// Second moment of `x_a` over rejected samples.
    pub discarded_var_x: Option<f64>,
}

/// Accumulated moments of one chunk.
pub fn chunk_moments(cfg: &ExperimentConfig, chunk: u64) -> MomentAccumulator {
    let mut acc = MomentAccumulator::default();
    for_each_record(cfg, chunk, |r| acc.push(&r));
    acc
}

/// Single-threaded run; the `vpsub` crate offers a parallel version with
/// identical output.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<EmpiricalStats> {
    if cfg.n_samples < MIN_SAMPLES {
        return Err(Error::InsufficientData { required: MIN_SAMPLES as usize, available: cfg.n_samples as usize });
    }
    let mut acc = MomentAccumulator::default();
    for c in 0..cfg.n_chunks() {
        acc.merge(&chunk_moments(cfg, c));
    }
    acc.finish()
}

/// All records of a run, for export. Memory grows with `n_samples`.
pub fn generate_records(cfg: &ExperimentConfig) -> Vec<SampleRecord> {
    let mut out = Vec::with_capacity(cfg.n_samples as usize);
    for c in 0..cfg.n_chunks() {
        for_each_record(cfg, c, |r| out.push(r));
    }
    out
}

/// Split by the acceptance flag; the discarded part plays the role of
/// decoy states and is not used for estimation.
pub fn decoy_partition(records: &[SampleRecord]) -> (Vec<SampleRecord>, Vec<SampleRecord>) {
    records.iter().partition(|r| r.accepted)
}

/// Analytic values the estimates should reproduce.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalyticTargets {
    pub accept_rate: f64,
    pub v_tilde: f64,
    pub cov: TwoModeCovariance,
}

impl AnalyticTargets {
    pub fn for_source(src: &SourceSpec, ch: &ChannelSpec) -> Result<Self> {
        let sub = covariance_subtracted(src)?;
        Ok(Self {
            accept_rate: sub.success_prob,
            v_tilde: 0.5 * (sub.cov.v1 + 1.0),
            cov: apply_channel(&sub.cov, ch)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub empirical: f64,
    pub target: f64,
    pub std_err: f64,
    /// `|empirical − target| / (SE_INFLATION · std_err)`
    pub z: f64,
}

impl Check {
    fn new(name: &'static str, empirical: f64, target: f64, std_err: f64) -> Self {
        let diff = (empirical - target).abs();
        let z = if diff == 0.0 { 0.0 } else { diff / (SE_INFLATION * std_err) };
        Self { name, empirical, target, std_err, z }
    }

    pub fn within(&self, sigmas: f64) -> bool {
        self.z <= sigmas
    }
}

/// Accept rate, conditional variance, the three covariance entries and the
/// two marginal means (target 0).
pub fn compare(stats: &EmpiricalStats, targets: &AnalyticTargets) -> [Check; 7] {
    [
        Check::new("accept_rate", stats.accept_rate, targets.accept_rate, stats.accept_rate_se),
        Check::new("var_x", stats.var_x, targets.v_tilde, stats.var_x_se),
        Check::new("v1", stats.cov.v1, targets.cov.v1, stats.cov_se.v1),
        Check::new("v2", stats.cov.v2, targets.cov.v2, stats.cov_se.v2),
        Check::new("phi", stats.cov.phi, targets.cov.phi, stats.cov_se.phi),
        Check::new("mean_x", stats.mean_x, 0.0, stats.mean_x_se),
        Check::new("mean_p", stats.mean_p, 0.0, stats.mean_p_se),
    ]
}

/// Reinterpretation of data sent at transmittance `t0` as data from a
/// source of variance `v_prime` sent at `eta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RescaleSpec {
    pub v: f64,
    pub t0: f64,
    pub eta: f64,
    pub v_prime: f64,
    pub g: f64,
}

impl RescaleSpec {
    pub fn new(v: f64, t0: f64, eta: f64) -> Result<Self> {
        if !(v > 1.0 && v.is_finite()) {
            return Err(domain("source variance", v));
        }
        if !(t0 > 0.0 && t0 <= 1.0) {
            return Err(domain("emission transmittance", t0));
        }
        let v_prime = 1.0 + t0 / eta * (v - 1.0);
        if !(eta > 0.0 && eta <= 1.0) || !(lambda_sq(v_prime) * eta < 1.0) {
            return Err(domain("target transmittance", eta));
        }
        let g = sqrt(t0 * lambda_sq(v) / (eta * lambda_sq(v_prime)));
        Ok(Self { v, t0, eta, v_prime, g })
    }

    pub fn lambda(&self) -> f64 {
        sqrt(lambda_sq(self.v))
    }

    pub fn lambda_prime(&self) -> f64 {
        sqrt(lambda_sq(self.v_prime))
    }

    /// Source the rescaled data should be indistinguishable from.
    pub fn target_source(&self, scheme: Scheme, eta_d: f64) -> Result<SourceSpec> {
        SourceSpec::new(self.v_prime, self.eta, scheme)?.with_detector_efficiency(eta_d)
    }
}

/// Scales Alice's data by `g` and refilters it with `target`, ignoring the
/// original acceptance flags. One uniform per record from `rng`.
fn refilter<R: Rng>(r: &SampleRecord, g: f64, target: &SourceSpec, rng: &mut R) -> SampleRecord {
    let x_a = g * r.x_a;
    let p_a = g * r.p_a;
    let u: f64 = rng.random();
    let accepted = target.scheme == Scheme::None || u < filter_q(x_a, p_a, target);
    SampleRecord { x_a, p_a, accepted, x_b: r.x_b }
}

/// Rescale-then-filter on stored records.
pub fn rescale_and_filter(
    records: &[SampleRecord],
    spec: &RescaleSpec,
    target: &SourceSpec,
    seed: u64,
) -> Result<(Vec<SampleRecord>, EmpiricalStats)> {
    let mut rng = stream_rng(seed, REFILTER_STREAM_BASE);
    let out: Vec<SampleRecord> = records.iter().map(|r| refilter(r, spec.g, target, &mut rng)).collect();
    let stats = MomentAccumulator::from_records(&out).finish()?;
    Ok((out, stats))
}

/// Streaming counterpart of [`rescale_and_filter`] for one chunk of `cfg`.
pub fn rescale_chunk(cfg: &ExperimentConfig, spec: &RescaleSpec, target: &SourceSpec, chunk: u64) -> MomentAccumulator {
    let mut rng = stream_rng(cfg.seed, REFILTER_STREAM_BASE + chunk);
    let mut acc = MomentAccumulator::default();
    for_each_record(cfg, chunk, |r| acc.push(&refilter(&r, spec.g, target, &mut rng)));
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lossless() -> ChannelSpec {
        ChannelSpec::new(1.0, 0.0).unwrap()
    }

    #[test]
    fn same_seed_same_stream() {
        let cfg = ExperimentConfig::new(SourceSpec::k_photon(20.0, 0.8, 1).unwrap(), lossless(), 100_000, 7).unwrap();
        assert_eq!(chunk_records(&cfg, 1), chunk_records(&cfg, 1));
        assert_ne!(chunk_records(&cfg, 0), chunk_records(&cfg, 1));
        assert_eq!(run_experiment(&cfg).unwrap(), run_experiment(&cfg).unwrap());
        assert_eq!(cfg.n_chunks(), 2);
        assert_eq!(generate_records(&cfg).len(), 100_000);
    }

    #[test]
    fn streaming_matches_stored() {
        let cfg = ExperimentConfig::new(SourceSpec::k_photon(20.0, 0.8, 1).unwrap(), lossless(), 70_000, 3).unwrap();
        let records = generate_records(&cfg);
        let a = MomentAccumulator::from_records(&records).finish().unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert!((a.var_x - b.var_x).abs() < 1e-12 * b.var_x);
        assert_eq!(a.n_accepted, b.n_accepted);
    }

    #[test]
    fn too_few_samples() {
        let cfg = ExperimentConfig::new(SourceSpec::plain(20.0).unwrap(), lossless(), 100, 1).unwrap();
        assert!(matches!(run_experiment(&cfg), Err(Error::InsufficientData { .. })));
        assert!(matches!(MomentAccumulator::default().finish(), Err(Error::Estimation(_))));
    }

    #[test]
    fn passthrough_reproduces_tmsv() {
        let cfg = ExperimentConfig::new(SourceSpec::plain(20.0).unwrap(), lossless(), 1_000_000, 11).unwrap();
        let stats = run_experiment(&cfg).unwrap();
        assert_eq!(stats.n_accepted, stats.n);
        let targets = AnalyticTargets::for_source(&cfg.src, &cfg.channel).unwrap();
        assert!((targets.cov.phi - 399f64.sqrt()).abs() < 1e-12);
        for c in compare(&stats, &targets).iter().skip(1) {
            assert!(c.within(3.0), "{c:?}");
        }
    }

    #[test]
    fn decoy_partition_counts() {
        let cfg = ExperimentConfig::new(SourceSpec::k_photon(20.0, 0.8, 1).unwrap(), lossless(), 20_000, 5).unwrap();
        let records = generate_records(&cfg);
        let (acc, disc) = decoy_partition(&records);
        assert_eq!(acc.len() + disc.len(), records.len());
        assert!(acc.iter().all(|r| r.accepted) && disc.iter().all(|r| !r.accepted));

        let plain = ExperimentConfig::new(SourceSpec::plain(20.0).unwrap(), lossless(), 20_000, 5).unwrap();
        assert!(decoy_partition(&generate_records(&plain)).1.is_empty());
    }

    #[test]
    fn rescale_example() {
        let s = RescaleSpec::new(20.0, 0.8, 0.9).unwrap();
        assert!((s.v_prime - 17.888_888_888_888_89).abs() < 1e-9);
        assert!((s.g - 0.948_404).abs() < 1e-5);
        let id = RescaleSpec::new(20.0, 0.7, 0.7).unwrap();
        assert!((id.g - 1.0).abs() < 1e-15 && (id.v_prime - 20.0).abs() < 1e-12);
        assert!(RescaleSpec::new(20.0, 0.8, 1.2).is_err());
        assert!(RescaleSpec::new(20.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn rescale_identity_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let v = 1.5 + 40.0 * rng.random::<f64>();
            let t0 = 0.05 + 0.95 * rng.random::<f64>();
            let eta = 0.05 + 0.95 * rng.random::<f64>();
            let s = RescaleSpec::new(v, t0, eta).unwrap();
            let lhs = sqrt(s.eta) * s.lambda_prime() * s.g;
            let rhs = sqrt(s.t0) * s.lambda();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn rescale_with_unit_gain_keeps_data() {
        let cfg = ExperimentConfig::new(SourceSpec::k_photon(20.0, 0.8, 1).unwrap(), lossless(), 10_000, 2).unwrap();
        let records = generate_records(&cfg);
        let spec = RescaleSpec::new(20.0, 0.8, 0.8).unwrap();
        let target = spec.target_source(Scheme::KPhoton(1), 1.0).unwrap();
        let (out, _) = rescale_and_filter(&records, &spec, &target, 4).unwrap();
        assert!(out.iter().zip(&records).all(|(a, b)| a.x_a == b.x_a && a.p_a == b.p_a && a.x_b == b.x_b));
    }
}
