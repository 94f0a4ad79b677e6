//! Eight-dimensional reverse reconciliation with LDPC syndrome decoding.
//!
//! Bob draws random bits `b`, maps each group of eight to the unit vector
//! `u_i = (1 − 2 b_i)/√8` and publishes, per group, the rotation taking his
//! normalised data `ŷ` to `u`, together with the syndrome `H b`. Alice
//! applies the same rotation to her normalised data `x̂` and obtains a noisy
//! copy `v` of `u`, which she decodes against the syndrome.
//!
//! Given the batch mean cosine `c̄ = E⟨x̂, ŷ⟩`, each coordinate obeys
//! `E[v_i | u_i] = c̄ u_i` and `Var[v_i | u_i] = (1 − c̄²)/8` exactly, so the
//! virtual channel is treated as binary-input AWGN with those moments.

mod decoder;
mod ldpc;
mod octonion;

use alloc::vec::Vec;

use libm::sqrt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub use decoder::{decode_syndrome, BpDecoder, DecodeOutcome, DEFAULT_MAX_ITER, LLR_MAX};
pub use ldpc::{peg, DegreeProfile, LdpcCode, PegOptions};
pub use octonion::{basis_matrix, RotationMap, MIN_NORM};

use crate::analysis::beta_from_rate_snr;
use crate::error::{domain, Error, Result};
use crate::gaussian::ChannelSpec;
use crate::montecarlo::{chunk_records, ExperimentConfig};
use crate::subtraction::{covariance_subtracted, Scheme, SourceSpec};

pub const DIM: usize = 8;

/// Default block length, in bits (and in real samples).
pub const BLOCK_BITS: usize = 1 << 20;

const INV_SQRT_DIM: f64 = 0.353_553_390_593_273_8;

fn group(data: &[f64], j: usize) -> [f64; DIM] {
    core::array::from_fn(|i| data[DIM * j + i])
}

fn check_block_len(len: usize, code: &LdpcCode) -> Result<()> {
    if len != code.n() || len % DIM != 0 {
        return Err(Error::Code(alloc::format!("block of {len} values for a code of length {}", code.n())));
    }
    Ok(())
}

/// The vector Bob's bits are mapped to.
pub fn bits_to_unit(bits: &[u8]) -> [f64; DIM] {
    core::array::from_fn(|i| if bits[i] & 1 == 0 { INV_SQRT_DIM } else { -INV_SQRT_DIM })
}

/// Public reconciliation messages for one block.
#[derive(Clone, Debug, PartialEq)]
pub struct SideInfo {
    pub maps: Vec<RotationMap>,
    pub syndrome: Vec<u8>,
}

/// Bob's side: one rotation per eight samples plus the syndrome of `bits`.
pub fn encode_side_info(y: &[f64], bits: &[u8], code: &LdpcCode) -> Result<SideInfo> {
    check_block_len(y.len(), code)?;
    if bits.len() != y.len() {
        return Err(Error::Code(alloc::format!("{} bits for {} samples", bits.len(), y.len())));
    }
    let maps = (0..y.len() / DIM)
        .map(|j| {
            let u = bits_to_unit(&bits[DIM * j..DIM * (j + 1)]);
            RotationMap::between(&group(y, j), &u).map_err(|_| Error::DegenerateBlock { index: j })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SideInfo { maps, syndrome: code.syndrome(bits) })
}

/// Alice's rotated data `v = M x̂`, flattened.
pub fn rotate_received(x: &[f64], maps: &[RotationMap]) -> Result<Vec<f64>> {
    if x.len() != maps.len() * DIM {
        return Err(Error::Code(alloc::format!("{} samples for {} maps", x.len(), maps.len())));
    }
    let mut out = Vec::with_capacity(x.len());
    for (j, m) in maps.iter().enumerate() {
        let g = group(x, j);
        let n = octonion::norm(&g);
        if !(n > MIN_NORM) {
            return Err(Error::DegenerateBlock { index: j });
        }
        out.extend_from_slice(&m.apply(&g.map(|v| v / n)));
    }
    Ok(out)
}

/// Mean cosine between paired eight-sample groups.
pub fn mean_cosine(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.is_empty() || x.len() % DIM != 0 {
        return Err(Error::Code(alloc::format!("paired data of lengths {} and {}", x.len(), y.len())));
    }
    let groups = x.len() / DIM;
    let mut sum = crate::math::CompensatedSum::new();
    for j in 0..groups {
        let (a, b) = (group(x, j), group(y, j));
        let den = octonion::norm(&a) * octonion::norm(&b);
        if !(den > MIN_NORM * MIN_NORM) {
            return Err(Error::DegenerateBlock { index: j });
        }
        sum.add(octonion::dot(&a, &b) / den);
    }
    Ok(sum.value() / groups as f64)
}

/// Effective per-coordinate SNR `c̄²/(1 − c̄²)` of the virtual channel.
pub fn snr_from_cosine(c: f64) -> f64 {
    c * c / (1.0 - c * c)
}

pub fn cosine_from_snr(snr: f64) -> f64 {
    if snr.is_infinite() {
        1.0
    } else {
        sqrt(snr / (1.0 + snr))
    }
}

/// Mean and variance of `v_i` given `u_i = +1/√8`.
pub fn virtual_channel_moments(snr_eff: f64) -> (f64, f64) {
    let c = cosine_from_snr(snr_eff);
    (c * INV_SQRT_DIM, (1.0 - c * c) / DIM as f64)
}

/// `LLR_i = 2 μ v_i / σ²` with the moments above, clipped to `±LLR_MAX`.
pub fn llrs(v: &[f64], snr_eff: f64) -> Vec<f64> {
    let (mu, var) = virtual_channel_moments(snr_eff);
    v.iter()
        .map(|&vi| {
            let l = if var > 0.0 { 2.0 * mu * vi / var } else { vi.signum() * LLR_MAX };
            l.clamp(-LLR_MAX, LLR_MAX)
        })
        .collect()
}

/// Alice's side: rotate, compute LLRs, run syndrome BP.
pub fn decode(
    x: &[f64],
    side: &SideInfo,
    code: &LdpcCode,
    snr_eff: f64,
    max_iter: u32,
) -> Result<DecodeOutcome> {
    check_block_len(x.len(), code)?;
    if !(snr_eff > 0.0) {
        return Err(domain("effective SNR", snr_eff));
    }
    let v = rotate_received(x, &side.maps)?;
    Ok(decode_syndrome(code, &llrs(&v, snr_eff), &side.syndrome, max_iter))
}

/// Where the correlated data came from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DataType {
    Gaussian,
    NonGaussian { scheme: Scheme, v: f64, t: f64 },
}

impl core::fmt::Display for DataType {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            DataType::Gaussian => f.write_str("gaussian"),
            DataType::NonGaussian { scheme, v, t } => write!(f, "non-gaussian {scheme} V={v} T={t}"),
        }
    }
}

/// Paired samples: `x` is Alice's, `y` is Bob's reference.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedData {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub data_type: DataType,
}

impl PairedData {
    /// `y = x + z` with unit-variance `x` and noise variance `1/snr`.
    pub fn gaussian(snr: f64, len: usize, seed: u64) -> Result<Self> {
        if !(snr > 0.0 && snr.is_finite()) {
            return Err(domain("SNR", snr));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sn = sqrt(1.0 / snr);
        let mut x = Vec::with_capacity(len);
        let mut y = Vec::with_capacity(len);
        for _ in 0..len {
            let a: f64 = rng.sample(StandardNormal);
            let z: f64 = rng.sample(StandardNormal);
            x.push(a);
            y.push(a + sn * z);
        }
        Ok(Self { x, y, data_type: DataType::Gaussian })
    }

    /// Accepted `(x_a, x_b)` pairs of a Monte Carlo run, in stream order.
    pub fn from_experiment(cfg: &ExperimentConfig, len: usize) -> Result<Self> {
        let mut x = Vec::with_capacity(len);
        let mut y = Vec::with_capacity(len);
        for c in 0..cfg.n_chunks() {
            for r in chunk_records(cfg, c).into_iter().filter(|r| r.accepted) {
                if x.len() == len {
                    break;
                }
                x.push(r.x_a);
                y.push(r.x_b);
            }
            if x.len() == len {
                break;
            }
        }
        if x.len() < len {
            return Err(Error::InsufficientData { required: len, available: x.len() });
        }
        Ok(Self { x, y, data_type: DataType::NonGaussian { scheme: cfg.src.scheme, v: cfg.src.v, t: cfg.src.t } })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Channel transmittance at which Monte Carlo data from `src` reaches the
/// per-sample SNR `2 T T_C λ² Ṽ / (1 + T_C ε)`.
pub fn channel_for_snr(src: &SourceSpec, epsilon: f64, snr: f64) -> Result<ChannelSpec> {
    let sub = covariance_subtracted(src)?;
    let v_tilde = 0.5 * (sub.cov.v1 + 1.0);
    let signal = 2.0 * src.effective_t() * src.lambda_sq() * v_tilde;
    let t_c = snr / (signal - snr * epsilon);
    if !(t_c > 0.0 && t_c <= 1.0) {
        return Err(domain("channel transmittance for target SNR", t_c));
    }
    ChannelSpec::new(t_c, epsilon)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockOutcome {
    pub index: usize,
    pub converged: bool,
    /// Decoded bits equal Bob's bits.
    pub correct: bool,
    pub iterations: u32,
    pub bit_errors: usize,
    pub snr_eff: f64,
}

impl BlockOutcome {
    pub fn success(&self) -> bool {
        self.converged && self.correct
    }
}

/// Bob's random bits for block `index`.
pub fn block_bits(seed: u64, index: usize, n: usize) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    (0..n).map(|_| rng.random_range(0..2u8)).collect()
}

/// Runs block `index` of `data` end to end. The effective SNR is calibrated
/// from the block itself, standing in for parameter estimation.
pub fn bench_block(data: &PairedData, code: &LdpcCode, index: usize, seed: u64, max_iter: u32) -> Result<BlockOutcome> {
    let n = code.n();
    let need = (index + 1) * n;
    if data.len() < need {
        return Err(Error::InsufficientData { required: need, available: data.len() });
    }
    let x = &data.x[index * n..need];
    let y = &data.y[index * n..need];
    let bits = block_bits(seed, index, n);
    let side = encode_side_info(y, &bits, code)?;
    let snr_eff = snr_from_cosine(mean_cosine(x, y)?);
    let out = decode(x, &side, code, snr_eff, max_iter)?;
    let bit_errors = out.bits.iter().zip(&bits).filter(|(a, b)| a != b).count();
    Ok(BlockOutcome {
        index,
        converged: out.success,
        correct: bit_errors == 0,
        iterations: out.iterations,
        bit_errors,
        snr_eff,
    })
}

/// One row of the benchmark report: code, operating point, S/T and AIN.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub code_rate: f64,
    pub snr: f64,
    pub beta: f64,
    pub data_type: DataType,
    pub blocks_total: usize,
    pub blocks_success: usize,
    /// Mean iterations over successful blocks.
    pub avg_iterations_on_success: Option<f64>,
}

impl BenchReport {
    pub fn from_outcomes(code: &LdpcCode, snr: f64, data_type: DataType, outcomes: &[BlockOutcome]) -> Result<Self> {
        let ok: Vec<&BlockOutcome> = outcomes.iter().filter(|o| o.success()).collect();
        let avg = (!ok.is_empty()).then(|| ok.iter().map(|o| f64::from(o.iterations)).sum::<f64>() / ok.len() as f64);
        Ok(Self {
            code_rate: code.rate(),
            snr,
            beta: beta_from_rate_snr(code.rate(), snr)?,
            data_type,
            blocks_total: outcomes.len(),
            blocks_success: ok.len(),
            avg_iterations_on_success: avg,
        })
    }
}

/// Sequential benchmark over `n_blocks` consecutive blocks of `data`.
pub fn bench(data: &PairedData, code: &LdpcCode, snr: f64, n_blocks: usize, seed: u64, max_iter: u32) -> Result<BenchReport> {
    let need = n_blocks * code.n();
    if data.len() < need {
        return Err(Error::InsufficientData { required: need, available: data.len() });
    }
    let outcomes = (0..n_blocks).map(|i| bench_block(data, code, i, seed, max_iter)).collect::<Result<Vec<_>>>()?;
    BenchReport::from_outcomes(code, snr, data.data_type, &outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_code() -> LdpcCode {
        peg(4096, 3686, &DegreeProfile::rate_tenth(), PegOptions::default(), 3).unwrap()
    }

    #[test]
    fn unit_vectors() {
        let u = bits_to_unit(&[0, 1, 1, 0, 0, 0, 1, 1]);
        assert!((octonion::norm(&u) - 1.0).abs() < 1e-15);
        assert!(u[0] > 0.0 && u[1] < 0.0);
    }

    #[test]
    fn noiseless_loopback() {
        let code = small_code();
        let data = PairedData::gaussian(1.0, code.n(), 9).unwrap();
        for index in 0..5 {
            let bits = block_bits(77, index, code.n());
            let side = encode_side_info(&data.x, &bits, &code).unwrap();
            let v = rotate_received(&data.x, &side.maps).unwrap();
            for (j, m) in side.maps.iter().enumerate() {
                let u = bits_to_unit(&bits[8 * j..8 * j + 8]);
                assert!((0..8).all(|i| (v[8 * j + i] - u[i]).abs() < 1e-12), "{m:?}");
            }
            let out = decode(&data.x, &side, &code, f64::INFINITY, 50).unwrap();
            assert!(out.success && out.iterations <= 2);
            assert_eq!(out.bits, bits);
            assert_eq!(code.syndrome(&out.bits), side.syndrome);
        }
    }

    #[test]
    fn degenerate_group_is_reported() {
        let code = small_code();
        let mut y = PairedData::gaussian(1.0, code.n(), 1).unwrap().y;
        y[16..24].iter_mut().for_each(|v| *v = 0.0);
        let bits = block_bits(1, 0, code.n());
        assert!(matches!(encode_side_info(&y, &bits, &code), Err(Error::DegenerateBlock { index: 2 })));
    }

    #[test]
    fn calibrated_virtual_channel() {
        let data = PairedData::gaussian(0.16, 8 * 100_000, 4).unwrap();
        let bits = block_bits(5, 0, data.len());
        let mut maps = Vec::new();
        for j in 0..data.len() / 8 {
            let u = bits_to_unit(&bits[8 * j..8 * j + 8]);
            maps.push(RotationMap::between(&group(&data.y, j), &u).unwrap());
        }
        let v = rotate_received(&data.x, &maps).unwrap();
        let (mu, var) = virtual_channel_moments(snr_from_cosine(mean_cosine(&data.x, &data.y).unwrap()));
        let pos: Vec<f64> = v.iter().zip(&bits).filter(|(_, &b)| b == 0).map(|(&x, _)| x).collect();
        let m = pos.iter().sum::<f64>() / pos.len() as f64;
        let s = pos.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / pos.len() as f64;
        assert!((m / mu - 1.0).abs() < 0.02, "{m} vs {mu}");
        assert!((s / var - 1.0).abs() < 0.02, "{s} vs {var}");
    }

    #[test]
    fn high_snr_decodes_low_snr_fails() {
        let code = small_code();
        let good = PairedData::gaussian(1.0, 4 * code.n(), 6).unwrap();
        let r = bench(&good, &code, 1.0, 4, 1, 200).unwrap();
        assert_eq!(r.blocks_success, 4);
        assert!(r.avg_iterations_on_success.is_some());
        let bad = PairedData::gaussian(0.05, 4 * code.n(), 6).unwrap();
        let r = bench(&bad, &code, 0.05, 4, 1, 100).unwrap();
        assert_eq!(r.blocks_success, 0);
        assert!(r.avg_iterations_on_success.is_none());
    }

    #[test]
    fn insufficient_data() {
        let code = small_code();
        let data = PairedData::gaussian(1.0, code.n(), 6).unwrap();
        assert!(matches!(bench(&data, &code, 1.0, 2, 1, 10), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn channel_hits_target_snr() {
        let src = SourceSpec::k_photon(20.0, 0.8, 1).unwrap();
        let ch = channel_for_snr(&src, 0.01, 0.1626).unwrap();
        let v_tilde = covariance_subtracted(&src).unwrap().v_tilde;
        let snr = 2.0 * 0.8 * ch.t_c * src.lambda_sq() * v_tilde / (1.0 + ch.t_c * 0.01);
        assert!((snr - 0.1626).abs() < 1e-12);
    }
}
