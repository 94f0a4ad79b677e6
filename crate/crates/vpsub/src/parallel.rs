//! Rayon versions of the core sweeps. Work is split into independent
//! items and results are collected in item order, so output never depends
//! on the number of threads.

use rayon::prelude::*;

use vpsub_core::analysis::{landscape_cells, landscape_row, LandscapeRow, ScanSpec};
use vpsub_core::montecarlo::{
    chunk_moments, rescale_chunk, EmpiricalStats, ExperimentConfig, MomentAccumulator, RescaleSpec, MIN_SAMPLES,
};
use vpsub_core::reconciliation::{bench_block, BenchReport, LdpcCode, PairedData};
use vpsub_core::{Error, Result, SourceSpec};

/// Environment variable overriding the worker count.
pub const THREADS_ENV: &str = "VPSUB_THREADS";

/// Sizes the global pool from [`THREADS_ENV`] when set.
pub fn init_thread_pool() -> std::result::Result<(), String> {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| format!("{THREADS_ENV} must be a positive integer, got {v:?}"))?;
    if n == 0 {
        return Err(format!("{THREADS_ENV} must be positive"));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

/// Ordered parallel map that stops at the first error.
pub fn try_map<T, U, F>(items: &[T], f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync + Send,
{
    items.par_iter().map(f).collect()
}

fn merge_in_order(parts: Vec<MomentAccumulator>) -> MomentAccumulator {
    parts.iter().fold(MomentAccumulator::default(), |mut acc, p| {
        acc.merge(p);
        acc
    })
}

/// Same statistics as `montecarlo::run_experiment`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<EmpiricalStats> {
    if cfg.n_samples < MIN_SAMPLES {
        return Err(Error::InsufficientData { required: MIN_SAMPLES as usize, available: cfg.n_samples as usize });
    }
    let parts: Vec<_> = (0..cfg.n_chunks()).into_par_iter().map(|c| chunk_moments(cfg, c)).collect();
    merge_in_order(parts).finish()
}

pub fn rescale(cfg: &ExperimentConfig, spec: &RescaleSpec, target: &SourceSpec) -> Result<EmpiricalStats> {
    let parts: Vec<_> = (0..cfg.n_chunks()).into_par_iter().map(|c| rescale_chunk(cfg, spec, target, c)).collect();
    merge_in_order(parts).finish()
}

pub fn landscape(scan: &ScanSpec) -> Result<Vec<LandscapeRow>> {
    scan.validate()?;
    let cells: Vec<(usize, f64)> = landscape_cells(scan).collect();
    try_map(&cells, |&(s, d)| landscape_row(scan, s, d))
}

pub fn bench(data: &PairedData, code: &LdpcCode, snr: f64, n_blocks: usize, seed: u64, max_iter: u32) -> Result<BenchReport> {
    let need = n_blocks * code.n();
    if data.len() < need {
        return Err(Error::InsufficientData { required: need, available: data.len() });
    }
    let blocks: Vec<usize> = (0..n_blocks).collect();
    let outcomes = try_map(&blocks, |&i| bench_block(data, code, i, seed, max_iter))?;
    BenchReport::from_outcomes(code, snr, data.data_type, &outcomes)
}
