//! Deterministic parallel sweeps. Work is split into index-addressed items
//! and collected in index order, and floating-point reductions reuse the
//! core's fixed block partition, so results do not depend on the pool size.

use hmix_core::cover::{block_partial, check_inputs, combine_blocks, study_with, ConvergenceReport};
use hmix_core::laplace::laplace_quadrature;
use hmix_core::mixing::correlation_integral;
use hmix_core::sum::CompensatedSum;
use hmix_core::{CharacterLattice, MixingProblem, PhaseProblem, Result, SpectralModel};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::CliError;

pub type SyncFn<'a> = &'a (dyn Fn(f64) -> f64 + Sync);

/// Worker count: explicit value, else the machine's parallelism.
pub fn resolve_workers(requested: Option<usize>) -> usize {
    requested.filter(|&n| n > 0).unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

pub fn build_pool(workers: usize) -> std::result::Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {workers} workers: {e}")))
}

/// `f(0), …, f(n−1)` evaluated in parallel, in index order.
pub fn map_indexed<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..n).into_par_iter().map(f).collect()
}

/// Parallel `spectral_average`: bitwise equal to the sequential core result.
pub fn spectral_average(model: &SpectralModel, lattice: &CharacterLattice, f: SyncFn<'_>, epsilon: f64) -> Result<f64> {
    check_inputs(model, lattice, epsilon)?;
    let blocks: Vec<CompensatedSum> =
        (0..lattice.block_count()).into_par_iter().map(|b| block_partial(model, lattice, f, epsilon, b)).collect();
    Ok(combine_blocks(lattice, &blocks))
}

/// Convergence study with each cover swept in parallel.
pub fn convergence_study(
    model: &SpectralModel,
    f: SyncFn<'_>,
    epsilon: f64,
    lattices: &[CharacterLattice],
) -> Result<ConvergenceReport> {
    study_with(model, f, epsilon, lattices, |lattice| spectral_average(model, lattice, f, epsilon))
}

pub fn laplace_samples(problem: &PhaseProblem, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    map_indexed(grid.len(), |i| laplace_quadrature(problem, grid[i]).map(|e| (grid[i], e.value))).into_iter().collect()
}

pub fn correlation_samples(problem: &MixingProblem, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    map_indexed(grid.len(), |i| correlation_integral(problem, grid[i]).map(|e| (grid[i], e.value))).into_iter().collect()
}

/// Counter-based uniform stream: draw `k` of sample `index` in stream
/// `stream` depends only on `(seed, stream, index, k)`.
pub struct CounterRng {
    seed: u64,
    stream: u64,
}

impl CounterRng {
    /// 64-bit words reserved per sample.
    pub const WORDS_PER_SAMPLE: u64 = 8;

    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// The first `out.len()` (at most 8) uniforms in `[0, 1)` of sample `index`.
    pub fn uniforms(&self, index: u64, out: &mut [f64]) {
        assert!(out.len() as u64 <= Self::WORDS_PER_SAMPLE);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        // word_pos counts 32-bit words
        rng.set_word_pos(index as u128 * Self::WORDS_PER_SAMPLE as u128 * 2);
        for u in out.iter_mut() {
            *u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        }
    }
}

/// Monte Carlo hit count of `hit(ω)` for `ω` uniform on `[−½, ½)^d`,
/// chunked so every chunk is an independent task.
pub fn monte_carlo_hits(rng: &CounterRng, d: usize, samples: u64, hit: &(dyn Fn(&[f64]) -> bool + Sync)) -> u64 {
    const CHUNK: u64 = 4096;
    let chunks = samples.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut w = vec![0.0; d];
            let mut count = 0u64;
            for i in c * CHUNK..((c + 1) * CHUNK).min(samples) {
                rng.uniforms(i, &mut w);
                w.iter_mut().for_each(|x| *x -= 0.5);
                count += hit(&w) as u64;
            }
            count
        })
        .sum()
}
