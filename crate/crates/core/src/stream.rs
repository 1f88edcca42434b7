//! Reproducible random-number streams.
//!
//! Every estimation task derives one stream per `(lane, replicate)` pair
//! from the master seed. Lanes separate roles inside an experiment (left
//! side, right side, pilot, ...); replicates index independent draws.
//! Because stream identity never depends on the worker pool, results are
//! identical for any worker count, and chunks are merged in a fixed order
//! so they are also bitwise identical.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;

pub type Stream = ChaCha8Rng;

/// Lane identifiers used by the built-in estimators.
pub mod lane {
    pub const LEFT: u32 = 0;
    pub const RIGHT: u32 = 1;
    pub const PILOT: u32 = 2;
    pub const VALIDATE: u32 = 3;
    pub const SIMULATE: u32 = 4;
    pub const INTEGRATE: u32 = 5;
    pub const PILOT_LEFT: u32 = 6;
    pub const PILOT_RIGHT: u32 = 7;
}

const REPLICATE_BITS: u32 = 40;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based stream derivation: the same `(master_seed, lane,
/// replicate)` triple always yields the same generator, and distinct
/// triples select distinct ChaCha streams.
pub fn derive_stream(master_seed: u64, lane: u32, replicate: u64) -> Stream {
    debug_assert!(replicate < 1 << REPLICATE_BITS, "replicate index out of range");
    let mut state = master_seed;
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(((lane as u64) << REPLICATE_BITS) | replicate);
    rng
}

/// Per-draw diagnostics accumulated across a run. All fields merge
/// order-independently.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DrawDiag {
    /// Sup-distance between a sampled shift and its lattice snap.
    pub snap_error: f64,
    /// De Haan series truncation ratio.
    pub truncation: f64,
    /// Draws that hit the series cap with a poor truncation ratio.
    pub truncation_warnings: u64,
    /// Tilting draws rejected for zero weight.
    pub zero_weight: u64,
}

impl DrawDiag {
    pub fn merge(&mut self, other: &DrawDiag) {
        self.snap_error = self.snap_error.max(other.snap_error);
        self.truncation = self.truncation.max(other.truncation);
        self.truncation_warnings += other.truncation_warnings;
        self.zero_weight += other.zero_weight;
    }
}

/// One scalar per replicate, reduced to an `MCEstimate`.
pub struct Estimation {
    pub est: crate::estimate::MCEstimate,
    pub diag: DrawDiag,
}

/// Replicates are processed in fixed chunks; chunk results are merged in
/// chunk order regardless of how rayon schedules them.
const CHUNK: u64 = 4096;

/// Run `f` once per replicate on its derived stream and average the
/// results. Deterministic for a given `(master_seed, lane, n)` whatever
/// the thread count of `pool`.
pub fn estimate_mean<F>(
    pool: &rayon::ThreadPool,
    master_seed: u64,
    lane: u32,
    n: u64,
    f: F,
) -> Result<Estimation>
where
    F: Fn(u64, &mut Stream) -> Result<(f64, DrawDiag)> + Sync,
{
    let n_chunks = n.div_ceil(CHUNK);
    let chunks: Vec<(crate::estimate::MCEstimate, DrawDiag)> = pool.install(|| {
        (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let lo = c * CHUNK;
                let hi = ((c + 1) * CHUNK).min(n);
                let mut est = crate::estimate::MCEstimate::new();
                let mut diag = DrawDiag::default();
                for rep in lo..hi {
                    let mut rng = derive_stream(master_seed, lane, rep);
                    let (value, d) = f(rep, &mut rng)?;
                    est.push(value);
                    diag.merge(&d);
                }
                Ok((est, diag))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut est = crate::estimate::MCEstimate::new();
    let mut diag = DrawDiag::default();
    for (e, d) in &chunks {
        est.merge(e);
        diag.merge(d);
    }
    Ok(Estimation { est, diag })
}

/// Collect one value per replicate, in replicate order.
pub fn collect_values<F>(
    pool: &rayon::ThreadPool,
    master_seed: u64,
    lane: u32,
    n: u64,
    f: F,
) -> Result<Vec<f64>>
where
    F: Fn(u64, &mut Stream) -> Result<f64> + Sync,
{
    pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|rep| {
                let mut rng = derive_stream(master_seed, lane, rep);
                f(rep, &mut rng)
            })
            .collect::<Result<Vec<_>>>()
    })
}

pub fn make_pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool")
}
