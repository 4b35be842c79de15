//! Thread pool sizing and order-preserving parallel maps.

use interfere_core::design::ExposureDesign;
use interfere_core::exposure::{mc_shard, mc_shard_plan, McEstimate};
use rayon::prelude::*;

pub const THREADS_ENV: &str = "INTERFERE_THREADS";

/// Pool capped by `INTERFERE_THREADS` when set, rayon's default otherwise.
pub fn pool() -> anyhow::Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        let n: usize = raw
            .parse()
            .map_err(|_| anyhow::anyhow!("{THREADS_ENV} must be a positive integer, got {raw:?}"))?;
        if n == 0 {
            anyhow::bail!("{THREADS_ENV} must be a positive integer, got 0");
        }
        builder = builder.num_threads(n);
    }
    Ok(builder.build()?)
}

/// `f(0), …, f(n-1)` in index order, computed in parallel.
pub fn map_indexed<T, E, F>(pool: &rayon::ThreadPool, n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync,
{
    pool.install(|| (0..n).into_par_iter().map(&f).collect())
}

/// Monte Carlo joint exposure frequencies with shards run in parallel. The
/// result equals the sequential estimate for the same seed.
pub fn mc_pairwise_parallel(pool: &rayon::ThreadPool, design: &ExposureDesign, samples: u64, seed: u64) -> McEstimate {
    let plan = mc_shard_plan(samples);
    let shards: Vec<McEstimate> = pool.install(|| {
        plan.par_iter()
            .enumerate()
            .map(|(s, &size)| mc_shard(design, seed, s as u64, size))
            .collect()
    });
    let mut total = McEstimate::empty(design.neighborhoods());
    for s in &shards {
        total.merge(s);
    }
    total
}
