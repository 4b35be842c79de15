//! Seeded, counter-style random streams.
//!
//! Every stochastic routine takes a master seed plus a stream index
//! (replicate, shard, draw) and builds its own ChaCha8 stream, so results do
//! not depend on how work is split across threads.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent generator for `(seed, stream)`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// iid Bernoulli(`rho`) treatment assignment of length `n`.
pub fn bernoulli_assignment<R: RngCore>(rng: &mut R, n: usize, rho: f64) -> alloc::vec::Vec<bool> {
    (0..n).map(|_| rng.random_bool(rho)).collect()
}

/// Completely randomized assignment: exactly `n_treated` of `n` units treated.
pub fn complete_assignment<R: RngCore>(rng: &mut R, n: usize, n_treated: usize) -> alloc::vec::Vec<bool> {
    let mut x = alloc::vec![false; n];
    for i in rand::seq::index::sample(rng, n, n_treated.min(n)) {
        x[i] = true;
    }
    x
}

/// Number of failures before the first success, success probability `q`.
pub fn geometric<R: RngCore>(rng: &mut R, q: f64) -> u64 {
    if q >= 1.0 {
        return 0;
    }
    // 1 - U lies in (0, 1], so the log is finite.
    let u: f64 = 1.0 - rng.random::<f64>();
    libm::floor(libm::log(u) / libm::log(1.0 - q)) as u64
}

/// Negative binomial count with the given mean and integer dispersion
/// (`size`), drawn as a sum of `size` geometric variables.
pub fn negative_binomial<R: RngCore>(rng: &mut R, mean: f64, size: u32) -> u64 {
    let size = size.max(1);
    let q = f64::from(size) / (f64::from(size) + mean);
    (0..size).map(|_| geometric(rng, q)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream(7, 3).random();
        let b: u64 = stream(7, 3).random();
        let c: u64 = stream(7, 4).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn complete_assignment_has_exact_count() {
        let mut rng = stream(1, 0);
        let x = complete_assignment(&mut rng, 40, 17);
        assert_eq!(x.iter().filter(|&&t| t).count(), 17);
    }

    #[test]
    fn negative_binomial_mean() {
        let mut rng = stream(11, 0);
        let n = 200_000;
        let total: u64 = (0..n).map(|_| negative_binomial(&mut rng, 10.0, 2)).sum();
        let mean = total as f64 / n as f64;
        // variance = mu + mu^2 / size = 60, se ~ 0.017
        assert!((mean - 10.0).abs() < 0.1, "{mean}");
    }
}
