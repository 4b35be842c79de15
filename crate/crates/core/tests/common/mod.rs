#![allow(dead_code)]

use interfere_core::design::{ExposureDesign, ExposureMapping, NeighborhoodSet};
use interfere_core::rng;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng_for(seed: u64) -> ChaCha8Rng {
    rng::stream(seed, 0)
}

/// Equal-size neighborhoods: either k-NN on random points or random sets
/// containing their owner.
pub fn random_neighborhoods(r: &mut ChaCha8Rng, n: usize, k: usize) -> NeighborhoodSet {
    if r.random_bool(0.5) {
        let coords: Vec<Vec<f64>> = (0..n).map(|_| vec![r.random::<f64>(), r.random::<f64>()]).collect();
        interfere_core::design::knn_from_coords(&coords, k).unwrap()
    } else {
        let sets = (0..n)
            .map(|i| {
                let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                others.shuffle(r);
                let mut s = vec![i];
                s.extend_from_slice(&others[..k - 1]);
                s
            })
            .collect();
        NeighborhoodSet::new(sets).unwrap()
    }
}

pub fn random_design(r: &mut ChaCha8Rng, max_n: usize, rho: f64, product: bool) -> ExposureDesign {
    let n = r.random_range(2..=max_n);
    let k = r.random_range(1..=n.min(5));
    let mapping = if product {
        ExposureMapping::Product
    } else {
        ExposureMapping::Threshold { d_min: r.random_range(1..=k) }
    };
    ExposureDesign::new(random_neighborhoods(r, n, k), mapping, rho).unwrap()
}
