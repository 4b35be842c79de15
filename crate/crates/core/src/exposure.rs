//! Randomization distribution of the effective-treatment vector `Z`.
//!
//! Under iid Bernoulli(ρ) assignment every `Z_i` has the same marginal
//! probability `p` (neighborhoods are equal-sized) and pairs only depend on
//! each other when their neighborhoods overlap. An [`ExposureProfile`]
//! therefore stores the joint probabilities `P_ij = P(Z_i Z_j = 1)` for
//! overlapping pairs only; every other off-diagonal entry is `p²`.
//!
//! From `P` follow
//!
//! ```text
//! R = P - p(1-p) I - p² 11ᵀ
//! 𝓔 = (I - 11ᵀ/N) R (I - 11ᵀ/N)
//! ```
//!
//! `R` has zero diagonal and is nonzero only on overlapping pairs, so `𝓔` is
//! evaluated entrywise from `R` and its row means without materialising any
//! dense matrix.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::design::{ExposureDesign, ExposureMapping, NeighborhoodSet};
use crate::linalg::{DenseMatrix, SymmetricOperator};
use crate::{rng, Error, Result};

/// Largest population the enumeration oracle accepts.
pub const MAX_ENUMERATION_UNITS: usize = 20;

/// Samples per Monte Carlo shard; shard `s` draws from RNG stream `s`.
pub const MC_SHARD_SIZE: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileMethod {
    Exact,
    Enumeration,
    MonteCarlo { num_samples: u64 },
}

/// Second-order randomization quantities of an exposure design.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureProfile {
    n: usize,
    p: f64,
    /// Explicit off-diagonal `P_ij`, sorted by `j`. Absent entries are `p²`.
    rows: Vec<Vec<(usize, f64)>>,
    r_row_mean: Vec<f64>,
    r_mean: f64,
    p_min: f64,
    overlap_degree: usize,
    method: ProfileMethod,
}

impl ExposureProfile {
    /// Assemble a profile from explicit off-diagonal entries.
    ///
    /// `rows[i]` lists `(j, P_ij)` for `j ≠ i`; it must be symmetric.
    pub fn from_rows(
        p: f64,
        mut rows: Vec<Vec<(usize, f64)>>,
        overlap_degree: usize,
        method: ProfileMethod,
    ) -> Result<Self> {
        let n = rows.len();
        for row in rows.iter_mut() {
            row.sort_unstable_by_key(|&(j, _)| j);
        }
        let p2 = p * p;
        let mut r_row_mean = vec![0.0; n];
        let mut p_min = f64::INFINITY;
        for (i, row) in rows.iter().enumerate() {
            let mut sum = 0.0;
            for &(j, pij) in row {
                if j == i || j >= n {
                    return Err(Error::InvalidParameter(alloc::format!(
                        "profile row {i} has an invalid column {j}"
                    )));
                }
                let mirrored = lookup(&rows[j], i).unwrap_or(p2);
                if (mirrored - pij).abs() > 1e-12 {
                    return Err(Error::NotSymmetric { i, j });
                }
                sum += pij - p2;
                p_min = p_min.min(pij);
            }
            if row.len() + 1 < n {
                p_min = p_min.min(p2);
            }
            r_row_mean[i] = sum / n as f64;
        }
        let r_mean = r_row_mean.iter().sum::<f64>() / n as f64;
        Ok(Self {
            n,
            p,
            rows,
            r_row_mean,
            r_mean,
            p_min,
            overlap_degree,
            method,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Common marginal `p = P(Z_i = 1)`.
    pub fn p(&self) -> f64 {
        self.p
    }

    /// Smallest off-diagonal joint probability.
    pub fn p_min(&self) -> f64 {
        self.p_min
    }

    pub fn overlap_degree(&self) -> usize {
        self.overlap_degree
    }

    pub fn method(&self) -> ProfileMethod {
        self.method
    }

    /// `P_ij`.
    pub fn joint(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.p
        } else {
            lookup(&self.rows[i], j).unwrap_or(self.p * self.p)
        }
    }

    /// `R_ij`.
    pub fn r(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            lookup(&self.rows[i], j).map_or(0.0, |pij| pij - self.p * self.p)
        }
    }

    /// `𝓔_ij`.
    pub fn centered(&self, i: usize, j: usize) -> f64 {
        self.r(i, j) - self.r_row_mean[i] - self.r_row_mean[j] + self.r_mean
    }

    /// `(P_ij, 𝓔_ij)` with a single lookup.
    pub fn joint_and_centered(&self, i: usize, j: usize) -> (f64, f64) {
        let p2 = self.p * self.p;
        let (pij, rij) = if i == j {
            (self.p, 0.0)
        } else {
            match lookup(&self.rows[i], j) {
                Some(v) => (v, v - p2),
                None => (p2, 0.0),
            }
        };
        (pij, rij - self.r_row_mean[i] - self.r_row_mean[j] + self.r_mean)
    }

    /// Explicitly stored off-diagonal entries of row `i`.
    pub fn explicit_row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn dense_joint(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.n, |i, j| self.joint(i, j))
    }

    pub fn dense_r(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.n, |i, j| self.r(i, j))
    }

    pub fn dense_centered(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.n, |i, j| self.centered(i, j))
    }

    /// `xᵀ 𝓔 x`, using `𝓔 = C R C` with `C` the centering projection.
    pub fn centered_quadratic_form(&self, x: &[f64]) -> f64 {
        let mut c = x.to_vec();
        crate::linalg::center(&mut c);
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                c[i] * row
                    .iter()
                    .map(|&(j, pij)| (pij - self.p * self.p) * c[j])
                    .sum::<f64>()
            })
            .sum()
    }
}

impl SymmetricOperator for ExposureProfile {
    fn dim(&self) -> usize {
        self.n
    }

    /// `P x = p(1-p) x + p² (1ᵀx) 1 + R x`
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let p = self.p;
        let total: f64 = x.iter().sum();
        for (i, o) in out.iter_mut().enumerate() {
            let rx: f64 = self.rows[i].iter().map(|&(j, pij)| (pij - p * p) * x[j]).sum();
            *o = p * (1.0 - p) * x[i] + p * p * total + rx;
        }
    }
}

fn lookup(row: &[(usize, f64)], j: usize) -> Option<f64> {
    row.binary_search_by_key(&j, |&(c, _)| c).ok().map(|k| row[k].1)
}

/// Binomial(n, ρ) probabilities for every `n ≤ max_n`, with upper tails.
struct BinomialTable {
    pmf: Vec<Vec<f64>>,
    /// `tail[n][m] = P(Bin(n, ρ) ≥ m)` for `m ∈ 0..=n+1`.
    tail: Vec<Vec<f64>>,
}

impl BinomialTable {
    fn new(max_n: usize, rho: f64) -> Self {
        let mut pmf: Vec<Vec<f64>> = Vec::with_capacity(max_n + 1);
        pmf.push(vec![1.0]);
        for n in 1..=max_n {
            let prev = &pmf[n - 1];
            let row = (0..=n)
                .map(|c| {
                    let stay = if c < n { (1.0 - rho) * prev[c] } else { 0.0 };
                    let step = if c > 0 { rho * prev[c - 1] } else { 0.0 };
                    stay + step
                })
                .collect();
            pmf.push(row);
        }
        let tail = pmf
            .iter()
            .map(|row| {
                let mut t = vec![0.0; row.len() + 1];
                for m in (0..row.len()).rev() {
                    t[m] = t[m + 1] + row[m];
                }
                t
            })
            .collect();
        Self { pmf, tail }
    }

    fn upper_tail(&self, n: usize, m: isize) -> f64 {
        if m <= 0 {
            1.0
        } else if m as usize > n {
            0.0
        } else {
            self.tail[n][m as usize]
        }
    }
}

/// `p = P(Z_i = 1)`.
///
/// Product: `ρ^k`. Threshold: `ρ · P(Bin(k-1, ρ) ≥ d_min - 1)`.
pub fn exact_marginal_p(design: &ExposureDesign) -> f64 {
    let k = design.neighborhoods().size();
    let rho = design.rho();
    match design.mapping() {
        ExposureMapping::Product => libm::pow(rho, k as f64),
        ExposureMapping::Threshold { d_min } => {
            let table = BinomialTable::new(k, rho);
            rho * table.upper_tail(k - 1, d_min as isize - 1)
        }
    }
}

/// Exact `P_ij` for one pair.
pub fn exact_pair_probability(design: &ExposureDesign, i: usize, j: usize) -> f64 {
    let k = design.neighborhoods().size();
    PairCalculator::new(design, BinomialTable::new(k, design.rho())).pair(i, j)
}

struct PairCalculator<'a> {
    design: &'a ExposureDesign,
    table: BinomialTable,
}

impl<'a> PairCalculator<'a> {
    fn new(design: &'a ExposureDesign, table: BinomialTable) -> Self {
        Self { design, table }
    }

    fn pair(&self, i: usize, j: usize) -> f64 {
        let nbhd = self.design.neighborhoods();
        let rho = self.design.rho();
        let k = nbhd.size();
        if i == j {
            return match self.design.mapping() {
                ExposureMapping::Product => libm::pow(rho, k as f64),
                ExposureMapping::Threshold { d_min } => {
                    rho * self.table.upper_tail(k - 1, d_min as isize - 1)
                }
            };
        }
        let shared = intersection_size(nbhd.sorted_members(i), nbhd.sorted_members(j));
        match self.design.mapping() {
            ExposureMapping::Product => libm::pow(rho, (2 * k - shared) as f64),
            ExposureMapping::Threshold { d_min } => {
                // Regions A = η_i \ η_j, C = η_i ∩ η_j, B = η_j \ η_i, with i
                // and j fixed to treated and removed from their regions.
                let i_in_j = nbhd.contains(j, i);
                let j_in_i = nbhd.contains(i, j);
                let a_free = (k - shared) - usize::from(!i_in_j);
                let b_free = (k - shared) - usize::from(!j_in_i);
                let c_free = shared - usize::from(i_in_j) - usize::from(j_in_i);
                let need_i = d_min as isize - 1 - isize::from(j_in_i);
                let need_j = d_min as isize - 1 - isize::from(i_in_j);
                let sum: f64 = self.table.pmf[c_free]
                    .iter()
                    .enumerate()
                    .map(|(c, &w)| {
                        let c = c as isize;
                        w * self.table.upper_tail(a_free, need_i - c)
                            * self.table.upper_tail(b_free, need_j - c)
                    })
                    .sum();
                rho * rho * sum
            }
        }
    }
}

fn intersection_size(a: &[usize], b: &[usize]) -> usize {
    let (mut x, mut y, mut count) = (0, 0, 0);
    while x < a.len() && y < b.len() {
        match a[x].cmp(&b[y]) {
            core::cmp::Ordering::Less => x += 1,
            core::cmp::Ordering::Greater => y += 1,
            core::cmp::Ordering::Equal => {
                count += 1;
                x += 1;
                y += 1;
            }
        }
    }
    count
}

/// Exact profile. Pairs with overlapping neighborhoods are evaluated by a
/// three-region binomial convolution (threshold) or `ρ^{|η_i ∪ η_j|}`
/// (product); disjoint pairs are `p²`.
pub fn exact_pairwise(design: &ExposureDesign) -> ExposureProfile {
    let nbhd = design.neighborhoods();
    let n = nbhd.len();
    let overlaps = nbhd.overlap_lists();
    let calc = PairCalculator::new(design, BinomialTable::new(nbhd.size(), design.rho()));
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, list) in overlaps.iter().enumerate() {
        for &j in list.iter().filter(|&&j| j > i) {
            let pij = calc.pair(i, j);
            rows[i].push((j, pij));
            rows[j].push((i, pij));
        }
    }
    let p = calc.pair(0, 0);
    let degree = overlaps.iter().map(Vec::len).max().unwrap_or(0);
    ExposureProfile::from_rows(p, rows, degree, ProfileMethod::Exact)
        .expect("exact profile is symmetric by construction")
}

/// Enumerate all `2^N` assignments and accumulate `P(Z_i = 1)` and
/// `P(Z_i Z_j = 1)` directly. Test oracle; `N ≤ 20`.
pub fn brute_force_profile(design: &ExposureDesign) -> Result<ExposureProfile> {
    let (marginals, joint) = enumerate_joint(design)?;
    let n = design.len();
    let p = marginals[0];
    for (index, &m) in marginals.iter().enumerate() {
        if (m - p).abs() > 1e-12 {
            return Err(Error::NonUniformExposure {
                index,
                expected: p,
                found: m,
            });
        }
    }
    let rows = (0..n)
        .map(|i| (0..n).filter(|&j| j != i).map(|j| (j, joint.get(i, j))).collect())
        .collect();
    ExposureProfile::from_rows(p, rows, overlap_degree(design.neighborhoods()), ProfileMethod::Enumeration)
}

/// Per-unit marginals and the full joint matrix by enumeration.
pub fn enumerate_joint(design: &ExposureDesign) -> Result<(Vec<f64>, DenseMatrix)> {
    let n = design.len();
    if n > MAX_ENUMERATION_UNITS {
        return Err(Error::TooLargeForEnumeration {
            n,
            max: MAX_ENUMERATION_UNITS,
        });
    }
    let rho = design.rho();
    let treated_pow: Vec<f64> = (0..=n).map(|t| libm::pow(rho, t as f64)).collect();
    let control_pow: Vec<f64> = (0..=n).map(|t| libm::pow(1.0 - rho, t as f64)).collect();
    let mut joint = DenseMatrix::zeros(n);
    let mut x = vec![false; n];
    let mut active = Vec::with_capacity(n);
    for mask in 0u32..(1u32 << n) {
        let t = mask.count_ones() as usize;
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = mask >> i & 1 == 1;
        }
        let weight = treated_pow[t] * control_pow[n - t];
        active.clear();
        active.extend((0..n).filter(|&i| design.mapping().exposed(design.neighborhoods(), i, &x)));
        for &a in &active {
            for &b in &active {
                joint.set(a, b, joint.get(a, b) + weight);
            }
        }
    }
    let marginals = (0..n).map(|i| joint.get(i, i)).collect();
    Ok((marginals, joint))
}

/// `max_i #{j ≠ i : η_i ∩ η_j ≠ ∅}`.
pub fn overlap_degree(nbhd: &NeighborhoodSet) -> usize {
    nbhd.overlap_lists().iter().map(Vec::len).max().unwrap_or(0)
}

/// Dense `R` and `𝓔` from a dense joint-probability matrix.
pub fn build_r_e(joint: &DenseMatrix, p: f64) -> Result<(DenseMatrix, DenseMatrix)> {
    joint.check_symmetric(1e-12)?;
    let n = joint.dim();
    let r = DenseMatrix::from_fn(n, |i, j| {
        joint.get(i, j) - if i == j { p * (1.0 - p) } else { 0.0 } - p * p
    });
    let row_mean: Vec<f64> = r.row_sums().iter().map(|s| s / n as f64).collect();
    let col_mean: Vec<f64> = r.col_sums().iter().map(|s| s / n as f64).collect();
    let mean = row_mean.iter().sum::<f64>() / n as f64;
    let e = DenseMatrix::from_fn(n, |i, j| r.get(i, j) - row_mean[i] - col_mean[j] + mean);
    Ok((r, e))
}

/// Empirical joint exposure frequencies over Bernoulli assignment draws.
///
/// Only the diagonal and overlapping pairs are tracked; disjoint pairs are
/// independent and need no estimate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct McEstimate {
    num_samples: u64,
    diag: Vec<u64>,
    /// `pairs[i]`: `(j, count)` for overlapping `j > i`.
    pairs: Vec<Vec<(usize, u64)>>,
    overlap_degree: usize,
}

impl McEstimate {
    /// Zero counts over the overlap structure of `nbhd`.
    pub fn empty(nbhd: &NeighborhoodSet) -> Self {
        let overlaps = nbhd.overlap_lists();
        let overlap_degree = overlaps.iter().map(Vec::len).max().unwrap_or(0);
        let pairs = overlaps
            .iter()
            .enumerate()
            .map(|(i, l)| l.iter().filter(|&&j| j > i).map(|&j| (j, 0)).collect())
            .collect();
        Self {
            num_samples: 0,
            diag: vec![0; nbhd.len()],
            pairs,
            overlap_degree,
        }
    }

    pub fn num_samples(&self) -> u64 {
        self.num_samples
    }

    /// Add counts from another shard over the same design.
    pub fn merge(&mut self, other: &Self) {
        self.num_samples += other.num_samples;
        for (a, b) in self.diag.iter_mut().zip(&other.diag) {
            *a += b;
        }
        for (ra, rb) in self.pairs.iter_mut().zip(&other.pairs) {
            for (a, b) in ra.iter_mut().zip(rb) {
                a.1 += b.1;
            }
        }
    }

    fn count(&self, i: usize, j: usize) -> Option<u64> {
        if i == j {
            return Some(self.diag[i]);
        }
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        self.pairs[lo]
            .binary_search_by_key(&hi, |&(c, _)| c)
            .ok()
            .map(|k| self.pairs[lo][k].1)
    }

    /// Empirical `P_ij`, or `None` for a disjoint pair (not tracked).
    pub fn estimate(&self, i: usize, j: usize) -> Option<f64> {
        self.count(i, j).map(|c| c as f64 / self.num_samples as f64)
    }

    /// Binomial standard error of [`estimate`](Self::estimate).
    pub fn standard_error(&self, i: usize, j: usize) -> Option<f64> {
        self.estimate(i, j)
            .map(|q| libm::sqrt(q * (1.0 - q) / self.num_samples as f64))
    }

    /// Tracked `(i, j)` pairs with `i ≤ j`.
    pub fn tracked_pairs(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = (0..self.diag.len()).map(|i| (i, i)).collect();
        for (i, row) in self.pairs.iter().enumerate() {
            out.extend(row.iter().map(|&(j, _)| (i, j)));
        }
        out
    }

    /// Profile with `p` pooled over the diagonal.
    pub fn to_profile(&self) -> Result<ExposureProfile> {
        if self.num_samples == 0 {
            return Err(Error::ZeroCount("num_samples"));
        }
        let n = self.diag.len();
        let s = self.num_samples as f64;
        let p = self.diag.iter().sum::<u64>() as f64 / (s * n as f64);
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, row) in self.pairs.iter().enumerate() {
            for &(j, c) in row {
                let v = c as f64 / s;
                rows[i].push((j, v));
                rows[j].push((i, v));
            }
        }
        ExposureProfile::from_rows(
            p,
            rows,
            self.overlap_degree,
            ProfileMethod::MonteCarlo {
                num_samples: self.num_samples,
            },
        )
    }
}

/// Draw one shard of `samples` assignments from stream `shard` of `seed`.
pub fn mc_shard(design: &ExposureDesign, seed: u64, shard: u64, samples: u64) -> McEstimate {
    let mut est = McEstimate::empty(design.neighborhoods());
    let mut rng = rng::stream(seed, shard);
    let n = design.len();
    for _ in 0..samples {
        let x = rng::bernoulli_assignment(&mut rng, n, design.rho());
        let z = design.mapping().evaluate_unchecked(design.neighborhoods(), &x);
        let z = z.indicators();
        for i in (0..n).filter(|&i| z[i]) {
            est.diag[i] += 1;
            for pair in est.pairs[i].iter_mut() {
                if z[pair.0] {
                    pair.1 += 1;
                }
            }
        }
    }
    est.num_samples = samples;
    est
}

/// Shard sizes for `num_samples`: full shards of [`MC_SHARD_SIZE`] and a
/// final partial one.
pub fn mc_shard_plan(num_samples: u64) -> Vec<u64> {
    let full = num_samples / MC_SHARD_SIZE;
    let rest = num_samples % MC_SHARD_SIZE;
    let mut plan = vec![MC_SHARD_SIZE; full as usize];
    if rest > 0 {
        plan.push(rest);
    }
    plan
}

/// Monte Carlo estimate of the joint exposure probabilities.
/// Reproducible given `seed`, independent of how shards are scheduled.
pub fn mc_pairwise(design: &ExposureDesign, num_samples: u64, seed: u64) -> Result<McEstimate> {
    if num_samples == 0 {
        return Err(Error::ZeroCount("num_samples"));
    }
    let mut total = McEstimate::empty(design.neighborhoods());
    for (shard, &size) in mc_shard_plan(num_samples).iter().enumerate() {
        total.merge(&mc_shard(design, seed, shard as u64, size));
    }
    Ok(total)
}

/// Constants bounding the asymptotic regime: outcome bound `B`, allowed
/// overlap degree `D` and variance floor `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    #[serde(default, rename = "B")]
    pub outcome_bound: Option<f64>,
    #[serde(default, rename = "D_cap")]
    pub overlap_cap: Option<usize>,
    pub c: f64,
}

impl DiagnosticsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) {
            return Err(Error::InvalidParameter(alloc::format!("c must be > 0, got {}", self.c)));
        }
        if let Some(b) = self.outcome_bound {
            if !(b > 0.0) {
                return Err(Error::InvalidParameter(alloc::format!("B must be > 0, got {b}")));
            }
        }
        Ok(())
    }

    /// Whether the overlap degree and outcome bound constraints hold.
    /// Constraints that are not configured report `None`.
    pub fn check(&self, profile: &ExposureProfile, values: &[f64]) -> (Option<bool>, Option<bool>) {
        let overlap = self.overlap_cap.map(|cap| profile.overlap_degree() <= cap);
        let bound = self
            .outcome_bound
            .map(|b| values.iter().all(|&v| v <= b));
        (overlap, bound)
    }
}
