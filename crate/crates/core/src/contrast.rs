//! Assumption-free contrasts attributable to treatment.
//!
//! For binary outcomes, the observed treated-minus-control contrast `Δ_Y`
//! differs from the contrast attributable to treatment only by `Δ_ξ`, the
//! same contrast under full control. `Δ_ξ` is a difference of two sample
//! means of a fixed binary vector, so it concentrates at zero and can be
//! bounded without any model of the interference.
//!
//! * CAT splits on the assignment `X` (sampling without replacement).
//! * ZCAT splits on an effective treatment `Z` (Bernoulli assignment) and
//!   pays for the dependence between the `Z_i` through `λ₁`, the top
//!   eigenvalue of the doubly centered `P`.

use serde::{Deserialize, Serialize};

use crate::design::{EffectiveTreatment, ExposureDesign};
use crate::exposure::ExposureProfile;
use crate::linalg::SymmetricOperator;
use crate::monotone::check_alpha;
use crate::{normal, rng, Error, Result};

/// Seed of the eigenvalue start vector when none is given.
pub const DEFAULT_EIGEN_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContrastKind {
    Cat,
    Zcat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn centered(center: f64, half_width: f64) -> Self {
        Self {
            lower: center - half_width,
            upper: center + half_width,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastReport {
    pub kind: ContrastKind,
    /// `Δ_Y` (CAT) or `Δ_{Y,Z}` (ZCAT).
    pub delta: f64,
    pub one_sided_lower: f64,
    pub two_sided: Interval,
    pub alpha: f64,
    /// `N1` (CAT) or `L` (ZCAT).
    pub treated: u64,
    /// `N0` (CAT) or `N - L` (ZCAT).
    pub control: u64,
    pub lambda_1: Option<f64>,
    pub p: Option<f64>,
}

/// Size and number of ones of one arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmCounts {
    pub total: u64,
    pub successes: u64,
}

impl ArmCounts {
    pub fn new(total: u64, successes: u64) -> Result<Self> {
        if successes > total {
            return Err(Error::InvalidParameter(alloc::format!(
                "{successes} successes exceed arm size {total}"
            )));
        }
        Ok(Self { total, successes })
    }

    pub fn rate(&self) -> f64 {
        self.successes as f64 / self.total as f64
    }
}

fn check_binary(y: &[f64]) -> Result<()> {
    match y.iter().position(|&v| v != 0.0 && v != 1.0) {
        Some(index) => Err(Error::NonBinaryOutcome { index, value: y[index] }),
        None => Ok(()),
    }
}

fn split_counts(y: &[f64], arm: &[bool]) -> Result<(ArmCounts, ArmCounts)> {
    crate::design::check_len(y.len(), arm.len())?;
    check_binary(y)?;
    let (mut t, mut c) = (ArmCounts { total: 0, successes: 0 }, ArmCounts { total: 0, successes: 0 });
    for (&v, &a) in y.iter().zip(arm) {
        let slot = if a { &mut t } else { &mut c };
        slot.total += 1;
        slot.successes += (v == 1.0) as u64;
    }
    Ok((t, c))
}

/// `(z_{1-α}/2) √(N / (N0 N1))`
pub fn cat_half_width(treated: u64, control: u64, alpha: f64) -> f64 {
    let n = (treated + control) as f64;
    0.5 * normal::upper_critical(alpha) * libm::sqrt(n / (treated as f64 * control as f64))
}

/// CAT bounds from aggregate arm counts.
pub fn cat_from_counts(treated: ArmCounts, control: ArmCounts, alpha: f64) -> Result<ContrastReport> {
    check_alpha(alpha)?;
    if treated.total == 0 || control.total == 0 {
        return Err(Error::EmptyArm {
            treated: treated.total as usize,
            control: control.total as usize,
        });
    }
    let delta = treated.rate() - control.rate();
    Ok(ContrastReport {
        kind: ContrastKind::Cat,
        delta,
        one_sided_lower: delta - cat_half_width(treated.total, control.total, alpha),
        two_sided: Interval::centered(delta, cat_half_width(treated.total, control.total, alpha / 2.0)),
        alpha,
        treated: treated.total,
        control: control.total,
        lambda_1: None,
        p: None,
    })
}

/// CAT bounds from unit-level binary data.
///
/// The guarantee assumes `x` was assigned by sampling without replacement.
pub fn cat_interval(x: &[bool], y: &[f64], alpha: f64) -> Result<ContrastReport> {
    let (t, c) = split_counts(y, x)?;
    cat_from_counts(t, c, alpha)
}

/// `λ₁` of `(I - 11ᵀ/N) P (I - 11ᵀ/N)` for a positive semidefinite `P`.
pub fn lambda_max_centered<A: SymmetricOperator + ?Sized>(p: &A, seed: u64) -> Result<f64> {
    crate::linalg::top_centered_eigenvalue(p, seed).map(|l| l.max(0.0))
}

/// `(z_{1-α} / (2p(1-p))) √(λ₁ / N)`
pub fn zcat_half_width(p: f64, lambda_1: f64, n: usize, alpha: f64) -> f64 {
    normal::upper_critical(alpha) / (2.0 * p * (1.0 - p)) * libm::sqrt(lambda_1 / n as f64)
}

/// ZCAT bounds with a precomputed `λ₁`.
pub fn zcat_with_lambda(y: &[f64], z: &EffectiveTreatment, p: f64, lambda_1: f64, alpha: f64) -> Result<ContrastReport> {
    check_alpha(alpha)?;
    let (t, c) = split_counts(y, z.indicators())?;
    if t.total == 0 || c.total == 0 {
        return Err(if t.total == 0 {
            Error::NoEffectiveUnits
        } else {
            Error::AllEffectiveUnits
        });
    }
    let n = y.len();
    let delta = t.rate() - c.rate();
    Ok(ContrastReport {
        kind: ContrastKind::Zcat,
        delta,
        one_sided_lower: delta - zcat_half_width(p, lambda_1, n, alpha),
        two_sided: Interval::centered(delta, zcat_half_width(p, lambda_1, n, alpha / 2.0)),
        alpha,
        treated: t.total,
        control: c.total,
        lambda_1: Some(lambda_1),
        p: Some(p),
    })
}

/// ZCAT bounds; `λ₁` is computed from the profile.
///
/// Assumes Bernoulli assignment, a common marginal `p`, and enough spread in
/// the full-control outcomes; none of these is checked.
pub fn zcat_interval(y: &[f64], z: &EffectiveTreatment, profile: &ExposureProfile, alpha: f64) -> Result<ContrastReport> {
    let lambda = lambda_max_centered(profile, DEFAULT_EIGEN_SEED)?;
    zcat_with_lambda(y, z, profile.p(), lambda, alpha)
}

/// Outcome of repeatedly redrawing the assignment for a fixed `ξ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceSummary {
    pub draws: usize,
    /// Draws where one arm was empty; not counted in `fraction`.
    pub skipped: usize,
    pub exceedances: usize,
    pub fraction: f64,
    pub bound: f64,
    pub mean_delta: f64,
    pub max_abs_delta: f64,
}

struct Tally {
    draws: usize,
    skipped: usize,
    exceed: usize,
    sum: f64,
    max_abs: f64,
}

impl Tally {
    fn new() -> Self {
        Self { draws: 0, skipped: 0, exceed: 0, sum: 0.0, max_abs: 0.0 }
    }

    fn add(&mut self, delta: Option<f64>, bound: f64) {
        self.draws += 1;
        match delta {
            Some(d) => {
                self.exceed += (d >= bound) as usize;
                self.sum += d;
                self.max_abs = self.max_abs.max(d.abs());
            }
            None => self.skipped += 1,
        }
    }

    fn finish(self, bound: f64) -> ExceedanceSummary {
        let used = (self.draws - self.skipped).max(1) as f64;
        ExceedanceSummary {
            draws: self.draws,
            skipped: self.skipped,
            exceedances: self.exceed,
            fraction: self.exceed as f64 / used,
            bound,
            mean_delta: self.sum / used,
            max_abs_delta: self.max_abs,
        }
    }
}

fn contrast(xi: &[f64], arm: &[bool]) -> Option<f64> {
    let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0usize, 0.0, 0usize);
    for (&v, &a) in xi.iter().zip(arm) {
        if a {
            s1 += v;
            n1 += 1;
        } else {
            s0 += v;
            n0 += 1;
        }
    }
    (n1 > 0 && n0 > 0).then(|| s1 / n1 as f64 - s0 / n0 as f64)
}

/// Draw complete randomizations with `n_treated` treated units and count how
/// often `Δ_ξ` reaches the one-sided CAT margin.
pub fn cat_exceedance(xi: &[f64], n_treated: usize, alpha: f64, draws: usize, seed: u64) -> Result<ExceedanceSummary> {
    check_alpha(alpha)?;
    check_binary(xi)?;
    let n = xi.len();
    if n_treated == 0 || n_treated >= n {
        return Err(Error::EmptyArm {
            treated: n_treated,
            control: n.saturating_sub(n_treated),
        });
    }
    let bound = cat_half_width(n_treated as u64, (n - n_treated) as u64, alpha);
    let mut tally = Tally::new();
    for d in 0..draws {
        let mut r = rng::stream(seed, d as u64);
        let x = rng::complete_assignment(&mut r, n, n_treated);
        tally.add(contrast(xi, &x), bound);
    }
    Ok(tally.finish(bound))
}

/// Draw Bernoulli assignments through `design` and count how often
/// `Δ_{ξ,Z}` reaches the one-sided ZCAT margin.
pub fn zcat_exceedance(
    xi: &[f64],
    design: &ExposureDesign,
    profile: &ExposureProfile,
    alpha: f64,
    draws: usize,
    seed: u64,
) -> Result<ExceedanceSummary> {
    check_alpha(alpha)?;
    check_binary(xi)?;
    crate::design::check_len(design.len(), xi.len())?;
    let lambda = lambda_max_centered(profile, DEFAULT_EIGEN_SEED)?;
    let bound = zcat_half_width(profile.p(), lambda, xi.len(), alpha);
    let mut tally = Tally::new();
    for d in 0..draws {
        let mut r = rng::stream(seed, d as u64);
        let x = rng::bernoulli_assignment(&mut r, xi.len(), design.rho());
        let z = design.evaluate(&x)?;
        tally.add(contrast(xi, z.indicators()), bound);
    }
    Ok(tally.finish(bound))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{ExposureMapping, NeighborhoodSet};
    use crate::exposure::exact_pairwise;
    use crate::linalg::DenseMatrix;
    use alloc::vec;
    use alloc::vec::Vec;

    #[test]
    fn facebook_counts() {
        let treated = ArmCounts::new(60_000_000, 12_000_000).unwrap();
        let control = ArmCounts::new(611_000, 109_000).unwrap();
        let r = cat_from_counts(treated, control, 0.05).unwrap();
        assert!((r.delta - (0.2 - 109.0 / 611.0)).abs() < 1e-15);
        assert!((r.two_sided.lower - 0.0206).abs() <= 0.0005, "{:?}", r.two_sided);
        assert!((r.two_sided.upper - 0.0226).abs() <= 0.0005, "{:?}", r.two_sided);
        assert!(r.one_sided_lower > r.two_sided.lower);
    }

    #[test]
    fn cat_examples() {
        let x = [true, false, true, false, true, false];
        let y = [1.0, 1.0, 0.0, 0.0, 1.0, 1.0];
        let r = cat_interval(&x, &[1.0; 6], 0.05).unwrap();
        assert_eq!(r.delta, 0.0);
        assert!((r.two_sided.lower + r.two_sided.upper).abs() < 1e-15);
        let r = cat_interval(&x, &y, 0.05).unwrap();
        let hw = normal::upper_critical(0.025) / 2.0 * libm::sqrt(2.0 / 3.0);
        assert!((r.two_sided.width() / 2.0 - hw).abs() < 1e-14);
        assert!(r.two_sided.contains(r.delta));
        assert!(matches!(cat_interval(&[true; 3], &[1.0, 0.0, 1.0], 0.05), Err(Error::EmptyArm { .. })));
        assert!(matches!(
            cat_interval(&x, &[1.0, 2.0, 0.0, 0.0, 1.0, 1.0], 0.05),
            Err(Error::NonBinaryOutcome { index: 1, .. })
        ));
    }

    #[test]
    fn doubling_arms_shrinks_width_by_sqrt2() {
        let a = cat_half_width(30, 50, 0.05);
        let b = cat_half_width(60, 100, 0.05);
        assert!((a / b - core::f64::consts::SQRT_2).abs() < 1e-13);
    }

    #[test]
    fn lambda_of_independent_design() {
        let p: f64 = 0.3;
        let m = DenseMatrix::from_fn(7, |i, j| if i == j { p } else { p * p });
        let l = lambda_max_centered(&m, 1).unwrap();
        assert!((l - p * (1.0 - p)).abs() < 1e-12);
        let l = lambda_max_centered(&DenseMatrix::identity(4), 1).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
        assert_eq!(lambda_max_centered(&DenseMatrix::identity(1), 1).unwrap(), 0.0);
    }

    #[test]
    fn tridiagonal_bisection() {
        // tridiag(-1, 2, -1) of size m has top eigenvalue 2 + 2cos(π/(m+1))
        let m = 9;
        let l = crate::linalg::tridiagonal_max_eigenvalue(&[2.0; 9], &[-1.0; 8]);
        let expected = 2.0 + 2.0 * libm::cos(core::f64::consts::PI / (m as f64 + 1.0));
        assert!((l - expected).abs() < 1e-13);
        assert_eq!(crate::linalg::tridiagonal_max_eigenvalue(&[3.5], &[]), 3.5);
    }

    #[test]
    fn zcat_singletons_match_cat() {
        let rho = 0.5;
        let d = ExposureDesign::new(NeighborhoodSet::singletons(8), ExposureMapping::Threshold { d_min: 1 }, rho).unwrap();
        let profile = exact_pairwise(&d);
        let x = vec![true, false, true, true, false, false, true, false];
        let y = [1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0];
        let z = d.evaluate(&x).unwrap();
        let zc = zcat_interval(&y, &z, &profile, 0.05).unwrap();
        let c = cat_interval(&x, &y, 0.05).unwrap();
        assert_eq!(zc.delta, c.delta);
        let lambda = zc.lambda_1.unwrap();
        assert!((lambda - 0.25).abs() < 1e-12);
        let hw = normal::upper_critical(0.025) / (2.0 * libm::sqrt(8.0 * 0.25));
        assert!((zc.two_sided.width() / 2.0 - hw).abs() < 1e-12);
    }

    #[test]
    fn zcat_edge_cases() {
        let z = EffectiveTreatment::new(vec![true, false, true, false]);
        let r = zcat_with_lambda(&[0.0; 4], &z, 0.4, 0.2, 0.05).unwrap();
        assert_eq!(r.delta, 0.0);
        assert_eq!(r.two_sided.lower, -r.two_sided.upper);
        let w1 = zcat_with_lambda(&[1.0, 0.0, 0.0, 1.0], &z, 0.4, 0.2, 0.05).unwrap();
        assert_eq!(w1.two_sided.width(), r.two_sided.width());
        let all = EffectiveTreatment::new(vec![true; 4]);
        assert_eq!(zcat_with_lambda(&[0.0; 4], &all, 0.4, 0.2, 0.05), Err(Error::AllEffectiveUnits));
        let none = EffectiveTreatment::new(vec![false; 4]);
        assert_eq!(zcat_with_lambda(&[0.0; 4], &none, 0.4, 0.2, 0.05), Err(Error::NoEffectiveUnits));
    }

    #[test]
    fn constant_xi_never_exceeds() {
        let s = cat_exceedance(&[1.0; 20], 10, 0.05, 200, 9).unwrap();
        assert_eq!(s.exceedances, 0);
        assert_eq!(s.max_abs_delta, 0.0);
    }

    #[test]
    fn relabeling_invariance() {
        let x = [true, false, true, false, true, true, false];
        let y = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0];
        let perm = [3, 6, 0, 2, 5, 1, 4];
        let xp: Vec<bool> = perm.iter().map(|&i| x[i]).collect();
        let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        assert_eq!(cat_interval(&x, &y, 0.1).unwrap(), cat_interval(&xp, &yp, 0.1).unwrap());
    }
}
