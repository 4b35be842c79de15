//! Replicated coverage experiments on synthetic spatial populations.
//!
//! Four scenarios, all on `N` points (49 by default) with Bernoulli(1/2)
//! assignment:
//!
//! 1. no effect, no clustering: `θ` iid counts, `Y = θ`;
//! 2. no effect, severe clustering: `θ = 3` in the southern half, 15 in the
//!    northern half, `Y = θ`;
//! 3. exposure model: `Y = θ` for treated units with at least 2 of their 5
//!    nearest neighbors treated, otherwise `θ` plus a uniform spillover;
//! 4. adversarial: `θ` is a random arrangement of 2 zeros, 44 tens and 3
//!    twenties; a treated unit with `θ = 0` reports 10.
//!
//! Counts for scenarios 1 and 3 are negative binomial (mean 10, dispersion 2
//! by default), drawn afresh in every replicate.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::design::{knn_from_coords, EffectiveTreatment, ExposureDesign, NeighborhoodSet, Population};
use crate::exposure::{exact_pairwise, ExposureProfile};
use crate::monotone::{ci_ideal, ci_obs, sigma_hat, CiSettings, CounterfactualVector, NeighborhoodConfig};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutKind {
    UniformSquare,
    TwoCluster,
    Line,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub kind: LayoutKind,
    pub coords: Vec<Vec<f64>>,
    /// `(south, north)` cluster sizes for the two-cluster layout.
    pub split: Option<(usize, usize)>,
}

/// Deterministic synthetic coordinates.
///
/// * `UniformSquare`: uniform on the unit square.
/// * `TwoCluster`: the first `⌊N/2⌋` points uniform in a unit box around
///   `(0, 0)`, the rest around `(0, 10)`.
/// * `Line`: `x = 0, 1, …, N-1`.
pub fn synthetic_layout(kind: LayoutKind, n: usize, seed: u64) -> Result<Layout> {
    if n < 2 {
        return Err(Error::TooFewUnits(n));
    }
    let mut r = rng::stream(seed, u64::MAX);
    let mut jitter = |cx: f64, cy: f64| vec![cx + r.random_range(-0.5..0.5), cy + r.random_range(-0.5..0.5)];
    let (coords, split) = match kind {
        LayoutKind::UniformSquare => ((0..n).map(|_| jitter(0.5, 0.5)).collect(), None),
        LayoutKind::TwoCluster => {
            let south = n / 2;
            let coords = (0..n).map(|i| if i < south { jitter(0.0, 0.0) } else { jitter(0.0, 10.0) }).collect();
            (coords, Some((south, n - south)))
        }
        LayoutKind::Line => ((0..n).map(|i| vec![i as f64]).collect(), None),
    };
    Ok(Layout { kind, coords, split })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    NoEffectNoClustering,
    NoEffectSevereClustering,
    ExposureModel,
    Adversarial,
}

impl ScenarioKind {
    pub const ALL: [Self; 4] = [
        Self::NoEffectNoClustering,
        Self::NoEffectSevereClustering,
        Self::ExposureModel,
        Self::Adversarial,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioParams {
    pub rho: f64,
    /// Mean of the synthetic count distribution.
    pub count_mean: f64,
    /// Negative binomial size; smaller is more overdispersed.
    pub dispersion: u32,
    /// Upper end `S` of the uniform spillover in scenario 3.
    pub spillover_max: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            rho: 0.5,
            count_mean: 10.0,
            dispersion: 2,
            spillover_max: 10.0,
        }
    }
}

/// A scenario bound to a layout and a master seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    kind: ScenarioKind,
    coords: Vec<Vec<f64>>,
    params: ScenarioParams,
    seed: u64,
    /// Self plus 5 nearest neighbors (scenario 3).
    nearest: Option<NeighborhoodSet>,
    /// Units in the southern half by `y` (scenario 2).
    south: Vec<bool>,
    adversarial_counts: (usize, usize, usize),
    warnings: Vec<String>,
}

impl Scenario {
    pub fn new(kind: ScenarioKind, coords: Vec<Vec<f64>>, params: ScenarioParams, seed: u64) -> Result<Self> {
        let n = coords.len();
        if n < 2 {
            return Err(Error::TooFewUnits(n));
        }
        if !(params.rho > 0.0 && params.rho < 1.0) {
            return Err(Error::InvalidRho(params.rho));
        }
        if !(params.count_mean > 0.0) || params.dispersion == 0 || !(params.spillover_max > 0.0) {
            return Err(Error::InvalidParameter(format!("invalid scenario parameters {params:?}")));
        }
        let mut warnings = Vec::new();
        let nearest = match kind {
            ScenarioKind::ExposureModel => Some(knn_from_coords(&coords, 6.min(n))?),
            _ => None,
        };
        let mut south = vec![false; n];
        if kind == ScenarioKind::NoEffectSevereClustering {
            let y = |i: usize| coords[i].get(1).or(coords[i].first()).copied().unwrap_or(0.0);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| y(a).total_cmp(&y(b)).then(a.cmp(&b)));
            for &i in &order[..n / 2] {
                south[i] = true;
            }
        }
        let adversarial_counts = if n == 49 {
            (2, 44, 3)
        } else {
            let zeros = libm::round(2.0 * n as f64 / 49.0) as usize;
            let twenties = libm::round(3.0 * n as f64 / 49.0) as usize;
            let zeros = zeros.min(n);
            let twenties = twenties.min(n - zeros);
            if kind == ScenarioKind::Adversarial {
                warnings.push(format!(
                    "adversarial counts scaled to N={n}: {zeros} zeros, {} tens, {twenties} twenties",
                    n - zeros - twenties
                ));
            }
            (zeros, n - zeros - twenties, twenties)
        };
        Ok(Self {
            kind,
            coords,
            params,
            seed,
            nearest,
            south,
            adversarial_counts,
            warnings,
        })
    }

    pub fn kind(&self) -> ScenarioKind {
        self.kind
    }

    pub fn coords(&self) -> &[Vec<f64>] {
        &self.coords
    }

    pub fn params(&self) -> ScenarioParams {
        self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// `(zeros, tens, twenties)` used by the adversarial scenario.
    pub fn adversarial_counts(&self) -> (usize, usize, usize) {
        self.adversarial_counts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub population: Population,
    pub theta: CounterfactualVector,
}

/// Population and counterfactuals of replicate `index`, drawn from stream
/// `index` of the scenario seed.
pub fn generate_scenario(s: &Scenario, index: u64) -> Result<Generated> {
    let n = s.len();
    let p = s.params;
    let mut r = rng::stream(s.seed, index);
    let counts = |r: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        (0..n)
            .map(|_| rng::negative_binomial(r, p.count_mean, p.dispersion) as f64)
            .collect()
    };
    let theta: Vec<f64> = match s.kind {
        ScenarioKind::NoEffectNoClustering | ScenarioKind::ExposureModel => counts(&mut r),
        ScenarioKind::NoEffectSevereClustering => s.south.iter().map(|&south| if south { 3.0 } else { 15.0 }).collect(),
        ScenarioKind::Adversarial => {
            let (zeros, tens, _) = s.adversarial_counts;
            let mut t: Vec<f64> = (0..n)
                .map(|i| if i < zeros { 0.0 } else if i < zeros + tens { 10.0 } else { 20.0 })
                .collect();
            t.shuffle(&mut r);
            t
        }
    };
    let x = rng::bernoulli_assignment(&mut r, n, p.rho);
    let y: Vec<f64> = match s.kind {
        ScenarioKind::NoEffectNoClustering | ScenarioKind::NoEffectSevereClustering => theta.clone(),
        ScenarioKind::ExposureModel => {
            let nearest = s.nearest.as_ref().expect("built for this scenario");
            (0..n)
                .map(|i| {
                    let treated_neighbors = nearest.members(i)[1..].iter().filter(|&&j| x[j]).count();
                    if x[i] && treated_neighbors >= 2 {
                        theta[i]
                    } else {
                        theta[i] + p.spillover_max * (1.0 - r.random::<f64>())
                    }
                })
                .collect()
        }
        ScenarioKind::Adversarial => (0..n)
            .map(|i| if x[i] && theta[i] == 0.0 { 10.0 } else { theta[i] })
            .collect(),
    };
    Ok(Generated {
        population: Population::from_parts(&s.coords, &x, &y, p.rho)?,
        theta: CounterfactualVector::new(theta)?,
    })
}

/// A configuration with its design and exact profile, computed once per
/// experiment (they depend only on the layout).
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedConfig {
    pub config: NeighborhoodConfig,
    pub design: ExposureDesign,
    pub profile: ExposureProfile,
}

pub fn prepare_configs(coords: &[Vec<f64>], configs: &[NeighborhoodConfig], rho: f64) -> Result<Vec<PreparedConfig>> {
    configs
        .iter()
        .map(|&config| {
            let design = ExposureDesign::knn_threshold(coords, config.d_min, config.d, rho).map_err(|e| config.wrap(e))?;
            let profile = exact_pairwise(&design);
            Ok(PreparedConfig { config, design, profile })
        })
        .collect()
}

/// What happened to one configuration in one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ReplicateOutcome {
    /// `L = 0`: no estimate.
    NoEffective,
    /// `σ̃_Y = 0`: the bound collapses to `θ̂_Y`; counted as condition not met.
    Degenerate { covered_unconditional: bool },
    Evaluated { condition_ok: bool, covered: bool },
}

/// Evaluate one prepared configuration on a generated replicate.
pub fn evaluate_replicate(prepared: &PreparedConfig, generated: &Generated, settings: &CiSettings) -> Result<ReplicateOutcome> {
    let z = prepared.design.evaluate(&generated.population.treatments())?;
    if z.count() == 0 {
        return Ok(ReplicateOutcome::NoEffective);
    }
    let theta_bar = generated.theta.mean();
    match ci_obs(&generated.population.outcomes(), &z, &prepared.profile, settings) {
        Ok(report) => Ok(ReplicateOutcome::Evaluated {
            condition_ok: report.condition_ok,
            covered: theta_bar <= report.ci_upper,
        }),
        Err(Error::DegenerateVariance { theta_hat }) => Ok(ReplicateOutcome::Degenerate {
            covered_unconditional: theta_bar <= theta_hat,
        }),
        Err(e) => Err(prepared.config.wrap(e)),
    }
}

/// All configurations for replicate `index`.
pub fn run_replicate(
    scenario: &Scenario,
    prepared: &[PreparedConfig],
    index: u64,
    settings: &CiSettings,
) -> Result<Vec<ReplicateOutcome>> {
    let generated = generate_scenario(scenario, index)?;
    prepared.iter().map(|p| evaluate_replicate(p, &generated, settings)).collect()
}

/// Tallies for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCell {
    pub d_min: usize,
    pub d: usize,
    pub replicates: usize,
    /// Replicates with `L = 0`, excluded from every fraction.
    pub no_effective: usize,
    pub degenerate: usize,
    pub condition_met: usize,
    pub covered_given_condition: usize,
    pub covered_unconditional: usize,
    /// Coverage over condition-met replicates.
    pub coverage: Option<f64>,
    /// Condition-met share of well-defined replicates.
    pub condition_met_fraction: Option<f64>,
    /// Coverage over all well-defined replicates, ignoring the condition.
    pub coverage_ignoring_condition: Option<f64>,
}

impl CoverageCell {
    fn new(config: NeighborhoodConfig) -> Self {
        Self {
            d_min: config.d_min,
            d: config.d,
            replicates: 0,
            no_effective: 0,
            degenerate: 0,
            condition_met: 0,
            covered_given_condition: 0,
            covered_unconditional: 0,
            coverage: None,
            condition_met_fraction: None,
            coverage_ignoring_condition: None,
        }
    }

    fn record(&mut self, outcome: ReplicateOutcome) {
        self.replicates += 1;
        match outcome {
            ReplicateOutcome::NoEffective => self.no_effective += 1,
            ReplicateOutcome::Degenerate { covered_unconditional } => {
                self.degenerate += 1;
                self.covered_unconditional += covered_unconditional as usize;
            }
            ReplicateOutcome::Evaluated { condition_ok, covered } => {
                self.covered_unconditional += covered as usize;
                if condition_ok {
                    self.condition_met += 1;
                    self.covered_given_condition += covered as usize;
                }
            }
        }
    }

    fn finish(&mut self) {
        let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
        let well_defined = self.replicates - self.no_effective;
        self.coverage = ratio(self.covered_given_condition, self.condition_met);
        self.condition_met_fraction = ratio(self.condition_met, well_defined);
        self.coverage_ignoring_condition = ratio(self.covered_unconditional, well_defined);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageTable {
    pub scenario: ScenarioKind,
    pub n: usize,
    pub alpha: f64,
    pub replicates: usize,
    pub seed: u64,
    pub cells: Vec<CoverageCell>,
    pub warnings: Vec<String>,
}

/// Reduce per-replicate outcomes, given in replicate order, into a table.
pub fn tabulate(
    scenario: &Scenario,
    configs: &[NeighborhoodConfig],
    settings: &CiSettings,
    outcomes: &[Vec<ReplicateOutcome>],
) -> CoverageTable {
    let mut cells: Vec<CoverageCell> = configs.iter().map(|&c| CoverageCell::new(c)).collect();
    for row in outcomes {
        for (cell, &o) in cells.iter_mut().zip(row) {
            cell.record(o);
        }
    }
    cells.iter_mut().for_each(CoverageCell::finish);
    CoverageTable {
        scenario: scenario.kind,
        n: scenario.len(),
        alpha: settings.alpha,
        replicates: outcomes.len(),
        seed: scenario.seed,
        cells,
        warnings: scenario.warnings.clone(),
    }
}

/// Run `replicates` replicates sequentially.
pub fn run_coverage_experiment(
    scenario: &Scenario,
    configs: &[NeighborhoodConfig],
    settings: &CiSettings,
    replicates: usize,
) -> Result<CoverageTable> {
    if replicates == 0 {
        return Err(Error::ZeroCount("replicates"));
    }
    settings.validate()?;
    let prepared = prepare_configs(scenario.coords(), configs, scenario.params.rho)?;
    let outcomes = (0..replicates as u64)
        .map(|i| run_replicate(scenario, &prepared, i, settings))
        .collect::<Result<Vec<_>>>()?;
    Ok(tabulate(scenario, configs, settings, &outcomes))
}

/// `T / √σ̂` with `T = Σ (θ_i - θ̄) Z_i` over `draws` Bernoulli assignments.
/// Draws with `L = 0` or `σ̂ ≤ 0` are skipped; their number is returned.
pub fn studentized_draws(
    design: &ExposureDesign,
    profile: &ExposureProfile,
    theta: &CounterfactualVector,
    draws: usize,
    seed: u64,
) -> Result<(Vec<f64>, usize)> {
    let theta_bar = theta.mean();
    let mut out = Vec::with_capacity(draws);
    let mut skipped = 0;
    for d in 0..draws as u64 {
        let z = draw_effective(design, seed, d)?;
        if z.count() == 0 {
            skipped += 1;
            continue;
        }
        let s = sigma_hat(theta, &z, profile)?;
        if !(s > 0.0) {
            skipped += 1;
            continue;
        }
        let t: f64 = z.active().iter().map(|&i| theta.as_slice()[i] - theta_bar).sum();
        out.push(t / libm::sqrt(s));
    }
    Ok((out, skipped))
}

fn draw_effective(design: &ExposureDesign, seed: u64, index: u64) -> Result<EffectiveTreatment> {
    let mut r = rng::stream(seed, index);
    let x = rng::bernoulli_assignment(&mut r, design.len(), design.rho());
    design.evaluate(&x)
}

/// Fraction of draws with `θ̄ ≤ CI^ideal`, over draws with `L ≥ 1`.
pub fn ideal_coverage(
    design: &ExposureDesign,
    profile: &ExposureProfile,
    theta: &CounterfactualVector,
    alpha: f64,
    draws: usize,
    seed: u64,
) -> Result<(usize, usize)> {
    let theta_bar = theta.mean();
    let (mut covered, mut used) = (0, 0);
    for d in 0..draws as u64 {
        let z = draw_effective(design, seed, d)?;
        if z.count() == 0 {
            continue;
        }
        used += 1;
        covered += (theta_bar <= ci_ideal(theta, &z, profile, alpha)?) as usize;
    }
    Ok((covered, used))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(kind: ScenarioKind, layout: LayoutKind, n: usize) -> Scenario {
        let layout = synthetic_layout(layout, n, 7).unwrap();
        Scenario::new(kind, layout.coords, ScenarioParams::default(), 99).unwrap()
    }

    #[test]
    fn layouts() {
        let line = synthetic_layout(LayoutKind::Line, 5, 0).unwrap();
        assert_eq!(line.coords, vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0], vec![4.0]]);
        let a = synthetic_layout(LayoutKind::UniformSquare, 30, 3).unwrap();
        assert_eq!(a, synthetic_layout(LayoutKind::UniformSquare, 30, 3).unwrap());
        assert_ne!(a, synthetic_layout(LayoutKind::UniformSquare, 30, 4).unwrap());
        let two = synthetic_layout(LayoutKind::TwoCluster, 49, 3).unwrap();
        assert_eq!(two.split, Some((24, 25)));
        assert!(two.coords[..24].iter().all(|c| c[1] < 1.0));
        assert!(two.coords[24..].iter().all(|c| c[1] > 9.0));
        assert!(synthetic_layout(LayoutKind::Line, 1, 0).is_err());
    }

    #[test]
    fn adversarial_outcomes() {
        let s = scenario(ScenarioKind::Adversarial, LayoutKind::UniformSquare, 49);
        assert!(s.warnings().is_empty());
        for idx in 0..50 {
            let g = generate_scenario(&s, idx).unwrap();
            let theta = g.theta.as_slice();
            assert_eq!(theta.iter().filter(|&&t| t == 0.0).count(), 2);
            assert_eq!(theta.iter().filter(|&&t| t == 20.0).count(), 3);
            for (u, &t) in g.population.units().iter().zip(theta) {
                let expected = if u.treatment && t == 0.0 { 10.0 } else { t };
                assert_eq!(u.outcome, expected);
                assert!(t <= u.outcome);
            }
        }
        let scaled = scenario(ScenarioKind::Adversarial, LayoutKind::Line, 98);
        assert_eq!(scaled.adversarial_counts(), (4, 88, 6));
        assert_eq!(scaled.warnings().len(), 1);
    }

    #[test]
    fn no_effect_scenarios() {
        let s = scenario(ScenarioKind::NoEffectNoClustering, LayoutKind::UniformSquare, 49);
        let g = generate_scenario(&s, 3).unwrap();
        assert_eq!(g.population.outcomes(), g.theta.as_slice());
        let s = scenario(ScenarioKind::NoEffectSevereClustering, LayoutKind::TwoCluster, 49);
        let g = generate_scenario(&s, 3).unwrap();
        assert_eq!(g.population.outcomes(), g.theta.as_slice());
        let theta = g.theta.as_slice();
        assert!(theta[..24].iter().all(|&t| t == 3.0));
        assert!(theta[24..].iter().all(|&t| t == 15.0));
    }

    #[test]
    fn exposure_model_inflates_underexposed_units() {
        let s = scenario(ScenarioKind::ExposureModel, LayoutKind::UniformSquare, 49);
        let nearest = knn_from_coords(s.coords(), 6).unwrap();
        for idx in 0..20 {
            let g = generate_scenario(&s, idx).unwrap();
            let x = g.population.treatments();
            for (i, u) in g.population.units().iter().enumerate() {
                let t = g.theta.as_slice()[i];
                let k = nearest.members(i)[1..].iter().filter(|&&j| x[j]).count();
                if x[i] && k >= 2 {
                    assert_eq!(u.outcome, t);
                } else {
                    assert!(u.outcome > t && u.outcome <= t + 10.0);
                }
            }
        }
    }

    #[test]
    fn generation_is_reproducible() {
        let s = scenario(ScenarioKind::ExposureModel, LayoutKind::UniformSquare, 49);
        assert_eq!(generate_scenario(&s, 11).unwrap(), generate_scenario(&s, 11).unwrap());
        assert_ne!(generate_scenario(&s, 11).unwrap(), generate_scenario(&s, 12).unwrap());
    }

    #[test]
    fn cell_fractions() {
        let mut cell = CoverageCell::new(NeighborhoodConfig::new(1, 1));
        cell.record(ReplicateOutcome::NoEffective);
        cell.record(ReplicateOutcome::Degenerate { covered_unconditional: false });
        cell.record(ReplicateOutcome::Evaluated { condition_ok: true, covered: true });
        cell.record(ReplicateOutcome::Evaluated { condition_ok: false, covered: true });
        cell.finish();
        assert_eq!(cell.replicates, 4);
        assert_eq!(cell.coverage, Some(1.0));
        assert_eq!(cell.condition_met_fraction, Some(1.0 / 3.0));
        assert_eq!(cell.coverage_ignoring_condition, Some(2.0 / 3.0));
    }

    #[test]
    fn zero_replicates_rejected() {
        let s = scenario(ScenarioKind::Adversarial, LayoutKind::Line, 49);
        assert_eq!(
            run_coverage_experiment(&s, &[NeighborhoodConfig::new(1, 1)], &CiSettings::default(), 0),
            Err(Error::ZeroCount("replicates"))
        );
    }
}
