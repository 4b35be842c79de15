//! Conservative upper confidence bounds for the mean full-treatment
//! counterfactual `θ̄` under monotone (nonnegative, `θ ≤ Y`) outcomes.
//!
//! With `Z` the effective treatment and `L = Σ Z_i`,
//!
//! ```text
//! θ̂   = (1/L) Σ θ_i Z_i
//! σ̂   = N p(1-p) (1/L) Σ (θ_i - θ̂)² Z_i + Σ_ij θ_i θ_j 𝓔_ij / P_ij Z_i Z_j
//! σ̃   = the same with 𝓔_ij replaced by max(𝓔_ij, 0)
//! CI  = θ̂_Y + z_{1-α} √σ̃_Y / L
//! ```
//!
//! `σ̂` needs the unobserved `θ` and is only used in simulation. The
//! observable bound plugs in `θ = Y`, which maximizes the bound over
//! `[0, Y]` whenever the derivative condition holds.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::design::{EffectiveTreatment, ExposureDesign, Population};
use crate::exposure::{exact_pairwise, ExposureProfile};
use crate::{normal, Error, Result};

/// `θ_i = f_i(1, …, 1)`, the outcome every unit would have under full
/// treatment. Known only in simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualVector {
    theta: Vec<f64>,
}

impl CounterfactualVector {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        check_nonnegative(&theta)?;
        Ok(Self { theta })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// `θ̄`
    pub fn mean(&self) -> f64 {
        self.theta.iter().sum::<f64>() / self.theta.len() as f64
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.theta
    }
}

fn check_nonnegative(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
        Some(index) => Err(Error::NegativeValue {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

fn active_units(values: &[f64], z: &EffectiveTreatment) -> Result<Vec<usize>> {
    crate::design::check_len(z.len(), values.len())?;
    let active = z.active();
    if active.is_empty() {
        return Err(Error::NoEffectiveUnits);
    }
    Ok(active)
}

/// `(1/L) Σ values_i Z_i`.
pub fn point_estimate(values: &[f64], z: &EffectiveTreatment) -> Result<f64> {
    let active = active_units(values, z)?;
    Ok(active.iter().map(|&i| values[i]).sum::<f64>() / active.len() as f64)
}

/// The two pieces of the variance estimate, kept apart for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
struct VarianceParts {
    spread: f64,
    centered: f64,
}

impl VarianceParts {
    fn total(self) -> f64 {
        self.spread + self.centered
    }
}

fn variance_parts(
    values: &[f64],
    z: &EffectiveTreatment,
    profile: &ExposureProfile,
    clip: bool,
) -> Result<VarianceParts> {
    crate::design::check_len(profile.n(), values.len())?;
    let active = active_units(values, z)?;
    let n = profile.n() as f64;
    let p = profile.p();
    let l = active.len() as f64;
    let mean = active.iter().map(|&i| values[i]).sum::<f64>() / l;
    let spread = n * p * (1.0 - p) / l
        * active.iter().map(|&i| (values[i] - mean) * (values[i] - mean)).sum::<f64>();
    let mut centered = 0.0;
    for &a in &active {
        let mut row = 0.0;
        for &b in &active {
            let (pab, eab) = profile.joint_and_centered(a, b);
            let eab = if clip { eab.max(0.0) } else { eab };
            if eab == 0.0 || values[b] == 0.0 {
                continue;
            }
            if !(pab > 0.0) {
                return Err(Error::ZeroJointProbability { i: a, j: b });
            }
            row += values[b] * eab / pab;
        }
        centered += values[a] * row;
    }
    Ok(VarianceParts { spread, centered })
}

/// `σ̂`, the idealized estimate of `Var(T)` with `T = Σ (θ_i - θ̄) Z_i`.
///
/// Not clipped: with negative `𝓔` mass it can fall below zero.
pub fn sigma_hat(theta: &CounterfactualVector, z: &EffectiveTreatment, profile: &ExposureProfile) -> Result<f64> {
    variance_parts(theta.as_slice(), z, profile, false).map(VarianceParts::total)
}

/// `σ̂` for an arbitrary value vector (no sign requirement).
pub fn sigma_hat_values(values: &[f64], z: &EffectiveTreatment, profile: &ExposureProfile) -> Result<f64> {
    variance_parts(values, z, profile, false).map(VarianceParts::total)
}

/// `σ̃`, the conservative variance estimate with `𝓔` clipped at zero.
pub fn sigma_tilde(values: &[f64], z: &EffectiveTreatment, profile: &ExposureProfile) -> Result<f64> {
    check_nonnegative(values)?;
    variance_parts(values, z, profile, true).map(VarianceParts::total)
}

/// Which scale factor the validity condition uses.
///
/// The condition reads `1 - z θ̂_Y / √σ̃_Y · k N p(1-p) / L ≥ 0`.
/// `DerivativeBound` (`k = 1`) is what the gradient argument needs.
/// `Stated` (`k = 2`) is a stricter, more conservative variant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionRule {
    #[default]
    DerivativeBound,
    Stated,
}

impl ConditionRule {
    pub fn factor(self) -> f64 {
        match self {
            Self::DerivativeBound => 1.0,
            Self::Stated => 2.0,
        }
    }
}

/// Left-hand side of the validity condition.
pub fn condition_value(
    theta_hat_y: f64,
    sigma_tilde_y: f64,
    n: usize,
    p: f64,
    l: usize,
    z: f64,
    rule: ConditionRule,
) -> Result<f64> {
    if !(sigma_tilde_y > 0.0) {
        return Err(Error::DegenerateVariance {
            theta_hat: theta_hat_y,
        });
    }
    if l == 0 {
        return Err(Error::NoEffectiveUnits);
    }
    let scale = rule.factor() * n as f64 * p * (1.0 - p) / l as f64;
    Ok(1.0 - z * theta_hat_y / libm::sqrt(sigma_tilde_y) * scale)
}

/// Whether `θ = Y` is guaranteed to maximize the bound.
pub fn condition_check(
    theta_hat_y: f64,
    sigma_tilde_y: f64,
    n: usize,
    p: f64,
    l: usize,
    z: f64,
    rule: ConditionRule,
) -> Result<bool> {
    condition_value(theta_hat_y, sigma_tilde_y, n, p, l, z, rule).map(|v| v >= 0.0)
}

/// Large-variance fallback: `σ̃_Y / N ≥ c / (z² α)`. When it holds the
/// bound stays valid even if the derivative condition fails.
pub fn fallback_check(sigma_tilde_y: f64, n: usize, alpha: f64, c: f64) -> bool {
    let z = normal::upper_critical(alpha);
    sigma_tilde_y / n as f64 >= c / (z * z * alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CiSettings {
    pub alpha: f64,
    #[serde(default)]
    pub rule: ConditionRule,
    /// Variance floor `c` for the fallback check; `None` skips it.
    #[serde(default)]
    pub fallback_c: Option<f64>,
}

impl Default for CiSettings {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            rule: ConditionRule::default(),
            fallback_c: None,
        }
    }
}

impl CiSettings {
    pub fn with_alpha(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if let Some(c) = self.fallback_c {
            if !(c > 0.0) {
                return Err(Error::InvalidParameter(alloc::format!("c must be > 0, got {c}")));
            }
        }
        Ok(())
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

/// Result of one observable upper-bound computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneCiReport {
    pub theta_hat_y: f64,
    pub sigma_tilde_y: f64,
    pub condition_ok: bool,
    pub condition_value: f64,
    pub rule: ConditionRule,
    pub ci_upper: f64,
    pub alpha: f64,
    pub z: f64,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub fallback_ok: Option<bool>,
    pub p: f64,
    pub p_min: f64,
    pub overlap_degree: usize,
}

impl MonotoneCiReport {
    /// The bound carries a guarantee: the condition holds or the fallback
    /// applies.
    pub fn is_valid(&self) -> bool {
        self.condition_ok || self.fallback_ok == Some(true)
    }
}

/// Numerical floor under which `σ̃_Y` counts as zero.
pub fn degenerate_tolerance(values: &[f64], z: &EffectiveTreatment) -> f64 {
    let max = z
        .active()
        .iter()
        .map(|&i| values[i].abs())
        .fold(0.0, f64::max);
    1e-12 * values.len() as f64 * max * max
}

/// `CI^obs = θ̂_Y + z_{1-α} √σ̃_Y / L` for observed outcomes `y`.
///
/// The caller is responsible for the monotonicity assumption `0 ≤ θ ≤ Y`.
/// When the condition fails the bound is still computed and
/// `condition_ok = false`.
pub fn ci_obs(
    y: &[f64],
    z: &EffectiveTreatment,
    profile: &ExposureProfile,
    settings: &CiSettings,
) -> Result<MonotoneCiReport> {
    settings.validate()?;
    let theta_hat_y = point_estimate(y, z)?;
    let sigma_tilde_y = sigma_tilde(y, z, profile)?;
    if sigma_tilde_y <= degenerate_tolerance(y, z) {
        return Err(Error::DegenerateVariance {
            theta_hat: theta_hat_y,
        });
    }
    let zc = normal::upper_critical(settings.alpha);
    let l = z.count();
    let n = profile.n();
    let cond = condition_value(theta_hat_y, sigma_tilde_y, n, profile.p(), l, zc, settings.rule)?;
    Ok(MonotoneCiReport {
        theta_hat_y,
        sigma_tilde_y,
        condition_ok: cond >= 0.0,
        condition_value: cond,
        rule: settings.rule,
        ci_upper: theta_hat_y + zc * libm::sqrt(sigma_tilde_y) / l as f64,
        alpha: settings.alpha,
        z: zc,
        l,
        n,
        fallback_ok: settings
            .fallback_c
            .map(|c| fallback_check(sigma_tilde_y, n, settings.alpha, c)),
        p: profile.p(),
        p_min: profile.p_min(),
        overlap_degree: profile.overlap_degree(),
    })
}

/// [`ci_obs`] on a population's observed outcomes.
pub fn ci_obs_population(
    pop: &Population,
    z: &EffectiveTreatment,
    profile: &ExposureProfile,
    settings: &CiSettings,
) -> Result<MonotoneCiReport> {
    ci_obs(&pop.outcomes(), z, profile, settings)
}

/// `θ̂ + z_{1-α} √σ̂ / L` with the true `θ`; `σ̂` is clamped at zero.
pub fn ci_ideal(
    theta: &CounterfactualVector,
    z: &EffectiveTreatment,
    profile: &ExposureProfile,
    alpha: f64,
) -> Result<f64> {
    check_alpha(alpha)?;
    let theta_hat = point_estimate(theta.as_slice(), z)?;
    let s = sigma_hat(theta, z, profile)?.max(0.0);
    Ok(theta_hat + normal::upper_critical(alpha) * libm::sqrt(s) / z.count() as f64)
}

/// Lower bound for the mean zero-treatment counterfactual `ξ̄`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullControlReport {
    pub mean_enrollment: f64,
    pub lower_bound: f64,
    /// Upper-bound report on the complement `n_i - Y_i`.
    pub complement: MonotoneCiReport,
}

/// Apply the upper bound to `n_i - Y_i` and reflect: `mean(n) - CI^obs`.
pub fn full_control_lower_bound(
    pop: &Population,
    z: &EffectiveTreatment,
    profile: &ExposureProfile,
    settings: &CiSettings,
) -> Result<FullControlReport> {
    let enrollment = pop.enrollments()?;
    let complement: Vec<f64> = enrollment
        .iter()
        .zip(pop.outcomes())
        .map(|(n, y)| n - y)
        .collect();
    let report = ci_obs(&complement, z, profile, settings)?;
    let mean_enrollment = enrollment.iter().sum::<f64>() / enrollment.len() as f64;
    Ok(FullControlReport {
        mean_enrollment,
        lower_bound: mean_enrollment - report.ci_upper,
        complement: report,
    })
}

/// One `(d_min, d)` threshold configuration on k-NN neighborhoods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborhoodConfig {
    pub d_min: usize,
    pub d: usize,
}

impl NeighborhoodConfig {
    pub fn new(d_min: usize, d: usize) -> Self {
        Self { d_min, d }
    }

    pub fn label(&self) -> String {
        alloc::format!("({},{})", self.d_min, self.d)
    }

    pub fn design(&self, pop: &Population) -> Result<ExposureDesign> {
        ExposureDesign::knn_threshold(&pop.coords(), self.d_min, self.d, pop.rho()).map_err(|e| self.wrap(e))
    }

    pub(crate) fn wrap(&self, e: Error) -> Error {
        Error::Config {
            d_min: self.d_min,
            d: self.d,
            source: alloc::boxed::Box::new(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub config: NeighborhoodConfig,
    pub report: MonotoneCiReport,
}

/// Evaluate one configuration with the exact profile.
pub fn evaluate_config(pop: &Population, config: NeighborhoodConfig, settings: &CiSettings) -> Result<MonotoneCiReport> {
    let design = config.design(pop)?;
    let z = design.evaluate(&pop.treatments()).map_err(|e| config.wrap(e))?;
    let profile = exact_pairwise(&design);
    ci_obs(&pop.outcomes(), &z, &profile, settings).map_err(|e| config.wrap(e))
}

/// Evaluate every configuration at the Bonferroni level `α / m`.
pub fn bonferroni_scan(
    pop: &Population,
    configs: &[NeighborhoodConfig],
    settings: &CiSettings,
) -> Result<Vec<ScanEntry>> {
    if configs.is_empty() {
        return Err(Error::InvalidParameter("at least one configuration is required".into()));
    }
    let adjusted = CiSettings {
        alpha: settings.alpha / configs.len() as f64,
        ..*settings
    };
    configs
        .iter()
        .map(|&config| {
            evaluate_config(pop, config, &adjusted).map(|report| ScanEntry { config, report })
        })
        .collect()
}
