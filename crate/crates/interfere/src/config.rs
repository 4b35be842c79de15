//! JSON run configuration. Unknown keys are rejected at every level.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use interfere_core::design::ExposureMapping;
use interfere_core::exposure::DiagnosticsConfig;
use interfere_core::monotone::{CiSettings, ConditionRule, NeighborhoodConfig};
use interfere_core::sim::{LayoutKind, ScenarioKind, ScenarioParams};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_mapping")]
    pub mapping: ExposureMapping,
    /// Absent means singleton neighborhoods for `estimate` and no ZCAT for
    /// `contrast`.
    #[serde(default)]
    pub neighborhood: Option<NeighborhoodSpec>,
    /// `(d_min, d)` k-NN threshold configurations evaluated at `α / m`.
    #[serde(default)]
    pub bonferroni: Vec<NeighborhoodConfig>,
    #[serde(default)]
    pub p_method: PMethod,
    #[serde(default)]
    pub diagnostics: Option<DiagnosticsConfig>,
    #[serde(default)]
    pub condition_rule: ConditionRule,
    #[serde(default)]
    pub simulation: SimulationConfig,
}

fn default_rho() -> f64 {
    0.5
}

fn default_alpha() -> f64 {
    0.05
}

fn default_mapping() -> ExposureMapping {
    ExposureMapping::Threshold { d_min: 1 }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            rho: default_rho(),
            alpha: default_alpha(),
            mapping: default_mapping(),
            neighborhood: None,
            bonferroni: Vec::new(),
            p_method: PMethod::default(),
            diagnostics: None,
            condition_rule: ConditionRule::default(),
            simulation: SimulationConfig::default(),
        }
    }
}

/// Either k-NN neighborhoods of size `d` or an explicit adjacency file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeighborhoodSpec {
    #[serde(default)]
    pub d: Option<usize>,
    /// Resolved relative to the configuration file.
    #[serde(default)]
    pub adjacency: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PMethod {
    #[default]
    Exact,
    Mc { samples: u64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub scenarios: Vec<ScenarioKind>,
    pub layout: LayoutKind,
    pub n: usize,
    pub layout_seed: u64,
    pub seed: u64,
    pub replicates: usize,
    pub configs: Vec<NeighborhoodConfig>,
    pub params: ScenarioParams,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            scenarios: ScenarioKind::ALL.to_vec(),
            layout: LayoutKind::UniformSquare,
            n: 49,
            layout_seed: 1,
            seed: 2024,
            replicates: 1000,
            configs: [(1, 1), (2, 3), (3, 6), (4, 10), (5, 10)]
                .into_iter()
                .map(|(a, b)| NeighborhoodConfig::new(a, b))
                .collect(),
            params: ScenarioParams::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let cfg: Self = serde_json::from_str(text).context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load and validate; relative adjacency paths are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg = Self::from_json(&text).with_context(|| format!("in {}", path.display()))?;
        if let Some(adj) = cfg.neighborhood.as_mut().and_then(|n| n.adjacency.as_mut()) {
            if adj.is_relative() {
                if let Some(dir) = path.parent() {
                    *adj = dir.join(&*adj);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            bail!("rho must lie in (0, 1), got {}", self.rho);
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            bail!("alpha must lie in (0, 1), got {}", self.alpha);
        }
        if let Some(n) = &self.neighborhood {
            match (n.d, &n.adjacency) {
                (Some(0), _) => bail!("neighborhood.d must be at least 1"),
                (Some(_), Some(_)) => bail!("neighborhood takes either `d` or `adjacency`, not both"),
                (None, None) => bail!("neighborhood needs `d` or `adjacency`"),
                _ => {}
            }
        }
        if let PMethod::Mc { samples: 0, .. } = self.p_method {
            bail!("p_method.mc.samples must be positive");
        }
        if let Some(d) = &self.diagnostics {
            d.validate()?;
        }
        for c in &self.bonferroni {
            if c.d_min == 0 || c.d_min > c.d {
                bail!("bonferroni configuration {} needs 1 <= d_min <= d", c.label());
            }
        }
        Ok(())
    }

    pub fn ci_settings(&self) -> CiSettings {
        CiSettings {
            alpha: self.alpha,
            rule: self.condition_rule,
            fallback_c: self.diagnostics.map(|d| d.c),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_from_empty_document() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn full_document() {
        let cfg = RunConfig::from_json(
            r#"{
                "rho": 0.4, "alpha": 0.1,
                "mapping": {"kind": "threshold", "d_min": 2},
                "neighborhood": {"d": 3},
                "bonferroni": [{"d_min": 2, "d": 3}, {"d_min": 3, "d": 6}],
                "p_method": {"mc": {"samples": 1000, "seed": 7}},
                "diagnostics": {"c": 1.0, "B": 100.0, "D_cap": 6},
                "condition_rule": "stated",
                "simulation": {"scenarios": ["adversarial"], "replicates": 10, "layout": "two_cluster"}
            }"#,
        )
        .unwrap();
        assert_eq!(cfg.p_method, PMethod::Mc { samples: 1000, seed: 7 });
        assert_eq!(cfg.ci_settings().fallback_c, Some(1.0));
        assert_eq!(cfg.simulation.scenarios, vec![ScenarioKind::Adversarial]);
        assert_eq!(cfg.simulation.n, 49);
        let product = RunConfig::from_json(r#"{"mapping": {"kind": "product"}, "p_method": "exact"}"#).unwrap();
        assert_eq!(product.mapping, ExposureMapping::Product);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(RunConfig::from_json(r#"{"rhoo": 0.5}"#).is_err());
        assert!(RunConfig::from_json(r#"{"neighborhood": {"d": 3, "k": 1}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"simulation": {"reps": 3}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"rho": 1.5}"#).is_err());
        assert!(RunConfig::from_json(r#"{"neighborhood": {}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"bonferroni": [{"d_min": 4, "d": 3}]}"#).is_err());
        assert!(RunConfig::from_json(r#"{"diagnostics": {"c": 0}}"#).is_err());
    }
}
