//! The four subcommands as pure functions from inputs to report values.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use interfere_core::contrast::{cat_from_counts, cat_interval, zcat_interval, ContrastReport};
use interfere_core::design::{knn_from_coords, ExposureDesign, ExposureMapping, NeighborhoodSet, Population};
use interfere_core::exposure::{brute_force_profile, exact_pairwise, ExposureProfile, ProfileMethod, MAX_ENUMERATION_UNITS};
use interfere_core::monotone::{ci_obs, full_control_lower_bound, CiSettings, FullControlReport, MonotoneCiReport};
use interfere_core::sim::{
    prepare_configs, run_replicate, synthetic_layout, tabulate, CoverageTable, LayoutKind, Scenario,
};
use serde::{Deserialize, Serialize};

use crate::config::{PMethod, RunConfig};
use crate::{io, parallel};

/// Invalid invocation detected after argument parsing (exit status 2).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// A design to evaluate and how to label it in reports.
struct LabeledDesign {
    label: String,
    d_min: Option<usize>,
    d: Option<usize>,
    design: ExposureDesign,
}

fn configured_designs(cfg: &RunConfig, pop: &Population) -> anyhow::Result<Vec<LabeledDesign>> {
    if !cfg.bonferroni.is_empty() {
        return cfg
            .bonferroni
            .iter()
            .map(|c| {
                Ok(LabeledDesign {
                    label: c.label(),
                    d_min: Some(c.d_min),
                    d: Some(c.d),
                    design: c.design(pop)?,
                })
            })
            .collect();
    }
    let (nbhd, d) = match &cfg.neighborhood {
        None => (NeighborhoodSet::singletons(pop.len()), Some(1)),
        Some(spec) => match (&spec.adjacency, spec.d) {
            (Some(path), _) => (io::load_adjacency(path, pop)?, None),
            (None, Some(d)) => (knn_from_coords(&pop.coords(), d)?, Some(d)),
            (None, None) => bail!("neighborhood needs `d` or `adjacency`"),
        },
    };
    let d_min = match cfg.mapping {
        ExposureMapping::Threshold { d_min } => Some(d_min),
        ExposureMapping::Product => None,
    };
    let label = match (cfg.mapping, d) {
        (ExposureMapping::Threshold { d_min }, Some(d)) => format!("({d_min},{d})"),
        (ExposureMapping::Threshold { d_min }, None) => format!("threshold {d_min}, adjacency"),
        (ExposureMapping::Product, Some(d)) => format!("product, d={d}"),
        (ExposureMapping::Product, None) => "product, adjacency".to_string(),
    };
    let design = ExposureDesign::new(nbhd, cfg.mapping, pop.rho())?;
    Ok(vec![LabeledDesign { label, d_min, d, design }])
}

fn build_profile(cfg: &RunConfig, design: &ExposureDesign, pool: &rayon::ThreadPool) -> anyhow::Result<ExposureProfile> {
    Ok(match cfg.p_method {
        PMethod::Exact => exact_pairwise(design),
        PMethod::Mc { samples, seed } => parallel::mc_pairwise_parallel(pool, design, samples, seed).to_profile()?,
    })
}

fn export_matrices(dir: &Path, label: &str, profile: &ExposureProfile) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let stem: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect::<String>()
        .trim_matches('_')
        .to_string();
    for (name, m) in [("P", profile.dense_joint()), ("R", profile.dense_r()), ("E", profile.dense_centered())] {
        let path = dir.join(format!("{name}_{stem}.csv"));
        let file = std::fs::File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
        io::write_matrix_csv(std::io::BufWriter::new(file), &m)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateEntry {
    pub label: String,
    pub d_min: Option<usize>,
    pub d: Option<usize>,
    pub p_method: ProfileMethod,
    pub report: MonotoneCiReport,
    /// `[0, CI^obs]`
    pub confidence_set: [f64; 2],
    pub valid: bool,
    pub overlap_within_cap: Option<bool>,
    pub outcomes_within_bound: Option<bool>,
    pub full_control: Option<FullControlReport>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateOutput {
    pub n: usize,
    pub alpha: f64,
    pub alpha_per_config: f64,
    pub bonferroni: bool,
    pub entries: Vec<EstimateEntry>,
}

impl EstimateOutput {
    pub fn all_valid(&self) -> bool {
        self.entries.iter().all(|e| e.valid)
    }
}

pub struct EstimateOptions<'a> {
    pub full_control: bool,
    pub export_dir: Option<&'a Path>,
}

pub fn estimate(cfg: &RunConfig, pop: &Population, opts: &EstimateOptions, pool: &rayon::ThreadPool) -> anyhow::Result<EstimateOutput> {
    let designs = configured_designs(cfg, pop)?;
    let bonferroni = designs.len() > 1;
    let settings = CiSettings {
        alpha: cfg.alpha / designs.len() as f64,
        ..cfg.ci_settings()
    };
    let outcomes = pop.outcomes();
    let treatments = pop.treatments();
    let mut entries = Vec::with_capacity(designs.len());
    for LabeledDesign { label, d_min, d, design } in designs {
        let ctx = || format!("configuration {label}");
        let profile = build_profile(cfg, &design, pool).with_context(ctx)?;
        if let Some(dir) = opts.export_dir {
            export_matrices(dir, &label, &profile)?;
        }
        let z = design.evaluate(&treatments).with_context(ctx)?;
        let report = ci_obs(&outcomes, &z, &profile, &settings).with_context(ctx)?;
        let full_control = if opts.full_control {
            Some(full_control_lower_bound(pop, &z, &profile, &settings).with_context(ctx)?)
        } else {
            None
        };
        let (overlap_within_cap, outcomes_within_bound) = match &cfg.diagnostics {
            Some(diag) => diag.check(&profile, &outcomes),
            None => (None, None),
        };
        let mut notes = Vec::new();
        if design.neighborhoods().size() == 1 {
            notes.push("singleton neighborhoods: spatial information is ignored".to_string());
        }
        if !report.condition_ok {
            notes.push(if report.fallback_ok == Some(true) {
                "condition failed, but the large-variance fallback keeps the bound valid".to_string()
            } else {
                "condition failed: the bound carries no coverage guarantee".to_string()
            });
        }
        entries.push(EstimateEntry {
            label,
            d_min,
            d,
            p_method: profile.method(),
            confidence_set: [0.0, report.ci_upper],
            valid: report.is_valid(),
            report,
            overlap_within_cap,
            outcomes_within_bound,
            full_control,
            notes,
        });
    }
    Ok(EstimateOutput {
        n: pop.len(),
        alpha: cfg.alpha,
        alpha_per_config: settings.alpha,
        bonferroni,
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastOutput {
    pub cat: ContrastReport,
    pub zcat: Option<ContrastReport>,
    pub notes: Vec<String>,
}

pub enum ContrastInput<'a> {
    Units(&'a Population),
    Counts(&'a Path),
}

pub fn contrast(cfg: &RunConfig, input: ContrastInput, pool: &rayon::ThreadPool) -> anyhow::Result<ContrastOutput> {
    let mut notes = vec![
        "CAT bounds the treated-minus-control contrast attributable to treatment; it does not say whether treated units gained or control units lost".to_string(),
        "CAT assumes treatment was assigned by sampling without replacement".to_string(),
    ];
    let (cat, zcat) = match input {
        ContrastInput::Counts(path) => {
            let (t, c) = io::load_counts(path)?;
            (cat_from_counts(t, c, cfg.alpha)?, None)
        }
        ContrastInput::Units(pop) => {
            let y = pop.outcomes();
            let cat = cat_interval(&pop.treatments(), &y, cfg.alpha)?;
            let zcat = match cfg.neighborhood {
                Some(_) => {
                    let designs = configured_designs(&RunConfig { bonferroni: Vec::new(), ..cfg.clone() }, pop)?;
                    let design = &designs[0].design;
                    let profile = build_profile(cfg, design, pool)?;
                    let z = design.evaluate(&pop.treatments())?;
                    notes.push(
                        "ZCAT assumes Bernoulli assignment, a common exposure probability p, and enough spread in the full-control outcomes; none of these is checked"
                            .to_string(),
                    );
                    Some(zcat_interval(&y, &z, &profile, cfg.alpha).context("ZCAT")?)
                }
                None => None,
            };
            (cat, zcat)
        }
    };
    Ok(ContrastOutput { cat, zcat, notes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateOutput {
    pub layout: LayoutKind,
    pub layout_split: Option<(usize, usize)>,
    pub tables: Vec<CoverageTable>,
}

pub fn simulate(cfg: &RunConfig, pool: &rayon::ThreadPool) -> anyhow::Result<SimulateOutput> {
    let sim = &cfg.simulation;
    if sim.replicates == 0 {
        return Err(UsageError("replicates must be at least 1".into()).into());
    }
    if sim.configs.is_empty() || sim.scenarios.is_empty() {
        return Err(UsageError("simulation needs at least one scenario and one configuration".into()).into());
    }
    let params = interfere_core::sim::ScenarioParams { rho: cfg.rho, ..sim.params };
    let layout = synthetic_layout(sim.layout, sim.n, sim.layout_seed)?;
    let prepared = prepare_configs(&layout.coords, &sim.configs, params.rho)?;
    let settings = cfg.ci_settings();
    let mut tables = Vec::new();
    for &kind in &sim.scenarios {
        let scenario = Scenario::new(kind, layout.coords.clone(), params, sim.seed)?;
        let outcomes = parallel::map_indexed(pool, sim.replicates, |i| run_replicate(&scenario, &prepared, i as u64, &settings))
            .with_context(|| format!("scenario {kind:?}"))?;
        tables.push(tabulate(&scenario, &sim.configs, &settings, &outcomes));
    }
    Ok(SimulateOutput {
        layout: sim.layout,
        layout_split: layout.split,
        tables,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub max_abs_diff: f64,
    /// Largest `|P_ij - p²|` over pairs with disjoint neighborhoods.
    pub max_disjoint_deviation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEntry {
    pub i: usize,
    pub j: usize,
    pub exact: f64,
    pub mc: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McCheck {
    pub samples: u64,
    pub seed: u64,
    pub max_abs_diff: f64,
    /// Largest `|P_mc - P_exact| / SE`.
    pub max_abs_z: f64,
    pub within_4se: usize,
    pub tracked: usize,
    pub entries: Vec<McEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbcheckOutput {
    pub label: String,
    pub n: usize,
    pub p: f64,
    pub p_min: f64,
    pub overlap_degree: usize,
    pub oracle: Option<OracleCheck>,
    pub mc: Option<McCheck>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMode {
    /// Enumerate when `N` is small enough.
    Auto,
    Require,
    Skip,
}

pub struct ProbcheckOptions<'a> {
    pub oracle: OracleMode,
    /// `(samples, seed)`; falls back to the configured MC method.
    pub mc: Option<(u64, u64)>,
    pub export_dir: Option<&'a Path>,
}

pub fn probcheck(cfg: &RunConfig, pop: &Population, opts: &ProbcheckOptions, pool: &rayon::ThreadPool) -> anyhow::Result<ProbcheckOutput> {
    let designs = configured_designs(&RunConfig { bonferroni: Vec::new(), ..cfg.clone() }, pop)?;
    let LabeledDesign { label, design, .. } = designs.into_iter().next().expect("one design");
    let n = design.len();
    let exact = exact_pairwise(&design);
    if let Some(dir) = opts.export_dir {
        export_matrices(dir, &label, &exact)?;
    }
    let run_oracle = match opts.oracle {
        OracleMode::Require if n > MAX_ENUMERATION_UNITS => {
            return Err(UsageError(format!("the enumeration oracle needs N <= {MAX_ENUMERATION_UNITS}, got N = {n}")).into())
        }
        OracleMode::Require => true,
        OracleMode::Auto => n <= MAX_ENUMERATION_UNITS,
        OracleMode::Skip => false,
    };
    let oracle = if run_oracle {
        let o = brute_force_profile(&design)?;
        let max_abs_diff = exact.dense_joint().max_abs_diff(&o.dense_joint());
        let p2 = o.p() * o.p();
        let nbhd = design.neighborhoods();
        let max_disjoint_deviation = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && !nbhd.intersects(i, j))
            .map(|(i, j)| (o.joint(i, j) - p2).abs())
            .reduce(f64::max);
        Some(OracleCheck { max_abs_diff, max_disjoint_deviation })
    } else {
        None
    };
    let mc_params = opts.mc.or(match cfg.p_method {
        PMethod::Mc { samples, seed } => Some((samples, seed)),
        PMethod::Exact => None,
    });
    let mc = match mc_params {
        Some((samples, seed)) => {
            if samples == 0 {
                return Err(UsageError("Monte Carlo sample count must be positive".into()).into());
            }
            let est = parallel::mc_pairwise_parallel(pool, &design, samples, seed);
            let entries: Vec<McEntry> = est
                .tracked_pairs()
                .into_iter()
                .map(|(i, j)| {
                    let pe = exact.joint(i, j);
                    McEntry {
                        i,
                        j,
                        exact: pe,
                        mc: est.estimate(i, j).expect("tracked"),
                        se: (pe * (1.0 - pe) / samples as f64).sqrt(),
                    }
                })
                .collect();
            let z = |e: &McEntry| {
                let diff = (e.mc - e.exact).abs();
                if e.se > 0.0 {
                    diff / e.se
                } else if diff == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            };
            Some(McCheck {
                samples,
                seed,
                max_abs_diff: entries.iter().map(|e| (e.mc - e.exact).abs()).fold(0.0, f64::max),
                max_abs_z: entries.iter().map(z).fold(0.0, f64::max),
                within_4se: entries.iter().filter(|e| z(e) <= 4.0).count(),
                tracked: entries.len(),
                entries,
            })
        }
        None => None,
    };
    Ok(ProbcheckOutput {
        label,
        n,
        p: exact.p(),
        p_min: exact.p_min(),
        overlap_degree: exact.overlap_degree(),
        oracle,
        mc,
    })
}

pub fn load_population(path: &Path, cfg: &RunConfig) -> anyhow::Result<Population> {
    io::load_units(path, cfg.rho).with_context(|| format!("loading {}", path.display()))
}

pub fn require_data(data: Option<&PathBuf>) -> anyhow::Result<&Path> {
    data.map(PathBuf::as_path)
        .ok_or_else(|| UsageError("--data PATH is required for this command".into()).into())
}
