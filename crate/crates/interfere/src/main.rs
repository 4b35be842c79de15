use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use interfere::commands::{self, ContrastInput, EstimateOptions, OracleMode, ProbcheckOptions, UsageError};
use interfere::config::{PMethod, RunConfig};
use interfere::io::LoadError;
use interfere::parallel;
use interfere::report::{Format, Output};

/// Upper confidence bounds and contrasts for experiments with interference.
#[derive(Parser)]
#[command(name = "interfere", version)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Unit table (CSV), or arm counts with `contrast --count-mode`.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Also write the report to DIR/<command>.<ext>.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override the Monte Carlo and simulation seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the significance level.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true, value_enum, default_value = "text")]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One-sided upper bound on the mean outcome under full control.
    Estimate {
        /// Also bound the full-control mean from below (needs `enrollment`).
        #[arg(long)]
        full_control: bool,
        /// Write P, R and E as headerless CSV matrices into DIR.
        #[arg(long, value_name = "DIR")]
        export_matrices: Option<PathBuf>,
    },
    /// Intervals for the contrast attributable to treatment.
    Contrast {
        /// Read `arm,total,successes` rows instead of a unit table.
        #[arg(long)]
        count_mode: bool,
    },
    /// Coverage study on synthetic populations.
    Simulate {
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Check exposure probabilities against enumeration and Monte Carlo.
    Probcheck {
        /// Require the enumeration oracle (fails when N > 20).
        #[arg(long, conflicts_with = "no_oracle")]
        oracle: bool,
        #[arg(long)]
        no_oracle: bool,
        /// Monte Carlo sample count.
        #[arg(long)]
        mc_samples: Option<u64>,
        #[arg(long, value_name = "DIR")]
        export_matrices: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e.chain().any(|c| c.is::<UsageError>() || c.is::<LoadError>());
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(|e| UsageError(format!("{e:#}")))?,
        None => RunConfig::default(),
    };
    if let Some(alpha) = cli.alpha {
        cfg.alpha = alpha;
    }
    if let Some(seed) = cli.seed {
        cfg.simulation.seed = seed;
        if let PMethod::Mc { samples, .. } = cfg.p_method {
            cfg.p_method = PMethod::Mc { samples, seed };
        }
    }
    cfg.validate().map_err(|e| UsageError(format!("{e:#}")))?;
    Ok(cfg)
}

/// `Ok(false)` means a report was produced but some bound is not valid.
fn run(cli: &Cli) -> anyhow::Result<bool> {
    let mut cfg = load_config(cli)?;
    let pool = parallel::pool()?;
    let (name, output, ok) = match &cli.command {
        Command::Estimate { full_control, export_matrices } => {
            let pop = commands::load_population(commands::require_data(cli.data.as_ref())?, &cfg)?;
            let opts = EstimateOptions {
                full_control: *full_control,
                export_dir: export_matrices.as_deref(),
            };
            let out = commands::estimate(&cfg, &pop, &opts, &pool)?;
            let ok = out.all_valid();
            ("estimate", Output::Estimate(out), ok)
        }
        Command::Contrast { count_mode } => {
            let data = commands::require_data(cli.data.as_ref())?;
            let out = if *count_mode {
                commands::contrast(&cfg, ContrastInput::Counts(data), &pool)?
            } else {
                let pop = commands::load_population(data, &cfg)?;
                commands::contrast(&cfg, ContrastInput::Units(&pop), &pool)?
            };
            ("contrast", Output::Contrast(out), true)
        }
        Command::Simulate { replicates } => {
            if let Some(r) = replicates {
                cfg.simulation.replicates = *r;
            }
            ("simulate", Output::Simulate(commands::simulate(&cfg, &pool)?), true)
        }
        Command::Probcheck { oracle, no_oracle, mc_samples, export_matrices } => {
            let pop = commands::load_population(commands::require_data(cli.data.as_ref())?, &cfg)?;
            let mode = match (oracle, no_oracle) {
                (true, _) => OracleMode::Require,
                (_, true) => OracleMode::Skip,
                _ => OracleMode::Auto,
            };
            let mc_seed = match cfg.p_method {
                PMethod::Mc { seed, .. } => seed,
                PMethod::Exact => cli.seed.unwrap_or(cfg.simulation.seed),
            };
            let opts = ProbcheckOptions {
                oracle: mode,
                mc: mc_samples.map(|s| (s, mc_seed)),
                export_dir: export_matrices.as_deref(),
            };
            ("probcheck", Output::Probcheck(commands::probcheck(&cfg, &pop, &opts, &pool)?), true)
        }
    };
    let text = output.render(cli.format)?;
    print!("{text}");
    if let Some(dir) = &cli.out {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        for format in [Format::Json, Format::Text, Format::Csv] {
            let path = dir.join(format!("{name}.{}", format.extension()));
            std::fs::write(&path, output.render(format)?).with_context(|| format!("cannot write {}", path.display()))?;
        }
    }
    Ok(ok)
}
