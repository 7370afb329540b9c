//! Command-line front end for configured locality experiments.
//!
//! `run` executes one experiment described by a TOML file (or a bundled
//! example), writes a CSV of measured points and a JSON summary of the
//! verdicts into the output directory, and prints one PASS/FAIL line.
//! `validate` checks a configuration without running it, and
//! `list-examples` shows the bundled configurations.
//!
//! Exit status: 0 when every check passed, 1 when the run completed but a
//! check failed, 2 on configuration or runtime errors.

mod config;
mod experiments;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::experiments::Overrides;

/// Bundled example configurations compiled into the binary.
const EXAMPLES: &[(&str, &str)] = &[
    (
        "heisenberg_chain_n10_leakage",
        include_str!("../configs/heisenberg_chain_n10_leakage.toml"),
    ),
    (
        "heisenberg_chain_n9_truncation",
        include_str!("../configs/heisenberg_chain_n9_truncation.toml"),
    ),
    (
        "heisenberg_chain_n10_covariance",
        include_str!("../configs/heisenberg_chain_n10_covariance.toml"),
    ),
    (
        "heisenberg_chain_n5_trotter",
        include_str!("../configs/heisenberg_chain_n5_trotter.toml"),
    ),
    (
        "xy_chain_n5_duality",
        include_str!("../configs/xy_chain_n5_duality.toml"),
    ),
    (
        "random_chain_n3_cptp",
        include_str!("../configs/random_chain_n3_cptp.toml"),
    ),
    (
        "jw_identity_suite_n5",
        include_str!("../configs/jw_identity_suite_n5.toml"),
    ),
    (
        "hopping_chain_n8_fermionic_leakage",
        include_str!("../configs/hopping_chain_n8_fermionic_leakage.toml"),
    ),
];

#[derive(Debug, Parser)]
#[command(
    name = "conelab",
    version,
    about = "Locality experiments for local Lindblad dynamics on spin and fermionic chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment and write its CSV and JSON reports.
    Run(RunArgs),
    /// Parse and validate a configuration without running it.
    Validate(ValidateArgs),
    /// List the bundled example configurations.
    ListExamples,
}

/// Where the configuration comes from: a file or a bundled example.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct SourceArgs {
    /// Path to a TOML experiment configuration.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Name of a bundled example configuration.
    #[arg(long, value_name = "NAME")]
    example: Option<String>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Directory that receives the CSV and JSON reports.
    #[arg(long, value_name = "DIR", default_value = "runs")]
    out_dir: PathBuf,
    /// Number of worker threads; 1 forces the sequential path.
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
    /// Replaces the seed of seeded models and experiments.
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
    /// Multiplies the integrator tolerance from the configuration.
    #[arg(long, value_name = "FACTOR", default_value_t = 1.0)]
    tolerance_scale: f64,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[command(flatten)]
    source: SourceArgs,
}

fn example_text(name: &str) -> anyhow::Result<&'static str> {
    match EXAMPLES.iter().find(|(n, _)| *n == name) {
        Some((_, text)) => Ok(text),
        None => {
            let names: Vec<&str> = EXAMPLES.iter().map(|(n, _)| *n).collect();
            bail!("unknown example {name}; available: {}", names.join(", "));
        }
    }
}

fn load(source: &SourceArgs) -> anyhow::Result<ExperimentConfig> {
    let text = match (&source.config, &source.example) {
        (Some(path), None) => std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?,
        (None, Some(name)) => example_text(name)?.to_string(),
        _ => bail!("give exactly one of --config or --example"),
    };
    config::parse(&text)
}

fn cmd_run(args: RunArgs) -> anyhow::Result<bool> {
    if let Some(jobs) = args.jobs {
        conelab::par::set_worker_count(jobs)?;
    }
    if !(args.tolerance_scale.is_finite() && args.tolerance_scale > 0.0) {
        bail!("--tolerance-scale must be positive and finite");
    }
    let config = load(&args.source)?;
    eprintln!("running {} ({})", config.name, config.experiment.kind_name());
    let overrides = Overrides { seed: args.seed, tolerance_scale: args.tolerance_scale };
    let outcome = experiments::run(&config, &args.out_dir, overrides)?;
    let verdict = if outcome.passed { "PASS" } else { "FAIL" };
    println!(
        "[{verdict}] {}: {}/{} checks passed ({}, {})",
        config.name,
        outcome.checks_passed,
        outcome.checks_total,
        outcome.data_path.display(),
        outcome.summary_path.display(),
    );
    Ok(outcome.passed)
}

fn cmd_validate(args: ValidateArgs) -> anyhow::Result<()> {
    let config = load(&args.source)?;
    config::validate(&config)?;
    println!("ok: {} ({})", config.name, config.experiment.kind_name());
    Ok(())
}

fn cmd_list_examples() -> anyhow::Result<()> {
    for (name, text) in EXAMPLES {
        let config = config::parse(text)
            .with_context(|| format!("bundled example {name} is invalid"))?;
        println!("{name}  [{}]  {}", config.experiment.kind_name(), config.description);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Validate(args) => cmd_validate(args).map(|()| true),
        Command::ListExamples => cmd_list_examples().map(|()| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
