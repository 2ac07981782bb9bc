//! Command-line front end: `run`, `compare` and `trace`.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use resilience_core::algorithms::{Algorithm, Budget};
use resilience_core::harness::{self, ExperimentConfig};
use resilience_core::sim::ScenarioTag;

#[derive(Parser)]
#[command(name = "resilience", version, about = "Hexapod damage-recovery experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (scenario, algorithm, seed) cell and write results.
    Run(RunArgs),
    /// Build ratio, difference and p-value tables from a results directory.
    Compare {
        /// Directory holding result.json files.
        results: PathBuf,
        /// Where to write the tables; defaults to <results>/report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw the reference gait and the final controller of one run as SVG.
    Trace {
        /// A result.json file.
        result: PathBuf,
        /// Defaults to trace.svg next to the result file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Damage scenarios, e.g. `B,E`.
    #[arg(long, value_delimiter = ',')]
    scenario: Vec<ScenarioTag>,
    #[arg(long, value_delimiter = ',')]
    algorithm: Vec<Algorithm>,
    /// Seeds as a list (`0,1,2`) or a half-open range (`0..5`).
    #[arg(long)]
    seeds: Option<String>,
    /// Population 100, 1000 generations, a transfer every 40 generations.
    #[arg(long)]
    full_scale: bool,
    #[arg(long)]
    budget_tests: Option<usize>,
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    pop: Option<usize>,
    /// Generations between transfers; 0 derives it from the budget.
    #[arg(long)]
    transfer_period: Option<usize>,
    #[arg(long)]
    model_generations: Option<usize>,
    #[arg(long)]
    noise_multiplicative: Option<f64>,
    #[arg(long)]
    noise_additive: Option<f64>,
    #[arg(long)]
    noise_outlier_probability: Option<f64>,
    #[arg(long)]
    noise_outlier_scale: Option<f64>,
    #[arg(long)]
    noise_accel: Option<f64>,
    #[arg(long)]
    noise_seed: Option<u64>,
    /// Disable measurement noise.
    #[arg(long)]
    noiseless: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (the RESILIENCE_WORKERS variable takes precedence).
    #[arg(long)]
    workers: Option<usize>,
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = text.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        if a >= b {
            bail!("empty seed range {text}");
        }
        return Ok((a..b).collect());
    }
    text.split(',')
        .map(|s| s.trim().parse::<u64>().with_context(|| format!("bad seed `{s}`")))
        .collect()
}

fn build_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut c = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if args.full_scale {
        c.budget = Budget::full();
    }
    if !args.scenario.is_empty() {
        c.scenarios.clone_from(&args.scenario);
    }
    if !args.algorithm.is_empty() {
        c.algorithms.clone_from(&args.algorithm);
    }
    if let Some(s) = &args.seeds {
        c.seeds = parse_seeds(s)?;
    }
    let b = &mut c.budget;
    for (slot, value) in [
        (&mut b.tests, args.budget_tests),
        (&mut b.generations, args.generations),
        (&mut b.population, args.pop),
        (&mut b.transfer_period, args.transfer_period),
        (&mut b.model_generations, args.model_generations),
    ] {
        if let Some(v) = value {
            *slot = v;
        }
    }
    if args.noiseless {
        c.noise = resilience_core::measurement::NoiseModel {
            seed: c.noise.seed,
            ..resilience_core::measurement::NoiseModel::noiseless()
        };
    }
    let n = &mut c.noise;
    for (slot, value) in [
        (&mut n.multiplicative_std, args.noise_multiplicative),
        (&mut n.additive_std, args.noise_additive),
        (&mut n.outlier_probability, args.noise_outlier_probability),
        (&mut n.outlier_scale, args.noise_outlier_scale),
        (&mut n.accel_std, args.noise_accel),
    ] {
        if let Some(v) = value {
            *slot = v;
        }
    }
    if let Some(s) = args.noise_seed {
        n.seed = s;
    }
    if let Some(out) = &args.out {
        c.output.clone_from(out);
    }
    if args.workers.is_some() {
        c.workers = args.workers;
    }
    c.validate()?;
    Ok(c)
}

fn run(args: &RunArgs) -> Result<ExitCode> {
    let config = build_config(args)?;
    let cells = harness::cells(&config).len();
    eprintln!(
        "running {cells} cells into {} (config {})",
        config.output.display(),
        &config.hash()[..12]
    );
    let summary = harness::run(&config)?;
    eprintln!("{} of {cells} cells completed", summary.completed.len());
    for f in &summary.failures {
        eprintln!("failed {}: {}", f.cell, f.error);
    }
    Ok(if summary.success() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run(args) => run(&args),
        Command::Compare { results, out } => {
            let outcome = harness::compare(&results)?;
            let dir = out.unwrap_or_else(|| results.join("report"));
            outcome.write(&dir)?;
            print!("{}", outcome.report.text());
            for m in &outcome.missing {
                eprintln!("missing: {m}");
            }
            eprintln!("tables written to {}", dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Trace { result, out } => {
            let svg = harness::trace(&result)?;
            let path = out.unwrap_or_else(|| result.with_file_name("trace.svg"));
            std::fs::write(&path, svg).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_forms() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("4, 7").unwrap(), vec![4, 7]);
        assert!(parse_seeds("3..3").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn flags_override_defaults() {
        let cli = Cli::parse_from([
            "resilience", "run", "--scenario", "B,E", "--algorithm", "t-resilience", "--seeds", "0..2", "--pop", "20",
            "--noise-additive", "0.02", "--out", "x",
        ]);
        let Command::Run(args) = cli.command else { panic!() };
        let c = build_config(&args).unwrap();
        assert_eq!(c.scenarios, vec![ScenarioTag::B, ScenarioTag::E]);
        assert_eq!(c.algorithms, vec![Algorithm::TResilience]);
        assert_eq!(c.seeds, vec![0, 1]);
        assert_eq!(c.budget.population, 20);
        assert_eq!(c.noise.additive_std, 0.02);
        assert_eq!(c.output, PathBuf::from("x"));
    }

    #[test]
    fn full_scale_and_validation() {
        let Command::Run(args) = Cli::parse_from(["resilience", "run", "--full-scale"]).command else { panic!() };
        assert_eq!(build_config(&args).unwrap().budget, Budget::full());
        let Command::Run(args) = Cli::parse_from(["resilience", "run", "--pop", "7"]).command else { panic!() };
        assert!(build_config(&args).is_err());
    }
}
