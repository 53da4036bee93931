use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adp_lab::config::{Experiment, ExperimentConfig};
use adp_lab::{checks, output, runs};
use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adp-lab", version, about = "Analytic deep prior experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Overrides `out_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// ADP descent against Tikhonov on an integration preset.
    Figure1(ExperimentArgs),
    /// All methods on every cell of a preset.
    Grid(ExperimentArgs),
    /// IFT and DIP from perturbed initial operators.
    Initvals(ExperimentArgs),
    /// Quick randomized checks of the solvers.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    /// Preset id: all, integration, convolution or <operator>-<truth>.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base config; the experiment kind is taken from the subcommand.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

fn default_out(cfg: &ExperimentConfig) -> PathBuf {
    Path::new("out").join(cfg.experiment.name())
}

fn execute(cfg: &ExperimentConfig, out: Option<PathBuf>) -> Result<()> {
    let dir = out
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| default_out(cfg));
    let record = runs::run(cfg)?;
    output::write_run(&record, &dir)?;
    let failures: usize = record.cells.iter().map(|c| c.failures.len()).sum();
    println!(
        "{}: {} cell(s) written to {}",
        cfg.experiment.name(),
        record.cells.len(),
        dir.display()
    );
    if failures > 0 {
        eprintln!("{failures} method failure(s), see failures.csv");
    }
    Ok(())
}

fn experiment(kind: Experiment, args: ExperimentArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => {
            let mut cfg = ExperimentConfig::load(path)?;
            if cfg.experiment != kind {
                cfg.experiment = kind;
                cfg.preset = ExperimentConfig::for_experiment(kind).preset;
            }
            cfg
        }
        None => ExperimentConfig::for_experiment(kind),
    };
    if let Some(preset) = args.preset {
        cfg.preset = preset;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    execute(&cfg, args.out)
}

fn selftest(seed: u64) -> bool {
    let mut outcomes = vec![
        checks::equivalence(10, seed),
        checks::round_trip(20, seed),
        checks::hypergradient(3, seed),
        checks::ordering(20, seed),
        checks::convergence_rate(&checks::RateSetup {
            n: 32,
            iters: 150,
            deltas: vec![1e-1, 1e-2, 1e-3],
            ..checks::RateSetup::default()
        }),
        checks::pairing_nonconvexity(),
    ];
    outcomes.extend(checks::stability(seed));
    let mut ok = true;
    for outcome in &outcomes {
        println!("{}", outcome.line());
        ok &= outcome.passed;
    }
    ok
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out } => ExperimentConfig::load(&config)
            .with_context(|| format!("loading {}", config.display()))
            .and_then(|cfg| execute(&cfg, out)),
        Command::Figure1(args) => experiment(Experiment::Figure1, args),
        Command::Grid(args) => experiment(Experiment::Grid, args),
        Command::Initvals(args) => experiment(Experiment::Initvals, args),
        Command::Selftest { seed } => {
            return if selftest(seed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            };
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
