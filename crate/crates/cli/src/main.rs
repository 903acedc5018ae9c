//! `paramcheck`: mine highway scenarios, replay them against driver models
//! under each parameterization and score how well the parameterizations
//! preserve pass/fail verdicts.

mod artifacts;
mod config;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use paramcheck::{Category, ModelKind};

use config::{parse_list, Overrides, RunConfig};
use stages::Ctx;

#[derive(Parser)]
#[command(name = "paramcheck", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for every stage artifact.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads of the simulation sweep (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Seed of the synthetic corpus.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated models: Reg157, CCHDM, RSS, FSM.
    #[arg(long, global = true)]
    models: Option<String>,
    /// Comma-separated variant labels (1-7, a-g, i-v).
    #[arg(long, global = true)]
    variants: Option<String>,
    /// Comma-separated categories: cut_in, cut_out, lvd.
    #[arg(long, global = true)]
    categories: Option<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Load recordings and extract one ego view per vehicle.
    Ingest,
    /// Tag ego views and mine cut-in, cut-out and LVD scenarios.
    Mine,
    /// Fit the SVD bases of the mined scenarios.
    FitBasis,
    /// Parameterize scenarios and sweep models and THW values.
    Simulate,
    /// Pair variant runs with baseline runs into metrics.
    Evaluate,
    /// Write the fail table and radar data.
    Report,
    /// Generate the synthetic recording described by the configuration.
    Synth,
    /// Run every stage in order.
    All,
    /// Print the resolved configuration as TOML.
    ShowConfig,
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let overrides = Overrides {
        out: cli.out.clone(),
        jobs: cli.jobs,
        seed: cli.seed,
        models: cli
            .models
            .as_deref()
            .map(|s| parse_list(s, ModelKind::parse, "model"))
            .transpose()?,
        variants: cli
            .variants
            .as_deref()
            .map(|s| parse_list(s, |v| Some(v.to_string()), "variant"))
            .transpose()?,
        categories: cli
            .categories
            .as_deref()
            .map(|s| parse_list(s, Category::parse, "category"))
            .transpose()?,
    };
    cfg.apply(overrides);
    cfg.validate().context("invalid configuration")?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli)?;
    if let Command::ShowConfig = cli.command {
        print!("{}", toml::to_string(&cfg)?);
        return Ok(());
    }
    if cfg.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build_global()
            .context("cannot start the worker pool")?;
    }
    let ctx = Ctx::new(cfg);
    match cli.command {
        Command::Ingest => stages::ingest(&ctx),
        Command::Mine => stages::mine(&ctx),
        Command::FitBasis => stages::fit_basis(&ctx),
        Command::Simulate => stages::simulate(&ctx),
        Command::Evaluate => stages::evaluate(&ctx),
        Command::Report => stages::report(&ctx),
        Command::Synth => stages::synth(&ctx),
        Command::All => stages::all(&ctx),
        Command::ShowConfig => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            for cause in e.chain().skip(1) {
                eprintln!("  caused by: {cause}");
            }
            if e.downcast_ref::<artifacts::MissingArtifact>().is_some() {
                ExitCode::from(3)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
