use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use g2n::experiments::{self, ExperimentRow};
use g2n::gradcheck::{self, Fault};
use g2n::plotdata;
use g2n::trainer::{self, RunConfig};

/// Genetic-gated actor-critic training.
#[derive(Parser)]
#[command(name = "g2n", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run into a fresh run directory.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the gated method and its ablations on shared seeds.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        seeds: SeedArgs,
    },
    /// Train every mutation / crossover pair of the sweep grid.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        seeds: SeedArgs,
    },
    /// Compare analytic gradients against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random instances per suite.
        #[arg(long, default_value_t = 20)]
        instances: usize,
        /// Corrupt the gated backward pass to check that failures are caught.
        #[arg(long, value_enum, default_value_t = FaultArg::None)]
        fault: FaultArg,
    },
    /// Write learning-curve CSV and trajectory JSON for a run directory.
    Plotdata { run_dir: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; must not exist unless --force is given.
    #[arg(long)]
    out: PathBuf,
    /// Override the config's worker count.
    #[arg(long)]
    workers: Option<usize>,
    /// Replace an existing output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SeedArgs {
    /// Comma-separated seeds; defaults to the config's seed.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    None,
    GateSignFlip,
}

fn load(run: &RunArgs, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&run.config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(w) = run.workers {
        if w == 0 {
            bail!("--workers must be at least 1");
        }
        cfg.workers = w;
    }
    Ok(cfg)
}

fn seeds(cfg: &RunConfig, args: &SeedArgs) -> Vec<u64> {
    if args.seeds.is_empty() {
        vec![cfg.seed]
    } else {
        args.seeds.clone()
    }
}

fn print_rows(out: &Path, rows: &[ExperimentRow]) {
    for r in rows {
        println!(
            "{:<16} seed {:>4}  gens {:>4}  steps {:>9}  eval {:>10.3}",
            r.variant, r.seed, r.generations, r.timesteps, r.eval_return
        );
    }
    println!("results in {}", out.display());
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train { run, seed } => {
            let cfg = load(&run, seed)?;
            let summary = trainer::train(&cfg, &run.out, run.force)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Ablate { run, seeds: s } => {
            let cfg = load(&run, None)?;
            let rows = experiments::ablate(&cfg, &seeds(&cfg, &s), &run.out, run.force)?;
            print_rows(&run.out, &rows);
        }
        Command::Sweep { run, seeds: s } => {
            let cfg = load(&run, None)?;
            let rows = experiments::sweep(&cfg, &seeds(&cfg, &s), &run.out, run.force)?;
            print_rows(&run.out, &rows);
        }
        Command::Gradcheck { seed, instances, fault } => {
            if instances == 0 {
                bail!("--instances must be at least 1");
            }
            let fault = match fault {
                FaultArg::None => Fault::None,
                FaultArg::GateSignFlip => Fault::GateSignFlip,
            };
            let report = gradcheck::gradcheck(seed, instances, fault)?;
            println!("{report}");
            if !report.passed() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Plotdata { run_dir } => {
            let files = plotdata::plotdata(&run_dir)
                .with_context(|| format!("cannot build plot data for {}", run_dir.display()))?;
            info!("{} generations", files.rows);
            println!("{}", files.curves.display());
            if let Some(t) = files.trajectories {
                println!("{}", t.display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("G2N_LOG", "info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
