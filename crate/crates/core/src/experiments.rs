//! Multi-run drivers: the ablation comparison and the genetic-operator sweep.
//!
//! Both train one run per (variant, seed) under `<out>/<variant>/seed-<s>`
//! and write a CSV with one row per run into `<out>`.

use std::fs;
use std::path::Path;

use log::info;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::trainer::{train, Algorithm, BaseMethod, RunConfig};

pub const COMPARISON_FILE: &str = "comparison.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const SWEEP_MUTATION: [f64; 3] = [0.03, 0.1, 0.3];
pub const SWEEP_CROSSOVER: [f64; 2] = [0.4, 0.8];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub variant: String,
    pub algorithm: String,
    pub seed: u64,
    pub mutation_prob: f64,
    pub crossover_prob: f64,
    pub generations: usize,
    pub timesteps: u64,
    pub mean_return: Option<f64>,
    pub elite_fitness: Option<f64>,
    pub eval_return: f64,
    pub elite_changes: usize,
}

/// The gated method sharing the base config's update rule, followed by the
/// three ablations.
pub fn ablation_variants(base: &RunConfig) -> [Algorithm; 4] {
    let primary = match base.base() {
        BaseMethod::A2c => Algorithm::G2ac,
        BaseMethod::Ppo => Algorithm::G2ppo,
    };
    [
        primary,
        Algorithm::RandomGate,
        Algorithm::Separated,
        Algorithm::Baseline,
    ]
}

fn prepare(out: &Path, force: bool) -> Result<()> {
    if out.exists() {
        if !force {
            return Err(Error::Artifact(format!(
                "{} already exists; pass --force to overwrite it",
                out.display()
            )));
        }
        fs::remove_dir_all(out).map_err(|e| Error::io(out, e))?;
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

fn run_grid(
    out: &Path,
    force: bool,
    csv_name: &str,
    runs: impl IntoIterator<Item = (String, RunConfig)>,
) -> Result<Vec<ExperimentRow>> {
    prepare(out, force)?;
    let path = out.join(csv_name);
    let mut w = csv::Writer::from_path(&path)?;
    let mut rows = Vec::new();
    for (variant, cfg) in runs {
        let dir = out.join(&variant).join(format!("seed-{}", cfg.seed));
        info!("{variant} seed {}", cfg.seed);
        let s = train(&cfg, &dir, false)?;
        let row = ExperimentRow {
            variant,
            algorithm: cfg.algorithm.name().to_string(),
            seed: cfg.seed,
            mutation_prob: cfg.genetic.mutation_prob,
            crossover_prob: cfg.genetic.crossover_prob,
            generations: s.generations,
            timesteps: s.timesteps,
            mean_return: s.mean_return,
            elite_fitness: s.elite_fitness,
            eval_return: s.eval_return,
            elite_changes: s.elite_changes,
        };
        w.serialize(&row)?;
        w.flush().map_err(|e| Error::io(&path, e))?;
        rows.push(row);
    }
    Ok(rows)
}

/// Trains the primary method and every ablation on `seeds`.
pub fn ablate(base: &RunConfig, seeds: &[u64], out: &Path, force: bool) -> Result<Vec<ExperimentRow>> {
    let mut runs = Vec::new();
    for algorithm in ablation_variants(base) {
        for &seed in seeds {
            let mut cfg = base.clone();
            cfg.algorithm = algorithm;
            cfg.seed = seed;
            runs.push((algorithm.name().to_string(), cfg));
        }
    }
    run_grid(out, force, COMPARISON_FILE, runs)
}

/// Trains every (mutation, crossover) pair of the sweep grid on `seeds`.
pub fn sweep(base: &RunConfig, seeds: &[u64], out: &Path, force: bool) -> Result<Vec<ExperimentRow>> {
    let mut runs = Vec::new();
    for m in SWEEP_MUTATION {
        for c in SWEEP_CROSSOVER {
            for &seed in seeds {
                let mut cfg = base.clone();
                cfg.genetic.mutation_prob = m;
                cfg.genetic.crossover_prob = c;
                cfg.seed = seed;
                runs.push((format!("mut{m}-cx{c}"), cfg));
            }
        }
    }
    run_grid(out, force, SWEEP_FILE, runs)
}
