//! Run-directory layout and the `train` entry point that writes it.
//!
//! ```text
//! <run>/config.json          resolved configuration
//! <run>/metrics.csv          one row per collection chunk
//! <run>/generations.jsonl    one GenerationReport per line
//! <run>/population.json      latest population snapshot
//! <run>/trajectories.jsonl   toy problem only: actor positions per generation
//! <run>/summary.json         final TrainSummary
//! <run>/checkpoints/{initial,final}.json
//! ```

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{error, info};
use serde::{Deserialize, Serialize};

use super::{GenerationOutcome, MetricsRow, RunConfig, Trainer};
use crate::error::{Error, Result};

pub const CONFIG_FILE: &str = "config.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const GENERATIONS_FILE: &str = "generations.jsonl";
pub const POPULATION_FILE: &str = "population.json";
pub const TRAJECTORIES_FILE: &str = "trajectories.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const DIAGNOSTIC_FILE: &str = "diagnostic.json";
pub const SUMMARY_FILE: &str = "summary.json";

/// Greedy episodes used for the final evaluation of the elite policy.
pub const EVAL_EPISODES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub gen: usize,
    pub actor: usize,
    pub x: f64,
    pub y: f64,
    pub reward: f64,
    pub is_elite: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub run_dir: PathBuf,
    pub generations: usize,
    pub timesteps: u64,
    /// Mean of the most recent training episodes.
    pub mean_return: Option<f64>,
    pub elite: usize,
    /// Generations whose reproduction changed the elite.
    pub elite_changes: usize,
    /// Fitness of the elite in the last completed generation.
    pub elite_fitness: Option<f64>,
    /// Mean greedy return of the elite policy over [`EVAL_EPISODES`] episodes.
    pub eval_return: f64,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Creates `out` with its initialization artifacts in place. The directory
/// is staged under a hidden sibling name and renamed, so it either appears
/// complete or not at all.
fn create_run_dir(out: &Path, force: bool, init: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    if out.exists() && !force {
        return Err(Error::Artifact(format!(
            "{} already exists; pass --force to overwrite it",
            out.display()
        )));
    }
    let name = out
        .file_name()
        .ok_or_else(|| Error::Artifact(format!("{} is not a usable run directory", out.display())))?;
    let parent = out
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    let staging = parent.join(format!(".{}.partial", name.to_string_lossy()));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    let ckpt = staging.join(CHECKPOINT_DIR);
    fs::create_dir_all(&ckpt).map_err(|e| Error::io(&ckpt, e))?;
    if let Err(e) = init(&staging) {
        let _ = fs::remove_dir_all(&staging);
        return Err(e);
    }
    if out.exists() {
        fs::remove_dir_all(out).map_err(|e| Error::io(out, e))?;
    }
    fs::rename(&staging, out).map_err(|e| Error::io(out, e))
}

/// Output files opened on first write, so a run that never steps leaves
/// only its initialization artifacts behind.
struct Sinks {
    dir: PathBuf,
    metrics: Option<csv::Writer<File>>,
    generations: Option<BufWriter<File>>,
    trajectories: Option<BufWriter<File>>,
}

fn open(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path, e))
}

impl Sinks {
    fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            metrics: None,
            generations: None,
            trajectories: None,
        }
    }

    fn metrics(&mut self, rows: &[MetricsRow]) -> Result<()> {
        if rows.is_empty() {
            return Ok(());
        }
        if self.metrics.is_none() {
            self.metrics = Some(csv::Writer::from_writer(open(&self.dir.join(METRICS_FILE))?));
        }
        let w = self.metrics.as_mut().expect("opened above");
        for r in rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(self.dir.join(METRICS_FILE), e))
    }

    fn lines<T: Serialize>(slot: &mut Option<BufWriter<File>>, path: PathBuf, items: &[T]) -> Result<()> {
        if slot.is_none() {
            *slot = Some(BufWriter::new(open(&path)?));
        }
        let w = slot.as_mut().expect("opened above");
        for item in items {
            serde_json::to_writer(&mut *w, item)?;
            w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))
    }

    fn generation(&mut self, outcome: &GenerationOutcome) -> Result<()> {
        Self::lines(
            &mut self.generations,
            self.dir.join(GENERATIONS_FILE),
            std::slice::from_ref(&outcome.report),
        )?;
        if let Some(points) = &outcome.trajectory {
            Self::lines(&mut self.trajectories, self.dir.join(TRAJECTORIES_FILE), points)?;
        }
        Ok(())
    }
}

fn snapshot(trainer: &Trainer, dir: &Path) -> Result<()> {
    write_json(
        &dir.join(POPULATION_FILE),
        &trainer.population().snapshot(trainer.generation()),
    )
}

#[derive(Serialize)]
struct Diagnostic<'a> {
    error: String,
    generation: usize,
    timesteps: u64,
    elite: usize,
    last_metrics: Option<&'a MetricsRow>,
}

/// Trains `cfg` and writes every artifact under `out`.
pub fn train(cfg: &RunConfig, out: &Path, force: bool) -> Result<TrainSummary> {
    let mut trainer = Trainer::new(cfg.clone())?;
    create_run_dir(out, force, |dir| {
        fs::write(dir.join(CONFIG_FILE), cfg.to_json() + "\n").map_err(|e| Error::io(dir.join(CONFIG_FILE), e))?;
        trainer
            .agent()
            .to_checkpoint()
            .save(&dir.join(CHECKPOINT_DIR).join("initial.json"))?;
        snapshot(&trainer, dir)
    })?;
    info!(
        "training {} on {} (seed {}) into {}",
        cfg.algorithm.name(),
        cfg.env.name(),
        cfg.seed,
        out.display()
    );

    let mut sinks = Sinks::new(out);
    let mut last_row: Option<MetricsRow> = None;
    let mut elite_changes = 0;
    let mut elite_fitness = None;
    let result = trainer.run(|t, outcome| {
        let rows = t.take_metrics();
        sinks.metrics(&rows)?;
        last_row = rows.last().cloned().or(last_row.take());
        sinks.generation(&outcome)?;
        elite_changes += usize::from(outcome.report.elite_changed);
        elite_fitness = outcome.report.fitness[outcome.report.elite_after];
        snapshot(t, out)?;
        info!(
            "gen {:>4}  steps {:>9}  mean return {:>10}  elite {} -> {}",
            outcome.report.generation,
            outcome.report.total_steps,
            t.mean_recent_return().map_or("-".into(), |r| format!("{r:.3}")),
            outcome.report.elite_before,
            outcome.report.elite_after
        );
        Ok(())
    });
    let rows = trainer.take_metrics();
    let flushed = sinks.metrics(&rows);
    let last_row = rows.last().cloned().or(last_row);
    if let Err(e) = result.and(flushed) {
        error!("training aborted: {e}");
        let diag = Diagnostic {
            error: e.to_string(),
            generation: trainer.generation(),
            timesteps: trainer.timesteps(),
            elite: trainer.population().elite(),
            last_metrics: last_row.as_ref(),
        };
        write_json(&out.join(DIAGNOSTIC_FILE), &diag)?;
        trainer
            .agent()
            .to_checkpoint()
            .save(&out.join(CHECKPOINT_DIR).join("failed.json"))?;
        return Err(e);
    }
    if trainer.timesteps() > 0 {
        trainer
            .agent()
            .to_checkpoint()
            .save(&out.join(CHECKPOINT_DIR).join("final.json"))?;
        snapshot(&trainer, out)?;
    }
    let eval = trainer.evaluate(EVAL_EPISODES)?;
    let summary = TrainSummary {
        run_dir: out.to_path_buf(),
        generations: trainer.generation(),
        timesteps: trainer.timesteps(),
        mean_return: trainer.mean_recent_return(),
        elite: trainer.population().elite(),
        elite_changes,
        elite_fitness,
        eval_return: eval.iter().sum::<f64>() / eval.len() as f64,
    };
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}
