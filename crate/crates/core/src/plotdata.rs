//! Plot-ready files derived from a run directory.
//!
//! `<run>/plots/curves.csv` has one row per generation with the population
//! mean, elite and top-candidate fitness, raw and exponentially smoothed.
//! For toy runs `<run>/plots/trajectories.json` holds every trajectory point
//! as one JSON array.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::trainer::{GenerationReport, TrajectoryPoint, GENERATIONS_FILE, TRAJECTORIES_FILE};

pub const PLOT_DIR: &str = "plots";
pub const CURVES_FILE: &str = "curves.csv";
pub const TRAJECTORY_JSON: &str = "trajectories.json";

/// Weight of the new value in the exponential moving average.
pub const SMOOTHING_ALPHA: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub generation: usize,
    pub timestep: u64,
    pub population_mean: Option<f64>,
    /// Fitness of the actor that was elite during the generation.
    pub elite: Option<f64>,
    pub top: Option<f64>,
    pub population_mean_smooth: Option<f64>,
    pub elite_smooth: Option<f64>,
    pub top_smooth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotFiles {
    pub curves: PathBuf,
    pub trajectories: Option<PathBuf>,
    pub rows: usize,
}

fn read_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| Error::Artifact(format!("{}:{}: {e}", path.display(), n + 1)))?,
        );
    }
    Ok(out)
}

struct Ema(Option<f64>);

impl Ema {
    fn push(&mut self, x: Option<f64>) -> Option<f64> {
        if let Some(x) = x {
            self.0 = Some(self.0.map_or(x, |s| s + SMOOTHING_ALPHA * (x - s)));
        }
        self.0
    }
}

/// One curve row per generation report.
pub fn curves(reports: &[GenerationReport]) -> Vec<CurveRow> {
    let (mut mean_s, mut elite_s, mut top_s) = (Ema(None), Ema(None), Ema(None));
    reports
        .iter()
        .map(|r| {
            let defined: Vec<f64> = r.fitness.iter().flatten().copied().collect();
            let population_mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
            let top = defined.iter().copied().reduce(f64::max);
            let elite = r.fitness.get(r.elite_before).copied().flatten();
            CurveRow {
                generation: r.generation,
                timestep: r.total_steps,
                population_mean,
                elite,
                top,
                population_mean_smooth: mean_s.push(population_mean),
                elite_smooth: elite_s.push(elite),
                top_smooth: top_s.push(top),
            }
        })
        .collect()
}

/// Writes the plot files for `run_dir`. Nothing is written unless the run
/// has at least one generation report.
pub fn plotdata(run_dir: &Path) -> Result<PlotFiles> {
    let gens = run_dir.join(GENERATIONS_FILE);
    if !gens.is_file() {
        return Err(Error::Artifact(format!(
            "{} has no {GENERATIONS_FILE}; no generation has completed yet",
            run_dir.display()
        )));
    }
    let reports: Vec<GenerationReport> = read_lines(&gens)?;
    if reports.is_empty() {
        return Err(Error::Artifact(format!(
            "{} contains no generation reports",
            gens.display()
        )));
    }
    let rows = curves(&reports);
    let traj_path = run_dir.join(TRAJECTORIES_FILE);
    let points: Option<Vec<TrajectoryPoint>> = traj_path.is_file().then(|| read_lines(&traj_path)).transpose()?;

    let dir = run_dir.join(PLOT_DIR);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let curves_path = dir.join(CURVES_FILE);
    let mut w = csv::Writer::from_path(&curves_path)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(&curves_path, e))?;

    let trajectories = match points {
        Some(p) => {
            let path = dir.join(TRAJECTORY_JSON);
            fs::write(&path, serde_json::to_string(&p)? + "\n").map_err(|e| Error::io(&path, e))?;
            Some(path)
        }
        None => None,
    };
    Ok(PlotFiles {
        curves: curves_path,
        trajectories,
        rows: rows.len(),
    })
}
