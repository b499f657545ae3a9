//! The generation loop: elite phase, GA+elite phase, fitness evaluation,
//! selection and reproduction, repeated until the step budget is spent.

mod artifacts;
pub mod config;

use std::collections::VecDeque;

use log::{debug, info};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::agent::{Agent, AgentOptimizer, GateAssignment, LossKind, UpdateData};
use crate::envs::{toy2d_reward, Action, EnvKind, Toy2DSurface};
use crate::error::{Error, Result};
use crate::genome::{
    elite_index, init_population, next_generation, random_regeneration, Chromosome, FitnessTable, Population,
};
use crate::policy::LossCoefs;
use crate::rng::{derive_seed, seeded, stream, Rng};
use crate::rollout::{collect, CompletedEpisode, EpisodeTracker, Phase, RolloutBatch, VecEnv};

pub use artifacts::{
    train, TrainSummary, TrajectoryPoint, CHECKPOINT_DIR, CONFIG_FILE, DIAGNOSTIC_FILE, EVAL_EPISODES,
    GENERATIONS_FILE, METRICS_FILE, POPULATION_FILE, SUMMARY_FILE, TRAJECTORIES_FILE,
};
pub use config::{Algorithm, BaseMethod, ConfigFile, RunConfig, UpdateRule};

/// Completed episodes kept for the rolling mean return.
pub const RETURN_WINDOW: usize = 100;

/// One row of the metrics CSV, written after every collection chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub timestep: u64,
    pub generation: usize,
    pub phase: Phase,
    pub mean_return: Option<f64>,
    pub loss: Option<f64>,
    pub policy_loss: Option<f64>,
    pub value_loss: Option<f64>,
    pub entropy: Option<f64>,
    pub clip_fraction: Option<f64>,
    pub grad_norm: Option<f64>,
    pub updates: usize,
    pub elite_index: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReturnStats {
    pub episodes: usize,
    pub mean: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl ReturnStats {
    fn from_episodes(eps: &[CompletedEpisode]) -> Self {
        if eps.is_empty() {
            return Self::default();
        }
        let returns = eps.iter().map(|e| e.episode_return);
        Self {
            episodes: eps.len(),
            mean: Some(returns.clone().sum::<f64>() / eps.len() as f64),
            min: returns.clone().reduce(f64::min),
            max: returns.reduce(f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub generation: usize,
    pub fitness: Vec<Option<f64>>,
    pub episodes: Vec<usize>,
    pub elite_before: usize,
    pub elite_after: usize,
    pub elite_changed: bool,
    /// No actor finished an episode in the GA+elite phase.
    pub all_undefined: bool,
    pub elite_phase_steps: u64,
    pub ga_phase_steps: u64,
    pub total_steps: u64,
    pub elite_phase_returns: ReturnStats,
    pub ga_phase_returns: ReturnStats,
    pub open_fraction: f64,
}

/// A finished generation plus the toy-problem positions of every actor
/// just before reproduction.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationOutcome {
    pub report: GenerationReport,
    pub trajectory: Option<Vec<TrajectoryPoint>>,
}

#[derive(Debug, Default)]
struct PhaseLog {
    steps: u64,
    episodes: Vec<CompletedEpisode>,
}

/// Coordinator state: parameters, optimizer, population, environments.
pub struct Trainer {
    cfg: RunConfig,
    agent: Agent,
    optimizer: AgentOptimizer,
    population: Population,
    table: FitnessTable,
    venv: VecEnv,
    tracker: EpisodeTracker,
    genetics_rng: Rng,
    minibatch_rng: Rng,
    generation: usize,
    timesteps: u64,
    recent_returns: VecDeque<f64>,
    metrics: Vec<MetricsRow>,
}

impl Trainer {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        let spec = cfg.env.spec();
        let mut init_rng = seeded(cfg.seed, stream::INIT);
        let agent = Agent::new(
            spec.observation_dim,
            spec.action_space.clone(),
            &cfg.hidden_sizes,
            &mut init_rng,
        )?;
        let mut genetics_rng = seeded(cfg.seed, stream::GENETICS);
        let n = cfg.genetic.population_size;
        let population = match cfg.algorithm {
            Algorithm::Baseline => Population::all_ones(n, agent.gate_width()),
            _ => init_population(n, agent.gate_width(), cfg.genetic.keep_prob, &mut genetics_rng)?,
        };
        let venv = VecEnv::seeded(cfg.env, cfg.seed, n, cfg.workers)?;
        Ok(Self {
            optimizer: AgentOptimizer::new(&cfg.optimizer, &agent),
            minibatch_rng: seeded(cfg.seed, stream::MINIBATCH),
            table: FitnessTable::new(n),
            tracker: EpisodeTracker::new(n),
            genetics_rng,
            population,
            agent,
            venv,
            cfg,
            generation: 0,
            timesteps: 0,
            recent_returns: VecDeque::with_capacity(RETURN_WINDOW),
            metrics: Vec::new(),
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    pub fn population(&self) -> &Population {
        &self.population
    }

    pub fn fitness_table(&self) -> &FitnessTable {
        &self.table
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    /// Environment steps taken so far, summed over actors.
    pub fn timesteps(&self) -> u64 {
        self.timesteps
    }

    pub fn optimizer_steps(&self) -> u64 {
        self.optimizer.steps()
    }

    /// Mean of the last [`RETURN_WINDOW`] completed episodes.
    pub fn mean_recent_return(&self) -> Option<f64> {
        (!self.recent_returns.is_empty())
            .then(|| self.recent_returns.iter().sum::<f64>() / self.recent_returns.len() as f64)
    }

    /// True once another collection chunk would overrun `total_timesteps`
    /// or the generation cap is reached.
    pub fn budget_exhausted(&self) -> bool {
        let chunk = (self.cfg.genetic.population_size * self.cfg.horizon) as u64;
        self.timesteps + chunk > self.cfg.total_timesteps
            || self.cfg.max_generations.is_some_and(|g| self.generation >= g)
    }

    /// Metrics rows accumulated since the last call.
    pub fn take_metrics(&mut self) -> Vec<MetricsRow> {
        std::mem::take(&mut self.metrics)
    }

    fn gated(&self) -> bool {
        self.cfg.algorithm != Algorithm::Baseline
    }

    /// The gate the gradient pass runs under; `None` is the ungated path.
    pub fn update_gate(&self) -> Option<Chromosome> {
        self.gated().then(|| self.population.elite_chromosome().clone())
    }

    fn acting_gates(&self, phase: Phase) -> GateAssignment {
        if !self.gated() {
            return GateAssignment::Ungated;
        }
        match phase {
            Phase::Elite => GateAssignment::uniform(self.population.elite_chromosome(), self.population.len()),
            Phase::GaElite => GateAssignment::per_actor(&self.population),
        }
    }

    fn run_chunk(&mut self, phase: Phase, log: &mut PhaseLog) -> Result<()> {
        let gates = self.acting_gates(phase);
        let batch = collect(&mut self.venv, &self.agent, &gates, self.cfg.horizon)?;
        self.timesteps += batch.len() as u64;
        log.steps += batch.len() as u64;
        let finished = self.tracker.finish_episodes(&batch, &mut self.table, phase)?;
        for ep in &finished {
            if self.recent_returns.len() == RETURN_WINDOW {
                self.recent_returns.pop_front();
            }
            self.recent_returns.push_back(ep.episode_return);
        }
        log.episodes.extend(finished);

        let learn = !(self.cfg.algorithm == Algorithm::Separated && phase == Phase::GaElite);
        let stats = if learn { Some(self.update(&batch, phase)?) } else { None };
        self.metrics.push(MetricsRow {
            timestep: self.timesteps,
            generation: self.generation,
            phase,
            mean_return: self.mean_recent_return(),
            loss: stats.as_ref().map(|s| s.loss),
            policy_loss: stats.as_ref().map(|s| s.policy),
            value_loss: stats.as_ref().map(|s| s.value),
            entropy: stats.as_ref().map(|s| s.entropy),
            clip_fraction: stats.as_ref().and_then(|s| s.clip_fraction),
            grad_norm: stats.as_ref().map(|s| s.grad_norm),
            updates: stats.as_ref().map_or(0, |s| s.updates),
            elite_index: self.population.elite(),
        });
        Ok(())
    }

    fn update(&mut self, batch: &RolloutBatch, phase: Phase) -> Result<UpdateStats> {
        let elite = self.population.elite();
        let elite_only = self.cfg.elite_only_updates && phase == Phase::GaElite;
        let data = batch.update_data(self.cfg.advantage(), |a| !elite_only || a == elite)?;
        let gate = self.update_gate();
        let coefs = LossCoefs {
            value: self.cfg.value_coef,
            entropy: self.cfg.entropy_coef,
        };
        let mut stats = UpdateStats::default();
        match self.cfg.update {
            UpdateRule::A2c { .. } => {
                self.gradient_step(&data, gate.as_ref(), LossKind::A2c, &coefs, &mut stats)?;
            }
            UpdateRule::Ppo {
                epochs,
                minibatch_size,
                clip_eps,
                normalize_advantages,
                ..
            } => {
                let kind = LossKind::Ppo {
                    clip_eps,
                    normalize_advantages,
                };
                let mut order: Vec<usize> = (0..data.len()).collect();
                for _ in 0..epochs {
                    order.shuffle(&mut self.minibatch_rng);
                    for idx in order.chunks(minibatch_size) {
                        let mb = data.subset(idx, self.agent.obs_dim());
                        self.gradient_step(&mb, gate.as_ref(), kind, &coefs, &mut stats)?;
                    }
                }
            }
        }
        Ok(stats.averaged())
    }

    fn gradient_step(
        &mut self,
        data: &UpdateData,
        gate: Option<&Chromosome>,
        kind: LossKind,
        coefs: &LossCoefs,
        stats: &mut UpdateStats,
    ) -> Result<()> {
        let (terms, mut grads) = self.agent.loss_and_grads(data, gate, kind, coefs)?;
        if !grads.is_finite() {
            return Err(Error::NonFinite {
                context: "gradients".into(),
            });
        }
        let norm = grads.clip_global_norm(self.cfg.max_grad_norm);
        self.optimizer.step(&mut self.agent, &grads);
        stats.updates += 1;
        stats.loss += terms.total;
        stats.policy += terms.policy;
        stats.value += terms.value;
        stats.entropy += terms.entropy;
        stats.grad_norm += norm;
        if let LossKind::Ppo { .. } = kind {
            *stats.clip_fraction.get_or_insert(0.0) += terms.clip_fraction;
        }
        Ok(())
    }

    /// Acts and learns under the elite gate for `elite_phase_steps` per actor,
    /// rounded up to whole horizons. Fitness is not touched.
    fn run_elite_phase(&mut self) -> Result<Option<PhaseLog>> {
        let mut log = PhaseLog::default();
        let chunks = self.cfg.elite_phase_steps.div_ceil(self.cfg.horizon);
        for _ in 0..chunks {
            if self.budget_exhausted() {
                return Ok(None);
            }
            self.run_chunk(Phase::Elite, &mut log)?;
        }
        Ok(Some(log))
    }

    /// Every actor acts under its own gate until each has finished
    /// `ga_phase_episodes` episodes, or the per-actor step cap is hit.
    fn run_ga_elite_phase(&mut self) -> Result<Option<PhaseLog>> {
        let mut log = PhaseLog::default();
        let n = self.population.len() as u64;
        let cap = self.cfg.ga_phase_step_cap();
        while self.table.min_episodes() < self.cfg.ga_phase_episodes {
            if log.steps / n >= cap {
                info!("generation {}: GA+elite phase hit the {cap}-step cap", self.generation);
                break;
            }
            if self.budget_exhausted() {
                return Ok(None);
            }
            self.run_chunk(Phase::GaElite, &mut log)?;
        }
        Ok(Some(log))
    }

    /// One full generation. Returns `None` when the step budget ran out
    /// before the generation finished; no reproduction happens then.
    pub fn run_generation(&mut self) -> Result<Option<GenerationOutcome>> {
        if self.budget_exhausted() {
            return Ok(None);
        }
        let Some(elite_log) = self.run_elite_phase()? else {
            return Ok(None);
        };
        let Some(ga_log) = self.run_ga_elite_phase()? else {
            return Ok(None);
        };

        let trajectory = (self.cfg.env == EnvKind::Toy2d)
            .then(|| self.toy_positions())
            .transpose()?;
        let elite_before = self.population.elite();
        let fitness = self.table.fitness_vector();
        let episodes = (0..self.table.len()).map(|i| self.table.episodes(i)).collect();
        let all_undefined = fitness.iter().all(Option::is_none);
        let elite_after = match self.cfg.algorithm {
            Algorithm::Baseline => {
                let e = elite_index(&self.table, elite_before);
                self.population.set_elite(e)?;
                e
            }
            Algorithm::RandomGate => {
                let r = random_regeneration(
                    &self.population,
                    &self.table,
                    self.cfg.genetic.keep_prob,
                    &mut self.genetics_rng,
                )?;
                self.population = r.population;
                r.elite
            }
            _ => {
                let r = next_generation(&self.population, &self.table, &self.cfg.genetic, &mut self.genetics_rng)?;
                self.population = r.population;
                r.elite
            }
        };
        self.table.clear();
        let report = GenerationReport {
            generation: self.generation,
            fitness,
            episodes,
            elite_before,
            elite_after,
            elite_changed: elite_after != elite_before,
            all_undefined,
            elite_phase_steps: elite_log.steps,
            ga_phase_steps: ga_log.steps,
            total_steps: self.timesteps,
            elite_phase_returns: ReturnStats::from_episodes(&elite_log.episodes),
            ga_phase_returns: ReturnStats::from_episodes(&ga_log.episodes),
            open_fraction: self.population.open_fraction(),
        };
        debug!(
            "generation {} done at {} steps: elite {} -> {}",
            report.generation, report.total_steps, elite_before, elite_after
        );
        self.generation += 1;
        let trajectory = trajectory.map(|points| {
            points
                .into_iter()
                .enumerate()
                .map(|(actor, (xy, reward))| TrajectoryPoint {
                    gen: report.generation,
                    actor,
                    x: xy[0],
                    y: xy[1],
                    reward,
                    is_elite: actor == elite_before,
                })
                .collect()
        });
        Ok(Some(GenerationOutcome { report, trajectory }))
    }

    /// Runs generations until the budget is spent.
    pub fn run(&mut self, mut on_generation: impl FnMut(&mut Self, GenerationOutcome) -> Result<()>) -> Result<()> {
        while let Some(outcome) = self.run_generation()? {
            on_generation(self, outcome)?;
        }
        Ok(())
    }

    /// Toy problem: each actor's deterministic point (its mean action,
    /// clamped to the box) and the reward there.
    pub fn toy_positions(&self) -> Result<Vec<([f64; 2], f64)>> {
        if self.cfg.env != EnvKind::Toy2d {
            return Err(Error::config("env", "toy positions exist only for toy2d"));
        }
        let n = self.population.len();
        let states = vec![1.0; n];
        let gates = if self.gated() {
            GateAssignment::per_actor(&self.population)
        } else {
            GateAssignment::Ungated
        };
        let out = self.agent.policy_forward(&states, &gates)?;
        let surface = Toy2DSurface::default();
        Ok(out
            .output()
            .chunks_exact(2)
            .map(|m| {
                let xy = [m[0].clamp(-1.0, 1.0), m[1].clamp(-1.0, 1.0)];
                (xy, toy2d_reward(xy[0], xy[1], &surface))
            })
            .collect())
    }

    /// Toy problem: reward at the elite's mean action.
    pub fn elite_toy_reward(&self) -> Result<f64> {
        Ok(self.toy_positions()?[self.population.elite()].1)
    }

    /// Greedy episodes of the elite policy on fresh evaluation environments.
    pub fn evaluate(&self, episodes: usize) -> Result<Vec<f64>> {
        let seeds: Vec<u64> = (0..episodes as u64)
            .map(|i| derive_seed(self.cfg.seed, stream::EVAL_ENV_BASE + i))
            .collect();
        evaluate_greedy(&self.agent, self.update_gate().as_ref(), self.cfg.env, &seeds)
    }
}

/// One greedy episode per seed, stepped in lock-step with batched forwards.
pub fn evaluate_greedy(agent: &Agent, gate: Option<&Chromosome>, env: EnvKind, seeds: &[u64]) -> Result<Vec<f64>> {
    let mut envs: Vec<_> = seeds.iter().map(|&s| env.make(s)).collect();
    let mut obs: Vec<Vec<f64>> = envs.iter_mut().map(|e| e.reset()).collect();
    let mut returns = vec![0.0; seeds.len()];
    let mut live: Vec<usize> = (0..seeds.len()).collect();
    while !live.is_empty() {
        let states: Vec<f64> = live.iter().flat_map(|&i| obs[i].iter().copied()).collect();
        let out = match gate {
            Some(g) => agent.actor.forward_uniform(&states, g)?,
            None => agent.actor.forward_ungated(&states)?,
        };
        let mut still = Vec::with_capacity(live.len());
        for (row, &i) in live.iter().enumerate() {
            let action: Action = agent.head(out.output(), row).mode();
            let step = envs[i].step(&action).map_err(|e| Error::Environment {
                actor: i,
                reason: e.to_string(),
            })?;
            returns[i] += step.reward;
            if !step.done {
                obs[i] = step.observation;
                still.push(i);
            }
        }
        live = still;
    }
    Ok(returns)
}

#[derive(Debug, Clone, Default)]
struct UpdateStats {
    updates: usize,
    loss: f64,
    policy: f64,
    value: f64,
    entropy: f64,
    grad_norm: f64,
    clip_fraction: Option<f64>,
}

impl UpdateStats {
    fn averaged(mut self) -> Self {
        if self.updates > 0 {
            let n = self.updates as f64;
            self.loss /= n;
            self.policy /= n;
            self.value /= n;
            self.entropy /= n;
            self.grad_norm /= n;
            self.clip_fraction = self.clip_fraction.map(|c| c / n);
        }
        self
    }
}
