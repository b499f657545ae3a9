//! Multi-actor experience collection and per-actor episode bookkeeping.
//!
//! Slot `i` of a [`VecEnv`] is actor `i`: it owns its environment and its own
//! action-sampling stream, so a slot's trajectory depends only on its seed,
//! the agent parameters and its gate row. That makes collection identical
//! whether slots are stepped on one thread or many.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{Agent, GateAssignment, UpdateData};
use crate::envs::{Action, EnvKind, Environment};
use crate::error::{Error, Result};
use crate::genome::FitnessTable;
use crate::policy::{gae, k_step_advantage, sample_and_logprob};
use crate::rng::{derive_seed, seeded, stream, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Elite,
    GaElite,
}

impl Phase {
    pub fn name(&self) -> &'static str {
        match self {
            Phase::Elite => "elite",
            Phase::GaElite => "ga_elite",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub actor: usize,
    pub state: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    pub done: bool,
    pub value: f64,
    pub behavior_logprob: f64,
}

/// `horizon` steps for each of `n_actors` slots, stored step-major: record
/// `t * n_actors + i` is slot `i` at step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub n_actors: usize,
    pub horizon: usize,
    pub records: Vec<Transition>,
    /// Critic value of each slot's state after the last step.
    pub bootstrap_values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AdvantageEstimator {
    KStep { gamma: f64, k: usize },
    Gae { gamma: f64, lambda: f64 },
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn record(&self, t: usize, actor: usize) -> &Transition {
        &self.records[t * self.n_actors + actor]
    }

    pub fn segment(&self, actor: usize) -> impl Iterator<Item = &Transition> {
        (0..self.horizon).map(move |t| self.record(t, actor))
    }

    pub fn total_reward(&self) -> f64 {
        self.records.iter().map(|r| r.reward).sum()
    }

    /// Advantages laid out like `records`.
    pub fn advantages(&self, estimator: AdvantageEstimator) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.records.len()];
        for i in 0..self.n_actors {
            let rewards: Vec<f64> = self.segment(i).map(|r| r.reward).collect();
            let dones: Vec<bool> = self.segment(i).map(|r| r.done).collect();
            let mut values: Vec<f64> = self.segment(i).map(|r| r.value).collect();
            values.push(self.bootstrap_values[i]);
            let adv = match estimator {
                AdvantageEstimator::KStep { gamma, k } => k_step_advantage(&rewards, &values, &dones, gamma, k)?,
                AdvantageEstimator::Gae { gamma, lambda } => gae(&rewards, &values, &dones, gamma, lambda)?,
            };
            for (t, a) in adv.into_iter().enumerate() {
                out[t * self.n_actors + i] = a;
            }
        }
        Ok(out)
    }

    /// Update inputs from the records of the actors accepted by `keep`,
    /// in record order. Returns are advantages plus value estimates.
    pub fn update_data(&self, estimator: AdvantageEstimator, keep: impl Fn(usize) -> bool) -> Result<UpdateData> {
        let adv = self.advantages(estimator)?;
        let mut data = UpdateData::default();
        for (r, a) in self.records.iter().zip(adv) {
            if !keep(r.actor) {
                continue;
            }
            data.states.extend_from_slice(&r.state);
            data.actions.push(r.action.clone());
            data.advantages.push(a);
            data.returns.push(a + r.value);
            data.logp_old.push(r.behavior_logprob);
        }
        Ok(data)
    }
}

pub struct ActorSlot {
    env: Box<dyn Environment>,
    rng: Rng,
    obs: Vec<f64>,
}

impl ActorSlot {
    pub fn new(mut env: Box<dyn Environment>, sampling_seed: u64) -> Self {
        let obs = env.reset();
        Self {
            env,
            rng: seeded(sampling_seed, stream::SAMPLING),
            obs,
        }
    }

    pub fn observation(&self) -> &[f64] {
        &self.obs
    }
}

/// One environment per actor slot, stepped in lock-step.
pub struct VecEnv {
    slots: Vec<ActorSlot>,
    pool: Option<rayon::ThreadPool>,
}

impl VecEnv {
    pub fn new(slots: Vec<ActorSlot>, workers: usize) -> Result<Self> {
        if slots.is_empty() {
            return Err(Error::config("population_size", "needs at least one actor slot"));
        }
        let pool = if workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .map_err(|e| Error::config("workers", e.to_string()))?,
            )
        } else {
            None
        };
        Ok(Self { slots, pool })
    }

    /// Slot `i` uses seed `slot_seeds[i]` for both its environment and its sampling stream.
    pub fn from_seeds(kind: EnvKind, slot_seeds: &[u64], workers: usize) -> Result<Self> {
        let slots = slot_seeds.iter().map(|&s| ActorSlot::new(kind.make(s), s)).collect();
        Self::new(slots, workers)
    }

    /// `n` slots seeded from a run seed.
    pub fn seeded(kind: EnvKind, seed: u64, n: usize, workers: usize) -> Result<Self> {
        let seeds: Vec<u64> = (0..n as u64).map(|i| derive_seed(seed, stream::ENV_BASE + i)).collect();
        Self::from_seeds(kind, &seeds, workers)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn observations(&self) -> Vec<f64> {
        self.slots.iter().flat_map(|s| s.obs.iter().copied()).collect()
    }
}

/// Steps every slot `horizon` times. Slot `i` acts under gate row `i` of
/// `gates`; values come from the single ungated critic.
pub fn collect(venv: &mut VecEnv, agent: &Agent, gates: &GateAssignment, horizon: usize) -> Result<RolloutBatch> {
    let n = venv.slots.len();
    if let GateAssignment::Rows(rows) = gates {
        if rows.len() != n * agent.gate_width() {
            return Err(Error::shape(format!(
                "gate assignment has {} values for {n} slots of width {}",
                rows.len(),
                agent.gate_width()
            )));
        }
    }
    let mut records = Vec::with_capacity(n * horizon);
    for _ in 0..horizon {
        let states = venv.observations();
        let cache = agent.policy_forward(&states, gates)?;
        let values = agent.values(&states)?;
        let outputs = cache.output();
        let step_slot = |(i, slot): (usize, &mut ActorSlot)| -> Result<Transition> {
            let attach = |e: Error| Error::Environment {
                actor: i,
                reason: e.to_string(),
            };
            let (action, logp) = sample_and_logprob(agent.head(outputs, i), &mut slot.rng).map_err(attach)?;
            let step = slot.env.step(&action).map_err(attach)?;
            if !step.reward.is_finite() {
                return Err(attach(Error::NonFinite {
                    context: "reward".into(),
                }));
            }
            let next = if step.done { slot.env.reset() } else { step.observation };
            let state = std::mem::replace(&mut slot.obs, next);
            Ok(Transition {
                actor: i,
                state,
                action,
                reward: step.reward,
                done: step.done,
                value: values[i],
                behavior_logprob: logp,
            })
        };
        let step: Vec<Result<Transition>> = match &venv.pool {
            Some(pool) => pool.install(|| venv.slots.par_iter_mut().enumerate().map(step_slot).collect()),
            None => venv.slots.iter_mut().enumerate().map(step_slot).collect(),
        };
        for r in step {
            records.push(r?);
        }
    }
    let bootstrap_values = agent.values(&venv.observations())?;
    Ok(RolloutBatch {
        n_actors: n,
        horizon,
        records,
        bootstrap_values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletedEpisode {
    pub actor: usize,
    pub episode_return: f64,
    pub length: usize,
    pub phase: Phase,
}

/// Running return and length per actor; episodes are credited to the phase
/// in which they terminate.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTracker {
    running: Vec<f64>,
    lengths: Vec<usize>,
}

impl EpisodeTracker {
    pub fn new(n: usize) -> Self {
        Self {
            running: vec![0.0; n],
            lengths: vec![0; n],
        }
    }

    pub fn running_returns(&self) -> &[f64] {
        &self.running
    }

    /// Folds a batch into the running totals. Completed episodes are returned
    /// and, in the GA+elite phase only, appended to `table`.
    pub fn finish_episodes(
        &mut self,
        batch: &RolloutBatch,
        table: &mut FitnessTable,
        phase: Phase,
    ) -> Result<Vec<CompletedEpisode>> {
        if batch.n_actors != self.running.len() {
            return Err(Error::shape(format!(
                "tracker follows {} actors, batch has {}",
                self.running.len(),
                batch.n_actors
            )));
        }
        let mut done = Vec::new();
        for r in &batch.records {
            self.running[r.actor] += r.reward;
            self.lengths[r.actor] += 1;
            if r.done {
                let ep = CompletedEpisode {
                    actor: r.actor,
                    episode_return: self.running[r.actor],
                    length: self.lengths[r.actor],
                    phase,
                };
                if phase == Phase::GaElite {
                    table.record(r.actor, ep.episode_return)?;
                }
                done.push(ep);
                self.running[r.actor] = 0.0;
                self.lengths[r.actor] = 0;
            }
        }
        Ok(done)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{ActionSpace, EnvKind};
    use crate::genome::{init_population, Chromosome};
    use crate::rng::seeded;

    fn cartpole_agent(seed: u64) -> Agent {
        let mut rng = seeded(seed, 0);
        Agent::new(4, ActionSpace::Discrete(2), &[16, 16], &mut rng).unwrap()
    }

    fn fake_batch(rewards: &[[f64; 2]], dones: &[[bool; 2]]) -> RolloutBatch {
        let mut records = Vec::new();
        for (t, (r, d)) in rewards.iter().zip(dones).enumerate() {
            for i in 0..2 {
                records.push(Transition {
                    actor: i,
                    state: vec![t as f64],
                    action: Action::Discrete(0),
                    reward: r[i],
                    done: d[i],
                    value: 0.0,
                    behavior_logprob: 0.0,
                });
            }
        }
        RolloutBatch {
            n_actors: 2,
            horizon: rewards.len(),
            records,
            bootstrap_values: vec![0.0; 2],
        }
    }

    #[test]
    fn single_actor_matches_plain_collector() {
        let agent = cartpole_agent(1);
        let mut venv = VecEnv::from_seeds(EnvKind::Cartpole, &[42], 1).unwrap();
        let elite = Chromosome::ones(16);
        let batch = collect(&mut venv, &agent, &GateAssignment::uniform(&elite, 1), 4).unwrap();

        // hand-rolled actor-critic loop with the same seeds
        let mut env = EnvKind::Cartpole.make(42);
        let mut rng = seeded(42, stream::SAMPLING);
        let mut obs = env.reset();
        for t in 0..4 {
            let out = agent.actor.forward_ungated(&obs).unwrap().into_output();
            let (a, lp) = sample_and_logprob(agent.head(&out, 0), &mut rng).unwrap();
            let step = env.step(&a).unwrap();
            let r = batch.record(t, 0);
            assert_eq!(r.state, obs);
            assert_eq!(r.action, a);
            assert_eq!(r.behavior_logprob, lp);
            assert_eq!(r.value, agent.values(&obs).unwrap()[0]);
            obs = if step.done { env.reset() } else { step.observation };
        }
        assert_eq!(batch.bootstrap_values, agent.values(&obs).unwrap());
    }

    #[test]
    fn identical_gates_and_seeds_give_identical_trajectories() {
        let agent = cartpole_agent(2);
        let mut venv = VecEnv::from_seeds(EnvKind::Cartpole, &[7, 7], 1).unwrap();
        let mut rng = seeded(3, 0);
        let g = Chromosome::random(16, 0.8, &mut rng);
        let batch = collect(&mut venv, &agent, &GateAssignment::uniform(&g, 2), 30).unwrap();
        for t in 0..30 {
            let (a, b) = (batch.record(t, 0), batch.record(t, 1));
            assert_eq!((&a.state, &a.action, a.reward), (&b.state, &b.action, b.reward));
        }
    }

    #[test]
    fn parallel_equals_per_actor_sequential() {
        let agent = cartpole_agent(3);
        let mut rng = seeded(4, 0);
        let pop = init_population(8, 16, 0.7, &mut rng).unwrap();
        let seeds: Vec<u64> = (0..8).map(|i| 100 + i).collect();
        let mut par = VecEnv::from_seeds(EnvKind::Cartpole, &seeds, 4).unwrap();
        let batch = collect(&mut par, &agent, &GateAssignment::per_actor(&pop), 25).unwrap();
        for i in 0..8 {
            let mut solo = VecEnv::from_seeds(EnvKind::Cartpole, &seeds[i..=i], 1).unwrap();
            let b = collect(&mut solo, &agent, &GateAssignment::uniform(pop.row(i), 1), 25).unwrap();
            for t in 0..25 {
                let mut want = b.record(t, 0).clone();
                want.actor = i;
                assert_eq!(batch.record(t, i), &want);
            }
        }
    }

    #[test]
    fn behaviour_logprob_recomputes_under_actor_gate() {
        let agent = cartpole_agent(5);
        let mut rng = seeded(6, 0);
        let pop = init_population(4, 16, 0.5, &mut rng).unwrap();
        let mut venv = VecEnv::seeded(EnvKind::Cartpole, 9, 4, 1).unwrap();
        let batch = collect(&mut venv, &agent, &GateAssignment::per_actor(&pop), 10).unwrap();
        for r in &batch.records {
            let out = agent
                .actor
                .forward_uniform(&r.state, pop.row(r.actor))
                .unwrap()
                .into_output();
            assert_eq!(agent.head(&out, 0).log_prob(&r.action).unwrap(), r.behavior_logprob);
        }
    }

    #[test]
    fn elite_phase_episodes_skip_fitness() {
        let batch = fake_batch(&[[1.0, 2.0], [3.0, 4.0]], &[[false, true], [true, false]]);
        let mut table = FitnessTable::new(2);
        let mut tracker = EpisodeTracker::new(2);
        let eps = tracker.finish_episodes(&batch, &mut table, Phase::Elite).unwrap();
        assert_eq!(eps.len(), 2);
        assert_eq!(table, FitnessTable::new(2));
    }

    #[test]
    fn ga_phase_completion_lands_in_table() {
        let batch = fake_batch(&[[0.0, 5.0], [0.0, 7.5]], &[[false, false], [false, true]]);
        let mut table = FitnessTable::new(2);
        let mut tracker = EpisodeTracker::new(2);
        tracker.finish_episodes(&batch, &mut table, Phase::GaElite).unwrap();
        assert_eq!(table.scores(1), &[12.5]);
        assert!(table.scores(0).is_empty());
        assert_eq!(tracker.running_returns(), &[0.0, 0.0]);
    }

    #[test]
    fn episode_spanning_batches_credited_on_termination() {
        let mut table = FitnessTable::new(2);
        let mut tracker = EpisodeTracker::new(2);
        let a = fake_batch(&[[1.0, 1.0]], &[[false, false]]);
        let b = fake_batch(&[[2.0, 2.0]], &[[true, false]]);
        tracker.finish_episodes(&a, &mut table, Phase::Elite).unwrap();
        tracker.finish_episodes(&b, &mut table, Phase::GaElite).unwrap();
        assert_eq!(table.scores(0), &[3.0]);
    }

    #[test]
    fn table_matches_scan_of_done_flags() {
        let agent = cartpole_agent(8);
        let mut venv = VecEnv::seeded(EnvKind::Cartpole, 11, 4, 1).unwrap();
        let batch = collect(&mut venv, &agent, &GateAssignment::Ungated, 120).unwrap();
        let mut table = FitnessTable::new(4);
        let mut tracker = EpisodeTracker::new(4);
        tracker.finish_episodes(&batch, &mut table, Phase::GaElite).unwrap();
        let mut completions = 0;
        for i in 0..4 {
            let mut want = Vec::new();
            let mut acc = 0.0;
            for r in batch.segment(i) {
                acc += r.reward;
                if r.done {
                    want.push(acc);
                    acc = 0.0;
                }
            }
            completions += want.len();
            assert_eq!(table.scores(i), want.as_slice());
            assert_eq!(tracker.running_returns()[i], acc);
        }
        assert!(completions >= 5, "only {completions} episodes finished");
        // reward conservation
        let tracked: f64 = (0..4).map(|i| table.scores(i).iter().sum::<f64>()).sum::<f64>()
            + tracker.running_returns().iter().sum::<f64>();
        assert_eq!(tracked, batch.total_reward());
    }

    #[test]
    fn update_data_filters_actors() {
        let batch = fake_batch(&[[1.0, 2.0], [3.0, 4.0]], &[[false, false], [false, false]]);
        let est = AdvantageEstimator::Gae {
            gamma: 0.9,
            lambda: 0.9,
        };
        let only = batch.update_data(est, |a| a == 1).unwrap();
        assert_eq!(only.len(), 2);
        assert_eq!(only.states, vec![0.0, 1.0]);
        assert_eq!(batch.update_data(est, |_| true).unwrap().len(), 4);
    }
}
