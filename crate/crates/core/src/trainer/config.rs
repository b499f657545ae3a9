//! Run configuration: JSON on disk, every omitted field filled from the
//! per-algorithm defaults and logged.

use std::fmt::Display;
use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};

use crate::agent::OptimizerConfig;
use crate::envs::EnvKind;
use crate::error::{Error, Result};
use crate::genome::GeneticConfig;
use crate::network::{AdamParams, RmsPropParams};
use crate::rollout::AdvantageEstimator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    G2ac,
    G2ppo,
    /// Fresh random gates every generation instead of GA reproduction.
    RandomGate,
    /// GA runs but the GA+elite phase makes no gradient updates.
    Separated,
    /// Gates fixed open and GA disabled: plain A2C or PPO.
    Baseline,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::G2ac => "g2ac",
            Algorithm::G2ppo => "g2ppo",
            Algorithm::RandomGate => "random_gate",
            Algorithm::Separated => "separated",
            Algorithm::Baseline => "baseline",
        }
    }

    /// The gradient method implied by the algorithm name, if any.
    pub fn implied_base(&self) -> Option<BaseMethod> {
        match self {
            Algorithm::G2ac => Some(BaseMethod::A2c),
            Algorithm::G2ppo => Some(BaseMethod::Ppo),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseMethod {
    A2c,
    Ppo,
}

/// The configuration file as written. Every field is optional except
/// `algorithm` and `env`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<Algorithm>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub env: Option<EnvKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base: Option<BaseMethod>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub population_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub keep_prob: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crossover_prob: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mutation_prob: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_parents: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elite_phase_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ga_phase_episodes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gae_lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub advantage_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minibatch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip_eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalize_advantages: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value_coef: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entropy_coef: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_grad_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elite_only_updates: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_sizes: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_timesteps: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_generations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

/// Gradient-update settings for one base method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum UpdateRule {
    A2c {
        advantage_steps: usize,
    },
    Ppo {
        gae_lambda: f64,
        epochs: usize,
        minibatch_size: usize,
        clip_eps: f64,
        normalize_advantages: bool,
    },
}

/// A fully resolved and validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub env: EnvKind,
    pub genetic: GeneticConfig,
    pub elite_phase_steps: usize,
    pub ga_phase_episodes: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub update: UpdateRule,
    pub optimizer: OptimizerConfig,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub elite_only_updates: bool,
    pub hidden_sizes: Vec<usize>,
    pub total_timesteps: u64,
    pub max_generations: Option<usize>,
    pub seed: u64,
    pub workers: usize,
}

struct Defaults {
    population_size: usize,
    keep_prob: f64,
    elite_phase_steps: usize,
    ga_phase_episodes: usize,
    horizon: usize,
    epochs: usize,
    minibatch_size: usize,
    optimizer: OptimizerConfig,
    entropy_coef: f64,
    elite_only_updates: bool,
    total_timesteps: u64,
}

fn defaults(base: BaseMethod, env: EnvKind) -> Defaults {
    let total_timesteps = match env {
        EnvKind::Toy2d => 100_000,
        EnvKind::Cartpole => 300_000,
        EnvKind::Pointreacher => 500_000,
    };
    match (base, env) {
        (_, EnvKind::Toy2d) => Defaults {
            population_size: 8,
            keep_prob: 0.3,
            elite_phase_steps: 0,
            ga_phase_episodes: 200,
            horizon: 32,
            epochs: 2,
            minibatch_size: 16,
            optimizer: OptimizerConfig::Adam(AdamParams {
                lr: 1e-4,
                ..AdamParams::default()
            }),
            entropy_coef: if base == BaseMethod::A2c { 0.01 } else { 0.0 },
            elite_only_updates: true,
            total_timesteps,
        },
        (BaseMethod::A2c, _) => Defaults {
            population_size: 64,
            keep_prob: 0.8,
            elite_phase_steps: 500,
            ga_phase_episodes: 20,
            horizon: 5,
            epochs: 1,
            minibatch_size: 1,
            optimizer: OptimizerConfig::Rmsprop(RmsPropParams::default()),
            entropy_coef: 0.01,
            elite_only_updates: false,
            total_timesteps,
        },
        (BaseMethod::Ppo, _) => Defaults {
            population_size: 8,
            keep_prob: 0.8,
            elite_phase_steps: 10_240,
            ga_phase_episodes: 5,
            horizon: 512,
            epochs: 10,
            minibatch_size: 64,
            optimizer: OptimizerConfig::Adam(AdamParams::default()),
            entropy_coef: 0.0,
            elite_only_updates: false,
            total_timesteps,
        },
    }
}

fn take<T: Display + Clone>(key: &str, value: Option<T>, default: T) -> T {
    value.unwrap_or_else(|| {
        info!("config default: {key} = {default}");
        default
    })
}

fn take_with<T, F: FnOnce() -> T>(key: &str, value: Option<T>, default: F, show: impl Fn(&T) -> String) -> T {
    value.unwrap_or_else(|| {
        let d = default();
        info!("config default: {key} = {}", show(&d));
        d
    })
}

fn in_unit(errs: &mut Vec<String>, key: &str, v: f64) {
    if !(0.0..=1.0).contains(&v) {
        errs.push(format!("`{key}` = {v} must lie in [0, 1]"));
    }
}

fn positive(errs: &mut Vec<String>, key: &str, v: f64) {
    if !(v > 0.0 && v.is_finite()) {
        errs.push(format!("`{key}` = {v} must be positive and finite"));
    }
}

fn at_least_one(errs: &mut Vec<String>, key: &str, v: usize) {
    if v < 1 {
        errs.push(format!("`{key}` must be at least 1"));
    }
}

impl ConfigFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Fills defaults and validates. All problems are reported at once.
    pub fn resolve(self) -> Result<RunConfig> {
        let mut errs = Vec::new();
        let (algorithm, env) = match (self.algorithm, self.env) {
            (Some(a), Some(e)) => (a, e),
            (a, e) => {
                if a.is_none() {
                    errs.push("`algorithm` is required (g2ac, g2ppo, random_gate, separated, baseline)".into());
                }
                if e.is_none() {
                    errs.push("`env` is required (toy2d, cartpole, pointreacher)".into());
                }
                return Err(Error::ConfigList(errs));
            }
        };
        let base = match (algorithm.implied_base(), self.base) {
            (Some(implied), Some(b)) if implied != b => {
                errs.push(format!(
                    "`base` = {b:?} conflicts with algorithm `{}`",
                    algorithm.name()
                ));
                implied
            }
            (Some(implied), _) => implied,
            (None, Some(b)) => b,
            (None, None) => {
                let b = if env.spec().action_space.is_discrete() {
                    BaseMethod::A2c
                } else {
                    BaseMethod::Ppo
                };
                info!("config default: base = {b:?}");
                b
            }
        };
        let d = defaults(base, env);

        let population_size = take("population_size", self.population_size, d.population_size);
        let genetic = GeneticConfig {
            population_size,
            keep_prob: take("keep_prob", self.keep_prob, d.keep_prob),
            crossover_prob: take("crossover_prob", self.crossover_prob, 0.8),
            mutation_prob: take("mutation_prob", self.mutation_prob, 0.03),
            num_parents: take(
                "num_parents",
                self.num_parents,
                GeneticConfig::default_num_parents(population_size),
            ),
        };
        errs.extend(genetic.validate());

        let horizon = take("horizon", self.horizon, d.horizon);
        at_least_one(&mut errs, "horizon", horizon);
        let gamma = take("gamma", self.gamma, 0.99);
        in_unit(&mut errs, "gamma", gamma);

        let update = match base {
            BaseMethod::A2c => {
                for (key, set) in [
                    ("gae_lambda", self.gae_lambda.is_some()),
                    ("epochs", self.epochs.is_some()),
                    ("minibatch_size", self.minibatch_size.is_some()),
                    ("clip_eps", self.clip_eps.is_some()),
                ] {
                    if set {
                        errs.push(format!("`{key}` only applies to the ppo base method"));
                    }
                }
                if self.normalize_advantages == Some(true) {
                    errs.push("`normalize_advantages` is only supported with the ppo base method".into());
                }
                let k = take("advantage_steps", self.advantage_steps, horizon.max(1));
                at_least_one(&mut errs, "advantage_steps", k);
                UpdateRule::A2c { advantage_steps: k }
            }
            BaseMethod::Ppo => {
                if self.advantage_steps.is_some() {
                    errs.push("`advantage_steps` only applies to the a2c base method".into());
                }
                let gae_lambda = take("gae_lambda", self.gae_lambda, 0.95);
                in_unit(&mut errs, "gae_lambda", gae_lambda);
                let epochs = take("epochs", self.epochs, d.epochs);
                at_least_one(&mut errs, "epochs", epochs);
                let minibatch_size = take("minibatch_size", self.minibatch_size, d.minibatch_size);
                at_least_one(&mut errs, "minibatch_size", minibatch_size);
                let clip_eps = take("clip_eps", self.clip_eps, 0.2);
                positive(&mut errs, "clip_eps", clip_eps);
                UpdateRule::Ppo {
                    gae_lambda,
                    epochs,
                    minibatch_size,
                    clip_eps,
                    normalize_advantages: take("normalize_advantages", self.normalize_advantages, true),
                }
            }
        };

        let optimizer = take_with("optimizer", self.optimizer, || d.optimizer, |o| format!("{o:?}"));
        match optimizer {
            OptimizerConfig::Adam(p) => {
                positive(&mut errs, "optimizer.lr", p.lr);
                positive(&mut errs, "optimizer.eps", p.eps);
                for (k, b) in [("optimizer.beta1", p.beta1), ("optimizer.beta2", p.beta2)] {
                    if !(0.0..1.0).contains(&b) {
                        errs.push(format!("`{k}` = {b} must lie in [0, 1)"));
                    }
                }
            }
            OptimizerConfig::Rmsprop(p) => {
                positive(&mut errs, "optimizer.lr", p.lr);
                positive(&mut errs, "optimizer.eps", p.eps);
                if !(0.0..1.0).contains(&p.alpha) {
                    errs.push(format!("`optimizer.alpha` = {} must lie in [0, 1)", p.alpha));
                }
            }
        }

        let value_coef = take("value_coef", self.value_coef, 0.5);
        let entropy_coef = take("entropy_coef", self.entropy_coef, d.entropy_coef);
        for (k, v) in [("value_coef", value_coef), ("entropy_coef", entropy_coef)] {
            if !(v >= 0.0 && v.is_finite()) {
                errs.push(format!("`{k}` = {v} must be non-negative and finite"));
            }
        }
        let max_grad_norm = take("max_grad_norm", self.max_grad_norm, 0.5);
        positive(&mut errs, "max_grad_norm", max_grad_norm);

        let ga_phase_episodes = take("ga_phase_episodes", self.ga_phase_episodes, d.ga_phase_episodes);
        at_least_one(&mut errs, "ga_phase_episodes", ga_phase_episodes);

        let hidden_sizes = take_with("hidden_sizes", self.hidden_sizes, || vec![64, 64], |h| format!("{h:?}"));
        if hidden_sizes.is_empty() || hidden_sizes.contains(&0) {
            errs.push(format!(
                "`hidden_sizes` = {hidden_sizes:?} needs at least one layer, all widths positive"
            ));
        }
        let workers = take("workers", self.workers, 1);
        at_least_one(&mut errs, "workers", workers);
        if self.max_generations == Some(0) {
            errs.push("`max_generations` must be at least 1 when set".into());
        }

        if !errs.is_empty() {
            return Err(Error::ConfigList(errs));
        }
        Ok(RunConfig {
            algorithm,
            env,
            genetic,
            elite_phase_steps: take("elite_phase_steps", self.elite_phase_steps, d.elite_phase_steps),
            ga_phase_episodes,
            horizon,
            gamma,
            update,
            optimizer,
            value_coef,
            entropy_coef,
            max_grad_norm,
            elite_only_updates: take("elite_only_updates", self.elite_only_updates, d.elite_only_updates),
            hidden_sizes,
            total_timesteps: take("total_timesteps", self.total_timesteps, d.total_timesteps),
            max_generations: self.max_generations,
            seed: take("seed", self.seed, 0),
            workers,
        })
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        ConfigFile::from_json(text)?.resolve()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ConfigFile::from_json(&text)
            .map_err(|e| Error::Artifact(format!("{}: {e}", path.display())))?
            .resolve()
    }

    pub fn base(&self) -> BaseMethod {
        match self.update {
            UpdateRule::A2c { .. } => BaseMethod::A2c,
            UpdateRule::Ppo { .. } => BaseMethod::Ppo,
        }
    }

    pub fn advantage(&self) -> AdvantageEstimator {
        match self.update {
            UpdateRule::A2c { advantage_steps } => AdvantageEstimator::KStep {
                gamma: self.gamma,
                k: advantage_steps,
            },
            UpdateRule::Ppo { gae_lambda, .. } => AdvantageEstimator::Gae {
                gamma: self.gamma,
                lambda: gae_lambda,
            },
        }
    }

    /// The explicit file form; loading it back yields the same config.
    pub fn to_file(&self) -> ConfigFile {
        let mut f = ConfigFile {
            algorithm: Some(self.algorithm),
            env: Some(self.env),
            base: Some(self.base()),
            population_size: Some(self.genetic.population_size),
            keep_prob: Some(self.genetic.keep_prob),
            crossover_prob: Some(self.genetic.crossover_prob),
            mutation_prob: Some(self.genetic.mutation_prob),
            num_parents: Some(self.genetic.num_parents),
            elite_phase_steps: Some(self.elite_phase_steps),
            ga_phase_episodes: Some(self.ga_phase_episodes),
            horizon: Some(self.horizon),
            gamma: Some(self.gamma),
            optimizer: Some(self.optimizer),
            value_coef: Some(self.value_coef),
            entropy_coef: Some(self.entropy_coef),
            max_grad_norm: Some(self.max_grad_norm),
            elite_only_updates: Some(self.elite_only_updates),
            hidden_sizes: Some(self.hidden_sizes.clone()),
            total_timesteps: Some(self.total_timesteps),
            max_generations: self.max_generations,
            seed: Some(self.seed),
            workers: Some(self.workers),
            ..ConfigFile::default()
        };
        match self.update {
            UpdateRule::A2c { advantage_steps } => f.advantage_steps = Some(advantage_steps),
            UpdateRule::Ppo {
                gae_lambda,
                epochs,
                minibatch_size,
                clip_eps,
                normalize_advantages,
            } => {
                f.gae_lambda = Some(gae_lambda);
                f.epochs = Some(epochs);
                f.minibatch_size = Some(minibatch_size);
                f.clip_eps = Some(clip_eps);
                f.normalize_advantages = Some(normalize_advantages);
            }
        }
        f
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("config serializes")
    }

    /// Expected number of env steps each actor needs for one GA+elite phase
    /// when every episode runs to the time limit.
    pub fn ga_phase_step_cap(&self) -> u64 {
        4 * self.ga_phase_episodes as u64 * self.env.spec().max_episode_steps as u64
    }
}
