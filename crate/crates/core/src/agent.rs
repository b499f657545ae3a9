//! Actor-critic agent: a gated actor, an optional learned log-std for
//! continuous actions, and a single ungated critic.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{Action, ActionSpace};
use crate::error::{Error, Result};
use crate::genome::{Chromosome, Population};
use crate::network::{
    adam_step, rmsprop_step, AdamParams, AdamState, Checkpoint, CriticNetwork, ForwardCache, GateBackward,
    GatedNetwork, NetworkRecord, RmsPropParams, RmsPropState,
};
use crate::policy::{a2c_loss, categorical, gaussian, normalize_advantages, ppo_clip_loss, Head, LossCoefs, LossTerms};

/// How the actor's gated layer is driven for a batch.
#[derive(Debug, Clone, PartialEq)]
pub enum GateAssignment {
    /// Plain actor forward with no gate multiplication at all.
    Ungated,
    /// One gate row per batch element, row-major.
    Rows(Vec<f64>),
}

impl GateAssignment {
    /// Row `i` gates actor slot `i`.
    pub fn per_actor(pop: &Population) -> Self {
        GateAssignment::Rows(pop.rows().iter().flat_map(Chromosome::to_gate).collect())
    }

    pub fn uniform(gate: &Chromosome, batch: usize) -> Self {
        let row = gate.to_gate();
        GateAssignment::Rows(row.iter().copied().cycle().take(batch * row.len()).collect())
    }

    /// Gate row for batch element `i` of a `width`-unit gated layer.
    pub fn row(&self, i: usize, width: usize) -> Option<&[f64]> {
        match self {
            GateAssignment::Ungated => None,
            GateAssignment::Rows(r) => Some(&r[i * width..(i + 1) * width]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub actor: GatedNetwork,
    /// Empty for discrete action spaces.
    pub log_std: Vec<f64>,
    pub critic: CriticNetwork,
    pub action_space: ActionSpace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentGrads {
    pub actor: Vec<f64>,
    pub log_std: Vec<f64>,
    pub critic: Vec<f64>,
}

impl AgentGrads {
    pub fn global_norm(&self) -> f64 {
        self.actor
            .iter()
            .chain(&self.log_std)
            .chain(&self.critic)
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales so the global norm is at most `max_norm`; returns the norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            let scale = max_norm / norm;
            self.actor
                .iter_mut()
                .chain(self.log_std.iter_mut())
                .chain(self.critic.iter_mut())
                .for_each(|g| *g *= scale);
        }
        norm
    }

    pub fn flatten(&self) -> Vec<f64> {
        [self.actor.as_slice(), &self.log_std, &self.critic].concat()
    }

    pub fn is_finite(&self) -> bool {
        self.flatten().iter().all(|g| g.is_finite())
    }
}

/// Per-sample inputs to one gradient update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateData {
    pub states: Vec<f64>,
    pub actions: Vec<Action>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// Behaviour log-probabilities, the PPO ratio denominator.
    pub logp_old: Vec<f64>,
}

impl UpdateData {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn subset(&self, idx: &[usize], obs_dim: usize) -> Self {
        let mut out = UpdateData::default();
        for &i in idx {
            out.states
                .extend_from_slice(&self.states[i * obs_dim..(i + 1) * obs_dim]);
            out.actions.push(self.actions[i].clone());
            out.advantages.push(self.advantages[i]);
            out.returns.push(self.returns[i]);
            out.logp_old.push(self.logp_old[i]);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LossKind {
    A2c,
    Ppo { clip_eps: f64, normalize_advantages: bool },
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        action_space: ActionSpace,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        if hidden.is_empty() {
            return Err(Error::config("hidden_sizes", "needs at least one hidden layer to gate"));
        }
        let out = action_space.policy_outputs();
        let actor_sizes: Vec<usize> = std::iter::once(obs_dim)
            .chain(hidden.iter().copied())
            .chain([out])
            .collect();
        let critic_sizes: Vec<usize> = std::iter::once(obs_dim)
            .chain(hidden.iter().copied())
            .chain([1])
            .collect();
        let actor = GatedNetwork::init(&actor_sizes, rng)?;
        let critic = CriticNetwork::init(&critic_sizes, rng)?;
        let log_std = match action_space {
            ActionSpace::Discrete(_) => Vec::new(),
            ActionSpace::Continuous { dim, .. } => vec![0.0; dim],
        };
        Ok(Self {
            actor,
            log_std,
            critic,
            action_space,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.mlp().input_dim()
    }

    pub fn gate_width(&self) -> usize {
        self.actor.gate_width()
    }

    pub fn policy_forward(&self, states: &[f64], gates: &GateAssignment) -> Result<ForwardCache> {
        match gates {
            GateAssignment::Ungated => self.actor.forward_ungated(states),
            GateAssignment::Rows(rows) => self.actor.forward_gated(states, rows),
        }
    }

    /// Distribution for row `i` of a policy forward output.
    pub fn head<'a>(&'a self, outputs: &'a [f64], i: usize) -> Head<'a> {
        let d = self.action_space.policy_outputs();
        let row = &outputs[i * d..(i + 1) * d];
        match self.action_space {
            ActionSpace::Discrete(_) => Head::Categorical { logits: row },
            ActionSpace::Continuous { .. } => Head::Gaussian {
                mean: row,
                log_std: &self.log_std,
            },
        }
    }

    pub fn values(&self, states: &[f64]) -> Result<Vec<f64>> {
        self.critic.values(states)
    }

    pub fn num_params(&self) -> usize {
        self.actor.mlp().num_params() + self.log_std.len() + self.critic.mlp().num_params()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        [self.actor.mlp().params(), &self.log_std, self.critic.mlp().params()].concat()
    }

    pub fn set_flat_params(&mut self, p: &[f64]) -> Result<()> {
        let a = self.actor.mlp().num_params();
        let s = self.log_std.len();
        if p.len() != self.num_params() {
            return Err(Error::shape(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                p.len()
            )));
        }
        self.actor.mlp_mut().set_params(&p[..a])?;
        self.log_std.copy_from_slice(&p[a..a + s]);
        self.critic.mlp_mut().set_params(&p[a + s..])
    }

    /// Loss and gradients for `data`, evaluating the policy under `gate`
    /// (`None` is the ungated path).
    pub fn loss_and_grads(
        &self,
        data: &UpdateData,
        gate: Option<&Chromosome>,
        kind: LossKind,
        coefs: &LossCoefs,
    ) -> Result<(LossTerms, AgentGrads)> {
        self.loss_and_grads_with(data, gate, kind, coefs, GateBackward(1.0))
    }

    pub(crate) fn loss_and_grads_with(
        &self,
        data: &UpdateData,
        gate: Option<&Chromosome>,
        kind: LossKind,
        coefs: &LossCoefs,
        fault: GateBackward,
    ) -> Result<(LossTerms, AgentGrads)> {
        let n = data.len();
        if n == 0 {
            return Err(Error::shape("empty update batch"));
        }
        let actor_cache = match gate {
            None => self.actor.forward_ungated(&data.states)?,
            Some(g) => self.actor.forward_uniform(&data.states, g)?,
        };
        let critic_cache = self.critic.forward(&data.states)?;
        let outputs = actor_cache.output();
        let values = critic_cache.output();

        let mut logp = Vec::with_capacity(n);
        let mut entropy = Vec::with_capacity(n);
        for (i, a) in data.actions.iter().enumerate() {
            let head = self.head(outputs, i);
            logp.push(head.log_prob(a)?);
            entropy.push(head.entropy());
        }

        let (terms, lg) = match kind {
            LossKind::A2c => a2c_loss(&logp, &data.advantages, values, &data.returns, &entropy, coefs),
            LossKind::Ppo {
                clip_eps,
                normalize_advantages: norm,
            } => {
                let mut adv = data.advantages.clone();
                if norm {
                    normalize_advantages(&mut adv);
                }
                ppo_clip_loss(
                    &logp,
                    &data.logp_old,
                    &adv,
                    clip_eps,
                    values,
                    &data.returns,
                    &entropy,
                    coefs,
                )
            }
        };
        if !terms.total.is_finite() {
            return Err(Error::NonFinite { context: "loss".into() });
        }

        let d = self.action_space.policy_outputs();
        let mut d_out = vec![0.0; n * d];
        let mut d_log_std = vec![0.0; self.log_std.len()];
        for (i, a) in data.actions.iter().enumerate() {
            let row = &outputs[i * d..(i + 1) * d];
            let dst = &mut d_out[i * d..(i + 1) * d];
            match (&self.action_space, a) {
                (ActionSpace::Discrete(_), Action::Discrete(act)) => {
                    categorical::accumulate_log_prob_grad(row, *act, lg.d_logp[i], dst);
                    categorical::accumulate_entropy_grad(row, lg.d_entropy[i], dst);
                }
                (ActionSpace::Continuous { .. }, Action::Continuous(act)) => {
                    gaussian::accumulate_log_prob_grad(row, &self.log_std, act, lg.d_logp[i], dst, &mut d_log_std);
                    gaussian::accumulate_entropy_grad(&self.log_std, lg.d_entropy[i], &mut d_log_std);
                }
                _ => return Err(Error::shape(format!("action {a:?} does not match the action space"))),
            }
        }
        let actor = match gate {
            Some(g) if fault.0 == 1.0 => self.actor.backward_elite(&actor_cache, &d_out, g)?,
            _ => self.actor.backward_faulty(&actor_cache, &d_out, fault)?,
        };
        let critic = self.critic.backward(&critic_cache, &lg.d_value)?;
        Ok((
            terms,
            AgentGrads {
                actor,
                log_std: d_log_std,
                critic,
            },
        ))
    }

    pub fn apply_step(&mut self, grads: &AgentGrads, opt: &mut AgentOptimizer) {
        opt.step(self, grads);
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::default();
        ckpt.networks.push(NetworkRecord::from_mlp(
            "actor",
            self.actor.mlp(),
            Some(self.actor.gated_layer()),
        ));
        ckpt.networks
            .push(NetworkRecord::from_mlp("critic", self.critic.mlp(), None));
        if !self.log_std.is_empty() {
            ckpt.vectors.insert("log_std".into(), self.log_std.clone());
        }
        ckpt
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, action_space: ActionSpace) -> Result<Self> {
        let actor_rec = ckpt.network("actor")?;
        let gated = actor_rec
            .gated_layer
            .ok_or_else(|| Error::Artifact("actor checkpoint has no gated_layer".into()))?;
        let actor = GatedNetwork::new(actor_rec.to_mlp()?, gated)?;
        let critic = CriticNetwork::new(ckpt.network("critic")?.to_mlp()?)?;
        let log_std = ckpt.vectors.get("log_std").cloned().unwrap_or_default();
        if actor.mlp().output_dim() != action_space.policy_outputs() {
            return Err(Error::Artifact(
                "checkpoint actor does not match the action space".into(),
            ));
        }
        Ok(Self {
            actor,
            log_std,
            critic,
            action_space,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerConfig {
    Adam(AdamParams),
    Rmsprop(RmsPropParams),
}

#[derive(Debug, Clone, PartialEq)]
enum OptimizerStates {
    Adam([AdamState; 3], AdamParams),
    RmsProp([RmsPropState; 3], RmsPropParams),
}

/// One optimizer over actor, log-std and critic parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentOptimizer {
    states: OptimizerStates,
}

impl AgentOptimizer {
    pub fn new(cfg: &OptimizerConfig, agent: &Agent) -> Self {
        let lens = [
            agent.actor.mlp().num_params(),
            agent.log_std.len(),
            agent.critic.mlp().num_params(),
        ];
        let states = match cfg {
            OptimizerConfig::Adam(hp) => OptimizerStates::Adam(lens.map(AdamState::new), *hp),
            OptimizerConfig::Rmsprop(hp) => OptimizerStates::RmsProp(lens.map(RmsPropState::new), *hp),
        };
        Self { states }
    }

    pub fn steps(&self) -> u64 {
        match &self.states {
            OptimizerStates::Adam(s, _) => s[0].step,
            OptimizerStates::RmsProp(s, _) => s[0].step,
        }
    }

    pub fn step(&mut self, agent: &mut Agent, grads: &AgentGrads) {
        let [a, s, c] = [&grads.actor, &grads.log_std, &grads.critic];
        match &mut self.states {
            OptimizerStates::Adam([sa, ss, sc], hp) => {
                adam_step(agent.actor.mlp_mut().params_mut(), a, sa, hp);
                adam_step(&mut agent.log_std, s, ss, hp);
                adam_step(agent.critic.mlp_mut().params_mut(), c, sc, hp);
            }
            OptimizerStates::RmsProp([sa, ss, sc], hp) => {
                rmsprop_step(agent.actor.mlp_mut().params_mut(), a, sa, hp);
                rmsprop_step(&mut agent.log_std, s, ss, hp);
                rmsprop_step(agent.critic.mlp_mut().params_mut(), c, sc, hp);
            }
        }
    }
}
