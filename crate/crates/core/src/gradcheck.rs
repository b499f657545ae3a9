//! Finite-difference checks of every analytic gradient in the crate.

use std::fmt;

use rand::Rng as _;

use crate::agent::{Agent, LossKind, UpdateData};
use crate::envs::{Action, ActionSpace};
use crate::error::Result;
use crate::genome::Chromosome;
use crate::network::{finite_difference_gradients, relative_error, CriticNetwork, GateBackward, GatedNetwork, Mlp};
use crate::policy::{a2c_loss, ppo_clip_loss, LossCoefs};
use crate::rng::{seeded, Rng};

pub const TOLERANCE: f64 = 1e-4;
pub const EPSILON: f64 = 1e-5;

/// Deliberate corruption of the gated backward pass, for checking the checker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Gradient through the gate is multiplied by -1 instead of +1.
    GateSignFlip,
}

impl Fault {
    fn backward(self) -> GateBackward {
        match self {
            Fault::None => GateBackward(1.0),
            Fault::GateSignFlip => GateBackward(-1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub instances: usize,
    pub worst_error: f64,
    /// Where the worst error occurred, e.g. `actor layer 0 weight[2, 1]`.
    pub worst_param: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub suites: Vec<SuiteResult>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }

    pub fn worst(&self) -> Option<&SuiteResult> {
        self.suites
            .iter()
            .max_by(|a, b| a.worst_error.total_cmp(&b.worst_error))
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.suites {
            writeln!(
                f,
                "{} {:<14} {:>3} instances  worst rel. error {:.3e} at {}",
                if s.passed { "PASS" } else { "FAIL" },
                s.name,
                s.instances,
                s.worst_error,
                s.worst_param
            )?;
        }
        match (self.passed(), self.worst()) {
            (false, Some(w)) => write!(
                f,
                "gradient check failed (tolerance {:.0e}); worst offender: {} in {}",
                self.tolerance, w.worst_param, w.name
            ),
            _ => write!(f, "all gradients within {:.0e}", self.tolerance),
        }
    }
}

#[derive(Default)]
struct Worst {
    error: f64,
    at: String,
}

impl Worst {
    fn compare(&mut self, analytic: &[f64], numeric: &[f64], describe: impl Fn(usize) -> String) {
        for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
            let e = relative_error(*a, *n);
            if e > self.error || self.at.is_empty() {
                self.error = e;
                self.at = describe(i);
            }
        }
    }

    fn finish(self, name: &'static str, instances: usize) -> SuiteResult {
        SuiteResult {
            name,
            instances,
            passed: self.error < TOLERANCE,
            worst_error: self.error,
            worst_param: self.at,
        }
    }
}

fn uniform(rng: &mut Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn random_sizes(rng: &mut Rng) -> Vec<usize> {
    vec![
        rng.random_range(2..5),
        rng.random_range(3..7),
        rng.random_range(3..7),
        rng.random_range(1..4),
    ]
}

/// Moves every parameter off zero so no pre-activation sits on a ReLU kink.
fn jitter(mlp: &mut Mlp, rng: &mut Rng) {
    for p in mlp.params_mut() {
        *p += rng.random_range(-0.1..0.1);
    }
}

fn loss_suite(name: &'static str, instances: usize, seed: u64, ppo: bool) -> SuiteResult {
    let mut worst = Worst::default();
    for i in 0..instances {
        let mut rng = seeded(seed, if ppo { 2000 } else { 1000 } + i as u64);
        let n = rng.random_range(2..9);
        let adv = uniform(&mut rng, n, -2.0, 2.0);
        let returns = uniform(&mut rng, n, -1.0, 1.0);
        let logp_old = uniform(&mut rng, n, -2.0, -0.5);
        let coefs = LossCoefs {
            value: 0.5,
            entropy: 0.01,
        };
        let mut x = Vec::with_capacity(3 * n);
        // new log-probs within +-0.5 of the old ones: both clip branches occur
        for old in &logp_old {
            x.push(old + rng.random_range(-0.5..0.5));
        }
        x.extend(uniform(&mut rng, n, -1.0, 1.0));
        x.extend(uniform(&mut rng, n, 0.1, 1.5));
        let eval = |x: &[f64]| {
            let (logp, rest) = x.split_at(n);
            let (values, entropy) = rest.split_at(n);
            if ppo {
                ppo_clip_loss(logp, &logp_old, &adv, 0.2, values, &returns, entropy, &coefs)
            } else {
                a2c_loss(logp, &adv, values, &returns, entropy, &coefs)
            }
        };
        let (_, g) = eval(&x);
        let analytic: Vec<f64> = [g.d_logp, g.d_value, g.d_entropy].concat();
        let numeric = finite_difference_gradients(&x, |x| eval(x).0.total, EPSILON);
        let input = ["logp", "value", "entropy"];
        worst.compare(&analytic, &numeric, |j| {
            format!("{}[{}] (instance {i})", input[j / n], j % n)
        });
    }
    worst.finish(name, instances)
}

fn actor_suite(instances: usize, seed: u64, fault: Fault, zero: bool) -> Result<SuiteResult> {
    let mut worst = Worst::default();
    for i in 0..instances {
        let mut rng = seeded(seed, 3000 + i as u64);
        let sizes = random_sizes(&mut rng);
        let net = if zero {
            let gated = sizes.len() - 3;
            GatedNetwork::new(Mlp::zeros(&sizes)?, gated)?
        } else {
            let mut net = GatedNetwork::init(&sizes, &mut rng)?;
            jitter(net.mlp_mut(), &mut rng);
            net
        };
        let batch = rng.random_range(1..5);
        let states = uniform(&mut rng, batch * sizes[0], -1.0, 1.0);
        let coef = uniform(&mut rng, batch * sizes[sizes.len() - 1], -1.0, 1.0);
        let gate = Chromosome::random(net.gate_width(), 0.6, &mut rng);
        let cache = net.forward_uniform(&states, &gate)?;
        let analytic = net.backward_faulty(&cache, &coef, fault.backward())?;
        let numeric = finite_difference_gradients(
            net.mlp().params(),
            |p| {
                let mut probe = net.mlp().clone();
                probe.set_params(p).expect("same length");
                let out = GatedNetwork::new(probe, net.gated_layer())
                    .and_then(|n| n.forward_uniform(&states, &gate))
                    .expect("valid shapes")
                    .into_output();
                out.iter().zip(&coef).map(|(o, c)| o * c).sum()
            },
            EPSILON,
        );
        worst.compare(&analytic, &numeric, |j| {
            format!(
                "actor {} (gated layer {}, instance {i})",
                net.mlp().describe_param(j),
                net.gated_layer()
            )
        });
    }
    Ok(worst.finish(if zero { "zero_actor" } else { "gated_actor" }, instances))
}

fn critic_suite(instances: usize, seed: u64) -> Result<SuiteResult> {
    let mut worst = Worst::default();
    for i in 0..instances {
        let mut rng = seeded(seed, 4000 + i as u64);
        let mut sizes = random_sizes(&mut rng);
        *sizes.last_mut().expect("non-empty") = 1;
        let mut net = CriticNetwork::init(&sizes, &mut rng)?;
        jitter(net.mlp_mut(), &mut rng);
        let batch = rng.random_range(1..5);
        let states = uniform(&mut rng, batch * sizes[0], -1.0, 1.0);
        let coef = uniform(&mut rng, batch, -1.0, 1.0);
        let cache = net.forward(&states)?;
        let analytic = net.backward(&cache, &coef)?;
        let numeric = finite_difference_gradients(
            net.mlp().params(),
            |p| {
                let mut probe = net.mlp().clone();
                probe.set_params(p).expect("same length");
                let v = probe.forward(&states, None).expect("valid shapes").into_output();
                v.iter().zip(&coef).map(|(o, c)| o * c).sum()
            },
            EPSILON,
        );
        worst.compare(&analytic, &numeric, |j| {
            format!("critic {} (instance {i})", net.mlp().describe_param(j))
        });
    }
    Ok(worst.finish("critic", instances))
}

fn agent_suite(instances: usize, seed: u64, fault: Fault) -> Result<SuiteResult> {
    let mut worst = Worst::default();
    for i in 0..instances {
        let mut rng = seeded(seed, 5000 + i as u64);
        let continuous = i % 2 == 1;
        let space = if continuous {
            ActionSpace::Continuous {
                dim: 2,
                low: -1.0,
                high: 1.0,
            }
        } else {
            ActionSpace::Discrete(3)
        };
        let obs = rng.random_range(2..5);
        let hidden = [rng.random_range(3..6), rng.random_range(3..6)];
        let mut agent = Agent::new(obs, space.clone(), &hidden, &mut rng)?;
        let p: Vec<f64> = agent
            .flat_params()
            .iter()
            .map(|v| v + rng.random_range(-0.1..0.1))
            .collect();
        agent.set_flat_params(&p)?;
        if continuous {
            agent.log_std = uniform(&mut rng, 2, -0.5, 0.5);
        }
        let n = rng.random_range(2..6);
        let mut data = UpdateData {
            states: uniform(&mut rng, n * obs, -1.0, 1.0),
            ..UpdateData::default()
        };
        for _ in 0..n {
            data.actions.push(match &space {
                ActionSpace::Discrete(k) => Action::Discrete(rng.random_range(0..*k)),
                ActionSpace::Continuous { dim, .. } => Action::Continuous(uniform(&mut rng, *dim, -1.5, 1.5)),
            });
            data.advantages.push(rng.random_range(-1.0..1.0));
            data.returns.push(rng.random_range(-1.0..1.0));
        }
        let gate = Chromosome::random(agent.gate_width(), 0.6, &mut rng);
        let kind = if continuous {
            LossKind::Ppo {
                clip_eps: 0.2,
                normalize_advantages: true,
            }
        } else {
            LossKind::A2c
        };
        // old log-probs near the current ones so the PPO ratio spans both branches
        let out = agent.actor.forward_uniform(&data.states, &gate)?.into_output();
        for (k, a) in data.actions.iter().enumerate() {
            data.logp_old
                .push(agent.head(&out, k).log_prob(a)? + rng.random_range(-0.3..0.3));
        }
        let coefs = LossCoefs {
            value: 0.5,
            entropy: 0.01,
        };
        let (_, g) = agent.loss_and_grads_with(&data, Some(&gate), kind, &coefs, fault.backward())?;
        let numeric = finite_difference_gradients(
            &agent.flat_params(),
            |p| {
                let mut probe = agent.clone();
                probe.set_flat_params(p).expect("same length");
                probe
                    .loss_and_grads(&data, Some(&gate), kind, &coefs)
                    .expect("finite loss")
                    .0
                    .total
            },
            EPSILON,
        );
        let actor_len = agent.actor.mlp().num_params();
        let std_len = agent.log_std.len();
        worst.compare(&g.flatten(), &numeric, |j| {
            if j < actor_len {
                format!(
                    "actor {} (gated layer {}, instance {i})",
                    agent.actor.mlp().describe_param(j),
                    agent.actor.gated_layer()
                )
            } else if j < actor_len + std_len {
                format!("log_std[{}] (instance {i})", j - actor_len)
            } else {
                format!(
                    "critic {} (instance {i})",
                    agent.critic.mlp().describe_param(j - actor_len - std_len)
                )
            }
        });
    }
    Ok(worst.finish("agent_chain", instances))
}

/// Runs every suite on `instances` random cases each.
pub fn gradcheck(seed: u64, instances: usize, fault: Fault) -> Result<GradcheckReport> {
    Ok(GradcheckReport {
        tolerance: TOLERANCE,
        suites: vec![
            loss_suite("a2c_loss", instances, seed, false),
            loss_suite("ppo_clip_loss", instances, seed, true),
            actor_suite(instances, seed, fault, false)?,
            actor_suite(1, seed, fault, true)?,
            critic_suite(instances, seed)?,
            agent_suite(instances, seed, fault)?,
        ],
    })
}
