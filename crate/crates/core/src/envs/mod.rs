//! Desk-scale environments behind one interface: the 2D multimodal toy
//! problem, cart-pole and a continuous point-mass reacher.

mod cartpole;
mod reacher;
mod toy2d;

pub use cartpole::{cartpole_step, CartPole, CartPoleState};
pub use reacher::{pointreacher_step, PointReacher, ReacherState};
pub use toy2d::{toy2d_episode, toy2d_reward, Bump, Toy2D, Toy2DSurface};

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ActionSpace {
    Discrete(usize),
    Continuous { dim: usize, low: f64, high: f64 },
}

impl ActionSpace {
    /// Width of the actor's output layer.
    pub fn policy_outputs(&self) -> usize {
        match self {
            ActionSpace::Discrete(n) => *n,
            ActionSpace::Continuous { dim, .. } => *dim,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, ActionSpace::Discrete(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub observation_dim: usize,
    pub action_space: ActionSpace,
    pub max_episode_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;

    /// Starts a new episode and returns its first observation.
    fn reset(&mut self) -> Vec<f64>;

    fn step(&mut self, action: &Action) -> Result<Step>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Toy2d,
    Cartpole,
    Pointreacher,
}

impl EnvKind {
    pub fn name(&self) -> &'static str {
        match self {
            EnvKind::Toy2d => "toy2d",
            EnvKind::Cartpole => "cartpole",
            EnvKind::Pointreacher => "pointreacher",
        }
    }

    pub fn make(&self, seed: u64) -> Box<dyn Environment> {
        match self {
            EnvKind::Toy2d => Box::new(Toy2D::new(Toy2DSurface::default())),
            EnvKind::Cartpole => Box::new(CartPole::new(seed)),
            EnvKind::Pointreacher => Box::new(PointReacher::new(seed)),
        }
    }

    pub fn spec(&self) -> EnvSpec {
        self.make(0).spec().clone()
    }
}

fn continuous(action: &Action, dim: usize) -> Result<&[f64]> {
    match action {
        Action::Continuous(a) if a.len() == dim => Ok(a),
        other => Err(crate::error::Error::shape(format!(
            "expected a {dim}-dimensional continuous action, got {other:?}"
        ))),
    }
}
