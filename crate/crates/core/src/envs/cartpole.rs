use rand::Rng;

use super::{Action, ActionSpace, EnvSpec, Environment, Step};
use crate::error::{Error, Result};
use crate::rng::{seeded, Rng as SeededRng};

const GRAVITY: f64 = 9.8;
const CART_MASS: f64 = 1.0;
const POLE_MASS: f64 = 0.1;
const TOTAL_MASS: f64 = CART_MASS + POLE_MASS;
const HALF_LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = POLE_MASS * HALF_LENGTH;
const FORCE: f64 = 10.0;
const TAU: f64 = 0.02;
pub const ANGLE_LIMIT: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;
pub const POSITION_LIMIT: f64 = 2.4;
pub const MAX_STEPS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartPoleState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

impl CartPoleState {
    pub fn to_vec(self) -> Vec<f64> {
        vec![self.x, self.x_dot, self.theta, self.theta_dot]
    }
}

/// One explicit-Euler step of the classic cart-pole; `action` 1 pushes right.
/// Reward is 1 for every step, including the one that ends the episode.
pub fn cartpole_step(s: CartPoleState, action: usize) -> (CartPoleState, f64, bool) {
    let force = if action == 1 { FORCE } else { -FORCE };
    let (sin, cos) = s.theta.sin_cos();
    let temp = (force + POLE_MASS_LENGTH * s.theta_dot * s.theta_dot * sin) / TOTAL_MASS;
    let theta_acc = (GRAVITY * sin - cos * temp) / (HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / TOTAL_MASS));
    let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS;
    let next = CartPoleState {
        x: s.x + TAU * s.x_dot,
        x_dot: s.x_dot + TAU * x_acc,
        theta: s.theta + TAU * s.theta_dot,
        theta_dot: s.theta_dot + TAU * theta_acc,
    };
    let done = next.x.abs() > POSITION_LIMIT || next.theta.abs() > ANGLE_LIMIT;
    (next, 1.0, done)
}

pub struct CartPole {
    state: CartPoleState,
    steps: usize,
    rng: SeededRng,
    spec: EnvSpec,
}

impl CartPole {
    pub fn new(seed: u64) -> Self {
        Self {
            state: CartPoleState {
                x: 0.0,
                x_dot: 0.0,
                theta: 0.0,
                theta_dot: 0.0,
            },
            steps: 0,
            rng: seeded(seed, 0),
            spec: EnvSpec {
                observation_dim: 4,
                action_space: ActionSpace::Discrete(2),
                max_episode_steps: MAX_STEPS,
            },
        }
    }

    pub fn state(&self) -> CartPoleState {
        self.state
    }
}

impl Environment for CartPole {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self) -> Vec<f64> {
        let mut u = || self.rng.random_range(-0.05..0.05);
        self.state = CartPoleState {
            x: u(),
            x_dot: u(),
            theta: u(),
            theta_dot: u(),
        };
        self.steps = 0;
        self.state.to_vec()
    }

    fn step(&mut self, action: &Action) -> Result<Step> {
        let a = match action {
            Action::Discrete(a) if *a < 2 => *a,
            other => return Err(Error::shape(format!("cart-pole takes action 0 or 1, got {other:?}"))),
        };
        let (next, reward, failed) = cartpole_step(self.state, a);
        self.state = next;
        self.steps += 1;
        if !next.x.is_finite() || !next.theta.is_finite() {
            return Err(Error::NonFinite {
                context: "cart-pole state".into(),
            });
        }
        Ok(Step {
            observation: next.to_vec(),
            reward,
            done: failed || self.steps >= MAX_STEPS,
        })
    }
}
