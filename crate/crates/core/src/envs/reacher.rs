use rand::Rng;

use super::{continuous, Action, ActionSpace, EnvSpec, Environment, Step};
use crate::error::{Error, Result};
use crate::rng::{seeded, Rng as SeededRng};

pub const DAMPING: f64 = 0.95;
pub const DT: f64 = 0.05;
pub const ACTION_COST: f64 = 0.01;
pub const EPISODE_STEPS: usize = 200;
/// Positions are confined to `[-ARENA, ARENA]^2`; goals are drawn in `[-1, 1]^2`.
pub const ARENA: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReacherState {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
    pub goal: [f64; 2],
}

impl ReacherState {
    /// Position, velocity and goal offset.
    pub fn observation(&self) -> Vec<f64> {
        vec![
            self.pos[0],
            self.pos[1],
            self.vel[0],
            self.vel[1],
            self.goal[0] - self.pos[0],
            self.goal[1] - self.pos[1],
        ]
    }

    pub fn distance(&self) -> f64 {
        let dx = self.pos[0] - self.goal[0];
        let dy = self.pos[1] - self.goal[1];
        (dx * dx + dy * dy).sqrt()
    }
}

/// Point mass driven by an acceleration in `[-1, 1]^2`:
/// `v' = 0.95 v + dt a`, `p' = p + dt v'`, reward `-|p' - goal| - 0.01 |a|^2`.
/// Hitting the arena wall zeroes that velocity component.
#[allow(clippy::needless_range_loop)]
pub fn pointreacher_step(s: ReacherState, action: [f64; 2]) -> (ReacherState, f64) {
    let a = [action[0].clamp(-1.0, 1.0), action[1].clamp(-1.0, 1.0)];
    let mut next = s;
    for k in 0..2 {
        next.vel[k] = DAMPING * s.vel[k] + DT * a[k];
        next.pos[k] = s.pos[k] + DT * next.vel[k];
        if next.pos[k].abs() > ARENA {
            next.pos[k] = next.pos[k].clamp(-ARENA, ARENA);
            next.vel[k] = 0.0;
        }
    }
    let reward = -next.distance() - ACTION_COST * (a[0] * a[0] + a[1] * a[1]);
    (next, reward)
}

pub struct PointReacher {
    state: ReacherState,
    steps: usize,
    rng: SeededRng,
    spec: EnvSpec,
}

impl PointReacher {
    pub fn new(seed: u64) -> Self {
        Self {
            state: ReacherState {
                pos: [0.0; 2],
                vel: [0.0; 2],
                goal: [0.0; 2],
            },
            steps: 0,
            rng: seeded(seed, 0),
            spec: EnvSpec {
                observation_dim: 6,
                action_space: ActionSpace::Continuous {
                    dim: 2,
                    low: -1.0,
                    high: 1.0,
                },
                max_episode_steps: EPISODE_STEPS,
            },
        }
    }

    pub fn state(&self) -> ReacherState {
        self.state
    }
}

impl Environment for PointReacher {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    /// The point starts at rest at the origin; the goal is uniform in `[-1, 1]^2`.
    fn reset(&mut self) -> Vec<f64> {
        let goal = [self.rng.random_range(-1.0..1.0), self.rng.random_range(-1.0..1.0)];
        self.state = ReacherState {
            pos: [0.0; 2],
            vel: [0.0; 2],
            goal,
        };
        self.steps = 0;
        self.state.observation()
    }

    fn step(&mut self, action: &Action) -> Result<Step> {
        let a = continuous(action, 2)?;
        if !a.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "reacher action".into(),
            });
        }
        let (next, reward) = pointreacher_step(self.state, [a[0], a[1]]);
        self.state = next;
        self.steps += 1;
        Ok(Step {
            observation: next.observation(),
            reward,
            done: self.steps >= EPISODE_STEPS,
        })
    }
}
