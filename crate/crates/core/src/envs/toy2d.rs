use serde::{Deserialize, Serialize};

use super::{continuous, Action, ActionSpace, EnvSpec, Environment, Step};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: [f64; 2],
    pub amplitude: f64,
    pub width: f64,
}

/// Sum of Gaussian bumps on `[-1, 1]^2`, the first of which is the global peak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Toy2DSurface {
    bumps: Vec<Bump>,
}

impl Default for Toy2DSurface {
    /// A narrow global peak at (0.7, 0.7) and three wider, lower local peaks.
    fn default() -> Self {
        let bump = |x, y, amplitude, width| Bump {
            center: [x, y],
            amplitude,
            width,
        };
        Self {
            bumps: vec![
                bump(0.7, 0.7, 1.0, 0.1),
                bump(-0.6, -0.6, 0.6, 0.15),
                bump(-0.5, 0.6, 0.5, 0.15),
                bump(0.6, -0.5, 0.5, 0.15),
            ],
        }
    }
}

impl Toy2DSurface {
    /// The first bump is the global peak; its amplitude must exceed every
    /// other amplitude by at least 20%.
    pub fn new(bumps: Vec<Bump>) -> Result<Self> {
        let Some(global) = bumps.first() else {
            return Err(Error::config("surface", "needs at least one bump"));
        };
        if let Some(b) = bumps[1..].iter().find(|b| global.amplitude < 1.2 * b.amplitude) {
            return Err(Error::config(
                "surface",
                format!(
                    "global amplitude {} is not 20% above local amplitude {}",
                    global.amplitude, b.amplitude
                ),
            ));
        }
        if bumps.iter().any(|b| b.width <= 0.0) {
            return Err(Error::config("surface", "bump widths must be positive"));
        }
        Ok(Self { bumps })
    }

    pub fn bumps(&self) -> &[Bump] {
        &self.bumps
    }

    pub fn global_peak(&self) -> Bump {
        self.bumps[0]
    }

    pub fn total_amplitude(&self) -> f64 {
        self.bumps.iter().map(|b| b.amplitude).sum()
    }
}

pub fn toy2d_reward(x: f64, y: f64, surface: &Toy2DSurface) -> f64 {
    let x = x.clamp(-1.0, 1.0);
    let y = y.clamp(-1.0, 1.0);
    surface
        .bumps
        .iter()
        .map(|b| {
            let dx = x - b.center[0];
            let dy = y - b.center[1];
            b.amplitude * (-(dx * dx + dy * dy) / (2.0 * b.width * b.width)).exp()
        })
        .sum()
}

/// One-step episode: the emitted coordinates are scored and the episode ends.
pub fn toy2d_episode(x: f64, y: f64, surface: &Toy2DSurface) -> Step {
    Step {
        observation: vec![1.0],
        reward: toy2d_reward(x, y, surface),
        done: true,
    }
}

/// Stateless bandit: constant observation `[1.0]`, action `(x, y)`.
#[derive(Debug, Clone)]
pub struct Toy2D {
    surface: Toy2DSurface,
    spec: EnvSpec,
}

impl Toy2D {
    pub fn new(surface: Toy2DSurface) -> Self {
        Self {
            surface,
            spec: EnvSpec {
                observation_dim: 1,
                action_space: ActionSpace::Continuous {
                    dim: 2,
                    low: -1.0,
                    high: 1.0,
                },
                max_episode_steps: 1,
            },
        }
    }

    pub fn surface(&self) -> &Toy2DSurface {
        &self.surface
    }
}

impl Environment for Toy2D {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self) -> Vec<f64> {
        vec![1.0]
    }

    fn step(&mut self, action: &Action) -> Result<Step> {
        let a = continuous(action, 2)?;
        Ok(toy2d_episode(a[0], a[1], &self.surface))
    }
}
