//! One-dimensional goal reaching. State x in R, goal at 1.0, action in
//! [-1, 1], dynamics x' = x + 0.1 a, reward -(x - 1)^2 - 0.01 a^2 evaluated at
//! the pre-step state, horizon 50, gamma 0.99. Closed-form oracles (geometric
//! sums, scripted controllers) keep everything downstream checkable.

use rand::Rng as _;

use super::{Agent, EnvSpec, EnvState, Environment};
use crate::data::{Action, SpaceSpec};
use crate::seed::Rng;

pub struct Reach1D {
    spec: EnvSpec,
    goal: f64,
    init_lo: f64,
    init_hi: f64,
}

impl Reach1D {
    pub fn new() -> Self {
        Self::with_init(-0.1, 0.1)
    }

    /// Custom initial-state interval; `lo == hi` gives a point mass.
    pub fn with_init(init_lo: f64, init_hi: f64) -> Self {
        Reach1D {
            spec: EnvSpec {
                id: "reach1d".into(),
                state_space: SpaceSpec::continuous(vec![(-6.0, 6.0)]),
                action_space: SpaceSpec::continuous(vec![(-1.0, 1.0)]),
                horizon: 50,
                gamma: 0.99,
                alpha: 0.01,
            },
            goal: 1.0,
            init_lo,
            init_hi,
        }
    }

    pub fn goal(&self) -> f64 {
        self.goal
    }
}

impl Default for Reach1D {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for Reach1D {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self, rng: &mut Rng) -> EnvState {
        let x = if self.init_lo == self.init_hi {
            self.init_lo
        } else {
            rng.gen_range(self.init_lo..self.init_hi)
        };
        EnvState {
            vector: vec![x],
            step_index: 0,
        }
    }

    fn gt_reward(&self, state: &[f64], action: &Action) -> f64 {
        let x = state[0];
        let a = match action {
            Action::Continuous(v) => v[0],
            Action::Discrete(_) => unreachable!("reach1d takes continuous actions"),
        };
        -(x - self.goal).powi(2) - 0.01 * a * a
    }

    fn transition(&self, state: &[f64], action: &Action) -> (Vec<f64>, bool) {
        let x = state[0];
        let a = match action {
            Action::Continuous(v) => v[0],
            Action::Discrete(_) => unreachable!("reach1d takes continuous actions"),
        };
        (vec![x + 0.1 * a], false)
    }
}

/// Scripted near-optimal controller: move as far toward the goal as one step
/// allows, then hold.
pub struct ReachController;

impl Agent for ReachController {
    fn act(&self, state: &EnvState, _rng: &mut Rng) -> Action {
        let x = state.vector[0];
        Action::Continuous(vec![((1.0 - x) / 0.1).clamp(-1.0, 1.0)])
    }
}
