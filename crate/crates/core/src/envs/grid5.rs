//! 5x5 gridworld. Start (0,0), absorbing goal (4,4), four deterministic
//! moves (walls clamp), -1 per step plus +10 for landing on the goal, horizon
//! 25, gamma 0.95. States are exposed to networks as normalized (row/4,
//! col/4) coordinates.

use super::{Agent, EnvSpec, EnvState, Environment};
use crate::data::{Action, SpaceSpec};
use crate::seed::Rng;

pub const GRID_UP: usize = 0;
pub const GRID_DOWN: usize = 1;
pub const GRID_LEFT: usize = 2;
pub const GRID_RIGHT: usize = 3;

const SIDE: i64 = 5;
const GOAL: (i64, i64) = (4, 4);

pub struct Grid5 {
    spec: EnvSpec,
}

impl Grid5 {
    pub fn new() -> Self {
        Grid5 {
            spec: EnvSpec {
                id: "grid5".into(),
                state_space: SpaceSpec::continuous(vec![(0.0, 1.0), (0.0, 1.0)]),
                action_space: SpaceSpec::discrete(4),
                horizon: 25,
                gamma: 0.95,
                alpha: 0.05,
            },
        }
    }
}

impl Default for Grid5 {
    fn default() -> Self {
        Self::new()
    }
}

fn cell_of(state: &[f64]) -> (i64, i64) {
    (
        (state[0] * 4.0).round() as i64,
        (state[1] * 4.0).round() as i64,
    )
}

fn vector_of(cell: (i64, i64)) -> Vec<f64> {
    vec![cell.0 as f64 / 4.0, cell.1 as f64 / 4.0]
}

fn move_cell(cell: (i64, i64), action: usize) -> (i64, i64) {
    let (row, col) = cell;
    let (r, c) = match action {
        GRID_UP => (row - 1, col),
        GRID_DOWN => (row + 1, col),
        GRID_LEFT => (row, col - 1),
        GRID_RIGHT => (row, col + 1),
        _ => (row, col),
    };
    (r.clamp(0, SIDE - 1), c.clamp(0, SIDE - 1))
}

impl Environment for Grid5 {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self, _rng: &mut Rng) -> EnvState {
        EnvState {
            vector: vector_of((0, 0)),
            step_index: 0,
        }
    }

    fn gt_reward(&self, state: &[f64], action: &Action) -> f64 {
        let a = match action {
            Action::Discrete(a) => *a,
            Action::Continuous(_) => unreachable!("grid5 takes discrete actions"),
        };
        let next = move_cell(cell_of(state), a);
        if next == GOAL {
            // Step cost still applies on the landing move.
            -1.0 + 10.0
        } else {
            -1.0
        }
    }

    fn transition(&self, state: &[f64], action: &Action) -> (Vec<f64>, bool) {
        let a = match action {
            Action::Discrete(a) => *a,
            Action::Continuous(_) => unreachable!("grid5 takes discrete actions"),
        };
        let next = move_cell(cell_of(state), a);
        (vector_of(next), next == GOAL)
    }
}

/// Deterministic shortest path: move right until the goal column, then down.
pub struct ShortestPathAgent;

impl Agent for ShortestPathAgent {
    fn act(&self, state: &EnvState, _rng: &mut Rng) -> Action {
        let (row, col) = cell_of(&state.vector);
        if col < GOAL.1 {
            Action::Discrete(GRID_RIGHT)
        } else if row < GOAL.0 {
            Action::Discrete(GRID_DOWN)
        } else {
            Action::Discrete(GRID_RIGHT)
        }
    }
}
