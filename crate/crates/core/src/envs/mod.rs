//! Deterministic desk-scale environments with hidden ground-truth rewards,
//! plus scripted suboptimal demonstrators that stand in for human
//! demonstrations.

mod grid5;
mod reach1d;

pub use grid5::{Grid5, GRID_DOWN, GRID_LEFT, GRID_RIGHT, GRID_UP};
pub use reach1d::Reach1D;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Action, SpaceSpec, Trajectory};
use crate::error::{Error, Result};
use crate::seed::{self, Rng};

/// Environment description shared by every consumer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub id: String,
    pub state_space: SpaceSpec,
    pub action_space: SpaceSpec,
    /// Horizon T.
    pub horizon: usize,
    /// Discount factor.
    pub gamma: f64,
    /// Default entropy-bonus weight for policy training on this environment.
    pub alpha: f64,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        self.state_space.validate()?;
        self.action_space.validate()?;
        if self.horizon == 0 {
            return Err(Error::Validation("horizon must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Validation(format!("gamma out of [0,1]: {}", self.gamma)));
        }
        if self.alpha < 0.0 {
            return Err(Error::Validation(format!("alpha must be >= 0: {}", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    pub vector: Vec<f64>,
    pub step_index: usize,
}

#[derive(Debug)]
pub struct StepOutcome {
    pub next: EnvState,
    pub gt_reward: f64,
    pub done: bool,
}

pub trait Environment: Send + Sync {
    fn spec(&self) -> &EnvSpec;

    /// Sample from the initial-state distribution.
    fn reset(&self, rng: &mut Rng) -> EnvState;

    /// Ground-truth reward for executing `action` in `state`. Hidden from all
    /// learning; evaluation only.
    fn gt_reward(&self, state: &[f64], action: &Action) -> f64;

    /// Next state vector and whether an absorbing goal was reached.
    fn transition(&self, state: &[f64], action: &Action) -> (Vec<f64>, bool);

    fn step(&self, state: &EnvState, action: &Action) -> Result<StepOutcome> {
        let spec = self.spec();
        if state.step_index >= spec.horizon {
            return Err(Error::Contract(format!(
                "step at index {} after episode end (horizon {})",
                state.step_index, spec.horizon
            )));
        }
        if !action.is_finite() {
            return Err(Error::NonFinite("action".into()));
        }
        let action = clip_action(&spec.action_space, action)?;
        let gt_reward = self.gt_reward(&state.vector, &action);
        let (vector, absorbing) = self.transition(&state.vector, &action);
        let next = EnvState {
            vector,
            step_index: state.step_index + 1,
        };
        let done = absorbing || next.step_index >= spec.horizon;
        Ok(StepOutcome {
            next,
            gt_reward,
            done,
        })
    }
}

/// Clip a continuous action into the box; reject dimension mismatches.
pub fn clip_action(space: &SpaceSpec, action: &Action) -> Result<Action> {
    match (space, action) {
        (SpaceSpec::Discrete { cardinality }, Action::Discrete(a)) => {
            if a >= cardinality {
                return Err(Error::Dimension(format!(
                    "discrete action {a} out of cardinality {cardinality}"
                )));
            }
            Ok(Action::Discrete(*a))
        }
        (SpaceSpec::Continuous { dim, bounds }, Action::Continuous(v)) => {
            if v.len() != *dim {
                return Err(Error::Dimension(format!(
                    "continuous action dim {} != {dim}",
                    v.len()
                )));
            }
            let clipped = v
                .iter()
                .zip(bounds)
                .map(|(x, (lo, hi))| x.clamp(*lo, *hi))
                .collect();
            Ok(Action::Continuous(clipped))
        }
        _ => Err(Error::Dimension("action kind does not match space".into())),
    }
}

/// Anything that can pick actions for rollouts: policies, scripted
/// controllers, demonstrators.
pub trait Agent: Sync {
    fn act(&self, state: &EnvState, rng: &mut Rng) -> Action;
}

/// Uniform over cells (discrete) or the bounding box (continuous).
pub struct UniformRandomAgent {
    pub space: SpaceSpec,
}

impl Agent for UniformRandomAgent {
    fn act(&self, _state: &EnvState, rng: &mut Rng) -> Action {
        sample_uniform_action(&self.space, rng)
    }
}

pub fn sample_uniform_action(space: &SpaceSpec, rng: &mut Rng) -> Action {
    use rand::Rng as _;
    match space {
        SpaceSpec::Discrete { cardinality } => Action::Discrete(rng.gen_range(0..*cardinality)),
        SpaceSpec::Continuous { bounds, .. } => Action::Continuous(
            bounds
                .iter()
                .map(|(lo, hi)| rng.gen_range(*lo..*hi))
                .collect(),
        ),
    }
}

/// Roll the agent through one episode. States and actions both have length
/// <= horizon; `gt_return` is the discounted ground-truth sum;
/// `initial_rewards` stays empty until a reward model scores the trajectory.
pub fn rollout(env: &dyn Environment, agent: &dyn Agent, rng: &mut Rng) -> Result<Trajectory> {
    let spec = env.spec();
    let mut state = env.reset(rng);
    let mut states = Vec::with_capacity(spec.horizon);
    let mut actions = Vec::with_capacity(spec.horizon);
    let mut gt = 0.0;
    let mut discount = 1.0;
    loop {
        if state.step_index >= spec.horizon {
            break;
        }
        let action = agent.act(&state, rng);
        if !action.is_finite() {
            return Err(Error::Rollout(format!(
                "agent emitted a non-finite action at step {}",
                state.step_index
            )));
        }
        let action = clip_action(&spec.action_space, &action)?;
        let outcome = env.step(&state, &action)?;
        states.push(state.vector.clone());
        actions.push(action);
        gt += discount * outcome.gt_reward;
        discount *= spec.gamma;
        state = outcome.next;
        if outcome.done {
            break;
        }
    }
    Ok(Trajectory {
        eta: 0.0,
        states,
        actions,
        initial_rewards: Vec::new(),
        gt_return: Some(gt),
    })
}

/// `n` independent rollouts with per-index RNG streams. Order and content are
/// independent of worker count.
pub fn rollout_batch(
    env: &dyn Environment,
    agent: &dyn Agent,
    n: usize,
    master: u64,
    label: &str,
) -> Result<Vec<Trajectory>> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::stream(master, label, i as u64);
            rollout(env, agent, &mut rng)
        })
        .collect()
}

pub fn mean_gt_return(trajectories: &[Trajectory]) -> f64 {
    if trajectories.is_empty() {
        return f64::NAN;
    }
    trajectories
        .iter()
        .map(|t| t.gt_return.unwrap_or(f64::NAN))
        .sum::<f64>()
        / trajectories.len() as f64
}

/// Scripted demonstrator description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DemonstratorSpec {
    /// Continuous control: `a = clip(kappa * (goal - x) + sigma_d * xi)`.
    NoisyProportional { kappa: f64, sigma_d: f64 },
    /// Discrete control: optimal action with probability `1 - epsilon`,
    /// uniform otherwise.
    EpsilonSuboptimal { epsilon: f64 },
}

impl DemonstratorSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            DemonstratorSpec::NoisyProportional { sigma_d, .. } => {
                if *sigma_d < 0.0 {
                    return Err(Error::Validation(format!("sigma_d must be >= 0: {sigma_d}")));
                }
            }
            DemonstratorSpec::EpsilonSuboptimal { epsilon } => {
                if !(0.0..=1.0).contains(epsilon) {
                    return Err(Error::Validation(format!("epsilon out of [0,1]: {epsilon}")));
                }
            }
        }
        Ok(())
    }
}

struct NoisyProportionalAgent {
    kappa: f64,
    sigma_d: f64,
    goal: f64,
}

impl Agent for NoisyProportionalAgent {
    fn act(&self, state: &EnvState, rng: &mut Rng) -> Action {
        let x = state.vector[0];
        let a = self.kappa * (self.goal - x) + self.sigma_d * seed::standard_normal(rng);
        Action::Continuous(vec![a.clamp(-1.0, 1.0)])
    }
}

struct EpsilonSuboptimalAgent {
    epsilon: f64,
    optimal: Box<dyn Agent>,
    space: SpaceSpec,
}

impl Agent for EpsilonSuboptimalAgent {
    fn act(&self, state: &EnvState, rng: &mut Rng) -> Action {
        use rand::Rng as _;
        if self.epsilon > 0.0 && rng.gen::<f64>() < self.epsilon {
            sample_uniform_action(&self.space, rng)
        } else {
            self.optimal.act(state, rng)
        }
    }
}

/// The scripted near-optimal controller for an environment; the reference
/// ceiling when checking demonstrator suboptimality.
pub fn optimal_agent(env: &dyn Environment) -> Result<Box<dyn Agent>> {
    match env.spec().id.as_str() {
        "reach1d" => Ok(Box::new(reach1d::ReachController)),
        "grid5" => Ok(Box::new(grid5::ShortestPathAgent)),
        other => Err(Error::Validation(format!("no scripted controller for {other}"))),
    }
}

pub fn uniform_agent(env: &dyn Environment) -> UniformRandomAgent {
    UniformRandomAgent {
        space: env.spec().action_space.clone(),
    }
}

/// Build the demonstrator for an environment.
pub fn demonstrator_agent(
    env: &dyn Environment,
    spec: &DemonstratorSpec,
) -> Result<Box<dyn Agent>> {
    spec.validate()?;
    match spec {
        DemonstratorSpec::NoisyProportional { kappa, sigma_d } => {
            if env.spec().id != "reach1d" {
                return Err(Error::Validation(
                    "noisy_proportional demonstrator requires a continuous goal-reaching environment".into(),
                ));
            }
            Ok(Box::new(NoisyProportionalAgent {
                kappa: *kappa,
                sigma_d: *sigma_d,
                goal: 1.0,
            }))
        }
        DemonstratorSpec::EpsilonSuboptimal { epsilon } => {
            if env.spec().id != "grid5" {
                return Err(Error::Validation(
                    "epsilon_suboptimal demonstrator requires a discrete environment".into(),
                ));
            }
            Ok(Box::new(EpsilonSuboptimalAgent {
                epsilon: *epsilon,
                optimal: Box::new(grid5::ShortestPathAgent),
                space: env.spec().action_space.clone(),
            }))
        }
    }
}

pub struct DemoBatch {
    pub trajectories: Vec<Trajectory>,
    /// Set when the batch mean does not fall strictly between the
    /// uniform-random and scripted-optimal reference means.
    pub sandwich_warning: Option<String>,
}

/// Generate `n` demonstrations and check the suboptimality sandwich
/// statistically: random mean < demo mean < optimal mean over reference
/// batches of 100 rollouts each. A violated sandwich is a warning, not fatal.
pub fn make_demonstrations(
    env: &dyn Environment,
    demo_spec: &DemonstratorSpec,
    n: usize,
    master: u64,
) -> Result<DemoBatch> {
    if n == 0 {
        return Err(Error::Validation("need n >= 1 demonstrations".into()));
    }
    let agent = demonstrator_agent(env, demo_spec)?;
    let trajectories = rollout_batch(env, agent.as_ref(), n, master, "demo")?;

    let optimal = optimal_agent(env)?;
    let random = uniform_agent(env);
    let opt_mean = mean_gt_return(&rollout_batch(
        env,
        optimal.as_ref(),
        100,
        master,
        "sandwich-optimal",
    )?);
    let rand_mean = mean_gt_return(&rollout_batch(
        env,
        &random,
        100,
        master,
        "sandwich-random",
    )?);
    let demo_mean = mean_gt_return(&trajectories);
    let sandwich_warning = if demo_mean > rand_mean && demo_mean < opt_mean {
        None
    } else {
        Some(format!(
            "demonstration suboptimality sandwich violated: random {rand_mean:.4} / demo {demo_mean:.4} / optimal {opt_mean:.4}"
        ))
    };
    Ok(DemoBatch {
        trajectories,
        sandwich_warning,
    })
}

/// Look an environment up by its config id.
pub fn env_by_id(id: &str) -> Result<Box<dyn Environment>> {
    match id {
        "reach1d" => Ok(Box::new(Reach1D::new())),
        "grid5" => Ok(Box::new(Grid5::new())),
        other => Err(Error::Validation(format!("unknown environment id: {other}"))),
    }
}
