//! Maximum-entropy policy-gradient training against any supplied reward
//! function. REINFORCE with a leave-one-out mean-return baseline (or an
//! optional learned value baseline), per-step analytic entropy added to the
//! reward-to-go, and an exact L1 subgradient on the policy parameters when
//! weight sparsity is requested. Used both inside the adversarial IRL loop
//! and for the final policy learned on the regressed reward.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx::{self, ApproximatorSpec, OptimizerState, ParamVector};
use crate::data::{Action, SpaceSpec, Trajectory};
use crate::envs::{rollout_batch, Environment};
use crate::error::{Error, Result};
use crate::policy::{state_action_input, StochasticPolicy};
use crate::seed;

/// Abstract (state, action) -> reward hook. Ground truth, the adversarial
/// reward term, and the regressed reward all plug in here.
pub trait RewardFn: Sync {
    fn reward(&self, state: &[f64], action: &Action) -> f64;
}

/// The environment's hidden reward; evaluation and oracle use only.
pub struct GroundTruthReward<'a>(pub &'a dyn Environment);

impl RewardFn for GroundTruthReward<'_> {
    fn reward(&self, state: &[f64], action: &Action) -> f64 {
        self.0.gt_reward(state, action)
    }
}

/// A network reward over the concatenated (state, encoded action) input.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardModel {
    pub spec: ApproximatorSpec,
    pub params: ParamVector,
    pub action_space: SpaceSpec,
}

impl RewardModel {
    pub fn new(
        state_dim: usize,
        action_space: SpaceSpec,
        hidden_layers: usize,
        hidden_width: usize,
        rng: &mut seed::Rng,
    ) -> Result<Self> {
        action_space.validate()?;
        let spec = ApproximatorSpec::new(
            state_dim + action_space.encoded_dim(),
            1,
            hidden_layers,
            hidden_width,
        );
        spec.validate()?;
        let params = approx::init_params(&spec, rng);
        Ok(RewardModel {
            spec,
            params,
            action_space,
        })
    }

    pub fn eval(&self, state: &[f64], action: &Action) -> Result<f64> {
        let input = state_action_input(state, &self.action_space, action);
        Ok(approx::forward(&self.spec, &self.params, &input)?[0])
    }

    /// d reward / d params at one (state, action), scaled by `upstream`.
    pub fn grad(&self, state: &[f64], action: &Action, upstream: f64) -> Result<ParamVector> {
        let input = state_action_input(state, &self.action_space, action);
        approx::gradient(&self.spec, &self.params, &input, &[upstream])
    }

    pub fn digest(&self) -> String {
        let body = serde_json::json!({
            "spec": self.spec,
            "params": self.params.0,
            "action_space": self.action_space,
        });
        crate::data::canonical_digest(&body)
    }
}

impl RewardFn for RewardModel {
    fn reward(&self, state: &[f64], action: &Action) -> f64 {
        self.eval(state, action).unwrap_or(f64::NAN)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RewardModelCheckpoint {
    spec: ApproximatorSpec,
    params: Vec<f64>,
    action_space: SpaceSpec,
}

pub fn save_reward_model(model: &RewardModel, path: &Path) -> Result<()> {
    if !model.params.is_finite() {
        return Err(Error::NonFinite("reward model parameters".into()));
    }
    let ck = RewardModelCheckpoint {
        spec: model.spec.clone(),
        params: model.params.0.clone(),
        action_space: model.action_space.clone(),
    };
    let body = serde_json::to_string_pretty(&ck)
        .map_err(|e| Error::Validation(format!("serialize reward model: {e}")))?;
    std::fs::write(path, body).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

pub fn load_reward_model(path: &Path) -> Result<RewardModel> {
    let body =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let ck: RewardModelCheckpoint = serde_json::from_str(&body).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        record: 0,
        msg: e.to_string(),
    })?;
    Ok(RewardModel {
        spec: ck.spec,
        params: ParamVector(ck.params),
        action_space: ck.action_space,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    MeanReturn,
    LearnedValue,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RLConfig {
    pub iterations: usize,
    pub rollouts_per_iter: usize,
    /// Entropy-bonus weight; None takes the environment default.
    pub alpha: Option<f64>,
    /// Discount override; None takes the environment's gamma.
    pub gamma: Option<f64>,
    pub baseline: Baseline,
    pub policy_step_size: f64,
    pub baseline_step_size: f64,
    /// L1 weight on the policy parameters (0 disables).
    pub sparsity_lambda: f64,
    pub hidden_layers: usize,
    pub hidden_width: usize,
}

impl Default for RLConfig {
    fn default() -> Self {
        RLConfig {
            iterations: 200,
            rollouts_per_iter: 16,
            alpha: None,
            gamma: None,
            baseline: Baseline::MeanReturn,
            policy_step_size: 5e-3,
            baseline_step_size: 1e-2,
            sparsity_lambda: 0.0,
            hidden_layers: 2,
            hidden_width: 8,
        }
    }
}

impl RLConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.rollouts_per_iter == 0 {
            return Err(Error::Validation("iterations and rollouts must be >= 1".into()));
        }
        if self.alpha.is_some_and(|a| a < 0.0) {
            return Err(Error::Validation("alpha must be >= 0".into()));
        }
        if self.sparsity_lambda < 0.0 {
            return Err(Error::Validation("sparsity_lambda must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Mean discounted return under the training reward.
    pub mean_return: f64,
    /// Mean per-step policy entropy over visited states.
    pub entropy: f64,
    /// L1 norm of the policy parameters.
    pub l1_norm: f64,
}

pub struct TrainedPolicy {
    pub policy: StochasticPolicy,
    pub curve: Vec<IterationRecord>,
}

/// Learned state-value baseline, fitted to discounted returns by gradient
/// steps on squared error.
pub struct ValueBaseline {
    spec: ApproximatorSpec,
    params: ParamVector,
    opt: OptimizerState,
}

impl ValueBaseline {
    pub fn new(state_dim: usize, step_size: f64, rng: &mut seed::Rng) -> Self {
        let spec = ApproximatorSpec::new(state_dim, 1, 1, 16);
        let params = approx::init_params(&spec, rng);
        let opt = OptimizerState::new(step_size, params.len());
        ValueBaseline { spec, params, opt }
    }

    pub fn predict(&self, state: &[f64]) -> f64 {
        approx::forward(&self.spec, &self.params, state)
            .map(|v| v[0])
            .unwrap_or(0.0)
    }

    /// One least-squares pass over (state, return-to-go) pairs.
    pub fn fit(&mut self, samples: &[(&[f64], f64)]) -> Result<()> {
        if samples.is_empty() {
            return Ok(());
        }
        let mut grad = ParamVector::zeros(self.params.len());
        let scale = 1.0 / samples.len() as f64;
        for (state, target) in samples {
            let pred = self.predict(state);
            let g = approx::gradient(
                &self.spec,
                &self.params,
                state,
                &[2.0 * (pred - target) * scale],
            )?;
            grad.add_scaled(&g, 1.0);
        }
        self.opt.step(&mut self.params, &grad)
    }
}

/// Per-step discounted returns-to-go of the entropy-augmented reward.
fn returns_to_go(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// REINFORCE-with-baseline estimate of the ascent gradient of
/// `E[sum_t gamma^t (R + alpha H)] - lambda ||phi||_1`.
///
/// The batch must be on-policy for `policy`. Rewards are evaluated through
/// `reward` at the stored (state, action) pairs; `gamma` falls back to 1 when
/// the config leaves it unset. With `Baseline::LearnedValue`, pass the value
/// function through `value`.
pub fn policy_gradient_estimate(
    batch: &[Trajectory],
    policy: &StochasticPolicy,
    reward: &dyn RewardFn,
    config: &RLConfig,
    value: Option<&ValueBaseline>,
) -> Result<ParamVector> {
    if batch.is_empty() {
        return Err(Error::Validation("empty rollout batch".into()));
    }
    let gamma = config.gamma.unwrap_or(1.0);
    let alpha = config.alpha.unwrap_or(0.0);
    let lambda = config.sparsity_lambda;

    // Entropy-augmented returns-to-go per trajectory.
    let per_traj: Vec<(Vec<f64>, Vec<f64>)> = batch
        .par_iter()
        .map(|traj| {
            let entropies: Vec<f64> = traj
                .states
                .iter()
                .map(|s| policy.entropy(s).unwrap_or(f64::NAN))
                .collect();
            let rewards: Vec<f64> = traj
                .states
                .iter()
                .zip(&traj.actions)
                .zip(&entropies)
                .map(|((s, a), h)| reward.reward(s, a) + alpha * h)
                .collect();
            (returns_to_go(&rewards, gamma), entropies)
        })
        .collect();

    for (returns, _) in &per_traj {
        if returns.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("returns in gradient estimate".into()));
        }
    }

    // Leave-one-out mean baseline per time step, over trajectories still
    // alive at that step. Exactly cancels constant rewards and keeps the
    // estimator unbiased.
    let max_len = per_traj.iter().map(|(g, _)| g.len()).max().unwrap_or(0);
    let mut sums = vec![0.0; max_len];
    let mut counts = vec![0usize; max_len];
    for (returns, _) in &per_traj {
        for (t, g) in returns.iter().enumerate() {
            sums[t] += g;
            counts[t] += 1;
        }
    }

    let use_value = config.baseline == Baseline::LearnedValue && value.is_some();

    let contributions: Vec<ParamVector> = batch
        .par_iter()
        .zip(&per_traj)
        .map(|(traj, (returns, _))| -> Result<ParamVector> {
            let mut grad = ParamVector::zeros(policy.params.len());
            let mut discount = 1.0;
            for t in 0..returns.len() {
                let baseline = if use_value {
                    value.unwrap().predict(&traj.states[t])
                } else if counts[t] > 1 {
                    (sums[t] - returns[t]) / (counts[t] - 1) as f64
                } else {
                    0.0
                };
                let advantage = returns[t] - baseline;
                let score = policy.log_density_grad(&traj.states[t], &traj.actions[t])?;
                grad.add_scaled(&score, discount * advantage);
                if alpha > 0.0 {
                    let hg = policy.entropy_grad(&traj.states[t])?;
                    grad.add_scaled(&hg, discount * alpha);
                }
                discount *= gamma;
            }
            Ok(grad)
        })
        .collect::<Result<Vec<_>>>()?;

    // Fixed-order reduction keeps results independent of worker count.
    let mut grad = ParamVector::zeros(policy.params.len());
    for c in &contributions {
        grad.add_scaled(c, 1.0);
    }
    grad.scale(1.0 / batch.len() as f64);

    if lambda > 0.0 {
        let (_, sub) = approx::l1_penalty(&policy.params);
        grad.add_scaled(&sub, -lambda);
    }
    Ok(grad)
}

/// Mean discounted return of a batch under a reward function.
pub fn mean_return_under(batch: &[Trajectory], reward: &dyn RewardFn, gamma: f64) -> f64 {
    if batch.is_empty() {
        return f64::NAN;
    }
    batch
        .iter()
        .map(|traj| {
            let mut disc = 1.0;
            let mut total = 0.0;
            for (s, a) in traj.states.iter().zip(&traj.actions) {
                total += disc * reward.reward(s, a);
                disc *= gamma;
            }
            total
        })
        .sum::<f64>()
        / batch.len() as f64
}

/// Continue training an existing policy in place. `label` isolates the RNG
/// streams of nested training runs.
pub fn train_policy_from(
    policy: &mut StochasticPolicy,
    opt: &mut OptimizerState,
    value: Option<&mut ValueBaseline>,
    env: &dyn Environment,
    reward: &dyn RewardFn,
    config: &RLConfig,
    master: u64,
    label: &str,
    iteration_offset: usize,
) -> Result<Vec<IterationRecord>> {
    config.validate()?;
    let gamma = config.gamma.unwrap_or(env.spec().gamma);
    let alpha = config.alpha.unwrap_or(env.spec().alpha);
    let resolved = RLConfig {
        gamma: Some(gamma),
        alpha: Some(alpha),
        ..config.clone()
    };
    let mut curve = Vec::with_capacity(config.iterations);
    let mut value = value;
    for iter in 0..config.iterations {
        let global_iter = iteration_offset + iter;
        if !policy.params.is_finite() {
            return Err(Error::Divergence {
                stage: format!("{label}-policy"),
                iteration: global_iter,
            });
        }
        let batch = rollout_batch(
            env,
            policy,
            config.rollouts_per_iter,
            seed::derive_seed(master, label, global_iter as u64),
            "rollout",
        )?;
        let grad = policy_gradient_estimate(&batch, policy, reward, &resolved, value.as_deref())?;
        // Ascent on J: feed the negated gradient to the minimizer.
        let mut descent = grad;
        descent.scale(-1.0);
        opt.step(&mut policy.params, &descent)
            .map_err(|_| Error::Divergence {
                stage: format!("{label}-policy"),
                iteration: global_iter,
            })?;
        policy.clamp_log_std();

        if let Some(v) = value.as_deref_mut() {
            let samples: Vec<(&[f64], f64)> = batch
                .iter()
                .flat_map(|traj| {
                    let rewards: Vec<f64> = traj
                        .states
                        .iter()
                        .zip(&traj.actions)
                        .map(|(s, a)| reward.reward(s, a))
                        .collect();
                    let ret = returns_to_go(&rewards, gamma);
                    traj.states
                        .iter()
                        .zip(ret)
                        .map(|(s, g)| (s.as_slice(), g))
                        .collect::<Vec<_>>()
                })
                .collect();
            v.fit(&samples)?;
        }

        let mean_entropy = {
            let mut total = 0.0;
            let mut n = 0usize;
            for traj in &batch {
                for s in &traj.states {
                    total += policy.entropy(s)?;
                    n += 1;
                }
            }
            total / n.max(1) as f64
        };
        curve.push(IterationRecord {
            iteration: global_iter,
            mean_return: mean_return_under(&batch, reward, gamma),
            entropy: mean_entropy,
            l1_norm: policy.params.l1_norm(),
        });
    }
    Ok(curve)
}

/// Train a fresh policy against `reward` on `env`.
pub fn train_policy(
    env: &dyn Environment,
    reward: &dyn RewardFn,
    config: &RLConfig,
    master: u64,
) -> Result<TrainedPolicy> {
    config.validate()?;
    let state_dim = env.spec().state_space.encoded_dim();
    let mut rng = seed::stream(master, "policy-init", 0);
    let policy = StochasticPolicy::new(
        state_dim,
        env.spec().action_space.clone(),
        config.hidden_layers,
        config.hidden_width,
        &mut rng,
    )?;
    train_policy_warm(policy, env, reward, config, master)
}

/// Train a policy against `reward` starting from the given parameters.
pub fn train_policy_warm(
    policy: StochasticPolicy,
    env: &dyn Environment,
    reward: &dyn RewardFn,
    config: &RLConfig,
    master: u64,
) -> Result<TrainedPolicy> {
    config.validate()?;
    let state_dim = env.spec().state_space.encoded_dim();
    let mut policy = policy;
    let mut opt = OptimizerState::new(config.policy_step_size, policy.params.len());
    let mut value = match config.baseline {
        Baseline::LearnedValue => {
            let mut vrng = seed::stream(master, "value-init", 0);
            Some(ValueBaseline::new(
                state_dim,
                config.baseline_step_size,
                &mut vrng,
            ))
        }
        Baseline::MeanReturn => None,
    };
    let curve = train_policy_from(
        &mut policy,
        &mut opt,
        value.as_mut(),
        env,
        reward,
        config,
        master,
        "rl",
        0,
    )?;
    Ok(TrainedPolicy { policy, curve })
}
