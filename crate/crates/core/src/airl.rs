//! Adversarial IRL: a discriminator built from a reward term f(s,a) and the
//! policy density is trained by binary cross entropy to tell demonstrations
//! from policy rollouts, while the policy maximizes f as a pseudo-reward.
//! The result is the initial reward and initial policy consumed by the
//! degradation stage, and the three systematic degradation knobs live in the
//! config: demo subset size, network capacity, and policy L1 weight.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::approx::OptimizerState;
use crate::data::{Action, Trajectory};
use crate::envs::{rollout_batch, Environment};
use crate::error::{Error, Result};
use crate::policy::StochasticPolicy;
use crate::rl::{self, RLConfig, RewardModel};
use crate::seed::{self, Rng};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AirlConfig {
    /// Train on a seeded subset of the demos (shuffle, take k); None = all.
    pub demo_subset_size: Option<usize>,
    /// Hidden layers / width of the discriminator's reward term f.
    pub disc_hidden_layers: usize,
    pub disc_hidden_width: usize,
    /// Hidden layers / width of the policy network.
    pub policy_hidden_layers: usize,
    pub policy_hidden_width: usize,
    /// L1 weight on the policy parameters.
    pub lambda: f64,
    pub outer_iterations: usize,
    pub disc_steps_per_iter: usize,
    pub policy_rollouts_per_iter: usize,
    pub disc_step_size: f64,
    pub policy_step_size: f64,
    pub disc_minibatch: usize,
    /// Entropy-bonus weight; None takes the environment default.
    pub alpha: Option<f64>,
    /// Sigma floor for gaussian policies while the adversary trains. A
    /// near-deterministic generator lets the discriminator win through the
    /// density term alone (any off-mean action gets log pi ~ -10^5, so D
    /// saturates regardless of f); keeping sigma honest forces the cross
    /// entropy to be paid by f's structure.
    pub policy_sigma_floor: f64,
}

impl Default for AirlConfig {
    fn default() -> Self {
        AirlConfig {
            demo_subset_size: None,
            disc_hidden_layers: 2,
            disc_hidden_width: 8,
            policy_hidden_layers: 2,
            policy_hidden_width: 8,
            lambda: 0.0,
            outer_iterations: 200,
            disc_steps_per_iter: 5,
            policy_rollouts_per_iter: 8,
            disc_step_size: 1e-3,
            policy_step_size: 5e-3,
            disc_minibatch: 32,
            alpha: None,
            policy_sigma_floor: 0.35,
        }
    }
}

impl AirlConfig {
    pub fn validate(&self, available_demos: usize) -> Result<()> {
        if let Some(k) = self.demo_subset_size {
            if k == 0 || k > available_demos {
                return Err(Error::Validation(format!(
                    "demo_subset_size {k} out of 1..={available_demos}"
                )));
            }
        }
        if self.lambda < 0.0 {
            return Err(Error::Validation("lambda must be >= 0".into()));
        }
        if self.outer_iterations == 0
            || self.disc_steps_per_iter == 0
            || self.policy_rollouts_per_iter == 0
            || self.disc_minibatch == 0
        {
            return Err(Error::Validation("iteration counts must be >= 1".into()));
        }
        if self.policy_sigma_floor <= 0.0 {
            return Err(Error::Validation("policy_sigma_floor must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AirlIterationRecord {
    pub iteration: usize,
    /// Binary cross entropy of the last discriminator minibatch.
    pub bce: f64,
    /// Balanced accuracy on the iteration's demo/policy pairs.
    pub disc_accuracy: f64,
}

pub struct AirlResult {
    /// The learned reward term f(s,a); the initial reward.
    pub reward_model: RewardModel,
    /// The initial policy.
    pub policy: StochasticPolicy,
    pub log: Vec<AirlIterationRecord>,
}

/// One (state, action) sample for the discriminator.
#[derive(Clone, Debug)]
pub struct StateAction {
    pub state: Vec<f64>,
    pub action: Action,
}

pub fn flatten_pairs(trajectories: &[Trajectory]) -> Vec<StateAction> {
    trajectories
        .iter()
        .flat_map(|t| {
            t.states.iter().zip(&t.actions).map(|(s, a)| StateAction {
                state: s.clone(),
                action: a.clone(),
            })
        })
        .collect()
}

/// D(s,a) = e^f / (e^f + pi(a|s)), computed in log space as
/// sigmoid(f - log pi); overflow-safe for |inputs| <= 500. The result is
/// clamped into the open unit interval, since the raw sigmoid saturates to
/// exactly 1.0 past |x| ~ 37 in f64.
pub fn discriminator_value(f_value: f64, log_pi: f64) -> f64 {
    let x = f_value - log_pi;
    let d = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    d.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// BCE and exact f-parameter gradient over demo pairs (label 1) and policy
/// pairs (label 0), each pair carrying its log pi value. The policy density
/// enters as a constant.
fn discriminator_loss_with_densities(
    demo_batch: &[(&StateAction, f64)],
    policy_batch: &[(&StateAction, f64)],
    reward_model: &RewardModel,
) -> Result<(f64, crate::approx::ParamVector)> {
    if demo_batch.is_empty() || policy_batch.is_empty() {
        return Err(Error::Validation("discriminator batches must be non-empty".into()));
    }
    let mut bce = 0.0;
    let mut grad = crate::approx::ParamVector::zeros(reward_model.params.len());
    let n_demo = demo_batch.len() as f64;
    let n_pol = policy_batch.len() as f64;
    for (pair, log_pi) in demo_batch {
        let f = reward_model.eval(&pair.state, &pair.action)?;
        let x = f - log_pi;
        // -log D = softplus(-x); d/df = -(1 - D).
        bce += softplus(-x) / n_demo;
        let d = discriminator_value(f, *log_pi);
        let g = reward_model.grad(&pair.state, &pair.action, -(1.0 - d) / n_demo)?;
        grad.add_scaled(&g, 1.0);
    }
    for (pair, log_pi) in policy_batch {
        let f = reward_model.eval(&pair.state, &pair.action)?;
        let x = f - log_pi;
        // -log(1 - D) = softplus(x); d/df = D.
        bce += softplus(x) / n_pol;
        let d = discriminator_value(f, *log_pi);
        let g = reward_model.grad(&pair.state, &pair.action, d / n_pol)?;
        grad.add_scaled(&g, 1.0);
    }
    Ok((bce, grad))
}

/// Binary cross entropy over a demo batch (label 1) and a policy batch
/// (label 0), with the exact gradient with respect to the reward-term
/// parameters. Densities come from `policy` at the given pairs.
pub fn discriminator_loss(
    demo_batch: &[StateAction],
    policy_batch: &[StateAction],
    reward_model: &RewardModel,
    policy: &StochasticPolicy,
) -> Result<(f64, crate::approx::ParamVector)> {
    let demo: Vec<(&StateAction, f64)> = demo_batch
        .iter()
        .map(|p| Ok((p, policy.log_density(&p.state, &p.action)?)))
        .collect::<Result<_>>()?;
    let pol: Vec<(&StateAction, f64)> = policy_batch
        .iter()
        .map(|p| Ok((p, policy.log_density(&p.state, &p.action)?)))
        .collect::<Result<_>>()?;
    discriminator_loss_with_densities(&demo, &pol, reward_model)
}

fn balanced_accuracy(
    demo_pairs: &[StateAction],
    policy_pairs: &[StateAction],
    reward_model: &RewardModel,
    policy: &StochasticPolicy,
    cap: usize,
) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for pair in demo_pairs.iter().take(cap) {
        let d = discriminator_value(
            reward_model.eval(&pair.state, &pair.action)?,
            policy.log_density(&pair.state, &pair.action)?,
        );
        if d > 0.5 {
            correct += 1;
        }
        total += 1;
    }
    for pair in policy_pairs.iter().take(cap) {
        let d = discriminator_value(
            reward_model.eval(&pair.state, &pair.action)?,
            policy.log_density(&pair.state, &pair.action)?,
        );
        if d < 0.5 {
            correct += 1;
        }
        total += 1;
    }
    Ok(correct as f64 / total.max(1) as f64)
}

/// Seeded demo subset: shuffle, take the first k.
pub fn select_demo_subset(demos: &[Trajectory], k: Option<usize>, rng: &mut Rng) -> Vec<Trajectory> {
    match k {
        None => demos.to_vec(),
        Some(k) => {
            let mut indices: Vec<usize> = (0..demos.len()).collect();
            indices.shuffle(rng);
            indices.truncate(k);
            indices.into_iter().map(|i| demos[i].clone()).collect()
        }
    }
}

/// Alternate discriminator minibatch steps with policy-gradient bursts on the
/// current reward term until `outer_iterations` have run.
pub fn train_airl(
    env: &dyn Environment,
    demos: &[Trajectory],
    config: &AirlConfig,
    master: u64,
) -> Result<AirlResult> {
    if demos.is_empty() {
        return Err(Error::Validation("need at least one demonstration".into()));
    }
    config.validate(demos.len())?;

    let mut subset_rng = seed::stream(master, "demo-subset", 0);
    let subset = select_demo_subset(demos, config.demo_subset_size, &mut subset_rng);
    let demo_pairs = flatten_pairs(&subset);
    if demo_pairs.is_empty() {
        return Err(Error::Validation("demonstrations contain no steps".into()));
    }

    let state_dim = env.spec().state_space.encoded_dim();
    let mut disc_rng = seed::stream(master, "disc-init", 0);
    let mut reward_model = RewardModel::new(
        state_dim,
        env.spec().action_space.clone(),
        config.disc_hidden_layers,
        config.disc_hidden_width,
        &mut disc_rng,
    )?;
    let mut policy_rng = seed::stream(master, "policy-init", 0);
    let mut policy = StochasticPolicy::new(
        state_dim,
        env.spec().action_space.clone(),
        config.policy_hidden_layers,
        config.policy_hidden_width,
        &mut policy_rng,
    )?;

    let mut disc_opt = OptimizerState::new(config.disc_step_size, reward_model.params.len());
    let mut policy_opt = OptimizerState::new(config.policy_step_size, policy.params.len());
    let mut minibatch_rng = seed::stream(master, "disc-minibatch", 0);
    let mut buffer_rng = seed::stream(master, "disc-buffer", 0);

    // Reservoir over every policy pair ever generated, each with its
    // collection-time density. Training the discriminator only on the
    // newest rollouts lets f drift arbitrarily on states the converged
    // policy no longer visits, which scrambles the degradation scores
    // later; the reservoir keeps those states anchored as generator
    // samples. Densities are frozen at collection because a later, narrower
    // policy assigns old actions log pi values so low that matching them
    // would warp f across the whole input space.
    const BUFFER_CAP: usize = 8192;
    let mut pair_buffer: Vec<(StateAction, f64)> = Vec::with_capacity(BUFFER_CAP);
    let mut pairs_seen: u64 = 0;

    let rl_config = RLConfig {
        iterations: 1,
        rollouts_per_iter: config.policy_rollouts_per_iter,
        alpha: Some(config.alpha.unwrap_or(env.spec().alpha)),
        gamma: Some(env.spec().gamma),
        baseline: rl::Baseline::MeanReturn,
        policy_step_size: config.policy_step_size,
        baseline_step_size: 1e-2,
        sparsity_lambda: config.lambda,
        hidden_layers: config.policy_hidden_layers,
        hidden_width: config.policy_hidden_width,
    };

    let mut log = Vec::with_capacity(config.outer_iterations);
    for iter in 0..config.outer_iterations {
        if !policy.params.is_finite() {
            return Err(Error::Divergence {
                stage: "airl-policy".into(),
                iteration: iter,
            });
        }
        if !reward_model.params.is_finite() {
            return Err(Error::Divergence {
                stage: "airl-discriminator".into(),
                iteration: iter,
            });
        }
        let rollouts = rollout_batch(
            env,
            &policy,
            config.policy_rollouts_per_iter,
            seed::derive_seed(master, "airl-rollout", iter as u64),
            "rollout",
        )?;
        let policy_pairs = flatten_pairs(&rollouts);
        for pair in &policy_pairs {
            let log_pi = policy.log_density(&pair.state, &pair.action)?;
            if pair_buffer.len() < BUFFER_CAP {
                pair_buffer.push((pair.clone(), log_pi));
            } else {
                use rand::Rng as _;
                let slot = buffer_rng.gen_range(0..=pairs_seen);
                if (slot as usize) < BUFFER_CAP {
                    pair_buffer[slot as usize] = (pair.clone(), log_pi);
                }
            }
            pairs_seen += 1;
        }

        let mut bce = f64::NAN;
        for _ in 0..config.disc_steps_per_iter {
            use rand::Rng as _;
            let db: Vec<(&StateAction, f64)> = (0..config.disc_minibatch)
                .map(|_| {
                    let pair = &demo_pairs[minibatch_rng.gen_range(0..demo_pairs.len())];
                    Ok((pair, policy.log_density(&pair.state, &pair.action)?))
                })
                .collect::<Result<_>>()?;
            let pb: Vec<(&StateAction, f64)> = (0..config.disc_minibatch)
                .map(|_| {
                    let (pair, log_pi) = &pair_buffer[minibatch_rng.gen_range(0..pair_buffer.len())];
                    (pair, *log_pi)
                })
                .collect();
            let (loss, grad) = discriminator_loss_with_densities(&db, &pb, &reward_model)?;
            disc_opt
                .step(&mut reward_model.params, &grad)
                .map_err(|_| Error::Divergence {
                    stage: "airl-discriminator".into(),
                    iteration: iter,
                })?;
            bce = loss;
        }

        let disc_accuracy =
            balanced_accuracy(&demo_pairs, &policy_pairs, &reward_model, &policy, 128)?;

        // Policy burst on the freshly updated pseudo-reward.
        let grad = rl::policy_gradient_estimate(&rollouts, &policy, &reward_model, &rl_config, None)?;
        let mut descent = grad;
        descent.scale(-1.0);
        policy_opt
            .step(&mut policy.params, &descent)
            .map_err(|_| Error::Divergence {
                stage: "airl-policy".into(),
                iteration: iter,
            })?;
        policy.clamp_log_std_at(config.policy_sigma_floor.ln());

        log.push(AirlIterationRecord {
            iteration: iter,
            bce,
            disc_accuracy,
        });
    }

    Ok(AirlResult {
        reward_model,
        policy,
        log,
    })
}

/// Fill `initial_rewards` with the reward term evaluated at every
/// (state, action) pair; all other fields are untouched.
pub fn score_trajectory(reward_model: &RewardModel, trajectory: &Trajectory) -> Result<Trajectory> {
    let mut scored = trajectory.clone();
    scored.initial_rewards = trajectory
        .states
        .iter()
        .zip(&trajectory.actions)
        .map(|(s, a)| reward_model.eval(s, a))
        .collect::<Result<Vec<f64>>>()?;
    Ok(scored)
}
