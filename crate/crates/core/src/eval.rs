//! Ground-truth evaluation: correlation of learned trajectory returns with
//! hidden ground truth, range normalization for scatter output, and policy
//! performance against the demonstrations.

use serde::{Deserialize, Serialize};

use crate::data::Trajectory;
use crate::envs::{mean_gt_return, rollout_batch, Environment};
use crate::error::{Error, Result};
use crate::policy::{MixtureAgent, StochasticPolicy};
use crate::rl::{self, RLConfig, RewardFn};
use crate::seed;

/// Sample Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension(format!(
            "length mismatch: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::Validation("need >= 2 samples".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Validation(
            "undefined correlation: zero variance".into(),
        ));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Affine map sending [min(values), max(values)] onto [target_lo, target_hi].
pub fn normalize_to_range(values: &[f64], target_lo: f64, target_hi: f64) -> Result<Vec<f64>> {
    if target_hi <= target_lo {
        return Err(Error::Validation(format!(
            "target range degenerate: [{target_lo}, {target_hi}]"
        )));
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::Validation(
            "input range degenerate: max(values) must exceed min(values)".into(),
        ));
    }
    let scale = (target_hi - target_lo) / (hi - lo);
    Ok(values
        .iter()
        .map(|v| target_lo + (v - lo) * scale)
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Demo,
    Degradation,
    Test,
}

impl std::fmt::Display for SplitTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SplitTag::Demo => "demo",
            SplitTag::Degradation => "degradation",
            SplitTag::Test => "test",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub split: SplitTag,
    pub gt_return: f64,
    pub predicted_return: f64,
    /// Prediction affinely mapped onto the pooled ground-truth range.
    pub normalized_predicted: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorrelationReport {
    /// Pooled correlation over every split.
    pub pearson_r: f64,
    pub n: usize,
    pub points: Vec<ScatterPoint>,
}

/// Undiscounted sum of the reward model over a trajectory's (s, a) pairs.
pub fn predicted_return(reward: &dyn RewardFn, trajectory: &Trajectory) -> f64 {
    trajectory
        .states
        .iter()
        .zip(&trajectory.actions)
        .map(|(s, a)| reward.reward(s, a))
        .sum()
}

/// Correlate predicted trajectory returns with ground truth over the demo,
/// degradation, and test splits pooled together.
pub fn correlation_report(
    reward: &dyn RewardFn,
    demo: &[Trajectory],
    degradation: &[Trajectory],
    test: &[Trajectory],
) -> Result<CorrelationReport> {
    let mut tagged: Vec<(SplitTag, &Trajectory)> = Vec::new();
    tagged.extend(demo.iter().map(|t| (SplitTag::Demo, t)));
    tagged.extend(degradation.iter().map(|t| (SplitTag::Degradation, t)));
    tagged.extend(test.iter().map(|t| (SplitTag::Test, t)));
    if tagged.len() < 2 {
        return Err(Error::Validation("need >= 2 trajectories".into()));
    }
    let mut gt = Vec::with_capacity(tagged.len());
    let mut predicted = Vec::with_capacity(tagged.len());
    for (i, (_, t)) in tagged.iter().enumerate() {
        let g = t.gt_return.ok_or_else(|| {
            Error::Validation(format!("trajectory {i} is missing gt_return"))
        })?;
        gt.push(g);
        predicted.push(predicted_return(reward, t));
    }
    let pearson_r = pearson(&gt, &predicted)?;
    let gt_lo = gt.iter().cloned().fold(f64::INFINITY, f64::min);
    let gt_hi = gt.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let normalized = normalize_to_range(&predicted, gt_lo, gt_hi)?;
    let points = tagged
        .iter()
        .enumerate()
        .map(|(i, (split, _))| ScatterPoint {
            split: *split,
            gt_return: gt[i],
            predicted_return: predicted[i],
            normalized_predicted: normalized[i],
        })
        .collect();
    Ok(CorrelationReport {
        pearson_r,
        n: gt.len(),
        points,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolicyReport {
    pub demo_mean: f64,
    pub demo_best: f64,
    pub policy_mean: f64,
    pub rollouts: usize,
    /// 100 * policy_mean / demo_best, the headline ratio. With all-negative
    /// return scales a value above 100 reads as worse than the best demo,
    /// not better; compare the raw means for direction.
    pub percent_of_best: f64,
}

/// Evaluate a policy on ground truth over `m` fresh rollouts and compare
/// with the demonstration batch.
pub fn policy_report(
    policy: &StochasticPolicy,
    demos: &[Trajectory],
    env: &dyn Environment,
    m: usize,
    master: u64,
) -> Result<PolicyReport> {
    if m == 0 {
        return Err(Error::Validation("need m >= 1 evaluation rollouts".into()));
    }
    if demos.is_empty() {
        return Err(Error::Validation("need at least one demonstration".into()));
    }
    let demo_returns: Vec<f64> = demos
        .iter()
        .enumerate()
        .map(|(i, t)| {
            t.gt_return
                .ok_or_else(|| Error::Validation(format!("demo {i} is missing gt_return")))
        })
        .collect::<Result<Vec<f64>>>()?;
    let demo_mean = demo_returns.iter().sum::<f64>() / demo_returns.len() as f64;
    let demo_best = demo_returns.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let batch = rollout_batch(env, policy, m, master, "policy-eval")?;
    let policy_mean = mean_gt_return(&batch);
    let percent_of_best = 100.0 * policy_mean / demo_best;
    Ok(PolicyReport {
        demo_mean,
        demo_best,
        policy_mean,
        rollouts: m,
        percent_of_best,
    })
}

/// Trajectories from policies unseen during training: eta-mixtures at
/// off-grid rates plus partially trained ground-truth RL policies captured
/// mid-run.
pub fn generate_test_split(
    env: &dyn Environment,
    base_policy: &StochasticPolicy,
    offgrid_etas: &[f64],
    per_eta: usize,
    rl_config: &RLConfig,
    snapshot_fractions: &[f64],
    snapshot_rollouts: usize,
    master: u64,
) -> Result<Vec<Trajectory>> {
    let mut out = Vec::new();
    for (i, &eta) in offgrid_etas.iter().enumerate() {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::Validation(format!("off-grid eta out of [0,1]: {eta}")));
        }
        let agent = MixtureAgent {
            policy: base_policy,
            eta,
        };
        let batch = rollout_batch(
            env,
            &agent,
            per_eta,
            seed::derive_seed(master, "test-offgrid", i as u64),
            "rollout",
        )?;
        out.extend(batch.into_iter().map(|mut t| {
            t.eta = eta;
            t
        }));
    }

    if !snapshot_fractions.is_empty() && snapshot_rollouts > 0 {
        let mut fractions: Vec<f64> = snapshot_fractions.to_vec();
        fractions.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut iterations_done = 0usize;
        let state_dim = env.spec().state_space.encoded_dim();
        let mut rng = seed::stream(master, "test-policy-init", 0);
        let mut policy = StochasticPolicy::new(
            state_dim,
            env.spec().action_space.clone(),
            rl_config.hidden_layers,
            rl_config.hidden_width,
            &mut rng,
        )?;
        let mut opt =
            crate::approx::OptimizerState::new(rl_config.policy_step_size, policy.params.len());
        let gt = rl::GroundTruthReward(env);
        for (i, fraction) in fractions.iter().enumerate() {
            let stop = ((fraction.clamp(0.0, 1.0)) * rl_config.iterations as f64).round() as usize;
            if stop > iterations_done {
                let chunk = RLConfig {
                    iterations: stop - iterations_done,
                    ..rl_config.clone()
                };
                rl::train_policy_from(
                    &mut policy,
                    &mut opt,
                    None,
                    env,
                    &gt,
                    &chunk,
                    master,
                    "test-gt-policy",
                    iterations_done,
                )?;
                iterations_done = stop;
            }
            let batch = rollout_batch(
                env,
                &policy,
                snapshot_rollouts,
                seed::derive_seed(master, "test-snapshot", i as u64),
                "rollout",
            )?;
            out.extend(batch);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
