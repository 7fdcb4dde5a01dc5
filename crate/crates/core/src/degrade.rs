//! Degraded-trajectory generation, the first phase of reward regression.
//! Either mix uniform-random actions into the learned policy at a grid of
//! rates (noise), or train a ladder of adversarial IRL runs that each vary
//! exactly one knob — demo count, network capacity, or policy L1 weight —
//! and roll out every rung (systematic). Every trajectory is scored by one
//! consistent reward model so the curve fit sees a single scale.

use serde::{Deserialize, Serialize};

use crate::airl::{score_trajectory, train_airl, AirlConfig, AirlResult};
use crate::data::{DegradationDataset, Provenance, Trajectory};
use crate::envs::{mean_gt_return, rollout_batch, Environment};
use crate::error::{Error, Result};
use crate::policy::{MixtureAgent, StochasticPolicy};
use crate::rl::RewardModel;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegradationMethod {
    Noise,
    DemoCount,
    Capacity,
    Sparsity,
}

impl DegradationMethod {
    pub fn provenance(self) -> Provenance {
        match self {
            DegradationMethod::Noise => Provenance::Noise,
            DegradationMethod::DemoCount => Provenance::DemoCount,
            DegradationMethod::Capacity => Provenance::Capacity,
            DegradationMethod::Sparsity => Provenance::Sparsity,
        }
    }
}

/// What to generate: the method, its control values (mixture rates for
/// noise; demo counts, layer counts, or L1 weights otherwise), and how many
/// rollouts to take per level.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DegradationPlan {
    pub method: DegradationMethod,
    pub controls: Vec<f64>,
    pub trajectories_per_level: usize,
}

impl DegradationPlan {
    pub fn validate(&self) -> Result<()> {
        if self.controls.len() < 2 {
            return Err(Error::Validation(">=2 levels required".into()));
        }
        if self.trajectories_per_level == 0 {
            return Err(Error::Validation("trajectories_per_level must be >= 1".into()));
        }
        for (i, a) in self.controls.iter().enumerate() {
            if !a.is_finite() {
                return Err(Error::NonFinite(format!("controls[{i}]")));
            }
            for b in &self.controls[i + 1..] {
                if a == b {
                    return Err(Error::Validation(format!("duplicate controls: {a}")));
                }
            }
        }
        if self.method == DegradationMethod::Noise {
            for c in &self.controls {
                if !(0.0..=1.0).contains(c) {
                    return Err(Error::Validation(format!("noise level out of [0,1]: {c}")));
                }
            }
        }
        if matches!(
            self.method,
            DegradationMethod::DemoCount | DegradationMethod::Capacity
        ) {
            for c in &self.controls {
                if c.fract() != 0.0 || *c < 1.0 {
                    return Err(Error::Validation(format!(
                        "control must be a positive integer: {c}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `n` equally spaced mixture rates from 0 to 1.
pub fn eta_grid_noise(n_levels: usize) -> Result<Vec<f64>> {
    if n_levels < 2 {
        return Err(Error::Validation(format!(
            "need at least 2 noise levels, got {n_levels}"
        )));
    }
    Ok((0..n_levels)
        .map(|i| i as f64 / (n_levels - 1) as f64)
        .collect())
}

/// Degradation labels for systematic control values, aligned with the input
/// order. Demo counts map by value, (max - n) / (max - min); capacity maps
/// by ascending rank to equally spaced descending labels (fewest layers is
/// most degraded); sparsity maps by descending rank (largest L1 weight is
/// most degraded).
pub fn eta_from_control(method: DegradationMethod, controls: &[f64]) -> Result<Vec<f64>> {
    if method == DegradationMethod::Noise {
        return Err(Error::Validation(
            "noise levels are the mixture rates themselves; no mapping applies".into(),
        ));
    }
    if controls.len() < 2 {
        return Err(Error::Validation(">=2 controls required".into()));
    }
    for (i, a) in controls.iter().enumerate() {
        if !a.is_finite() {
            return Err(Error::NonFinite(format!("controls[{i}]")));
        }
        for b in &controls[i + 1..] {
            if a == b {
                return Err(Error::Validation(format!("duplicate controls: {a}")));
            }
        }
    }
    let m = controls.len();
    match method {
        DegradationMethod::DemoCount => {
            let max = controls.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = controls.iter().cloned().fold(f64::INFINITY, f64::min);
            Ok(controls.iter().map(|n| (max - n) / (max - min)).collect())
        }
        DegradationMethod::Capacity => {
            // Rank ascending: the smallest control gets eta 1.0.
            Ok(controls
                .iter()
                .map(|c| {
                    let rank = controls.iter().filter(|o| **o < *c).count();
                    1.0 - rank as f64 / (m - 1) as f64
                })
                .collect())
        }
        DegradationMethod::Sparsity => {
            // Rank descending: the largest control gets eta 1.0.
            Ok(controls
                .iter()
                .map(|c| {
                    let rank = controls.iter().filter(|o| **o > *c).count();
                    1.0 - rank as f64 / (m - 1) as f64
                })
                .collect())
        }
        DegradationMethod::Noise => unreachable!(),
    }
}

fn sorted_levels(etas: &[f64]) -> Vec<f64> {
    let mut levels = etas.to_vec();
    levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    levels.dedup();
    levels
}

/// Roll the eta-mixture of the learned policy at every level and score each
/// trajectory with the learned reward.
pub fn generate_noise_dataset(
    env: &dyn Environment,
    airl: &AirlResult,
    etas: &[f64],
    per_level: usize,
    master: u64,
) -> Result<DegradationDataset> {
    if etas.len() < 2 {
        return Err(Error::Validation(">=2 levels required".into()));
    }
    if per_level == 0 {
        return Err(Error::Validation("per_level must be >= 1".into()));
    }
    let mut trajectories = Vec::with_capacity(etas.len() * per_level);
    for (li, &eta) in etas.iter().enumerate() {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::Validation(format!("eta out of [0,1]: {eta}")));
        }
        let agent = MixtureAgent {
            policy: &airl.policy,
            eta,
        };
        let batch = rollout_batch(
            env,
            &agent,
            per_level,
            seed::derive_seed(master, "noise-level", li as u64),
            "rollout",
        )?;
        for t in batch {
            let mut scored = score_trajectory(&airl.reward_model, &t)?;
            scored.eta = eta;
            trajectories.push(scored);
        }
    }
    let dataset = DegradationDataset {
        env_id: env.spec().id.clone(),
        provenance: Provenance::Noise,
        levels: sorted_levels(etas),
        trajectories,
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Per-run bookkeeping from a systematic ladder.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SystematicRunRecord {
    pub control: f64,
    pub eta: f64,
    /// L1 norm of the trained policy parameters.
    pub policy_l1: f64,
    /// Final discriminator cross entropy.
    pub final_bce: f64,
    /// Mean ground-truth return of the generated rollouts (evaluation only).
    pub mean_gt_return: f64,
}

pub struct SystematicOutput {
    pub dataset: DegradationDataset,
    /// Reward model of the least-degraded run; it scored every trajectory.
    pub scorer: RewardModel,
    /// Policy of the least-degraded run.
    pub scorer_policy: StochasticPolicy,
    pub runs: Vec<SystematicRunRecord>,
}

/// Apply exactly one knob of the plan to a base config.
pub fn apply_control(
    base: &AirlConfig,
    method: DegradationMethod,
    control: f64,
) -> Result<AirlConfig> {
    let mut cfg = base.clone();
    match method {
        DegradationMethod::DemoCount => {
            cfg.demo_subset_size = Some(control as usize);
        }
        DegradationMethod::Capacity => {
            cfg.disc_hidden_layers = control as usize;
            cfg.policy_hidden_layers = control as usize;
        }
        DegradationMethod::Sparsity => {
            cfg.lambda = control;
        }
        DegradationMethod::Noise => {
            return Err(Error::Validation(
                "noise degradation does not retrain the IRL stage".into(),
            ))
        }
    }
    Ok(cfg)
}

/// Train one IRL run per control value, roll out each resulting policy, and
/// score everything with the least-degraded run's reward model.
pub fn generate_systematic_dataset(
    env: &dyn Environment,
    demos: &[Trajectory],
    plan: &DegradationPlan,
    base: &AirlConfig,
    master: u64,
) -> Result<SystematicOutput> {
    plan.validate()?;
    if plan.method == DegradationMethod::Noise {
        return Err(Error::Validation(
            "systematic generation needs a demo_count, capacity, or sparsity plan".into(),
        ));
    }
    let etas = eta_from_control(plan.method, &plan.controls)?;

    struct Run {
        control: f64,
        eta: f64,
        result: AirlResult,
        rollouts: Vec<Trajectory>,
    }

    let mut runs = Vec::with_capacity(plan.controls.len());
    for (i, (&control, &eta)) in plan.controls.iter().zip(&etas).enumerate() {
        let cfg = apply_control(base, plan.method, control)?;
        let result = train_airl(
            env,
            demos,
            &cfg,
            seed::derive_seed(master, "systematic-airl", i as u64),
        )
        .map_err(|e| match e {
            Error::Divergence { stage, iteration } => Error::Divergence {
                stage: format!("{stage} (control {control})"),
                iteration,
            },
            other => other,
        })?;
        let rollouts = rollout_batch(
            env,
            &result.policy,
            plan.trajectories_per_level,
            seed::derive_seed(master, "systematic-rollout", i as u64),
            "rollout",
        )?;
        runs.push(Run {
            control,
            eta,
            result,
            rollouts,
        });
    }

    // The least-degraded run (eta label 0) provides the single scorer.
    let scorer_idx = runs
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.eta.partial_cmp(&b.eta).unwrap())
        .map(|(i, _)| i)
        .expect("plans have >= 2 controls");

    let scorer = runs[scorer_idx].result.reward_model.clone();
    let scorer_policy = runs[scorer_idx].result.policy.clone();

    let mut trajectories = Vec::with_capacity(plan.controls.len() * plan.trajectories_per_level);
    let mut records = Vec::with_capacity(runs.len());
    for run in &runs {
        for t in &run.rollouts {
            let mut scored = score_trajectory(&scorer, t)?;
            scored.eta = run.eta;
            trajectories.push(scored);
        }
        records.push(SystematicRunRecord {
            control: run.control,
            eta: run.eta,
            policy_l1: run.result.policy.params.l1_norm(),
            final_bce: run.result.log.last().map(|r| r.bce).unwrap_or(f64::NAN),
            mean_gt_return: mean_gt_return(&run.rollouts),
        });
    }

    let dataset = DegradationDataset {
        env_id: env.spec().id.clone(),
        provenance: plan.method.provenance(),
        levels: sorted_levels(&etas),
        trajectories,
    };
    dataset.validate()?;
    Ok(SystematicOutput {
        dataset,
        scorer,
        scorer_policy,
        runs: records,
    })
}
