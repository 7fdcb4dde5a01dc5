//! Degradation–performance curve fitting and reward regression.
//!
//! The curve `sigma(eta) = c / (1 + exp(-k (eta - x0))) + y0` is fitted to
//! per-trajectory scored returns by damped Gauss-Newton least squares with
//! data-driven multi-starts; returns are standardized before fitting and the
//! inverse transform is folded back into (c, y0), so the reported fit lives
//! in the original units. The regressed reward is then trained so each
//! trajectory's predicted return, the undiscounted sum of per-step outputs,
//! matches sigma at its degradation label.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx::{OptimizerState, ParamVector};
use crate::data::{DegradationDataset, SigmoidParams, Trajectory};
use crate::error::{Error, Result};
use crate::rl::RewardModel;
use crate::seed;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_iterations: usize,
    /// Convergence threshold on the squared-residual decrease.
    pub tolerance: f64,
    /// Number of multi-starts (capped at the canonical 16).
    pub multi_start: usize,
    /// |k| is clamped to this bound.
    pub k_bound: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iterations: 200,
            tolerance: 1e-12,
            multi_start: 16,
            k_bound: 100.0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tolerance <= 0.0 {
            return Err(Error::Validation("tolerance must be > 0".into()));
        }
        if self.max_iterations == 0 || self.multi_start == 0 {
            return Err(Error::Validation("iteration counts must be >= 1".into()));
        }
        if self.k_bound <= 0.0 {
            return Err(Error::Validation("k_bound must be > 0".into()));
        }
        Ok(())
    }
}

/// Overflow-safe evaluation of the degradation–performance curve.
pub fn sigmoid_eval(p: &SigmoidParams, eta: f64) -> f64 {
    let z = p.k * (eta - p.x0);
    let s = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    p.c * s + p.y0
}

/// The standardization applied to returns before fitting; already folded
/// back into the reported parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SigmoidFit {
    pub params: SigmoidParams,
    /// Sum of squared residuals in original units.
    pub residual: f64,
    pub normalization: Normalization,
    pub warnings: Vec<String>,
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn sse(p: &SigmoidParams, points: &[(f64, f64)]) -> f64 {
    points
        .iter()
        .map(|(eta, y)| {
            let r = sigmoid_eval(p, *eta) - y;
            r * r
        })
        .sum()
}

/// Solve a 4x4 system in place by Gaussian elimination with partial
/// pivoting. Returns None when the system is numerically singular.
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let mut pivot = col;
        for row in col + 1..4 {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..4 {
            let factor = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0; 4];
    for col in (0..4).rev() {
        let mut acc = b[col];
        for k in col + 1..4 {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
        if !x[col].is_finite() {
            return None;
        }
    }
    Some(x)
}

/// Damped Gauss-Newton from one start; returns the best parameters reached
/// and their SSE. Accepted steps only ever lower the SSE.
fn levenberg_fit(
    start: SigmoidParams,
    points: &[(f64, f64)],
    config: &FitConfig,
) -> (SigmoidParams, f64) {
    let mut params = start;
    params.k = params.k.clamp(-config.k_bound, config.k_bound);
    let mut best_sse = sse(&params, points);
    let mut mu = 1e-3;
    for _ in 0..config.max_iterations {
        // Residuals and Jacobian at the current point.
        let mut jtj = [[0.0f64; 4]; 4];
        let mut jtr = [0.0f64; 4];
        for (eta, y) in points {
            let s = logistic(params.k * (eta - params.x0));
            let r = params.c * s + params.y0 - y;
            let ds = s * (1.0 - s);
            let row = [
                s,                               // d/dc
                params.c * ds * (eta - params.x0), // d/dk
                -params.c * ds * params.k,       // d/dx0
                1.0,                             // d/dy0
            ];
            for i in 0..4 {
                jtr[i] += row[i] * r;
                for j in 0..4 {
                    jtj[i][j] += row[i] * row[j];
                }
            }
        }

        let mut improved = false;
        for _ in 0..16 {
            let mut damped = jtj;
            for (i, row) in damped.iter_mut().enumerate() {
                row[i] += mu * (jtj[i][i].max(1e-12));
            }
            let rhs = [-jtr[0], -jtr[1], -jtr[2], -jtr[3]];
            let Some(delta) = solve4(damped, rhs) else {
                mu *= 4.0;
                continue;
            };
            let trial = SigmoidParams {
                c: params.c + delta[0],
                k: (params.k + delta[1]).clamp(-config.k_bound, config.k_bound),
                x0: params.x0 + delta[2],
                y0: params.y0 + delta[3],
            };
            if trial.validate().is_err() {
                mu *= 4.0;
                continue;
            }
            let trial_sse = sse(&trial, points);
            if trial_sse.is_finite() && trial_sse < best_sse {
                let gain = best_sse - trial_sse;
                params = trial;
                best_sse = trial_sse;
                mu = (mu / 3.0).max(1e-12);
                improved = true;
                if gain < config.tolerance {
                    return (params, best_sse);
                }
                break;
            }
            mu *= 4.0;
        }
        if !improved {
            break;
        }
    }
    (params, best_sse)
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

/// Least-squares fit of the degradation–performance curve to (eta, return)
/// points. Needs >= 4 points and >= 2 distinct eta values.
pub fn fit_sigmoid(points: &[(f64, f64)], config: &FitConfig) -> Result<SigmoidFit> {
    config.validate()?;
    if points.len() < 4 {
        return Err(Error::Validation(format!(
            "need >= 4 points to fit 4 parameters, got {}",
            points.len()
        )));
    }
    for (i, (eta, y)) in points.iter().enumerate() {
        if !eta.is_finite() || !y.is_finite() {
            return Err(Error::NonFinite(format!("points[{i}]")));
        }
    }
    let mut distinct: Vec<f64> = points.iter().map(|(eta, _)| *eta).collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::Validation("need >= 2 distinct eta values".into()));
    }
    let mut warnings = Vec::new();
    if distinct.len() < 6 {
        warnings.push(format!(
            "conditioning: only {} distinct degradation levels (< 6); the 4-parameter fit may be under-determined",
            distinct.len()
        ));
    }

    // Standardize returns for solver conditioning.
    let ys: Vec<f64> = points.iter().map(|(_, y)| *y).collect();
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / ys.len() as f64;
    let std = if var.sqrt() > 0.0 { var.sqrt() } else { 1.0 };
    let normalized: Vec<(f64, f64)> = points
        .iter()
        .map(|(eta, y)| (*eta, (y - mean) / std))
        .collect();

    let ny_min = normalized.iter().map(|(_, y)| *y).fold(f64::INFINITY, f64::min);
    let ny_max = normalized
        .iter()
        .map(|(_, y)| *y)
        .fold(f64::NEG_INFINITY, f64::max);
    let range = if ny_max > ny_min { ny_max - ny_min } else { 1.0 };
    let etas: Vec<f64> = points.iter().map(|(eta, _)| *eta).collect();
    let med_eta = median(&etas);
    let ny_mean = normalized.iter().map(|(_, y)| *y).sum::<f64>() / normalized.len() as f64;

    // Canonical 16 data-driven starts: sign/scale combinations of (c, k)
    // crossed with two offsets and two midpoints, truncated to the
    // configured count. A flat start is always appended so the best fit can
    // never lose to the best constant.
    let mut starts = Vec::with_capacity(17);
    for y0 in [ny_min, ny_max] {
        for c in [range, -range] {
            for k in [8.0, -8.0] {
                for x0 in [med_eta, 0.5] {
                    starts.push(SigmoidParams { c, k, x0, y0 });
                }
            }
        }
    }
    starts.truncate(config.multi_start.min(16).max(1));
    starts.push(SigmoidParams {
        c: 0.0,
        k: 1.0,
        x0: med_eta,
        y0: ny_mean,
    });

    let fits: Vec<(SigmoidParams, f64)> = starts
        .par_iter()
        .map(|s| levenberg_fit(*s, &normalized, config))
        .collect();

    // Best residual wins; ties break to the lowest start index.
    let mut best: Option<(SigmoidParams, f64)> = None;
    for (p, r) in fits {
        if !r.is_finite() || p.validate().is_err() {
            continue;
        }
        if best.as_ref().map_or(true, |(_, br)| r < *br) {
            best = Some((p, r));
        }
    }
    let Some((fitted, _)) = best else {
        return Err(Error::Validation("all solver starts diverged".into()));
    };

    // Fold the standardization back into (c, y0).
    let params = SigmoidParams {
        c: fitted.c * std,
        k: fitted.k,
        x0: fitted.x0,
        y0: fitted.y0 * std + mean,
    };
    let residual = sse(&params, points);
    Ok(SigmoidFit {
        params,
        residual,
        normalization: Normalization { mean, std },
        warnings,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RewardRegressionConfig {
    pub epochs: usize,
    /// Trajectories per minibatch.
    pub minibatch: usize,
    pub step_size: f64,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    /// Standardize the curve targets during training; the scale (and, for
    /// uniform-length trajectories, the shift) is folded back into the
    /// output layer afterwards.
    pub normalize_targets: bool,
}

impl Default for RewardRegressionConfig {
    fn default() -> Self {
        RewardRegressionConfig {
            epochs: 150,
            minibatch: 16,
            step_size: 1e-2,
            hidden_layers: 2,
            hidden_width: 8,
            normalize_targets: true,
        }
    }
}

impl RewardRegressionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Validation("epochs must be >= 1".into()));
        }
        if self.minibatch == 0 {
            return Err(Error::Validation("minibatch must be >= 1".into()));
        }
        if self.step_size <= 0.0 {
            return Err(Error::Validation("step_size must be > 0".into()));
        }
        Ok(())
    }
}

pub struct RegressionOutput {
    pub model: RewardModel,
    /// Full-dataset loss in original units: index 0 is the pre-training
    /// loss, then one entry per accepted epoch. Non-increasing by
    /// construction (epochs that fail to improve are retried at half step).
    pub loss_curve: Vec<f64>,
}

fn predicted_return(model: &RewardModel, traj: &Trajectory) -> Result<f64> {
    let mut total = 0.0;
    for (s, a) in traj.states.iter().zip(&traj.actions) {
        total += model.eval(s, a)?;
    }
    Ok(total)
}

fn regression_loss(model: &RewardModel, dataset: &DegradationDataset, targets: &[f64]) -> Result<f64> {
    let per: Vec<f64> = dataset
        .trajectories
        .par_iter()
        .zip(targets)
        .map(|(t, g)| -> Result<f64> {
            let e = predicted_return(model, t)? - g;
            Ok(e * e)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// Train the reward so trajectory sums match the curve at each label.
/// Per-trajectory gradient of the squared term is
/// `2 (sum_t R(s_t, a_t) - sigma(eta)) * sum_t dR/dtheta`.
pub fn reward_regression(
    dataset: &DegradationDataset,
    sigmoid: &SigmoidParams,
    config: &RewardRegressionConfig,
    action_space: &crate::data::SpaceSpec,
    master: u64,
) -> Result<RegressionOutput> {
    config.validate()?;
    dataset.validate()?;
    sigmoid.validate()?;
    let n = dataset.trajectories.len();

    let raw_targets: Vec<f64> = dataset
        .trajectories
        .iter()
        .map(|t| sigmoid_eval(sigmoid, t.eta))
        .collect();

    let uniform_length = dataset
        .trajectories
        .windows(2)
        .all(|w| w[0].len() == w[1].len());
    let (targets, t_mean, t_std) = if config.normalize_targets {
        let mean = if uniform_length {
            raw_targets.iter().sum::<f64>() / n as f64
        } else {
            // A constant shift cannot be folded back exactly when episode
            // lengths differ, so only rescale.
            0.0
        };
        let var = raw_targets.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / n as f64;
        let std = if var.sqrt() > 0.0 { var.sqrt() } else { 1.0 };
        (
            raw_targets.iter().map(|g| (g - mean) / std).collect::<Vec<f64>>(),
            mean,
            std,
        )
    } else {
        (raw_targets.clone(), 0.0, 1.0)
    };

    let state_dim = dataset.trajectories[0].states[0].len();

    let mut rng = seed::stream(master, "reward-init", 0);
    let mut model = RewardModel::new(
        state_dim,
        action_space.clone(),
        config.hidden_layers,
        config.hidden_width,
        &mut rng,
    )?;
    let mut opt = OptimizerState::new(config.step_size, model.params.len());

    let mut loss_curve = Vec::with_capacity(config.epochs + 1);
    let mut prev_loss = regression_loss(&model, dataset, &targets)?;
    loss_curve.push(prev_loss);

    let order_master = seed::derive_seed(master, "epoch-order", 0);
    'epochs: for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        {
            use rand::seq::SliceRandom as _;
            let mut order_rng = seed::stream(order_master, "epoch", epoch as u64);
            order.shuffle(&mut order_rng);
        }

        // Retry the epoch at half the step size whenever the full loss
        // fails to decrease.
        let mut halvings = 0;
        loop {
            let snapshot_params = model.params.clone();
            let snapshot_opt = opt.clone();

            for chunk in order.chunks(config.minibatch) {
                let contributions: Vec<ParamVector> = chunk
                    .par_iter()
                    .map(|&idx| -> Result<ParamVector> {
                        let traj = &dataset.trajectories[idx];
                        let pred = predicted_return(&model, traj)?;
                        let upstream = 2.0 * (pred - targets[idx]) / chunk.len() as f64;
                        let mut g = ParamVector::zeros(model.params.len());
                        for (s, a) in traj.states.iter().zip(&traj.actions) {
                            g.add_scaled(&model.grad(s, a, upstream)?, 1.0);
                        }
                        Ok(g)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mut grad = ParamVector::zeros(model.params.len());
                for c in &contributions {
                    grad.add_scaled(c, 1.0);
                }
                opt.step(&mut model.params, &grad)
                    .map_err(|_| Error::Divergence {
                        stage: "reward-regression".into(),
                        iteration: epoch,
                    })?;
            }

            let loss = regression_loss(&model, dataset, &targets)?;
            if loss.is_finite() && loss <= prev_loss + 1e-8 {
                prev_loss = prev_loss.min(loss);
                loss_curve.push(prev_loss);
                break;
            }
            model.params = snapshot_params;
            // Stale momentum can point uphill at any step size, so the
            // halved retry restarts from fresh moments.
            let halved = snapshot_opt.step_size * 0.5;
            opt = OptimizerState::new(halved, model.params.len());
            halvings += 1;
            if halvings >= 30 {
                if !loss.is_finite() {
                    return Err(Error::Divergence {
                        stage: "reward-regression".into(),
                        iteration: epoch,
                    });
                }
                break 'epochs;
            }
        }
    }

    // Fold the target normalization back into the output layer.
    if config.normalize_targets {
        let dims = model.spec.layer_dims();
        let (fan_in, out) = *dims.last().expect("at least one layer");
        debug_assert_eq!(out, 1);
        let last_block = (fan_in + 1) * out;
        let offset = model.params.len() - last_block;
        for v in &mut model.params.0[offset..] {
            *v *= t_std;
        }
        if uniform_length && t_mean != 0.0 {
            let steps = dataset.trajectories[0].len() as f64;
            let bias_idx = model.params.len() - 1;
            model.params.0[bias_idx] += t_mean / steps;
        }
        for l in &mut loss_curve {
            *l *= t_std * t_std;
        }
    }

    Ok(RegressionOutput { model, loss_curve })
}

/// Exact mean over trajectories of `(sum_t R(s_t, a_t) - sigma(eta))^2`.
pub fn ssrr_loss(
    model: &RewardModel,
    dataset: &DegradationDataset,
    sigmoid: &SigmoidParams,
) -> Result<f64> {
    if dataset.trajectories.is_empty() {
        return Err(Error::Validation("empty dataset".into()));
    }
    let mut total = 0.0;
    for t in &dataset.trajectories {
        let e = predicted_return(model, t)? - sigmoid_eval(sigmoid, t.eta);
        total += e * e;
    }
    Ok(total / dataset.trajectories.len() as f64)
}
