//! Stochastic policies over discrete and continuous actions with exact
//! log-densities and closed-form entropies, plus the uniform-mixture sampler
//! used to generate noise-degraded rollouts.
//!
//! Categorical heads read the network output as softmax logits. Gaussian
//! heads use a state-dependent mean and a state-independent learned log-std
//! vector stored at the tail of the flat parameter vector; samples are
//! clipped to the action box after density evaluation and no clipping
//! correction is applied to the density.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::approx::{self, ApproximatorSpec, OutputTransform, ParamVector};
use crate::data::{Action, SpaceSpec};
use crate::envs::{sample_uniform_action, Agent, EnvState};
use crate::error::{Error, Result};
use crate::seed::{self, Rng};

/// Floor for the gaussian log-std entries.
pub const MIN_LOG_STD: f64 = -6.907755278982137; // ln(1e-3)

const HALF_LN_TWO_PI: f64 = 0.9189385332046727;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyHead {
    Categorical,
    Gaussian,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StochasticPolicy {
    /// Network producing logits (categorical) or the mean (gaussian).
    pub spec: ApproximatorSpec,
    /// Network parameters; gaussian heads append the log-std vector.
    pub params: ParamVector,
    pub head: PolicyHead,
    pub action_space: SpaceSpec,
}

impl StochasticPolicy {
    /// Fresh seeded policy for a state dimension and action space. The head
    /// follows the action space kind.
    pub fn new(
        state_dim: usize,
        action_space: SpaceSpec,
        hidden_layers: usize,
        hidden_width: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        action_space.validate()?;
        let (head, output_dim) = match &action_space {
            SpaceSpec::Discrete { cardinality } => (PolicyHead::Categorical, *cardinality),
            SpaceSpec::Continuous { dim, .. } => (PolicyHead::Gaussian, *dim),
        };
        let spec = ApproximatorSpec::new(state_dim, output_dim, hidden_layers, hidden_width)
            .with_transform(match head {
                PolicyHead::Categorical => OutputTransform::Logits,
                PolicyHead::Gaussian => OutputTransform::Identity,
            });
        spec.validate()?;
        let mut params = approx::init_params(&spec, rng);
        // Damp the output layer so the initial distribution is near-uniform
        // (categorical) or centered in the action box (gaussian). A mean
        // that starts beyond the clip bounds gets no learning signal: every
        // sample clips to the same action and the advantages cancel.
        let dims = spec.layer_dims();
        let (fan_in, out) = *dims.last().expect("at least one layer");
        let last_block = (fan_in + 1) * out;
        let offset = params.len() - last_block;
        for v in &mut params.0[offset..] {
            *v *= 0.1;
        }
        if head == PolicyHead::Gaussian {
            // Initial sigma = 0.5 in every dimension.
            params.0.extend(std::iter::repeat(0.5f64.ln()).take(output_dim));
        }
        Ok(StochasticPolicy {
            spec,
            params,
            head,
            action_space,
        })
    }

    pub fn net_param_count(&self) -> usize {
        self.spec.param_count()
    }

    fn net_params(&self) -> ParamVector {
        ParamVector(self.params.0[..self.net_param_count()].to_vec())
    }

    pub fn log_std(&self) -> &[f64] {
        &self.params.0[self.net_param_count()..]
    }

    /// Clamp log-std entries to the class floor. No-op for categorical heads.
    pub fn clamp_log_std(&mut self) {
        self.clamp_log_std_at(MIN_LOG_STD);
    }

    /// Clamp log-std entries to a caller-supplied floor (at least the class
    /// floor). No-op for categorical heads.
    pub fn clamp_log_std_at(&mut self, floor: f64) {
        let floor = floor.max(MIN_LOG_STD);
        let n = self.net_param_count();
        for v in &mut self.params.0[n..] {
            if *v < floor {
                *v = floor;
            }
        }
    }

    fn logits(&self, state: &[f64]) -> Result<Vec<f64>> {
        approx::forward(&self.spec, &self.net_params(), state)
    }

    fn check_state(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.spec.input_dim {
            return Err(Error::Dimension(format!(
                "state length {} != policy input {}",
                state.len(),
                self.spec.input_dim
            )));
        }
        Ok(())
    }

    /// Draw one action. Gaussian samples are clipped to the action bounds
    /// after the draw.
    pub fn sample(&self, state: &[f64], rng: &mut Rng) -> Result<Action> {
        use rand::Rng as _;
        self.check_state(state)?;
        match self.head {
            PolicyHead::Categorical => {
                let probs = softmax(&self.logits(state)?);
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut chosen = probs.len() - 1;
                for (i, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        chosen = i;
                        break;
                    }
                }
                Ok(Action::Discrete(chosen))
            }
            PolicyHead::Gaussian => {
                let mean = self.logits(state)?;
                let bounds = match &self.action_space {
                    SpaceSpec::Continuous { bounds, .. } => bounds,
                    SpaceSpec::Discrete { .. } => unreachable!("gaussian head on discrete space"),
                };
                let a: Vec<f64> = mean
                    .iter()
                    .zip(self.log_std())
                    .zip(bounds)
                    .map(|((m, ls), (lo, hi))| {
                        (m + ls.exp() * seed::standard_normal(rng)).clamp(*lo, *hi)
                    })
                    .collect();
                Ok(Action::Continuous(a))
            }
        }
    }

    /// Exact log pi(a|s): log-softmax for categorical, diagonal normal
    /// log-pdf at the given action value for gaussian.
    pub fn log_density(&self, state: &[f64], action: &Action) -> Result<f64> {
        self.check_state(state)?;
        match (self.head, action) {
            (PolicyHead::Categorical, Action::Discrete(a)) => {
                let logits = self.logits(state)?;
                if *a >= logits.len() {
                    return Err(Error::Dimension(format!("action {a} out of range")));
                }
                Ok(logits[*a] - log_sum_exp(&logits))
            }
            (PolicyHead::Gaussian, Action::Continuous(a)) => {
                let mean = self.logits(state)?;
                if a.len() != mean.len() {
                    return Err(Error::Dimension(format!(
                        "action dim {} != {}",
                        a.len(),
                        mean.len()
                    )));
                }
                let mut lp = 0.0;
                for ((x, m), ls) in a.iter().zip(&mean).zip(self.log_std()) {
                    let sigma = ls.exp();
                    let z = (x - m) / sigma;
                    lp += -0.5 * z * z - ls - HALF_LN_TWO_PI;
                }
                Ok(lp)
            }
            _ => Err(Error::Dimension("action kind does not match head".into())),
        }
    }

    /// Closed-form entropy of the action distribution at `state`.
    pub fn entropy(&self, state: &[f64]) -> Result<f64> {
        self.check_state(state)?;
        match self.head {
            PolicyHead::Categorical => {
                let probs = softmax(&self.logits(state)?);
                Ok(-probs
                    .iter()
                    .filter(|p| **p > 0.0)
                    .map(|p| p * p.ln())
                    .sum::<f64>())
            }
            PolicyHead::Gaussian => Ok(self
                .log_std()
                .iter()
                .map(|ls| ls + 0.5 + HALF_LN_TWO_PI)
                .sum()),
        }
    }

    /// Sample from `eta * U(a) + (1 - eta) * pi(a|s)`. The degenerate ends
    /// skip the mixing draw entirely, so eta=0 reproduces the base policy
    /// stream bit for bit and eta=1 reproduces the uniform agent's.
    pub fn mixture_sample(&self, eta: f64, state: &[f64], rng: &mut Rng) -> Result<Action> {
        use rand::Rng as _;
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::Validation(format!("eta out of [0,1]: {eta}")));
        }
        if eta <= 0.0 {
            return self.sample(state, rng);
        }
        if eta >= 1.0 {
            return Ok(sample_uniform_action(&self.action_space, rng));
        }
        if rng.gen::<f64>() < eta {
            Ok(sample_uniform_action(&self.action_space, rng))
        } else {
            self.sample(state, rng)
        }
    }

    /// Exact gradient of log pi(a|s) with respect to every policy parameter
    /// (network, then log-std tail for gaussian heads).
    pub fn log_density_grad(&self, state: &[f64], action: &Action) -> Result<ParamVector> {
        self.check_state(state)?;
        match (self.head, action) {
            (PolicyHead::Categorical, Action::Discrete(a)) => {
                let logits = self.logits(state)?;
                let probs = softmax(&logits);
                let mut upstream: Vec<f64> = probs.iter().map(|p| -p).collect();
                upstream[*a] += 1.0;
                approx::gradient(&self.spec, &self.net_params(), state, &upstream)
            }
            (PolicyHead::Gaussian, Action::Continuous(a)) => {
                let mean = self.logits(state)?;
                let log_std = self.log_std().to_vec();
                let upstream: Vec<f64> = a
                    .iter()
                    .zip(&mean)
                    .zip(&log_std)
                    .map(|((x, m), ls)| {
                        let var = (2.0 * ls).exp();
                        (x - m) / var
                    })
                    .collect();
                let mut grad =
                    approx::gradient(&self.spec, &self.net_params(), state, &upstream)?;
                for ((x, m), ls) in a.iter().zip(&mean).zip(&log_std) {
                    let z2 = ((x - m) / ls.exp()).powi(2);
                    grad.0.push(z2 - 1.0);
                }
                Ok(grad)
            }
            _ => Err(Error::Dimension("action kind does not match head".into())),
        }
    }

    /// Exact gradient of the entropy at `state` with respect to every policy
    /// parameter.
    pub fn entropy_grad(&self, state: &[f64]) -> Result<ParamVector> {
        self.check_state(state)?;
        match self.head {
            PolicyHead::Categorical => {
                let logits = self.logits(state)?;
                let probs = softmax(&logits);
                let h = -probs
                    .iter()
                    .filter(|p| **p > 0.0)
                    .map(|p| p * p.ln())
                    .sum::<f64>();
                // dH/dz_j = -p_j (ln p_j + H)
                let upstream: Vec<f64> = probs
                    .iter()
                    .map(|p| if *p > 0.0 { -p * (p.ln() + h) } else { 0.0 })
                    .collect();
                approx::gradient(&self.spec, &self.net_params(), state, &upstream)
            }
            PolicyHead::Gaussian => {
                let mut grad = ParamVector::zeros(self.net_param_count());
                grad.0.extend(std::iter::repeat(1.0).take(self.log_std().len()));
                Ok(grad)
            }
        }
    }

    /// Exact action probabilities of the eta-mixture at `state`
    /// (discrete heads only).
    pub fn mixture_probs(&self, eta: f64, state: &[f64]) -> Result<Vec<f64>> {
        match self.head {
            PolicyHead::Categorical => {
                let probs = softmax(&self.logits(state)?);
                let k = probs.len() as f64;
                Ok(probs.iter().map(|p| eta / k + (1.0 - eta) * p).collect())
            }
            PolicyHead::Gaussian => Err(Error::Validation(
                "mixture probabilities are enumerable only for discrete heads".into(),
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let expected = self.net_param_count()
            + match self.head {
                PolicyHead::Categorical => 0,
                PolicyHead::Gaussian => self.spec.output_dim,
            };
        if self.params.len() != expected {
            return Err(Error::Dimension(format!(
                "policy parameter length {} != expected {expected}",
                self.params.len()
            )));
        }
        if !self.params.is_finite() {
            return Err(Error::NonFinite("policy parameters".into()));
        }
        match (&self.head, &self.action_space) {
            (PolicyHead::Categorical, SpaceSpec::Discrete { cardinality }) => {
                if self.spec.output_dim != *cardinality {
                    return Err(Error::Dimension(
                        "categorical output_dim != action cardinality".into(),
                    ));
                }
            }
            (PolicyHead::Gaussian, SpaceSpec::Continuous { dim, .. }) => {
                if self.spec.output_dim != *dim {
                    return Err(Error::Dimension(
                        "gaussian output_dim != action dim".into(),
                    ));
                }
                if self.log_std().iter().any(|ls| *ls < MIN_LOG_STD - 1e-12) {
                    return Err(Error::Validation("log-std below floor".into()));
                }
            }
            _ => return Err(Error::Dimension("head does not match action space".into())),
        }
        Ok(())
    }
}

impl Agent for StochasticPolicy {
    fn act(&self, state: &EnvState, rng: &mut Rng) -> Action {
        self.sample(&state.vector, rng)
            .unwrap_or(Action::Continuous(vec![f64::NAN]))
    }
}

/// Rollout agent for the eta-mixture of a base policy with uniform actions.
pub struct MixtureAgent<'a> {
    pub policy: &'a StochasticPolicy,
    pub eta: f64,
}

impl Agent for MixtureAgent<'_> {
    fn act(&self, state: &EnvState, rng: &mut Rng) -> Action {
        self.policy
            .mixture_sample(self.eta, &state.vector, rng)
            .unwrap_or(Action::Continuous(vec![f64::NAN]))
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

/// Network encoding of an action: raw components (continuous) or one-hot
/// (discrete).
pub fn encode_action(space: &SpaceSpec, action: &Action) -> Vec<f64> {
    match (space, action) {
        (SpaceSpec::Discrete { cardinality }, Action::Discrete(a)) => {
            let mut v = vec![0.0; *cardinality];
            if *a < *cardinality {
                v[*a] = 1.0;
            }
            v
        }
        (SpaceSpec::Continuous { .. }, Action::Continuous(x)) => x.clone(),
        _ => Vec::new(),
    }
}

/// Concatenated (state, encoded action) network input.
pub fn state_action_input(state: &[f64], space: &SpaceSpec, action: &Action) -> Vec<f64> {
    let mut v = Vec::with_capacity(state.len() + space.encoded_dim());
    v.extend_from_slice(state);
    v.extend(encode_action(space, action));
    v
}

/// Policy checkpoint: approximator checkpoint plus head metadata.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub spec: ApproximatorSpec,
    pub head: PolicyHead,
    pub action_space: SpaceSpec,
    pub params: Vec<f64>,
}

pub fn save_policy(policy: &StochasticPolicy, path: &Path) -> Result<()> {
    policy.validate()?;
    let ck = PolicyCheckpoint {
        spec: policy.spec.clone(),
        head: policy.head,
        action_space: policy.action_space.clone(),
        params: policy.params.0.clone(),
    };
    let body = serde_json::to_string_pretty(&ck)
        .map_err(|e| Error::Validation(format!("serialize policy: {e}")))?;
    std::fs::write(path, body).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

pub fn load_policy(path: &Path) -> Result<StochasticPolicy> {
    let body =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let ck: PolicyCheckpoint = serde_json::from_str(&body).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        record: 0,
        msg: e.to_string(),
    })?;
    let policy = StochasticPolicy {
        spec: ck.spec,
        params: ParamVector(ck.params),
        head: ck.head,
        action_space: ck.action_space,
    };
    policy.validate()?;
    Ok(policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn categorical4(rng: &mut Rng) -> StochasticPolicy {
        StochasticPolicy::new(2, SpaceSpec::discrete(4), 1, 4, rng).unwrap()
    }

    fn gaussian1(rng: &mut Rng) -> StochasticPolicy {
        StochasticPolicy::new(1, SpaceSpec::continuous(vec![(-1.0, 1.0)]), 1, 4, rng).unwrap()
    }

    /// Categorical policy with hand-set logits at every state (L=0 net with
    /// zero weights and logits in the bias).
    fn fixed_categorical(logits: &[f64]) -> StochasticPolicy {
        let spec = ApproximatorSpec::new(1, logits.len(), 0, 0)
            .with_transform(OutputTransform::Logits);
        let mut params = ParamVector::zeros(spec.param_count());
        let n = logits.len();
        params.0[n..].copy_from_slice(logits);
        StochasticPolicy {
            spec,
            params,
            head: PolicyHead::Categorical,
            action_space: SpaceSpec::discrete(logits.len()),
        }
    }

    /// Gaussian policy with constant mean and sigma (L=0 net, zero weights).
    fn fixed_gaussian(mean: f64, sigma: f64, bounds: (f64, f64)) -> StochasticPolicy {
        let spec = ApproximatorSpec::new(1, 1, 0, 0);
        let mut params = ParamVector::zeros(spec.param_count());
        params.0[1] = mean; // bias
        params.0.push(sigma.ln());
        StochasticPolicy {
            spec,
            params,
            head: PolicyHead::Gaussian,
            action_space: SpaceSpec::continuous(vec![bounds]),
        }
    }

    #[test]
    fn near_degenerate_softmax_concentrates_sampling() {
        let p = fixed_categorical(&[1e6, 0.0, 0.0, 0.0]);
        let mut rng = seed::stream(200, "cat", 0);
        let n = 10_000;
        let hits = (0..n)
            .filter(|_| matches!(p.sample(&[0.0], &mut rng).unwrap(), Action::Discrete(0)))
            .count();
        assert!(hits as f64 / n as f64 >= 0.999);
    }

    #[test]
    fn gaussian_samples_stay_within_four_sigma_of_mean() {
        // Monte Carlo tail check at the smallest permitted sigma.
        let p = fixed_gaussian(0.2, 1e-3, (-1.0, 1.0));
        let mut rng = seed::stream(201, "gauss", 0);
        for _ in 0..10_000 {
            match p.sample(&[0.0], &mut rng).unwrap() {
                Action::Continuous(v) => {
                    assert!((v[0] - 0.2).abs() <= 4.0 * 1e-3, "sample {}", v[0])
                }
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_under_fixed_seed() {
        let mut rng = seed::stream(202, "init", 0);
        let p = categorical4(&mut rng);
        let draw = |p: &StochasticPolicy| -> Vec<Action> {
            let mut r = seed::stream(202, "draw", 1);
            (0..32).map(|_| p.sample(&[0.1, -0.2], &mut r).unwrap()).collect()
        };
        assert_eq!(draw(&p), draw(&p));
    }

    #[test]
    fn uniform_categorical_log_density_is_log_quarter() {
        let p = fixed_categorical(&[0.0; 4]);
        for a in 0..4 {
            let lp = p.log_density(&[0.0], &Action::Discrete(a)).unwrap();
            assert!((lp - 0.25f64.ln()).abs() < 1e-12, "{lp}");
        }
    }

    #[test]
    fn standard_normal_log_density_at_mode() {
        let p = fixed_gaussian(0.0, 1.0, (-10.0, 10.0));
        let lp = p
            .log_density(&[0.0], &Action::Continuous(vec![0.0]))
            .unwrap();
        assert!((lp - (-HALF_LN_TWO_PI)).abs() < 1e-12, "{lp}");
    }

    #[test]
    fn gaussian_log_density_matches_independent_pdf_oracle() {
        // Oracle: evaluate the normal pdf, then take the log.
        let p = fixed_gaussian(0.3, 0.7, (-10.0, 10.0));
        for (i, x) in [-1.4, -0.2, 0.0, 0.55, 2.0].iter().enumerate() {
            let lp = p
                .log_density(&[0.0], &Action::Continuous(vec![*x]))
                .unwrap();
            let sigma = 0.7;
            let pdf = (-(x - 0.3) * (x - 0.3) / (2.0 * sigma * sigma)).exp()
                / (sigma * (2.0 * std::f64::consts::PI).sqrt());
            assert!((lp - pdf.ln()).abs() < 1e-10, "case {i}: {lp} vs {}", pdf.ln());
        }
    }

    #[test]
    fn uniform_categorical_entropy_is_log_four() {
        let p = fixed_categorical(&[0.0; 4]);
        let h = p.entropy(&[0.0]).unwrap();
        assert!((h - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_categorical_entropy_approaches_zero() {
        let p = fixed_categorical(&[800.0, 0.0, 0.0, 0.0]);
        let h = p.entropy(&[0.0]).unwrap();
        assert!(h.abs() < 1e-10, "{h}");
    }

    #[test]
    fn gaussian_entropy_closed_form() {
        let p = fixed_gaussian(0.0, 1.0, (-10.0, 10.0));
        let h = p.entropy(&[0.0]).unwrap();
        let expected = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
        assert!((h - expected).abs() < 1e-12);
    }

    #[test]
    fn discrete_densities_sum_to_one() {
        let mut rng = seed::stream(203, "norm", 0);
        let p = categorical4(&mut rng);
        let total: f64 = (0..4)
            .map(|a| p.log_density(&[0.4, -0.9], &Action::Discrete(a)).unwrap().exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_density_integrates_to_one_by_quadrature() {
        // Simpson's rule over +-8 sigma.
        let p = fixed_gaussian(0.1, 0.6, (-100.0, 100.0));
        let lo = 0.1 - 8.0 * 0.6;
        let hi = 0.1 + 8.0 * 0.6;
        let n = 2000;
        let h = (hi - lo) / n as f64;
        let f = |x: f64| {
            p.log_density(&[0.0], &Action::Continuous(vec![x]))
                .unwrap()
                .exp()
        };
        let mut integral = f(lo) + f(hi);
        for i in 1..n {
            let x = lo + i as f64 * h;
            integral += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        integral *= h / 3.0;
        assert!((integral - 1.0).abs() < 1e-6, "{integral}");
    }

    #[test]
    fn entropy_matches_enumeration() {
        let mut rng = seed::stream(204, "hs", 0);
        let p = categorical4(&mut rng);
        let state = [0.2, 0.7];
        let h = p.entropy(&state).unwrap();
        let by_enum: f64 = -(0..4)
            .map(|a| {
                let lp = p.log_density(&state, &Action::Discrete(a)).unwrap();
                lp.exp() * lp
            })
            .sum::<f64>();
        assert!((h - by_enum).abs() < 1e-12);
    }

    #[test]
    fn mixture_at_zero_matches_base_policy_bit_for_bit() {
        let mut rng = seed::stream(205, "mix0", 0);
        let p = gaussian1(&mut rng);
        let mut r1 = seed::stream(205, "mix0-draw", 0);
        let mut r2 = seed::stream(205, "mix0-draw", 0);
        for _ in 0..64 {
            let a = p.mixture_sample(0.0, &[0.3], &mut r1).unwrap();
            let b = p.sample(&[0.3], &mut r2).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn mixture_at_one_matches_uniform_bit_for_bit() {
        let mut rng = seed::stream(206, "mix1", 0);
        let p = categorical4(&mut rng);
        let mut r1 = seed::stream(206, "mix1-draw", 0);
        let mut r2 = seed::stream(206, "mix1-draw", 0);
        for _ in 0..64 {
            let a = p.mixture_sample(1.0, &[0.3, 0.1], &mut r1).unwrap();
            let b = sample_uniform_action(&p.action_space, &mut r2);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn uniform_mixture_frequencies_are_flat() {
        let p = fixed_categorical(&[3.0, -1.0, 0.5, 0.0]);
        let mut rng = seed::stream(207, "mixu", 0);
        let n = 10_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            if let Action::Discrete(a) = p.mixture_sample(1.0, &[0.0], &mut rng).unwrap() {
                counts[a] += 1;
            }
        }
        for c in counts {
            let freq = c as f64 / n as f64;
            assert!((freq - 0.25).abs() <= 0.02, "{freq}");
        }
    }

    #[test]
    fn half_mixture_of_degenerate_base_has_exact_probabilities() {
        // Base (1,0,0,0) mixed at eta=0.5: (0.625, 0.125, 0.125, 0.125).
        let p = fixed_categorical(&[1e6, 0.0, 0.0, 0.0]);
        let probs = p.mixture_probs(0.5, &[0.0]).unwrap();
        let expected = [0.625, 0.125, 0.125, 0.125];
        for (got, want) in probs.iter().zip(expected) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn mixture_density_is_exact_convex_combination() {
        let mut rng = seed::stream(208, "mixc", 0);
        let p = categorical4(&mut rng);
        let state = [0.5, -0.5];
        for eta in [0.0, 0.25, 0.5, 0.9, 1.0] {
            let mix = p.mixture_probs(eta, &state).unwrap();
            for a in 0..4 {
                let base = p.log_density(&state, &Action::Discrete(a)).unwrap().exp();
                let expected = eta * 0.25 + (1.0 - eta) * base;
                assert!((mix[a] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mixture_frequencies_match_exact_probabilities() {
        let p = fixed_categorical(&[1.0, 0.3, -0.7, 0.0]);
        let exact = p.mixture_probs(0.4, &[0.0]).unwrap();
        let mut rng = seed::stream(209, "mixf", 0);
        let n = 20_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            if let Action::Discrete(a) = p.mixture_sample(0.4, &[0.0], &mut rng).unwrap() {
                counts[a] += 1;
            }
        }
        for (c, e) in counts.iter().zip(&exact) {
            let freq = *c as f64 / n as f64;
            assert!((freq - e).abs() < 0.015, "{freq} vs {e}");
        }
    }

    #[test]
    fn log_density_gradient_matches_finite_differences() {
        let mut rng = seed::stream(210, "lpg", 0);
        for case in 0..20 {
            let (p, action, state): (StochasticPolicy, Action, Vec<f64>) = if case % 2 == 0 {
                let p = categorical4(&mut rng);
                (p, Action::Discrete(case % 4), vec![0.3, -0.8])
            } else {
                let p = gaussian1(&mut rng);
                (p, Action::Continuous(vec![0.4]), vec![0.2])
            };
            let analytic = p.log_density_grad(&state, &action).unwrap();
            let h = 1e-5;
            for i in 0..p.params.len() {
                let mut plus = p.clone();
                plus.params.0[i] += h;
                let mut minus = p.clone();
                minus.params.0[i] -= h;
                let numeric = (plus.log_density(&state, &action).unwrap()
                    - minus.log_density(&state, &action).unwrap())
                    / (2.0 * h);
                let a = analytic.0[i];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                assert!(rel <= 1e-4, "case {case} param {i}: {a} vs {numeric}");
            }
        }
    }

    #[test]
    fn entropy_gradient_matches_finite_differences() {
        let mut rng = seed::stream(211, "hg", 0);
        for case in 0..10 {
            let (p, state): (StochasticPolicy, Vec<f64>) = if case % 2 == 0 {
                (categorical4(&mut rng), vec![0.1, 0.9])
            } else {
                (gaussian1(&mut rng), vec![-0.4])
            };
            let analytic = p.entropy_grad(&state).unwrap();
            let h = 1e-5;
            for i in 0..p.params.len() {
                let mut plus = p.clone();
                plus.params.0[i] += h;
                let mut minus = p.clone();
                minus.params.0[i] -= h;
                let numeric =
                    (plus.entropy(&state).unwrap() - minus.entropy(&state).unwrap()) / (2.0 * h);
                let a = analytic.0[i];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                assert!(rel <= 1e-4, "case {case} param {i}: {a} vs {numeric}");
            }
        }
    }

    #[test]
    fn policy_checkpoint_round_trips() {
        let mut rng = seed::stream(212, "pck", 0);
        let p = gaussian1(&mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.json");
        save_policy(&p, &path).unwrap();
        let back = load_policy(&path).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn one_hot_encoding() {
        let space = SpaceSpec::discrete(4);
        assert_eq!(
            encode_action(&space, &Action::Discrete(2)),
            vec![0.0, 0.0, 1.0, 0.0]
        );
        let cspace = SpaceSpec::continuous(vec![(-1.0, 1.0)]);
        assert_eq!(
            encode_action(&cspace, &Action::Continuous(vec![0.3])),
            vec![0.3]
        );
    }
}
