//! Small fully-connected function approximators with exact analytic
//! gradients, parameter-norm penalties, and an adaptive first-order
//! optimizer. Reward, policy, and discriminator models all live on this
//! substrate. Fixed topology, tanh hidden activations, flat parameter
//! storage.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputTransform {
    /// Raw affine output.
    Identity,
    /// Raw affine output, consumed downstream as softmax logits.
    Logits,
}

/// Topology of one MLP. `hidden_layers == 0` is a plain affine map.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApproximatorSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub activation: Activation,
    pub output_transform: OutputTransform,
}

impl ApproximatorSpec {
    pub fn new(input_dim: usize, output_dim: usize, hidden_layers: usize, hidden_width: usize) -> Self {
        ApproximatorSpec {
            input_dim,
            output_dim,
            hidden_layers,
            hidden_width,
            activation: Activation::Tanh,
            output_transform: OutputTransform::Identity,
        }
    }

    pub fn with_transform(mut self, t: OutputTransform) -> Self {
        self.output_transform = t;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Validation("input and output dims must be >= 1".into()));
        }
        if self.hidden_layers > 0 && self.hidden_width == 0 {
            return Err(Error::Validation("hidden width must be >= 1".into()));
        }
        Ok(())
    }

    /// (in, out) per affine layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        if self.hidden_layers == 0 {
            return vec![(self.input_dim, self.output_dim)];
        }
        let mut dims = Vec::with_capacity(self.hidden_layers + 1);
        dims.push((self.input_dim, self.hidden_width));
        for _ in 1..self.hidden_layers {
            dims.push((self.hidden_width, self.hidden_width));
        }
        dims.push((self.hidden_width, self.output_dim));
        dims
    }

    /// Closed form: sum over layers of (in + 1) * out.
    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| (i + 1) * o).sum()
    }
}

/// Flat parameter storage. Layer l occupies a contiguous block: weights
/// row-major [out][in], then biases [out].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        ParamVector(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn l1_norm(&self) -> f64 {
        self.0.iter().map(|x| x.abs()).sum()
    }

    pub fn add_scaled(&mut self, other: &ParamVector, scale: f64) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.0 {
            *a *= s;
        }
    }
}

/// Seeded init, uniform in +-sqrt(6 / (fan_in + fan_out)) per layer. The
/// symmetric fan bound keeps the per-layer signal gain near one, so deep
/// tanh stacks neither saturate nor wash the input out.
pub fn init_params(spec: &ApproximatorSpec, rng: &mut Rng) -> ParamVector {
    use rand::Rng as _;
    let mut values = Vec::with_capacity(spec.param_count());
    for (fan_in, out) in spec.layer_dims() {
        let bound = (6.0 / (fan_in + out) as f64).sqrt();
        for _ in 0..(fan_in + 1) * out {
            values.push(rng.gen_range(-bound..bound));
        }
    }
    ParamVector(values)
}

fn check_params(spec: &ApproximatorSpec, params: &ParamVector) -> Result<()> {
    if params.len() != spec.param_count() {
        return Err(Error::Dimension(format!(
            "parameter vector length {} != spec count {}",
            params.len(),
            spec.param_count()
        )));
    }
    Ok(())
}

fn affine(
    weights: &[f64],
    fan_in: usize,
    out: usize,
    input: &[f64],
    output: &mut Vec<f64>,
) {
    output.clear();
    let biases = &weights[fan_in * out..];
    for o in 0..out {
        let row = &weights[o * fan_in..(o + 1) * fan_in];
        let mut z = biases[o];
        for (w, x) in row.iter().zip(input) {
            z += w * x;
        }
        output.push(z);
    }
}

/// Deterministic forward pass.
pub fn forward(spec: &ApproximatorSpec, params: &ParamVector, input: &[f64]) -> Result<Vec<f64>> {
    let (out, _) = forward_cached(spec, params, input)?;
    Ok(out)
}

/// Forward pass returning the per-layer post-activation vectors (index 0 is
/// the input) needed for backprop.
pub fn forward_cached(
    spec: &ApproximatorSpec,
    params: &ParamVector,
    input: &[f64],
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    check_params(spec, params)?;
    if input.len() != spec.input_dim {
        return Err(Error::Dimension(format!(
            "input length {} != input_dim {}",
            input.len(),
            spec.input_dim
        )));
    }
    let dims = spec.layer_dims();
    let mut activations: Vec<Vec<f64>> = Vec::with_capacity(dims.len());
    activations.push(input.to_vec());
    let mut offset = 0;
    let mut h = input.to_vec();
    let mut z = Vec::new();
    for (l, &(fan_in, out)) in dims.iter().enumerate() {
        let block = (fan_in + 1) * out;
        affine(&params.0[offset..offset + block], fan_in, out, &h, &mut z);
        offset += block;
        let last = l + 1 == dims.len();
        if last {
            return Ok((z, activations));
        }
        h = z.iter().map(|v| v.tanh()).collect();
        activations.push(h.clone());
        z = Vec::new();
    }
    unreachable!("layer_dims is never empty")
}

/// Exact gradient of `<upstream, forward(input)>` with respect to the
/// parameters.
pub fn gradient(
    spec: &ApproximatorSpec,
    params: &ParamVector,
    input: &[f64],
    upstream: &[f64],
) -> Result<ParamVector> {
    if upstream.len() != spec.output_dim {
        return Err(Error::Dimension(format!(
            "upstream length {} != output_dim {}",
            upstream.len(),
            spec.output_dim
        )));
    }
    if upstream.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("upstream".into()));
    }
    let (_, activations) = forward_cached(spec, params, input)?;
    let dims = spec.layer_dims();
    let mut grad = vec![0.0; params.len()];
    let mut offsets = Vec::with_capacity(dims.len());
    let mut off = 0;
    for &(fan_in, out) in &dims {
        offsets.push(off);
        off += (fan_in + 1) * out;
    }

    let mut delta: Vec<f64> = upstream.to_vec();
    for l in (0..dims.len()).rev() {
        let (fan_in, out) = dims[l];
        let h_prev = &activations[l];
        let base = offsets[l];
        for o in 0..out {
            let d = delta[o];
            let row = base + o * fan_in;
            for i in 0..fan_in {
                grad[row + i] += d * h_prev[i];
            }
            grad[base + fan_in * out + o] += d;
        }
        if l == 0 {
            break;
        }
        // Propagate through the affine map and the tanh of the previous layer.
        let weights = &params.0[base..base + fan_in * out];
        let mut prev_delta = vec![0.0; fan_in];
        for o in 0..out {
            let d = delta[o];
            let row = &weights[o * fan_in..(o + 1) * fan_in];
            for (i, w) in row.iter().enumerate() {
                prev_delta[i] += w * d;
            }
        }
        for (pd, h) in prev_delta.iter_mut().zip(h_prev) {
            *pd *= 1.0 - h * h;
        }
        delta = prev_delta;
    }
    Ok(ParamVector(grad))
}

/// L1 norm and its subgradient (0 at exact zeros).
pub fn l1_penalty(params: &ParamVector) -> (f64, ParamVector) {
    let value = params.l1_norm();
    let sub = params
        .0
        .iter()
        .map(|&x| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
        .collect();
    (value, ParamVector(sub))
}

/// Adam with bias-corrected moments; minimizes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step: u64,
}

impl OptimizerState {
    pub fn new(step_size: f64, dim: usize) -> Self {
        OptimizerState {
            step_size,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            first_moment: vec![0.0; dim],
            second_moment: vec![0.0; dim],
            step: 0,
        }
    }

    /// One descent step. Non-finite gradients reject the step.
    pub fn step(&mut self, params: &mut ParamVector, grad: &ParamVector) -> Result<()> {
        if grad.len() != params.len() || grad.len() != self.first_moment.len() {
            return Err(Error::Dimension(format!(
                "gradient length {} != parameter length {}",
                grad.len(),
                params.len()
            )));
        }
        if !grad.is_finite() {
            return Err(Error::NonFinite("gradient; step rejected".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grad.0[i];
            self.first_moment[i] = self.beta1 * self.first_moment[i] + (1.0 - self.beta1) * g;
            self.second_moment[i] =
                self.beta2 * self.second_moment[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.first_moment[i] / bc1;
            let v_hat = self.second_moment[i] / bc2;
            params.0[i] -= self.step_size * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

/// JSON checkpoint of one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub spec: ApproximatorSpec,
    pub params: Vec<f64>,
}

pub fn save_checkpoint(spec: &ApproximatorSpec, params: &ParamVector, path: &Path) -> Result<()> {
    check_params(spec, params)?;
    if !params.is_finite() {
        return Err(Error::NonFinite("checkpoint parameters".into()));
    }
    let ck = ModelCheckpoint {
        spec: spec.clone(),
        params: params.0.clone(),
    };
    let body = serde_json::to_string_pretty(&ck)
        .map_err(|e| Error::Validation(format!("serialize checkpoint: {e}")))?;
    std::fs::write(path, body).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ApproximatorSpec, ParamVector)> {
    let body =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let ck: ModelCheckpoint = serde_json::from_str(&body).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        record: 0,
        msg: e.to_string(),
    })?;
    let params = ParamVector(ck.params);
    check_params(&ck.spec, &params)?;
    Ok((ck.spec, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;
    use rand::Rng as _;

    /// Independent forward implementation: explicit matrices, no shared code
    /// with the flat-buffer path above.
    fn oracle_forward(spec: &ApproximatorSpec, params: &[f64], input: &[f64]) -> Vec<f64> {
        let dims = spec.layer_dims();
        let mut off = 0;
        let mut h: Vec<f64> = input.to_vec();
        for (l, &(fan_in, out)) in dims.iter().enumerate() {
            let mut w = vec![vec![0.0; fan_in]; out];
            for (o, row) in w.iter_mut().enumerate() {
                for (i, v) in row.iter_mut().enumerate() {
                    *v = params[off + o * fan_in + i];
                }
            }
            let b = &params[off + fan_in * out..off + (fan_in + 1) * out];
            off += (fan_in + 1) * out;
            let mut z = vec![0.0; out];
            for o in 0..out {
                z[o] = b[o] + w[o].iter().zip(&h).map(|(a, x)| a * x).sum::<f64>();
            }
            if l + 1 < dims.len() {
                h = z.iter().map(|v| v.tanh()).collect();
            } else {
                h = z;
            }
        }
        h
    }

    fn random_spec(rng: &mut seed::Rng) -> ApproximatorSpec {
        ApproximatorSpec::new(
            rng.gen_range(1..5),
            rng.gen_range(1..4),
            rng.gen_range(0..6),
            rng.gen_range(1..9),
        )
    }

    fn random_input(rng: &mut seed::Rng, dim: usize) -> Vec<f64> {
        (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect()
    }

    #[test]
    fn zero_params_give_zero_output() {
        let spec = ApproximatorSpec::new(3, 2, 2, 4);
        let params = ParamVector::zeros(spec.param_count());
        let out = forward(&spec, &params, &[0.7, -1.3, 2.2]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn affine_map_with_identity_weights_projects_input() {
        // L=0, square, weights = identity, bias = 0.
        let spec = ApproximatorSpec::new(3, 3, 0, 0);
        let mut params = ParamVector::zeros(spec.param_count());
        for i in 0..3 {
            params.0[i * 3 + i] = 1.0;
        }
        let input = [0.5, -1.0, 2.0];
        let out = forward(&spec, &params, &input).unwrap();
        assert_eq!(out, input.to_vec());
    }

    #[test]
    fn forward_matches_independent_oracle() {
        for case in 0..50 {
            let mut rng = seed::stream(100, "fwd-oracle", case);
            let spec = random_spec(&mut rng);
            let params = init_params(&spec, &mut rng);
            let input = random_input(&mut rng, spec.input_dim);
            let ours = forward(&spec, &params, &input).unwrap();
            let oracle = oracle_forward(&spec, &params.0, &input);
            for (a, b) in ours.iter().zip(&oracle) {
                assert!((a - b).abs() <= 1e-12, "case {case}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let mut rng = seed::stream(101, "zero-up", 0);
        let spec = ApproximatorSpec::new(2, 3, 1, 4);
        let params = init_params(&spec, &mut rng);
        let g = gradient(&spec, &params, &[0.3, -0.4], &[0.0, 0.0, 0.0]).unwrap();
        assert!(g.0.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn gradient_is_linear_in_upstream() {
        let mut rng = seed::stream(102, "lin-up", 0);
        let spec = ApproximatorSpec::new(2, 2, 2, 3);
        let params = init_params(&spec, &mut rng);
        let input = [0.2, 0.9];
        let u1 = [0.7, -0.2];
        let u2 = [-1.1, 0.4];
        let sum: Vec<f64> = u1.iter().zip(&u2).map(|(a, b)| a + b).collect();
        let g1 = gradient(&spec, &params, &input, &u1).unwrap();
        let g2 = gradient(&spec, &params, &input, &u2).unwrap();
        let gs = gradient(&spec, &params, &input, &sum).unwrap();
        for i in 0..gs.len() {
            assert!((gs.0[i] - (g1.0[i] + g2.0[i])).abs() < 1e-12);
        }
    }

    /// Central finite differences of `<upstream, forward>`.
    pub(crate) fn fd_gradient(
        spec: &ApproximatorSpec,
        params: &ParamVector,
        input: &[f64],
        upstream: &[f64],
        h: f64,
    ) -> Vec<f64> {
        let mut out = vec![0.0; params.len()];
        let inner = |p: &ParamVector| -> f64 {
            forward(spec, p, input)
                .unwrap()
                .iter()
                .zip(upstream)
                .map(|(a, b)| a * b)
                .sum()
        };
        for i in 0..params.len() {
            let mut plus = params.clone();
            plus.0[i] += h;
            let mut minus = params.clone();
            minus.0[i] -= h;
            out[i] = (inner(&plus) - inner(&minus)) / (2.0 * h);
        }
        out
    }

    pub(crate) fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
        analytic
            .iter()
            .zip(numeric)
            .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
            .fold(0.0, f64::max)
    }

    #[test]
    fn gradient_matches_finite_differences_across_random_specs() {
        for case in 0..100 {
            let mut rng = seed::stream(103, "fd", case);
            let spec = random_spec(&mut rng);
            let params = init_params(&spec, &mut rng);
            let input = random_input(&mut rng, spec.input_dim);
            let upstream: Vec<f64> = (0..spec.output_dim)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let analytic = gradient(&spec, &params, &input, &upstream).unwrap();
            let numeric = fd_gradient(&spec, &params, &input, &upstream, 1e-5);
            let err = max_rel_err(&analytic.0, &numeric);
            assert!(err <= 1e-4, "case {case}: max rel err {err}");
        }
    }

    #[test]
    fn l1_of_zero_vector_is_zero() {
        let (v, g) = l1_penalty(&ParamVector::zeros(4));
        assert_eq!(v, 0.0);
        assert!(g.0.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn l1_direct_case() {
        let (v, g) = l1_penalty(&ParamVector(vec![1.0, -2.0, 3.0]));
        assert_eq!(v, 6.0);
        assert_eq!(g.0, vec![1.0, -1.0, 1.0]);
    }

    #[test]
    fn l1_matches_independent_sum() {
        let mut rng = seed::stream(104, "l1", 0);
        let params = ParamVector((0..40).map(|_| rng.gen_range(-3.0..3.0)).collect());
        let (v, _) = l1_penalty(&params);
        let oracle: f64 = params.0.iter().map(|x| if *x < 0.0 { -x } else { *x }).sum();
        assert!((v - oracle).abs() < 1e-12);
    }

    #[test]
    fn optimizer_fixed_point_at_zero_gradient() {
        let mut params = ParamVector(vec![1.0, -2.0]);
        let mut opt = OptimizerState::new(0.1, 2);
        opt.step(&mut params, &ParamVector::zeros(2)).unwrap();
        assert_eq!(params.0, vec![1.0, -2.0]);
    }

    #[test]
    fn optimizer_converges_on_quadratic_bowl() {
        // f(p) = ||p||^2, gradient 2p; convexity guarantees convergence.
        let mut params = ParamVector(vec![1.0, 1.0]);
        let mut opt = OptimizerState::new(0.01, 2);
        for _ in 0..500 {
            let grad = ParamVector(params.0.iter().map(|x| 2.0 * x).collect());
            opt.step(&mut params, &grad).unwrap();
        }
        let norm = params.0.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm < 1e-3, "norm {norm}");
    }

    #[test]
    fn optimizer_runs_are_deterministic() {
        let run = || {
            let mut rng = seed::stream(105, "det", 0);
            let spec = ApproximatorSpec::new(2, 1, 1, 3);
            let mut params = init_params(&spec, &mut rng);
            let mut opt = OptimizerState::new(1e-2, params.len());
            for i in 0..50 {
                let input = [0.1 * i as f64, -0.05 * i as f64];
                let g = gradient(&spec, &params, &input, &[1.0]).unwrap();
                opt.step(&mut params, &g).unwrap();
            }
            params
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn optimizer_rejects_non_finite_gradient() {
        let mut params = ParamVector(vec![1.0]);
        let mut opt = OptimizerState::new(0.1, 1);
        let err = opt
            .step(&mut params, &ParamVector(vec![f64::NAN]))
            .unwrap_err();
        assert!(err.to_string().contains("step rejected"), "{err}");
        assert_eq!(params.0, vec![1.0]);
    }

    #[test]
    fn param_count_formula_matches_construction() {
        for layers in 0..6 {
            for width in 1..9 {
                for input in 1..4 {
                    for output in 1..4 {
                        let spec = ApproximatorSpec::new(input, output, layers, width);
                        let by_formula: usize =
                            spec.layer_dims().iter().map(|(i, o)| (i + 1) * o).sum();
                        let mut rng = seed::stream(106, "count", (layers * 1000 + width) as u64);
                        let params = init_params(&spec, &mut rng);
                        assert_eq!(params.len(), by_formula);
                        assert_eq!(spec.param_count(), by_formula);
                    }
                }
            }
        }
    }

    #[test]
    fn checkpoint_round_trips() {
        let mut rng = seed::stream(107, "ckpt", 0);
        let spec = ApproximatorSpec::new(3, 2, 2, 4);
        let params = init_params(&spec, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_checkpoint(&spec, &params, &path).unwrap();
        let (spec2, params2) = load_checkpoint(&path).unwrap();
        assert_eq!(spec, spec2);
        assert_eq!(params, params2);
    }

    proptest! {
        #[test]
        fn l1_is_positively_homogeneous(
            values in proptest::collection::vec(-10.0f64..10.0, 1..20),
            alpha in 0.0f64..5.0,
        ) {
            let p = ParamVector(values.clone());
            let scaled = ParamVector(values.iter().map(|v| alpha * v).collect());
            let (v, _) = l1_penalty(&p);
            let (vs, _) = l1_penalty(&scaled);
            prop_assert!((vs - alpha * v).abs() <= 1e-9 * (1.0 + vs.abs()));
        }
    }
}
