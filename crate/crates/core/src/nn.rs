//! Dense feed-forward networks with exact reverse-mode gradients.
//!
//! Parameters live in one flat vector, layer-major: for each layer the weight
//! matrix (row-major, `out x in`) followed by its bias vector. Hidden layers
//! share one activation; the output layer is the identity.

use std::io::{Read, Write};
use std::ops::{Deref, DerefMut};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation and the activation value.
    #[inline]
    fn derivative(self, pre: f64, post: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - post * post,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    #[default]
    Identity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
    #[serde(default)]
    pub output_activation: OutputActivation,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>, activation: Activation) -> Result<Self> {
        let spec = Self {
            layer_widths,
            activation,
            output_activation: OutputActivation::Identity,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `input -> hidden... -> output` with every hidden layer of width `hidden`.
    pub fn with_hidden(
        input: usize,
        hidden: &[usize],
        output: usize,
        activation: Activation,
    ) -> Result<Self> {
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(input);
        widths.extend_from_slice(hidden);
        widths.push(output);
        Self::new(widths, activation)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least 2 layer widths, got {}",
                self.layer_widths.len()
            )));
        }
        if self.layer_widths.iter().any(|&w| w == 0) {
            return Err(Error::InvalidSpec("layer widths must be >= 1".into()));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_widths.last().expect("validated spec")
    }

    pub fn num_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_widths
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// Offsets `(weights, biases)` of layer `l` inside the flat vector.
    pub fn layer_offsets(&self, layer: usize) -> (usize, usize) {
        let mut offset = 0;
        for w in self.layer_widths.windows(2).take(layer) {
            offset += w[0] * w[1] + w[1];
        }
        let (fan_in, fan_out) = (self.layer_widths[layer], self.layer_widths[layer + 1]);
        (offset, offset + fan_in * fan_out)
    }
}

macro_rules! flat_vector {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub Vec<f64>);

        impl $name {
            pub fn zeros(len: usize) -> Self {
                Self(vec![0.0; len])
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|v| v.is_finite())
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }
        }

        impl Deref for $name {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl DerefMut for $name {
            fn deref_mut(&mut self) -> &mut [f64] {
                &mut self.0
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(v: Vec<f64>) -> Self {
                Self(v)
            }
        }
    };
}

flat_vector!(ParameterVector);
flat_vector!(GradientVector);

/// Fan-in scaled uniform weights, zero biases.
pub fn mlp_init<R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> ParameterVector {
    let mut params = vec![0.0; spec.param_count()];
    for layer in 0..spec.num_layers() {
        let fan_in = spec.layer_widths[layer];
        let fan_out = spec.layer_widths[layer + 1];
        let (w_off, _) = spec.layer_offsets(layer);
        let bound = 1.0 / (fan_in as f64).sqrt();
        for w in &mut params[w_off..w_off + fan_in * fan_out] {
            *w = rng.random_range(-bound..bound);
        }
    }
    ParameterVector(params)
}

/// Activation record of one forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    param_len: usize,
    /// `layers[0]` is the input, `layers[l + 1]` the output of layer `l`.
    layers: Vec<Vec<f64>>,
    /// Pre-activations of every layer.
    pre: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.layers.last().expect("tape has an output")
    }

    pub fn input(&self) -> &[f64] {
        &self.layers[0]
    }
}

fn check_params(spec: &MlpSpec, params: &[f64]) -> Result<()> {
    if params.len() != spec.param_count() {
        return Err(Error::DimensionMismatch {
            context: "parameter vector",
            expected: spec.param_count(),
            actual: params.len(),
        });
    }
    Ok(())
}

fn check_input(spec: &MlpSpec, input: &[f64]) -> Result<()> {
    if input.len() != spec.input_width() {
        return Err(Error::DimensionMismatch {
            context: "network input",
            expected: spec.input_width(),
            actual: input.len(),
        });
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four partial sums let the compiler vectorize
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn dense(params: &[f64], w_off: usize, b_off: usize, x: &[f64], out: &mut [f64]) {
    let fan_in = x.len();
    let weights = &params[w_off..w_off + out.len() * fan_in];
    for ((z, row), b) in out.iter_mut().zip(weights.chunks_exact(fan_in)).zip(&params[b_off..]) {
        *z = b + dot(row, x);
    }
}

pub fn mlp_forward(spec: &MlpSpec, params: &[f64], input: &[f64]) -> Result<(Vec<f64>, Tape)> {
    check_params(spec, params)?;
    check_input(spec, input)?;
    let n = spec.num_layers();
    let mut layers = Vec::with_capacity(n + 1);
    let mut pre = Vec::with_capacity(n);
    layers.push(input.to_vec());
    for l in 0..n {
        let (w_off, b_off) = spec.layer_offsets(l);
        let mut z = vec![0.0; spec.layer_widths[l + 1]];
        dense(params, w_off, b_off, &layers[l], &mut z);
        let a = if l + 1 < n {
            z.iter().map(|&v| spec.activation.apply(v)).collect()
        } else {
            z.clone()
        };
        pre.push(z);
        layers.push(a);
    }
    let tape = Tape {
        param_len: params.len(),
        layers,
        pre,
    };
    Ok((tape.output().to_vec(), tape))
}

/// Forward pass without recording a tape.
pub fn mlp_output(spec: &MlpSpec, params: &[f64], input: &[f64]) -> Result<Vec<f64>> {
    check_params(spec, params)?;
    check_input(spec, input)?;
    let n = spec.num_layers();
    let mut x = input.to_vec();
    for l in 0..n {
        let (w_off, b_off) = spec.layer_offsets(l);
        let mut z = vec![0.0; spec.layer_widths[l + 1]];
        dense(params, w_off, b_off, &x, &mut z);
        if l + 1 < n {
            z.iter_mut().for_each(|v| *v = spec.activation.apply(*v));
        }
        x = z;
    }
    Ok(x)
}

pub fn mlp_backward(
    spec: &MlpSpec,
    params: &[f64],
    tape: &Tape,
    output_grad: &[f64],
) -> Result<(Vec<f64>, GradientVector)> {
    let mut grad = GradientVector::zeros(params.len());
    let input_grad = mlp_backward_into(spec, params, tape, output_grad, &mut grad)?;
    Ok((input_grad, grad))
}

/// Like [`mlp_backward`] but adds the parameter gradient into `grad`.
pub fn mlp_backward_into(
    spec: &MlpSpec,
    params: &[f64],
    tape: &Tape,
    output_grad: &[f64],
    grad: &mut [f64],
) -> Result<Vec<f64>> {
    check_params(spec, params)?;
    let n = spec.num_layers();
    if tape.param_len != params.len() || tape.layers.len() != n + 1 {
        return Err(Error::InvalidArgument("tape does not match network".into()));
    }
    if output_grad.len() != spec.output_width() {
        return Err(Error::DimensionMismatch {
            context: "output gradient",
            expected: spec.output_width(),
            actual: output_grad.len(),
        });
    }
    if grad.len() != params.len() {
        return Err(Error::DimensionMismatch {
            context: "gradient accumulator",
            expected: params.len(),
            actual: grad.len(),
        });
    }

    // delta holds dL/dz for the current layer's pre-activation.
    let mut delta = output_grad.to_vec();
    for l in (0..n).rev() {
        if l + 1 < n {
            for ((d, &z), &a) in delta.iter_mut().zip(&tape.pre[l]).zip(&tape.layers[l + 1]) {
                *d *= spec.activation.derivative(z, a);
            }
        }
        let x = &tape.layers[l];
        let fan_in = x.len();
        let (w_off, b_off) = spec.layer_offsets(l);
        let mut prev = vec![0.0; fan_in];
        for (o, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            grad[b_off + o] += d;
            let row = w_off + o * fan_in..w_off + (o + 1) * fan_in;
            for (g, &xi) in grad[row.clone()].iter_mut().zip(x) {
                *g += d * xi;
            }
            for (p, &w) in prev.iter_mut().zip(&params[row]) {
                *p += d * w;
            }
        }
        delta = prev;
    }
    Ok(delta)
}

/// Bias-corrected Adam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_stability: f64,
}

impl AdamState {
    pub fn new(len: usize, learning_rate: f64) -> Self {
        Self {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps_stability: 1e-8,
        }
    }

    /// In-place descent step on `params` along `grad`.
    pub fn apply(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.first_moment.len() || grad.len() != params.len() {
            return Err(Error::DimensionMismatch {
                context: "adam step",
                expected: self.first_moment.len(),
                actual: grad.len().min(params.len()),
            });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("adam gradient"));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grad[i];
            let m = self.beta1 * self.first_moment[i] + (1.0 - self.beta1) * g;
            let v = self.beta2 * self.second_moment[i] + (1.0 - self.beta2) * g * g;
            self.first_moment[i] = m;
            self.second_moment[i] = v;
            params[i] -= self.learning_rate * (m / c1) / ((v / c2).sqrt() + self.eps_stability);
        }
        Ok(())
    }
}

/// Pure form of [`AdamState::apply`].
pub fn adam_step(
    params: &ParameterVector,
    grad: &GradientVector,
    state: &AdamState,
) -> Result<(ParameterVector, AdamState)> {
    let mut next = params.clone();
    let mut state = state.clone();
    state.apply(&mut next, grad)?;
    Ok((next, state))
}

/// Checkpoint blob: u32 layer count, u32 widths, then f64 parameters, all little-endian.
pub fn write_params<W: Write>(mut out: W, spec: &MlpSpec, params: &[f64]) -> Result<()> {
    check_params(spec, params)?;
    out.write_all(&(spec.layer_widths.len() as u32).to_le_bytes())?;
    for &w in &spec.layer_widths {
        out.write_all(&(w as u32).to_le_bytes())?;
    }
    for &p in params {
        out.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a blob written by [`write_params`]; returns the layer widths and parameters.
pub fn read_params<R: Read>(mut input: R) -> Result<(Vec<usize>, ParameterVector)> {
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let count = u32::from_le_bytes(word) as usize;
    if count < 2 || count > 1024 {
        return Err(Error::Malformed(format!("implausible layer count {count}")));
    }
    let mut widths = Vec::with_capacity(count);
    for _ in 0..count {
        input.read_exact(&mut word)?;
        widths.push(u32::from_le_bytes(word) as usize);
    }
    let len: usize = widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    let mut params = Vec::with_capacity(len);
    let mut buf = [0u8; 8];
    for _ in 0..len {
        input.read_exact(&mut buf)?;
        params.push(f64::from_le_bytes(buf));
    }
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Malformed(format!("{} trailing bytes", rest.len())));
    }
    Ok((widths, ParameterVector(params)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn init_layout_and_zero_biases() {
        let spec = MlpSpec::new(vec![2, 3, 1], Activation::Relu).unwrap();
        let p = mlp_init(&spec, &mut seeded(7));
        assert_eq!(p.len(), 13);
        let (_, b0) = spec.layer_offsets(0);
        let (_, b1) = spec.layer_offsets(1);
        assert_eq!(b0, 6);
        assert_eq!(b1, 12);
        assert!(p[b0..b0 + 3].iter().all(|&b| b == 0.0));
        assert_eq!(p[b1], 0.0);

        let tiny = MlpSpec::new(vec![1, 1], Activation::Tanh).unwrap();
        let p = mlp_init(&tiny, &mut seeded(99));
        assert_eq!(p.len(), 2);
        assert_eq!(p[1], 0.0);
    }

    #[test]
    fn wide_critic_length() {
        let spec = MlpSpec::new(vec![4, 128, 128, 30], Activation::Relu).unwrap();
        assert_eq!(spec.param_count(), 4 * 128 + 128 + 128 * 128 + 128 + 128 * 30 + 30);
        assert_eq!(mlp_init(&spec, &mut seeded(0)).len(), 21022);
    }

    #[test]
    fn invalid_specs() {
        assert!(MlpSpec::new(vec![3], Activation::Relu).is_err());
        assert!(MlpSpec::new(vec![3, 0, 1], Activation::Relu).is_err());
    }

    #[test]
    fn affine_forward_and_backward() {
        let spec = MlpSpec::new(vec![1, 1], Activation::Relu).unwrap();
        let (out, tape) = mlp_forward(&spec, &[2.0, 3.0], &[5.0]).unwrap();
        assert_eq!(out, vec![13.0]);
        let (gi, gp) = mlp_backward(&spec, &[2.0, 3.0], &tape, &[1.0]).unwrap();
        assert_eq!(gp.0, vec![5.0, 1.0]);
        assert_eq!(gi, vec![2.0]);
    }

    #[test]
    fn zero_params_give_zero_output() {
        let spec = MlpSpec::new(vec![3, 4, 2], Activation::Tanh).unwrap();
        let params = vec![0.0; spec.param_count()];
        let (out, _) = mlp_forward(&spec, &params, &[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_output_grad_gives_zero_gradients() {
        let spec = MlpSpec::new(vec![3, 5, 2], Activation::Relu).unwrap();
        let params = mlp_init(&spec, &mut seeded(3));
        let (_, tape) = mlp_forward(&spec, &params, &[0.3, -0.2, 0.9]).unwrap();
        let (gi, gp) = mlp_backward(&spec, &params, &tape, &[0.0, 0.0]).unwrap();
        assert!(gi.iter().all(|&v| v == 0.0));
        assert!(gp.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_errors() {
        let spec = MlpSpec::new(vec![2, 2], Activation::Relu).unwrap();
        let params = vec![0.0; 6];
        assert!(mlp_forward(&spec, &params, &[1.0]).is_err());
        assert!(mlp_forward(&spec, &params[..5], &[1.0, 2.0]).is_err());
        let other = MlpSpec::new(vec![2, 3], Activation::Relu).unwrap();
        let (_, tape) = mlp_forward(&spec, &params, &[1.0, 2.0]).unwrap();
        assert!(mlp_backward(&other, &[0.0; 9], &tape, &[1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn adam_first_step_and_counter() {
        let state = AdamState::new(1, 0.1);
        let (p1, s1) = adam_step(&vec![1.0].into(), &vec![1.0].into(), &state).unwrap();
        // m_hat = 1, v_hat = 1 -> step = lr / (1 + eps)
        assert!((p1[0] - (1.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-12);
        assert_eq!(s1.step_count, 1);
        let (_, s2) = adam_step(&p1, &vec![1.0].into(), &s1).unwrap();
        assert_eq!(s2.step_count, 2);
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let state = AdamState::new(3, 0.1);
        let p: ParameterVector = vec![0.5, -1.0, 2.0].into();
        let (next, _) = adam_step(&p, &GradientVector::zeros(3), &state).unwrap();
        assert_eq!(next, p);
    }

    #[test]
    fn adam_rejects_nan() {
        let state = AdamState::new(2, 0.1);
        let p: ParameterVector = vec![0.5, -1.0].into();
        assert!(adam_step(&p, &vec![f64::NAN, 0.0].into(), &state).is_err());
    }

    #[test]
    fn checkpoint_blob_round_trip() {
        let spec = MlpSpec::new(vec![3, 4, 2], Activation::Tanh).unwrap();
        let params = mlp_init(&spec, &mut seeded(11));
        let mut buf = Vec::new();
        write_params(&mut buf, &spec, &params).unwrap();
        assert_eq!(buf.len(), 4 + 3 * 4 + params.len() * 8);
        assert_eq!(&buf[..4], &3u32.to_le_bytes());
        let (widths, back) = read_params(buf.as_slice()).unwrap();
        assert_eq!(widths, spec.layer_widths);
        assert_eq!(back, params);
        assert!(read_params(&buf[..buf.len() - 1]).is_err());
    }
}
