//! Stochastic learner policies and the on-policy update that consumes the
//! imitation reward.
//!
//! Two heads share one MLP trunk layout:
//! - categorical: the network outputs one logit per action;
//! - gaussian: the network outputs the mean, and a state-independent log-std
//!   vector is stored after the network weights in the same parameter vector.

mod gae;
mod reward_norm;
mod update;

pub use gae::{gae_advantages, gae_with_values, normalize_advantages, BatchStep, RolloutBatch, Segment};
pub use reward_norm::RewardStdNormalizer;
pub use update::{
    policy_update, value_update, PolicyOptimizer, PolicyUpdateConfig, UpdateDiagnostics, ValueOptimizer,
    ValueUpdateConfig,
};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::env::{one_hot, one_hot_index, ActionChoice, Actor, EnvKind, EnvSpec, RunningNormalizer};
use crate::nn::{mlp_backward_into, mlp_forward, mlp_init, mlp_output, Activation, MlpSpec, ParameterVector, Tape};
use crate::rng::SeededRng;
use crate::{Error, Result};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum PolicyHead {
    Categorical,
    Gaussian { action_bound: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub spec: MlpSpec,
    /// Network weights, followed by the log-std vector for the gaussian head.
    pub params: ParameterVector,
    pub head: PolicyHead,
}

/// Distribution over actions in one state.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionDist {
    Categorical { log_probs: Vec<f64> },
    Gaussian { mean: Vec<f64>, log_std: Vec<f64> },
}

/// Gradient of a scalar with respect to the distribution parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DistGrad {
    /// Logits or mean.
    pub output: Vec<f64>,
    /// Effective (clamped) log-std; empty for categorical.
    pub log_std: Vec<f64>,
}

impl DistGrad {
    fn zeros_like(dist: &ActionDist) -> Self {
        match dist {
            ActionDist::Categorical { log_probs } => Self {
                output: vec![0.0; log_probs.len()],
                log_std: Vec::new(),
            },
            ActionDist::Gaussian { mean, .. } => Self {
                output: vec![0.0; mean.len()],
                log_std: vec![0.0; mean.len()],
            },
        }
    }

    fn add_scaled(&mut self, other: &DistGrad, scale: f64) {
        for (a, b) in self.output.iter_mut().zip(&other.output) {
            *a += scale * b;
        }
        for (a, b) in self.log_std.iter_mut().zip(&other.log_std) {
            *a += scale * b;
        }
    }
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

impl ActionDist {
    pub fn action_dim(&self) -> usize {
        match self {
            ActionDist::Categorical { log_probs } => log_probs.len(),
            ActionDist::Gaussian { mean, .. } => mean.len(),
        }
    }

    pub fn probs(&self) -> Option<Vec<f64>> {
        match self {
            ActionDist::Categorical { log_probs } => Some(log_probs.iter().map(|l| l.exp()).collect()),
            ActionDist::Gaussian { .. } => None,
        }
    }

    fn check_action(&self, action: &[f64]) -> Result<()> {
        if action.len() != self.action_dim() {
            return Err(Error::DimensionMismatch {
                context: "policy action",
                expected: self.action_dim(),
                actual: action.len(),
            });
        }
        Ok(())
    }

    pub fn log_prob(&self, action: &[f64]) -> Result<f64> {
        self.check_action(action)?;
        match self {
            ActionDist::Categorical { log_probs } => Ok(log_probs[one_hot_index(action, log_probs.len())?]),
            ActionDist::Gaussian { mean, log_std } => Ok(mean
                .iter()
                .zip(log_std)
                .zip(action)
                .map(|((m, ls), a)| {
                    let z = (a - m) / ls.exp();
                    -0.5 * z * z - ls - HALF_LOG_2PI
                })
                .sum()),
        }
    }

    pub fn entropy(&self) -> f64 {
        match self {
            ActionDist::Categorical { log_probs } => -log_probs.iter().map(|l| l.exp() * l).sum::<f64>(),
            ActionDist::Gaussian { log_std, .. } => log_std.iter().map(|ls| ls + 0.5 + HALF_LOG_2PI).sum(),
        }
    }

    /// `KL(self || other)`.
    pub fn kl(&self, other: &ActionDist) -> f64 {
        match (self, other) {
            (ActionDist::Categorical { log_probs: p }, ActionDist::Categorical { log_probs: q }) => {
                p.iter().zip(q).map(|(lp, lq)| lp.exp() * (lp - lq)).sum()
            }
            (
                ActionDist::Gaussian { mean: m0, log_std: s0 },
                ActionDist::Gaussian { mean: m1, log_std: s1 },
            ) => (0..m0.len())
                .map(|d| {
                    let var0 = (2.0 * s0[d]).exp();
                    let var1 = (2.0 * s1[d]).exp();
                    s1[d] - s0[d] + (var0 + (m0[d] - m1[d]).powi(2)) / (2.0 * var1) - 0.5
                })
                .sum(),
            _ => f64::NAN,
        }
    }

    pub fn mode(&self) -> Vec<f64> {
        match self {
            ActionDist::Categorical { log_probs } => {
                let best = log_probs
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (k, &l)| if l > acc.1 { (k, l) } else { acc });
                one_hot(best.0, log_probs.len())
            }
            ActionDist::Gaussian { mean, .. } => mean.clone(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            ActionDist::Categorical { log_probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (k, l) in log_probs.iter().enumerate() {
                    acc += l.exp();
                    if u < acc {
                        return one_hot(k, log_probs.len());
                    }
                }
                one_hot(log_probs.len() - 1, log_probs.len())
            }
            ActionDist::Gaussian { mean, log_std } => mean
                .iter()
                .zip(log_std)
                .map(|(m, ls)| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + ls.exp() * z
                })
                .collect(),
        }
    }

    pub fn grad_log_prob(&self, action: &[f64]) -> Result<DistGrad> {
        self.check_action(action)?;
        Ok(match self {
            ActionDist::Categorical { log_probs } => {
                let k = one_hot_index(action, log_probs.len())?;
                DistGrad {
                    output: log_probs
                        .iter()
                        .enumerate()
                        .map(|(j, l)| if j == k { 1.0 } else { 0.0 } - l.exp())
                        .collect(),
                    log_std: Vec::new(),
                }
            }
            ActionDist::Gaussian { mean, log_std } => {
                let mut g = DistGrad::zeros_like(self);
                for d in 0..mean.len() {
                    let var = (2.0 * log_std[d]).exp();
                    let diff = action[d] - mean[d];
                    g.output[d] = diff / var;
                    g.log_std[d] = diff * diff / var - 1.0;
                }
                g
            }
        })
    }

    pub fn grad_entropy(&self) -> DistGrad {
        match self {
            ActionDist::Categorical { log_probs } => {
                let h = self.entropy();
                DistGrad {
                    output: log_probs.iter().map(|l| -l.exp() * (l + h)).collect(),
                    log_std: Vec::new(),
                }
            }
            ActionDist::Gaussian { mean, .. } => DistGrad {
                output: vec![0.0; mean.len()],
                log_std: vec![1.0; mean.len()],
            },
        }
    }

    /// Gradient of `KL(old || self)` with respect to this distribution's parameters.
    pub fn grad_kl_from(&self, old: &ActionDist) -> DistGrad {
        match (self, old) {
            (ActionDist::Categorical { log_probs: q }, ActionDist::Categorical { log_probs: p }) => DistGrad {
                output: q.iter().zip(p).map(|(lq, lp)| lq.exp() - lp.exp()).collect(),
                log_std: Vec::new(),
            },
            (
                ActionDist::Gaussian { mean: m1, log_std: s1 },
                ActionDist::Gaussian { mean: m0, log_std: s0 },
            ) => {
                let mut g = DistGrad::zeros_like(self);
                for d in 0..m1.len() {
                    let var1 = (2.0 * s1[d]).exp();
                    let var0 = (2.0 * s0[d]).exp();
                    g.output[d] = (m1[d] - m0[d]) / var1;
                    g.log_std[d] = 1.0 - (var0 + (m0[d] - m1[d]).powi(2)) / var1;
                }
                g
            }
            _ => DistGrad::zeros_like(self),
        }
    }
}

impl PolicyParams {
    /// Fresh policy; the output layer is scaled down so initial actions are
    /// close to uniform (categorical) or zero-mean (gaussian).
    pub fn new<R: Rng + ?Sized>(spec: MlpSpec, head: PolicyHead, init_log_std: f64, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut params = mlp_init(&spec, rng).into_inner();
        let (w_off, b_off) = spec.layer_offsets(spec.num_layers() - 1);
        params[w_off..b_off].iter_mut().for_each(|w| *w *= 0.01);
        if let PolicyHead::Gaussian { .. } = head {
            params.extend(std::iter::repeat_n(init_log_std, spec.output_width()));
        }
        Ok(Self {
            spec,
            params: ParameterVector(params),
            head,
        })
    }

    /// Policy matching an environment's observation and action widths.
    pub fn for_env<R: Rng + ?Sized>(
        env: &EnvSpec,
        hidden: &[usize],
        activation: Activation,
        init_log_std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let spec = MlpSpec::with_hidden(env.state_dim(), hidden, env.action_dim(), activation)?;
        let head = match &env.kind {
            EnvKind::Gridworld(_) => PolicyHead::Categorical,
            EnvKind::Pointmass(p) => PolicyHead::Gaussian {
                action_bound: p.action_bound,
            },
        };
        Self::new(spec, head, init_log_std, rng)
    }

    pub fn net_len(&self) -> usize {
        self.spec.param_count()
    }

    pub fn net_params(&self) -> &[f64] {
        &self.params[..self.net_len()]
    }

    /// Clamped log-std (empty for categorical).
    pub fn log_std(&self) -> Vec<f64> {
        self.params[self.net_len()..]
            .iter()
            .map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX))
            .collect()
    }

    fn dist_from_output(&self, out: Vec<f64>) -> Result<ActionDist> {
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("policy network output"));
        }
        Ok(match self.head {
            PolicyHead::Categorical => ActionDist::Categorical {
                log_probs: log_softmax(&out),
            },
            PolicyHead::Gaussian { .. } => ActionDist::Gaussian {
                mean: out,
                log_std: self.log_std(),
            },
        })
    }

    pub fn distribution(&self, input: &[f64]) -> Result<ActionDist> {
        let out = mlp_output(&self.spec, self.net_params(), input)?;
        self.dist_from_output(out)
    }

    pub fn distribution_with_tape(&self, input: &[f64]) -> Result<(ActionDist, Tape)> {
        let (out, tape) = mlp_forward(&self.spec, self.net_params(), input)?;
        Ok((self.dist_from_output(out)?, tape))
    }

    /// Adds the parameter gradient of a scalar whose distribution-level
    /// gradient is `grad` into `out` (full parameter layout).
    pub fn backward_into(&self, tape: &Tape, grad: &DistGrad, out: &mut [f64]) -> Result<()> {
        let n = self.net_len();
        mlp_backward_into(&self.spec, self.net_params(), tape, &grad.output, &mut out[..n])?;
        for (k, g) in grad.log_std.iter().enumerate() {
            let raw = self.params[n + k];
            if (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw) {
                out[n + k] += g;
            }
        }
        Ok(())
    }

    /// Environment action for a distribution sample (clamped for gaussian).
    pub fn env_action(&self, sampled: &[f64]) -> Vec<f64> {
        match self.head {
            PolicyHead::Categorical => sampled.to_vec(),
            PolicyHead::Gaussian { action_bound } => {
                sampled.iter().map(|a| a.clamp(-action_bound, action_bound)).collect()
            }
        }
    }
}

/// A sampled action: `action` is the pre-clamp draw whose log-density is `log_prob`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySample {
    pub action: Vec<f64>,
    pub env_action: Vec<f64>,
    pub log_prob: f64,
}

pub fn policy_sample<R: Rng + ?Sized>(policy: &PolicyParams, state: &[f64], rng: &mut R) -> Result<PolicySample> {
    let dist = policy.distribution(state)?;
    let action = dist.sample(rng);
    let log_prob = dist.log_prob(&action)?;
    Ok(PolicySample {
        env_action: policy.env_action(&action),
        action,
        log_prob,
    })
}

pub fn policy_log_prob(policy: &PolicyParams, state: &[f64], action: &[f64]) -> Result<f64> {
    policy.distribution(state)?.log_prob(action)
}

/// Log-probability and its gradient with respect to all policy parameters.
pub fn log_prob_gradient(policy: &PolicyParams, state: &[f64], action: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (dist, tape) = policy.distribution_with_tape(state)?;
    let lp = dist.log_prob(action)?;
    let mut grad = vec![0.0; policy.params.len()];
    policy.backward_into(&tape, &dist.grad_log_prob(action)?, &mut grad)?;
    Ok((lp, grad))
}

/// A policy together with its observation normalizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub policy: PolicyParams,
    pub normalizer: RunningNormalizer,
    /// Update normalizer statistics while acting (training rollouts only).
    #[serde(skip)]
    pub learning: bool,
}

impl Agent {
    pub fn new(policy: PolicyParams, normalizer: RunningNormalizer) -> Self {
        Self {
            policy,
            normalizer,
            learning: false,
        }
    }

    pub fn frozen(&self) -> Self {
        Self {
            learning: false,
            ..self.clone()
        }
    }
}

impl Actor for Agent {
    fn act(&mut self, state: &[f64], rng: &mut SeededRng, stochastic: bool) -> Result<ActionChoice> {
        let input = if self.learning {
            self.normalizer.observe(state)
        } else {
            self.normalizer.apply(state)
        };
        let dist = self.policy.distribution(&input)?;
        let sampled = if stochastic { dist.sample(rng) } else { dist.mode() };
        let log_prob = dist.log_prob(&sampled)?;
        Ok(ActionChoice {
            env_action: self.policy.env_action(&sampled),
            sampled_action: sampled,
            log_prob,
            policy_input: input,
        })
    }
}

/// State-value baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueParams {
    pub spec: MlpSpec,
    pub params: ParameterVector,
}

impl ValueParams {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        let spec = MlpSpec::with_hidden(input, hidden, 1, activation)?;
        let params = mlp_init(&spec, rng);
        Ok(Self { spec, params })
    }

    pub fn value(&self, input: &[f64]) -> Result<f64> {
        let v = mlp_output(&self.spec, &self.params, input)?[0];
        if !v.is_finite() {
            return Err(Error::NonFinite("value output"));
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn categorical_with_logits(logits: &[f64]) -> PolicyParams {
        // [1, k] identity-output net: logits are the biases
        let spec = MlpSpec::new(vec![1, logits.len()], Activation::Tanh).unwrap();
        let mut params = vec![0.0; logits.len()];
        params.extend_from_slice(logits);
        PolicyParams {
            spec,
            params: ParameterVector(params),
            head: PolicyHead::Categorical,
        }
    }

    fn gaussian_with(mean: &[f64], log_std: f64) -> PolicyParams {
        let d = mean.len();
        let spec = MlpSpec::new(vec![1, d], Activation::Tanh).unwrap();
        let mut params = vec![0.0; d];
        params.extend_from_slice(mean);
        params.extend(std::iter::repeat_n(log_std, d));
        PolicyParams {
            spec,
            params: ParameterVector(params),
            head: PolicyHead::Gaussian { action_bound: 100.0 },
        }
    }

    #[test]
    fn saturated_softmax_picks_first_action() {
        let policy = categorical_with_logits(&[10.0, -10.0, -10.0, -10.0]);
        let mut rng = seeded(1);
        let hits = (0..10_000)
            .filter(|_| policy_sample(&policy, &[0.0], &mut rng).unwrap().action[0] == 1.0)
            .count();
        assert!(hits >= 9990, "{hits}");
        let probs = policy.distribution(&[0.0]).unwrap().probs().unwrap();
        assert!(probs[0] >= 0.999);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn narrow_gaussian_stays_near_mean() {
        let policy = gaussian_with(&[0.3, -0.2], -5.0);
        let mut rng = seeded(2);
        for _ in 0..2000 {
            let s = policy_sample(&policy, &[0.0], &mut rng).unwrap();
            assert!((s.action[0] - 0.3).abs() < 0.1 && (s.action[1] + 0.2).abs() < 0.1);
        }
    }

    #[test]
    fn sampled_log_prob_is_self_consistent() {
        let mut rng = seeded(3);
        let env = EnvSpec::pointmass();
        let policy = PolicyParams::for_env(&env, &[8], Activation::Tanh, -0.5, &mut rng).unwrap();
        for _ in 0..20 {
            let s = policy_sample(&policy, &[0.1, 0.2, 0.0, -0.1], &mut rng).unwrap();
            let lp = policy_log_prob(&policy, &[0.1, 0.2, 0.0, -0.1], &s.action).unwrap();
            assert!((lp - s.log_prob).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_log_densities() {
        let uniform = categorical_with_logits(&[0.0; 4]);
        let lp = policy_log_prob(&uniform, &[0.0], &one_hot(2, 4)).unwrap();
        assert!((lp - 0.25f64.ln()).abs() < 1e-12);
        assert!(policy_log_prob(&uniform, &[0.0], &[0.5, 0.5, 0.0, 0.0]).is_err());

        let g = gaussian_with(&[0.5, -1.0, 2.0], 0.0);
        let lp = policy_log_prob(&g, &[0.0], &[0.5, -1.0, 2.0]).unwrap();
        assert!((lp + 1.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
    }

    #[test]
    fn entropy_bounds_and_closed_form() {
        let mut rng = seeded(4);
        for _ in 0..50 {
            let logits: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
            let h = categorical_with_logits(&logits).distribution(&[0.0]).unwrap().entropy();
            assert!((-1e-12..=4f64.ln() + 1e-12).contains(&h));
        }
        let g = gaussian_with(&[0.0, 0.0], -0.7);
        let h = g.distribution(&[0.0]).unwrap().entropy();
        let expected = 2.0 * (-0.7 + 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln());
        assert!((h - expected).abs() < 1e-12);
    }

    #[test]
    fn log_std_is_clamped() {
        let g = gaussian_with(&[0.0], 7.0);
        assert_eq!(g.log_std(), vec![LOG_STD_MAX]);
        let g = gaussian_with(&[0.0], -9.0);
        assert_eq!(g.log_std(), vec![LOG_STD_MIN]);
    }

    #[test]
    fn kl_of_identical_distributions_is_zero() {
        let mut rng = seeded(6);
        let env = EnvSpec::gridworld(4);
        let p = PolicyParams::for_env(&env, &[8], Activation::Tanh, 0.0, &mut rng).unwrap();
        let d = p.distribution(&[0.3, 0.6]).unwrap();
        assert_eq!(d.kl(&d), 0.0);
        assert!(d.grad_kl_from(&d).output.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn non_finite_output_is_an_error() {
        let policy = categorical_with_logits(&[f64::NAN, 0.0]);
        assert!(policy_sample(&policy, &[0.0], &mut seeded(0)).is_err());
    }
}
