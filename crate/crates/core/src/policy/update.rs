use serde::{Deserialize, Serialize};

use super::{ActionDist, DistGrad, PolicyParams, RolloutBatch, ValueParams};
use crate::nn::{mlp_backward_into, mlp_forward, AdamState};
use crate::{Error, Result};

/// KL-penalized surrogate update settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyUpdateConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatches: usize,
    /// Target mean KL between the collection policy and the updated one.
    pub kl_limit: f64,
    pub entropy_coef: f64,
    pub initial_kl_penalty: f64,
}

impl Default for PolicyUpdateConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-3,
            epochs: 10,
            minibatches: 4,
            kl_limit: 0.01,
            entropy_coef: 0.001,
            initial_kl_penalty: 1.0,
        }
    }
}

impl PolicyUpdateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.kl_limit > 0.0 && self.entropy_coef >= 0.0 && self.initial_kl_penalty >= 0.0)
            || self.epochs == 0
            || self.minibatches == 0
        {
            return Err(Error::InvalidSpec(format!("invalid policy update settings: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpdateDiagnostics {
    /// Mean `KL(old || new)` over the batch after the update.
    pub mean_kl: f64,
    /// Mean entropy of the collection policy.
    pub entropy: f64,
    pub surrogate_before: f64,
    pub surrogate_after: f64,
    pub epochs_run: usize,
    pub accepted: bool,
    /// Penalty coefficient to be used by the next update.
    pub kl_penalty: f64,
}

/// Policy optimizer whose Adam moments and KL penalty persist across iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyOptimizer {
    pub config: PolicyUpdateConfig,
    pub adam: AdamState,
    pub kl_penalty: f64,
}

fn mean_kl(old: &[ActionDist], policy: &PolicyParams, batch: &RolloutBatch) -> Result<f64> {
    let mut total = 0.0;
    for (d_old, step) in old.iter().zip(&batch.steps) {
        total += d_old.kl(&policy.distribution(&step.input)?);
    }
    Ok(total / batch.len() as f64)
}

fn surrogate(policy: &PolicyParams, batch: &RolloutBatch) -> Result<f64> {
    let mut total = 0.0;
    for step in &batch.steps {
        let lp = policy.distribution(&step.input)?.log_prob(&step.action)?;
        total += (lp - step.log_prob).exp() * step.advantage;
    }
    Ok(total / batch.len() as f64)
}

impl PolicyOptimizer {
    pub fn new(policy: &PolicyParams, config: PolicyUpdateConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            adam: AdamState::new(policy.params.len(), config.learning_rate),
            kl_penalty: config.initial_kl_penalty,
            config,
        })
    }

    /// Gradient of the penalized loss over the steps `idx`.
    fn loss_gradient(
        &self,
        policy: &PolicyParams,
        old: &[ActionDist],
        batch: &RolloutBatch,
        idx: &[usize],
    ) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; policy.params.len()];
        for &i in idx {
            let step = &batch.steps[i];
            let (dist, tape) = policy.distribution_with_tape(&step.input)?;
            let ratio = (dist.log_prob(&step.action)? - step.log_prob).exp();
            let mut g = DistGrad::zeros_like(&dist);
            g.add_scaled(&dist.grad_log_prob(&step.action)?, -ratio * step.advantage);
            g.add_scaled(&dist.grad_entropy(), -self.config.entropy_coef);
            g.add_scaled(&dist.grad_kl_from(&old[i]), self.kl_penalty);
            policy.backward_into(&tape, &g, &mut grad)?;
        }
        let scale = 1.0 / idx.len() as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        Ok(grad)
    }

    /// One update from a batch collected with `policy`. Advantages must
    /// already be in the batch. A step whose KL overshoots four times the
    /// limit, or that produces non-finite values, is rejected and the input
    /// policy is returned unchanged.
    pub fn update(&mut self, policy: &PolicyParams, batch: &RolloutBatch) -> Result<(PolicyParams, UpdateDiagnostics)> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty rollout batch".into()));
        }
        let old = batch
            .steps
            .iter()
            .map(|s| policy.distribution(&s.input))
            .collect::<Result<Vec<_>>>()?;
        let entropy = old.iter().map(ActionDist::entropy).sum::<f64>() / old.len() as f64;
        let surrogate_before = surrogate(policy, batch)?;
        let limit = self.config.kl_limit;

        let saved_adam = self.adam.clone();
        let mut candidate = policy.clone();
        let mut epochs_run = 0;
        let mut kl = 0.0;
        let mut failure = None;
        let n_mb = self.config.minibatches.min(batch.len());
        'epochs: for _ in 0..self.config.epochs {
            for mb in 0..n_mb {
                let idx: Vec<usize> = (mb..batch.len()).step_by(n_mb).collect();
                let step = self
                    .loss_gradient(&candidate, &old, batch, &idx)
                    .and_then(|g| self.adam.apply(&mut candidate.params, &g));
                if let Err(e) = step {
                    failure = Some(e);
                    break 'epochs;
                }
            }
            epochs_run += 1;
            match mean_kl(&old, &candidate, batch) {
                Ok(k) if k.is_finite() => kl = k,
                Ok(_) => {
                    failure = Some(Error::NonFinite("policy KL"));
                    break;
                }
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            }
            if kl > 2.0 * limit {
                break;
            }
        }

        let accepted = failure.is_none() && kl <= 4.0 * limit;
        if kl > 1.5 * limit || !accepted {
            self.kl_penalty = (self.kl_penalty * 2.0).min(1e4);
        } else if kl < limit / 1.5 {
            self.kl_penalty = (self.kl_penalty / 2.0).max(1e-4);
        }
        if !accepted {
            self.adam = saved_adam;
            let diag = UpdateDiagnostics {
                mean_kl: kl,
                entropy,
                surrogate_before,
                surrogate_after: surrogate_before,
                epochs_run,
                accepted,
                kl_penalty: self.kl_penalty,
            };
            return Ok((policy.clone(), diag));
        }
        let surrogate_after = surrogate(&candidate, batch)?;
        Ok((
            candidate,
            UpdateDiagnostics {
                mean_kl: kl,
                entropy,
                surrogate_before,
                surrogate_after,
                epochs_run,
                accepted,
                kl_penalty: self.kl_penalty,
            },
        ))
    }
}

/// Stateless form: a fresh optimizer with default settings apart from the
/// KL limit and entropy coefficient.
pub fn policy_update(
    policy: &PolicyParams,
    batch: &RolloutBatch,
    kl_limit: f64,
    entropy_coef: f64,
) -> Result<(PolicyParams, UpdateDiagnostics)> {
    let config = PolicyUpdateConfig {
        kl_limit,
        entropy_coef,
        ..Default::default()
    };
    PolicyOptimizer::new(policy, config)?.update(policy, batch)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValueUpdateConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatches: usize,
}

impl Default for ValueUpdateConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 10,
            minibatches: 4,
        }
    }
}

/// Squared-error regression of the baseline onto `return_to_go`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueOptimizer {
    pub config: ValueUpdateConfig,
    pub adam: AdamState,
}

fn value_loss(value: &ValueParams, batch: &RolloutBatch) -> Result<f64> {
    let mut total = 0.0;
    for s in &batch.steps {
        total += (value.value(&s.input)? - s.return_to_go).powi(2);
    }
    Ok(total / batch.len() as f64)
}

impl ValueOptimizer {
    pub fn new(value: &ValueParams, config: ValueUpdateConfig) -> Result<Self> {
        if !(config.learning_rate > 0.0) || config.epochs == 0 || config.minibatches == 0 {
            return Err(Error::InvalidSpec(format!("invalid value update settings: {config:?}")));
        }
        Ok(Self {
            adam: AdamState::new(value.params.len(), config.learning_rate),
            config,
        })
    }

    /// Returns the fitted baseline and the mean squared error before the
    /// first epoch and after each epoch.
    pub fn update(&mut self, value: &ValueParams, batch: &RolloutBatch) -> Result<(ValueParams, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty rollout batch".into()));
        }
        let mut fitted = value.clone();
        let mut losses = vec![value_loss(&fitted, batch)?];
        let n_mb = self.config.minibatches.min(batch.len());
        for _ in 0..self.config.epochs {
            for mb in 0..n_mb {
                let idx: Vec<usize> = (mb..batch.len()).step_by(n_mb).collect();
                let mut grad = vec![0.0; fitted.params.len()];
                let scale = 2.0 / idx.len() as f64;
                for &i in &idx {
                    let s = &batch.steps[i];
                    let (out, tape) = mlp_forward(&fitted.spec, &fitted.params, &s.input)?;
                    mlp_backward_into(&fitted.spec, &fitted.params, &tape, &[scale * (out[0] - s.return_to_go)], &mut grad)?;
                }
                self.adam.apply(&mut fitted.params, &grad)?;
            }
            losses.push(value_loss(&fitted, batch)?);
        }
        Ok((fitted, losses))
    }
}

pub fn value_update(value: &ValueParams, batch: &RolloutBatch) -> Result<(ValueParams, Vec<f64>)> {
    ValueOptimizer::new(value, ValueUpdateConfig::default())?.update(value, batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::one_hot;
    use crate::nn::{Activation, MlpSpec, ParameterVector};
    use crate::policy::{normalize_advantages, BatchStep, PolicyHead};
    use crate::rng::seeded;
    use rand::Rng;

    fn bandit_policy() -> PolicyParams {
        let spec = MlpSpec::new(vec![1, 2], Activation::Tanh).unwrap();
        PolicyParams {
            spec,
            params: ParameterVector(vec![0.0; 4]),
            head: PolicyHead::Categorical,
        }
    }

    fn bandit_batch(policy: &PolicyParams, n: usize, seed: u64) -> RolloutBatch {
        let mut rng = seeded(seed);
        let mut batch = RolloutBatch::default();
        for _ in 0..n {
            let d = policy.distribution(&[1.0]).unwrap();
            let a = d.sample(&mut rng);
            let reward = if a[0] == 1.0 { 1.0 } else { 0.0 };
            batch.push_segment(
                vec![BatchStep {
                    input: vec![1.0],
                    log_prob: d.log_prob(&a).unwrap(),
                    action: a,
                    reward,
                    advantage: reward,
                    return_to_go: reward,
                }],
                0.0,
            );
        }
        normalize_advantages(&mut batch);
        batch
    }

    #[test]
    fn collection_ratio_is_one() {
        let p = bandit_policy();
        let batch = bandit_batch(&p, 32, 1);
        for s in &batch.steps {
            let lp = p.distribution(&s.input).unwrap().log_prob(&s.action).unwrap();
            assert!(((lp - s.log_prob).exp() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn bandit_update_raises_good_arm_probability() {
        let mut policy = bandit_policy();
        let mut opt = PolicyOptimizer::new(&policy, PolicyUpdateConfig::default()).unwrap();
        for it in 0..50 {
            let batch = bandit_batch(&policy, 64, it);
            let (next, diag) = opt.update(&policy, &batch).unwrap();
            assert!(diag.mean_kl >= 0.0);
            if diag.accepted {
                assert!(diag.mean_kl <= 4.0 * opt.config.kl_limit);
            }
            policy = next;
        }
        let p = policy.distribution(&[1.0]).unwrap().probs().unwrap();
        assert!(p[0] > 0.9, "{p:?}");
    }

    #[test]
    fn kl_stays_near_limit() {
        let mut policy = bandit_policy();
        let mut opt = PolicyOptimizer::new(&policy, PolicyUpdateConfig::default()).unwrap();
        for it in 0..20 {
            let batch = bandit_batch(&policy, 64, 100 + it);
            let (next, diag) = opt.update(&policy, &batch).unwrap();
            assert!(diag.mean_kl <= 4.0 * opt.config.kl_limit || !diag.accepted);
            policy = next;
        }
    }

    #[test]
    fn empty_batch_is_an_error() {
        let p = bandit_policy();
        assert!(policy_update(&p, &RolloutBatch::default(), 0.01, 0.0).is_err());
    }

    #[test]
    fn value_regression_loss_decreases() {
        let mut rng = seeded(5);
        let value = ValueParams::new(2, &[16], Activation::Tanh, &mut rng).unwrap();
        let mut batch = RolloutBatch::default();
        for _ in 0..64 {
            let x: [f64; 2] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            batch.push_segment(
                vec![BatchStep {
                    input: x.to_vec(),
                    action: one_hot(0, 4),
                    return_to_go: x[0] - 2.0 * x[1],
                    ..Default::default()
                }],
                0.0,
            );
        }
        let (_, losses) = value_update(&value, &batch).unwrap();
        assert!(losses.last().unwrap() < &losses[0]);
    }
}
