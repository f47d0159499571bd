//! Adversarial critic, transport-based reward, and the training loop.
//!
//! Each iteration rolls out the learner, pairs every learner trajectory with
//! a random demonstration, solves an entropic OT problem per pair under the
//! critic's cosine cost, hands each learner sample its share of the
//! transported cost as a reward, takes one critic ascent step on the mean
//! transport value, and one policy step on the rewards.

mod critic;
mod metrics;
mod reward;
mod samples;
mod train;

pub use critic::{
    adversarial_cost, critic_ascent, critic_gradient, critic_update, mean_sinkhorn, pair_sinkhorn, CriticParams,
    CriticStep, GroundCost,
};
pub use metrics::{MetricsRow, METRICS_HEADER};
pub use reward::{shape_reward, sil_rewards, RewardAssignment, SHAPED_MAX};
pub use samples::{pair_indices, pair_trajectories, padded_sample_count, LearnerSamples, SampleEncoder, TrajectoryPair};
pub use train::{sil_train, IterationReport, SilOutcome};

use serde::{Deserialize, Serialize};

use crate::nn::Activation;
use crate::ot::SinkhornSettings;
use crate::policy::{PolicyUpdateConfig, ValueUpdateConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CriticConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub feature_dim: usize,
    pub learning_rate: f64,
    pub steps_per_iteration: usize,
}

impl Default for CriticConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32],
            activation: Activation::Relu,
            feature_dim: 30,
            learning_rate: 5e-4,
            steps_per_iteration: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub init_log_std: f64,
    pub value_hidden: Vec<usize>,
    pub gae_lambda: f64,
    pub update: PolicyUpdateConfig,
    pub value: ValueUpdateConfig,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32],
            activation: Activation::Tanh,
            init_log_std: -0.5,
            value_hidden: vec![32, 32],
            gae_lambda: 0.95,
            update: PolicyUpdateConfig::default(),
            value: ValueUpdateConfig {
                epochs: 5,
                ..ValueUpdateConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SilConfig {
    pub iterations: usize,
    pub episodes_per_iteration: usize,
    /// Regularization of the training-time transport problems.
    pub sinkhorn: SinkhornSettings,
    /// Regularization of the fixed-cost evaluation metric.
    pub eval_sinkhorn: SinkhornSettings,
    pub critic: CriticConfig,
    pub policy: PolicyConfig,
    /// Map raw rewards into `[0, 4]` before normalization.
    pub shaping: bool,
    /// Replace the critic with the fixed cosine cost (ablation).
    pub fixed_cost: bool,
    /// Pad goal-terminated trajectories with absorbing samples.
    pub absorbing: bool,
    pub normalize_rewards: bool,
    /// Run the evaluation metric every this many iterations (and at the end).
    pub eval_every: usize,
    pub eval_episodes: usize,
}

impl Default for SilConfig {
    fn default() -> Self {
        Self {
            iterations: 300,
            episodes_per_iteration: 16,
            sinkhorn: SinkhornSettings::default(),
            eval_sinkhorn: SinkhornSettings::evaluation(),
            critic: CriticConfig::default(),
            policy: PolicyConfig::default(),
            shaping: true,
            fixed_cost: false,
            absorbing: true,
            normalize_rewards: true,
            eval_every: 10,
            eval_episodes: 16,
        }
    }
}

impl SilConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidSpec(msg.to_string()));
        if self.iterations == 0 {
            return fail("iterations must be >= 1");
        }
        if self.episodes_per_iteration == 0 {
            return fail("episodes_per_iteration must be >= 1");
        }
        if self.eval_every == 0 || self.eval_episodes == 0 {
            return fail("eval_every and eval_episodes must be >= 1");
        }
        if self.critic.feature_dim == 0 || !(self.critic.learning_rate > 0.0) {
            return fail("critic needs feature_dim >= 1 and a positive learning rate");
        }
        if !(0.0..=1.0).contains(&self.policy.gae_lambda) {
            return fail("gae_lambda must lie in [0, 1]");
        }
        self.sinkhorn.validate()?;
        self.eval_sinkhorn.validate()?;
        self.policy.update.validate()?;
        Ok(())
    }
}
