use rayon::prelude::*;

use super::{
    critic_ascent, mean_sinkhorn, pair_indices, pair_sinkhorn, padded_sample_count, sil_rewards, CriticParams,
    GroundCost, LearnerSamples, MetricsRow, RewardAssignment, SampleEncoder, SilConfig, TrajectoryPair,
};
use crate::env::{rollout_traced, DemoSet, EnvSpec, RunningNormalizer, StepTrace, Trajectory};
use crate::eval::{evaluate, EvalOptions, EvalReport};
use crate::nn::{Activation, AdamState};
use crate::policy::{
    gae_advantages, normalize_advantages, Agent, BatchStep, PolicyOptimizer, PolicyParams, RewardStdNormalizer,
    RolloutBatch, UpdateDiagnostics, ValueOptimizer, ValueParams,
};
use crate::rng::{episode_stream, stream, Stream};
use crate::{Error, Result};

/// Largest tolerated `|sum raw + transport value|` per pair.
pub const IDENTITY_TOLERANCE: f64 = 1e-9;

/// Everything observable about one finished iteration.
pub struct IterationReport<'a> {
    pub row: &'a MetricsRow,
    /// Largest `|sum raw + transport value|` over this iteration's pairs.
    pub identity_error: f64,
    pub shaped_min: f64,
    pub shaped_max: f64,
    /// Pairs whose Sinkhorn solve hit the iteration cap (last iterate used).
    pub unconverged_pairs: usize,
    pub critic_skipped: bool,
    pub update: &'a UpdateDiagnostics,
    pub value_losses: &'a [f64],
    pub eval: Option<&'a EvalReport>,
    pub agent: &'a Agent,
    pub critic: &'a CriticParams,
}

#[derive(Debug, Clone)]
pub struct SilOutcome {
    pub agent: Agent,
    pub critic: CriticParams,
    pub value: ValueParams,
    pub rows: Vec<MetricsRow>,
    pub final_eval: EvalReport,
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len().max(1) as f64;
    values.sum::<f64>() / n
}

/// Per-step rewards on the padded timeline: retained samples get their own
/// reward, every other step the trajectory's mean sample reward.
fn timeline_rewards(samples: &LearnerSamples, sample_rewards: &[f64]) -> Vec<f64> {
    let fill = mean(sample_rewards.iter().copied());
    let mut out = vec![fill; samples.timeline_len];
    for (&p, &r) in samples.positions.iter().zip(sample_rewards) {
        out[p] = r;
    }
    out
}

pub fn sil_train(
    config: &SilConfig,
    env: &EnvSpec,
    demos: &DemoSet,
    seed: u64,
    observer: &mut dyn FnMut(&IterationReport<'_>) -> Result<()>,
) -> Result<SilOutcome> {
    config.validate()?;
    env.validate()?;
    if demos.trajectories.is_empty() {
        return Err(Error::InvalidArgument("training needs at least one demonstration".into()));
    }
    if demos.env().kind != env.kind {
        return Err(Error::InvalidArgument(format!(
            "demonstrations were recorded on {}, training on {}",
            demos.env().name(),
            env.name()
        )));
    }
    let factor = demos.manifest.subsample_factor;
    let gamma = env.gamma;

    let mut init = stream(seed, Stream::Init);
    let pc = &config.policy;
    let policy = PolicyParams::for_env(env, &pc.hidden, pc.activation, pc.init_log_std, &mut init)?;
    let mut value = ValueParams::new(env.state_dim(), &pc.value_hidden, Activation::Tanh, &mut init)?;
    let encoder = SampleEncoder::from_demos(demos, config.absorbing);
    let cc = &config.critic;
    let mut critic = CriticParams::new(encoder.width(), &cc.hidden, cc.feature_dim, cc.activation, cc.learning_rate, &mut init)?;
    let mut critic_adam = AdamState::new(critic.params.len(), cc.learning_rate);

    let mut agent = Agent::new(policy, RunningNormalizer::new(env.state_dim()));
    let mut policy_opt = PolicyOptimizer::new(&agent.policy, pc.update.clone())?;
    let mut value_opt = ValueOptimizer::new(&value, pc.value.clone())?;
    let mut reward_norm = RewardStdNormalizer::new();

    let target = padded_sample_count(env.horizon, factor);
    let expert_rows: Vec<Vec<Vec<f64>>> = demos.trajectories.iter().map(|t| encoder.expert_rows(t, target)).collect();
    let mut pairing_rng = stream(seed, Stream::Pairing);
    let eval_opts = EvalOptions {
        episodes: config.eval_episodes,
        stochastic: true,
        settings: config.eval_sinkhorn,
        absorbing: true,
    };
    let n_ep = config.episodes_per_iteration;

    let mut rows = Vec::with_capacity(config.iterations);
    let mut final_eval = None;
    for k in 0..config.iterations {
        // Collect with a frozen snapshot so episodes are independent.
        let snapshot = agent.frozen();
        let episodes: Vec<(Trajectory, Vec<StepTrace>)> = (0..n_ep)
            .into_par_iter()
            .map(|e| {
                let mut rng = episode_stream(seed, Stream::Rollout, (k * n_ep + e) as u64);
                rollout_traced(env, &mut snapshot.clone(), &mut rng, true)
            })
            .collect::<Result<_>>()?;
        for (traj, _) in &episodes {
            for t in &traj.transitions {
                agent.normalizer.update(&t.state);
            }
        }

        let samples = episodes
            .iter()
            .enumerate()
            .map(|(e, (traj, _))| {
                let mut rng = episode_stream(seed, Stream::Subsample, (k * n_ep + e) as u64);
                encoder.learner_samples(traj, env.horizon, factor, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let pairs: Vec<TrajectoryPair> = pair_indices(n_ep, expert_rows.len(), &mut pairing_rng)?
            .into_iter()
            .zip(&samples)
            .map(|(j, s)| TrajectoryPair {
                learner: s.rows.clone(),
                expert: expert_rows[j].clone(),
            })
            .collect();

        let ground = if config.fixed_cost {
            GroundCost::FixedCosine
        } else {
            GroundCost::Adversarial(&critic)
        };
        let rewards: Vec<RewardAssignment> = pairs
            .par_iter()
            .map(|p| sil_rewards(p, ground, &config.sinkhorn))
            .collect::<Result<_>>()?;
        let identity_error = rewards.iter().map(RewardAssignment::identity_error).fold(0.0, f64::max);
        if !(identity_error <= IDENTITY_TOLERANCE) {
            return Err(Error::InvariantViolated(format!(
                "iteration {}: reward sum differs from minus the transport value by {identity_error:e}",
                k + 1
            )));
        }
        let shaped = rewards.iter().flat_map(|r| r.shaped.iter().copied());
        let shaped_min = shaped.clone().fold(f64::INFINITY, f64::min);
        let shaped_max = shaped.fold(f64::NEG_INFINITY, f64::max);
        let unconverged_pairs = rewards.iter().filter(|r| !r.plan.converged).count();
        let mean_train = mean(rewards.iter().map(|r| r.transport_value));

        let mut critic_objective = 0.0;
        let mut critic_skipped = false;
        if !config.fixed_cost {
            let mut next = critic.clone();
            for step in 0..cc.steps_per_iteration {
                let plans = if step == 0 {
                    rewards.iter().map(|r| r.plan.clone()).collect::<Vec<_>>()
                } else {
                    pairs
                        .par_iter()
                        .map(|p| pair_sinkhorn(GroundCost::Adversarial(&next), p, &config.sinkhorn).map(|s| s.1))
                        .collect::<Result<Vec<_>>>()?
                };
                let (stepped, skipped) = critic_ascent(&next, &mut critic_adam, &pairs, &plans)?;
                next = stepped;
                critic_skipped |= skipped;
            }
            critic_objective = mean_sinkhorn(&next, &pairs, &config.sinkhorn)? - mean_train;
            critic = next;
        }

        // Rewards for every real step; the absorbing tail is folded into the
        // value credited after the last real step.
        let timelines: Vec<Vec<f64>> = samples
            .iter()
            .zip(&rewards)
            .map(|(s, r)| timeline_rewards(s, if config.shaping { &r.shaped } else { &r.raw }))
            .collect();
        let mut flat: Vec<f64> = timelines.concat();
        if config.normalize_rewards {
            flat = reward_norm.normalize_rewards(&flat);
        }
        let mut batch = RolloutBatch::default();
        let mut offset = 0;
        for ((traj, trace), s) in episodes.iter().zip(&samples) {
            let rewards = &flat[offset..offset + s.timeline_len];
            offset += s.timeline_len;
            let terminal_value = rewards[s.real_len..].iter().rev().fold(0.0, |acc, r| r + gamma * acc);
            let steps = trace
                .iter()
                .zip(rewards)
                .take(traj.len())
                .map(|(t, &r)| BatchStep {
                    input: t.policy_input.clone(),
                    action: t.sampled_action.clone(),
                    log_prob: t.log_prob,
                    reward: r,
                    advantage: 0.0,
                    return_to_go: 0.0,
                })
                .collect();
            batch.push_segment(steps, terminal_value);
        }
        let mut batch = gae_advantages(batch, &value, gamma, pc.gae_lambda)?;
        normalize_advantages(&mut batch);
        let (policy, update) = policy_opt.update(&agent.policy, &batch)?;
        let (fitted, value_losses) = value_opt.update(&value, &batch)?;
        agent.policy = policy;
        value = fitted;

        let eval = if (k + 1) % config.eval_every == 0 || k + 1 == config.iterations {
            Some(evaluate(&agent.frozen(), env, Some(demos), &eval_opts, seed)?)
        } else {
            None
        };
        let row = MetricsRow {
            iter: k + 1,
            mean_train_sinkhorn: mean_train,
            mean_eval_sinkhorn_fixed: eval.as_ref().and_then(|e| e.mean_sinkhorn),
            mean_env_return: mean(episodes.iter().map(|(t, _)| t.episode_return)),
            critic_objective,
            policy_kl: update.mean_kl,
            entropy: update.entropy,
        };
        observer(&IterationReport {
            row: &row,
            identity_error,
            shaped_min,
            shaped_max,
            unconverged_pairs,
            critic_skipped,
            update: &update,
            value_losses: &value_losses,
            eval: eval.as_ref(),
            agent: &agent,
            critic: &critic,
        })?;
        rows.push(row);
        if eval.is_some() {
            final_eval = eval;
        }
    }
    Ok(SilOutcome {
        agent,
        critic,
        value,
        rows,
        final_eval: final_eval.expect("the last iteration always evaluates"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timeline_fill_uses_sample_mean() {
        let s = LearnerSamples {
            rows: vec![vec![0.0]; 2],
            positions: vec![1, 3],
            real_len: 2,
            timeline_len: 4,
        };
        assert_eq!(timeline_rewards(&s, &[1.0, 3.0]), vec![2.0, 1.0, 2.0, 3.0]);
    }
}
