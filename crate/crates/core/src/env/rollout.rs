use rand::Rng;

use super::{env_reset, env_step, EnvSpec, Trajectory, Transition};
use crate::rng::SeededRng;
use crate::{Error, Result};

/// What an actor chose in one state.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionChoice {
    /// Action sent to the environment (one-hot, or clamped force).
    pub env_action: Vec<f64>,
    /// Action as drawn from the policy distribution, before clamping.
    pub sampled_action: Vec<f64>,
    pub log_prob: f64,
    /// The (normalized) input the policy saw.
    pub policy_input: Vec<f64>,
}

impl ActionChoice {
    /// A choice with no distribution behind it (experts, scripted actors).
    pub fn deterministic(state: &[f64], action: Vec<f64>) -> Self {
        Self {
            sampled_action: action.clone(),
            env_action: action,
            log_prob: 0.0,
            policy_input: state.to_vec(),
        }
    }
}

/// Anything that picks actions. `stochastic = false` asks for the mode.
pub trait Actor {
    fn act(&mut self, state: &[f64], rng: &mut SeededRng, stochastic: bool) -> Result<ActionChoice>;
}

/// Per-step data the policy learner needs alongside the trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub policy_input: Vec<f64>,
    pub sampled_action: Vec<f64>,
    pub log_prob: f64,
}

pub fn rollout(spec: &EnvSpec, actor: &mut dyn Actor, rng: &mut SeededRng, stochastic: bool) -> Result<Trajectory> {
    rollout_traced(spec, actor, rng, stochastic).map(|(traj, _)| traj)
}

/// Runs one episode until a terminal state or the horizon.
pub fn rollout_traced(
    spec: &EnvSpec,
    actor: &mut dyn Actor,
    rng: &mut SeededRng,
    stochastic: bool,
) -> Result<(Trajectory, Vec<StepTrace>)> {
    let mut state = env_reset(spec, rng);
    let mut traj = Trajectory::default();
    let mut trace = Vec::with_capacity(spec.horizon);
    for _ in 0..spec.horizon {
        let choice = actor.act(&state, rng, stochastic)?;
        if choice.env_action.iter().any(|a| !a.is_finite()) || !choice.log_prob.is_finite() {
            return Err(Error::NonFinite("policy action"));
        }
        let out = env_step(spec, &state, &choice.env_action)?;
        traj.episode_return += out.env_reward;
        traj.transitions.push(Transition {
            state: std::mem::take(&mut state),
            action: choice.env_action,
            env_reward: out.env_reward,
            next_state: out.next_state.clone(),
            done: out.done,
        });
        trace.push(StepTrace {
            policy_input: choice.policy_input,
            sampled_action: choice.sampled_action,
            log_prob: choice.log_prob,
        });
        state = out.next_state;
        if out.done {
            break;
        }
    }
    Ok((traj, trace))
}

/// Indices `offset, offset + factor, ...` below `len`, with a uniform offset.
/// When `factor > len` a single uniformly chosen index is kept.
pub fn subsample_indices<R: Rng + ?Sized>(len: usize, factor: usize, rng: &mut R) -> Result<Vec<usize>> {
    if factor == 0 {
        return Err(Error::InvalidArgument("subsample factor must be >= 1".into()));
    }
    if len == 0 {
        return Ok(Vec::new());
    }
    if factor > len {
        return Ok(vec![rng.random_range(0..len)]);
    }
    let offset = rng.random_range(0..factor);
    Ok((offset..len).step_by(factor).collect())
}

/// Keeps every `factor`-th transition from a random offset. The episode
/// return of the full trajectory is kept for reporting.
pub fn subsample<R: Rng + ?Sized>(traj: &Trajectory, factor: usize, rng: &mut R) -> Result<Trajectory> {
    let keep = subsample_indices(traj.len(), factor, rng)?;
    Ok(Trajectory {
        transitions: keep.into_iter().map(|i| traj.transitions[i].clone()).collect(),
        episode_return: traj.episode_return,
    })
}
