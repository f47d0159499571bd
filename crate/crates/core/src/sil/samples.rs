//! State-action samples as seen by the transport cost.
//!
//! Goal-reaching episodes end early, so a learner that lingers collects more
//! of the (non-negative) shaped reward than one that finishes. To keep the
//! reward aligned with the task, terminated trajectories are padded up to
//! the horizon with an absorbing sample: a zero state-action block plus an
//! indicator coordinate. Expert demonstrations get the same padding, so
//! "already at the goal" is itself something the learner is matched on.

use rand::Rng;

use crate::env::{subsample_indices, DemoSet, RunningNormalizer, Trajectory};
use crate::{Error, Result};

/// Encodes `[normalize(s), a]` rows, plus the absorbing indicator when enabled.
///
/// The state normalizer is fitted once on the demonstration states, so the
/// encoding does not depend on the learner.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleEncoder {
    pub normalizer: RunningNormalizer,
    pub action_dim: usize,
    pub absorbing: bool,
}

/// Subsampled learner samples and where they sit on the padded timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerSamples {
    pub rows: Vec<Vec<f64>>,
    /// Timeline position of every row. Positions `>= real_len` are absorbing.
    pub positions: Vec<usize>,
    /// Real environment steps.
    pub real_len: usize,
    /// Real steps plus absorbing padding.
    pub timeline_len: usize,
}

impl SampleEncoder {
    pub fn from_demos(demos: &DemoSet, absorbing: bool) -> Self {
        let env = demos.env();
        let normalizer = RunningNormalizer::fitted(
            env.state_dim(),
            demos
                .trajectories
                .iter()
                .flat_map(|t| t.transitions.iter().map(|x| x.state.as_slice())),
        );
        Self {
            normalizer,
            action_dim: env.action_dim(),
            absorbing,
        }
    }

    pub fn width(&self) -> usize {
        self.normalizer.width() + self.action_dim + usize::from(self.absorbing)
    }

    pub fn encode(&self, state: &[f64], action: &[f64]) -> Vec<f64> {
        let mut row = self.normalizer.apply(state);
        row.extend_from_slice(action);
        if self.absorbing {
            row.push(0.0);
        }
        row
    }

    pub fn absorbing_row(&self) -> Vec<f64> {
        let mut row = vec![0.0; self.width()];
        if let Some(last) = row.last_mut() {
            *last = 1.0;
        }
        row
    }

    /// Rows of an (already subsampled) demonstration, padded to `target_len`
    /// with absorbing rows when padding is enabled.
    pub fn expert_rows(&self, demo: &Trajectory, target_len: usize) -> Vec<Vec<f64>> {
        let mut rows: Vec<Vec<f64>> = demo.transitions.iter().map(|t| self.encode(&t.state, &t.action)).collect();
        if self.absorbing {
            while rows.len() < target_len {
                rows.push(self.absorbing_row());
            }
        }
        rows
    }

    /// Pads a terminated learner trajectory to `horizon`, then keeps every
    /// `factor`-th timeline position from a random offset.
    pub fn learner_samples<R: Rng + ?Sized>(
        &self,
        traj: &Trajectory,
        horizon: usize,
        factor: usize,
        rng: &mut R,
    ) -> Result<LearnerSamples> {
        if traj.is_empty() {
            return Err(Error::InvalidArgument("empty learner trajectory".into()));
        }
        let real_len = traj.len();
        let timeline_len = if self.absorbing && traj.terminated() {
            horizon.max(real_len)
        } else {
            real_len
        };
        let positions = subsample_indices(timeline_len, factor, rng)?;
        let rows = positions
            .iter()
            .map(|&p| match traj.transitions.get(p) {
                Some(t) => self.encode(&t.state, &t.action),
                None => self.absorbing_row(),
            })
            .collect();
        Ok(LearnerSamples {
            rows,
            positions,
            real_len,
            timeline_len,
        })
    }
}

/// Number of samples a full-horizon trajectory keeps after subsampling.
pub fn padded_sample_count(horizon: usize, factor: usize) -> usize {
    horizon.div_ceil(factor.max(1))
}

/// A learner sample set matched with one expert sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPair {
    pub learner: Vec<Vec<f64>>,
    pub expert: Vec<Vec<f64>>,
}

/// For each of `n_learner` trajectories, an expert index drawn uniformly
/// with replacement.
pub fn pair_indices<R: Rng + ?Sized>(n_learner: usize, n_expert: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n_learner == 0 || n_expert == 0 {
        return Err(Error::InvalidArgument("pairing needs non-empty learner and expert sets".into()));
    }
    Ok((0..n_learner).map(|_| rng.random_range(0..n_expert)).collect())
}

pub fn pair_trajectories<R: Rng + ?Sized>(
    learner: &[Vec<Vec<f64>>],
    expert: &[Vec<Vec<f64>>],
    rng: &mut R,
) -> Result<Vec<TrajectoryPair>> {
    let idx = pair_indices(learner.len(), expert.len(), rng)?;
    Ok(learner
        .iter()
        .zip(idx)
        .map(|(l, j)| TrajectoryPair {
            learner: l.clone(),
            expert: expert[j].clone(),
        })
        .collect())
}
