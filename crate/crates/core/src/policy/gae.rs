use super::ValueParams;
use crate::{Error, Result};

/// One learner step as consumed by the policy update.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchStep {
    /// Normalized observation the policy acted on.
    pub input: Vec<f64>,
    /// Action as sampled from the policy distribution.
    pub action: Vec<f64>,
    /// Log-probability at collection time.
    pub log_prob: f64,
    pub reward: f64,
    pub advantage: f64,
    pub return_to_go: f64,
}

/// A contiguous episode inside a batch. `terminal_value` is the discounted
/// value credited after the last step (0 for a plain terminal state).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: usize,
    pub len: usize,
    pub terminal_value: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RolloutBatch {
    pub steps: Vec<BatchStep>,
    pub segments: Vec<Segment>,
}

impl RolloutBatch {
    pub fn push_segment(&mut self, steps: Vec<BatchStep>, terminal_value: f64) {
        self.segments.push(Segment {
            start: self.steps.len(),
            len: steps.len(),
            terminal_value,
        });
        self.steps.extend(steps);
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Generalized advantage estimation with per-step baseline `values`.
pub fn gae_with_values(mut batch: RolloutBatch, values: &[f64], gamma: f64, lambda: f64) -> Result<RolloutBatch> {
    if values.len() != batch.steps.len() {
        return Err(Error::DimensionMismatch {
            context: "value estimates",
            expected: batch.steps.len(),
            actual: values.len(),
        });
    }
    for seg in batch.segments.clone() {
        let mut next_value = seg.terminal_value;
        let mut running = 0.0;
        for i in (seg.start..seg.start + seg.len).rev() {
            let step = &mut batch.steps[i];
            let delta = step.reward + gamma * next_value - values[i];
            running = delta + gamma * lambda * running;
            step.advantage = running;
            step.return_to_go = running + values[i];
            next_value = values[i];
        }
    }
    if batch.steps.iter().any(|s| !s.advantage.is_finite()) {
        return Err(Error::NonFinite("advantages"));
    }
    Ok(batch)
}

pub fn gae_advantages(batch: RolloutBatch, value: &ValueParams, gamma: f64, lambda: f64) -> Result<RolloutBatch> {
    let values = batch
        .steps
        .iter()
        .map(|s| value.value(&s.input))
        .collect::<Result<Vec<_>>>()?;
    gae_with_values(batch, &values, gamma, lambda)
}

/// Shifts and scales advantages to zero mean and unit std over the batch.
pub fn normalize_advantages(batch: &mut RolloutBatch) {
    let n = batch.steps.len();
    if n == 0 {
        return;
    }
    let mean = batch.steps.iter().map(|s| s.advantage).sum::<f64>() / n as f64;
    let var = batch.steps.iter().map(|s| (s.advantage - mean).powi(2)).sum::<f64>() / n as f64;
    let std = var.sqrt().max(1e-8);
    for s in &mut batch.steps {
        s.advantage = (s.advantage - mean) / std;
    }
}
