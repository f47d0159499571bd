use serde::{Deserialize, Serialize};

/// Running standard deviation of the reward stream.
///
/// Rewards are divided by the running std without subtracting the mean, so
/// the sign structure of the shaped reward survives.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardStdNormalizer {
    pub count: u64,
    pub mean: f64,
    /// Sum of squared deviations (Welford).
    pub second_moment: f64,
}

impl RewardStdNormalizer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, r: f64) {
        self.count += 1;
        let delta = r - self.mean;
        self.mean += delta / self.count as f64;
        self.second_moment += delta * (r - self.mean);
    }

    pub fn std(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        (self.second_moment / self.count as f64).max(0.0).sqrt()
    }

    /// Divisor applied to rewards. A degenerate (constant) stream scales by 1.
    pub fn scale(&self) -> f64 {
        let s = self.std();
        if s > 1e-8 {
            s
        } else {
            1.0
        }
    }

    /// Folds `rewards` into the statistics, then scales them.
    pub fn normalize_rewards(&mut self, rewards: &[f64]) -> Vec<f64> {
        for &r in rewards {
            self.update(r);
        }
        let s = self.scale();
        rewards.iter().map(|r| r / s).collect()
    }
}
