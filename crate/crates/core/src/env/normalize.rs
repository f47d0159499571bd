use serde::{Deserialize, Serialize};

/// Smallest standard deviation used when scaling.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-coordinate running mean and variance (Welford).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNormalizer {
    pub count: u64,
    pub mean: Vec<f64>,
    /// Sum of squared deviations from the running mean.
    pub variance_accumulator: Vec<f64>,
}

impl RunningNormalizer {
    pub fn new(width: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; width],
            variance_accumulator: vec![0.0; width],
        }
    }

    /// Statistics of a fixed sample, as if it had been streamed in order.
    pub fn fitted<'a>(width: usize, samples: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut norm = Self::new(width);
        for s in samples {
            norm.update(s);
        }
        norm
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn update(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.width());
        self.count += 1;
        let n = self.count as f64;
        for ((m, acc), &v) in self.mean.iter_mut().zip(&mut self.variance_accumulator).zip(x) {
            let delta = v - *m;
            *m += delta / n;
            *acc += delta * (v - *m);
        }
    }

    /// Population variance per coordinate.
    pub fn variance(&self) -> Vec<f64> {
        if self.count == 0 {
            return vec![1.0; self.width()];
        }
        self.variance_accumulator
            .iter()
            .map(|acc| (acc / self.count as f64).max(0.0))
            .collect()
    }

    pub fn std(&self) -> Vec<f64> {
        self.variance().into_iter().map(f64::sqrt).collect()
    }

    /// `(x - mean) / max(std, 1e-8)` without touching the statistics.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        if self.count == 0 {
            return x.to_vec();
        }
        x.iter()
            .zip(&self.mean)
            .zip(self.std())
            .map(|((v, m), s)| (v - m) / s.max(STD_FLOOR))
            .collect()
    }

    /// Updates the statistics with `x`, then normalizes it.
    pub fn observe(&mut self, x: &[f64]) -> Vec<f64> {
        self.update(x);
        self.apply(x)
    }
}

/// Pure form of [`RunningNormalizer::observe`].
pub fn normalize_observation(norm: &RunningNormalizer, state: &[f64]) -> (Vec<f64>, RunningNormalizer) {
    let mut next = norm.clone();
    let out = next.observe(state);
    (out, next)
}
