use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::DeoccluderError;

pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 2e-2;
pub const DEFAULT_BASE_STEPS: usize = 1000;
pub const DEFAULT_STEPS: usize = 50;

/// Cumulative signal fractions `ᾱ_t` for `t = 0..=T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct NoiseSchedule {
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// `alpha_bar[0..=T]`, each in (0, 1] and non-increasing.
    pub fn from_alpha_bar(alpha_bar: Vec<f64>) -> Result<Self, DeoccluderError> {
        if alpha_bar.len() < 2 {
            return Err(DeoccluderError::InvalidSchedule(
                "need at least one step".into(),
            ));
        }
        if alpha_bar
            .iter()
            .any(|a| !(a.is_finite() && *a > 0.0 && *a <= 1.0))
        {
            return Err(DeoccluderError::InvalidSchedule(
                "alpha_bar outside (0, 1]".into(),
            ));
        }
        if alpha_bar.windows(2).any(|w| w[1] > w[0]) {
            return Err(DeoccluderError::InvalidSchedule(
                "alpha_bar must be non-increasing".into(),
            ));
        }
        Ok(Self { alpha_bar })
    }

    /// Linear β over `base_steps`, subsampled uniformly to `steps`, with
    /// `ᾱ_0 = 1` and `ᾱ_t` taken at base step `t·base_steps/steps`.
    pub fn linear(
        beta_start: f64,
        beta_end: f64,
        base_steps: usize,
        steps: usize,
    ) -> Result<Self, DeoccluderError> {
        if steps == 0 || base_steps == 0 || !base_steps.is_multiple_of(steps) {
            return Err(DeoccluderError::InvalidSchedule(format!(
                "{steps} steps must evenly divide {base_steps} base steps"
            )));
        }
        if !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
            return Err(DeoccluderError::InvalidSchedule(
                "betas must satisfy 0 < start ≤ end < 1".into(),
            ));
        }
        let mut cumulative = Vec::with_capacity(base_steps);
        let mut acc = 1.0;
        for i in 0..base_steps {
            let frac = if base_steps == 1 {
                0.0
            } else {
                i as f64 / (base_steps - 1) as f64
            };
            acc *= 1.0 - (beta_start + (beta_end - beta_start) * frac);
            cumulative.push(acc);
        }
        let stride = base_steps / steps;
        let mut alpha_bar = vec![1.0];
        alpha_bar.extend((1..=steps).map(|t| cumulative[t * stride - 1]));
        Self::from_alpha_bar(alpha_bar)
    }

    pub fn steps(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64, DeoccluderError> {
        self.alpha_bar
            .get(t)
            .copied()
            .ok_or(DeoccluderError::StepOutOfRange {
                t,
                steps: self.steps(),
            })
    }

    pub fn values(&self) -> &[f64] {
        &self.alpha_bar
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::linear(
            DEFAULT_BETA_START,
            DEFAULT_BETA_END,
            DEFAULT_BASE_STEPS,
            DEFAULT_STEPS,
        )
        .expect("default schedule is valid")
    }
}

impl TryFrom<Vec<f64>> for NoiseSchedule {
    type Error = DeoccluderError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::from_alpha_bar(v)
    }
}

impl From<NoiseSchedule> for Vec<f64> {
    fn from(s: NoiseSchedule) -> Self {
        s.alpha_bar
    }
}

/// Standard-normal noise for step `t`.
pub trait NoiseSource: Send + Sync {
    fn fill(&self, t: usize, out: &mut [f64]);
}

/// One ChaCha8 stream per step, keyed by the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeededNoise {
    pub seed: u64,
}

impl NoiseSource for SeededNoise {
    fn fill(&self, t: usize, out: &mut [f64]) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(t as u64);
        for v in out {
            *v = StandardNormal.sample(&mut rng);
        }
    }
}

/// Every draw equals the same value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantNoise(pub f64);

impl NoiseSource for ConstantNoise {
    fn fill(&self, _t: usize, out: &mut [f64]) {
        out.fill(self.0);
    }
}
