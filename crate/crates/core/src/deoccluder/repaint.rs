use rayon::prelude::*;

use super::denoiser::{DenoiseRequest, DenoiserOracle};
use super::schedule::{NoiseSchedule, NoiseSource, SeededNoise};
use super::strength::StrengthCandidates;
use super::DeoccluderError;
use crate::dataprep::BinaryMask;
use crate::tensor::FeatureTensor;

/// Latent `x_t` at step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub x: FeatureTensor,
    pub t: usize,
}

/// Fixed inputs of a repaint run. The mask is binary with 1 marking the
/// region to regenerate; it either matches the latent shape or the latent
/// shape without its leading (channel) dimension.
#[derive(Debug, Clone, Copy)]
pub struct RepaintInputs<'a> {
    pub x0: &'a FeatureTensor,
    pub mask: &'a FeatureTensor,
    pub depth: Option<&'a FeatureTensor>,
}

/// Latent-resolution mask: max-pooled by the latent stride.
pub fn latent_mask(image_mask: &BinaryMask, stride: usize) -> FeatureTensor {
    let m = image_mask.downsample_max(stride);
    let data = m
        .bits()
        .iter()
        .map(|&b| if b { 1.0 } else { 0.0 })
        .collect();
    FeatureTensor::new(vec![m.height(), m.width()], data).expect("bits match dimensions")
}

impl RepaintInputs<'_> {
    fn validate(&self) -> Result<(), DeoccluderError> {
        let latent = self.x0.shape();
        let mask = self.mask.shape();
        if mask != latent && (latent.is_empty() || mask != &latent[1..]) {
            return Err(DeoccluderError::ShapeMismatch {
                expected: latent.to_vec(),
                got: mask.to_vec(),
            });
        }
        if self.mask.data().iter().any(|v| *v != 0.0 && *v != 1.0) {
            return Err(DeoccluderError::NonBinaryMask);
        }
        Ok(())
    }

    /// Whether latent entry `i` is regenerated.
    fn selects(&self, i: usize) -> bool {
        self.mask.data()[i % self.mask.len()] == 1.0
    }

    fn masked(&self) -> FeatureTensor {
        let data = (0..self.x0.len())
            .map(|i| {
                if self.selects(i) {
                    0.0
                } else {
                    self.x0.data()[i]
                }
            })
            .collect();
        FeatureTensor::new(self.x0.shape().to_vec(), data).expect("same shape")
    }
}

/// `√ᾱ_t·x₀ + √(1−ᾱ_t)·ε`; exactly `x₀` when `ᾱ_t = 1`.
pub fn sample_background(
    x0: &FeatureTensor,
    t: usize,
    schedule: &NoiseSchedule,
    noise: &dyn NoiseSource,
) -> Result<FeatureTensor, DeoccluderError> {
    let a = schedule.alpha_bar(t)?;
    if a == 1.0 {
        return Ok(x0.clone());
    }
    let mut eps = vec![0.0; x0.len()];
    noise.fill(t, &mut eps);
    let (sa, sn) = (a.sqrt(), (1.0 - a).sqrt());
    let data = x0
        .data()
        .iter()
        .zip(&eps)
        .map(|(x, e)| sa * x + sn * e)
        .collect();
    Ok(FeatureTensor::new(x0.shape().to_vec(), data)?)
}

/// One reverse step: denoiser proposal inside the mask, background sample
/// of the destination step outside.
pub fn repaint_step(
    state: &LatentState,
    inputs: &RepaintInputs<'_>,
    denoiser: &dyn DenoiserOracle,
    schedule: &NoiseSchedule,
    strength: f64,
    noise: &dyn NoiseSource,
) -> Result<LatentState, DeoccluderError> {
    inputs.validate()?;
    if state.t == 0 || state.t > schedule.steps() {
        return Err(DeoccluderError::StepOutOfRange {
            t: state.t,
            steps: schedule.steps(),
        });
    }
    if state.x.shape() != inputs.x0.shape() {
        return Err(DeoccluderError::ShapeMismatch {
            expected: inputs.x0.shape().to_vec(),
            got: state.x.shape().to_vec(),
        });
    }
    let x_masked = inputs.masked();
    let proposal = denoiser.propose(&DenoiseRequest {
        x_t: &state.x,
        x_masked: &x_masked,
        depth: inputs.depth,
        t: state.t,
        strength,
    })?;
    if proposal.shape() != state.x.shape() {
        return Err(DeoccluderError::ShapeMismatch {
            expected: state.x.shape().to_vec(),
            got: proposal.shape().to_vec(),
        });
    }
    let background = sample_background(inputs.x0, state.t - 1, schedule, noise)?;
    let data = (0..background.len())
        .map(|i| {
            if inputs.selects(i) {
                proposal.data()[i]
            } else {
                background.data()[i]
            }
        })
        .collect();
    Ok(LatentState {
        x: FeatureTensor::new(inputs.x0.shape().to_vec(), data)?,
        t: state.t - 1,
    })
}

/// Initial state `x_T`, drawn like a background sample at step `T`.
pub fn initial_state(
    inputs: &RepaintInputs<'_>,
    schedule: &NoiseSchedule,
    noise: &dyn NoiseSource,
) -> Result<LatentState, DeoccluderError> {
    let t = schedule.steps();
    Ok(LatentState {
        x: sample_background(inputs.x0, t, schedule, noise)?,
        t,
    })
}

/// Full reverse process from `T` down to 0 with seeded noise.
pub fn repaint_run(
    inputs: &RepaintInputs<'_>,
    denoiser: &dyn DenoiserOracle,
    schedule: &NoiseSchedule,
    strength: f64,
    seed: u64,
) -> Result<LatentState, DeoccluderError> {
    repaint_run_with(inputs, denoiser, schedule, strength, &SeededNoise { seed })
}

pub fn repaint_run_with(
    inputs: &RepaintInputs<'_>,
    denoiser: &dyn DenoiserOracle,
    schedule: &NoiseSchedule,
    strength: f64,
    noise: &dyn NoiseSource,
) -> Result<LatentState, DeoccluderError> {
    inputs.validate()?;
    let mut state = initial_state(inputs, schedule, noise)?;
    while state.t > 0 {
        state = repaint_step(&state, inputs, denoiser, schedule, strength, noise)?;
    }
    Ok(state)
}

/// One run per candidate strength, executed on a pool of `threads` workers.
/// Results follow candidate order.
pub fn run_candidates(
    inputs: &RepaintInputs<'_>,
    denoiser: &dyn DenoiserOracle,
    schedule: &NoiseSchedule,
    candidates: &StrengthCandidates,
    seed: u64,
    threads: usize,
) -> Result<Vec<FeatureTensor>, DeoccluderError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| DeoccluderError::DenoiserFailure(e.to_string()))?;
    pool.install(|| {
        candidates
            .values()
            .par_iter()
            .map(|&s| repaint_run(inputs, denoiser, schedule, s, seed).map(|st| st.x))
            .collect()
    })
}
