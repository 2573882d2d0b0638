//! Masked diffusion repainting with pluggable denoisers and per-sample
//! control-strength selection.

mod bridge;
mod denoiser;
mod repaint;
mod schedule;
mod strength;

pub use bridge::{ProcessBridge, ProcessDenoiser, ProcessEstimator, DEFAULT_TIMEOUT};
pub use denoiser::{
    ConstantDenoiser, DdimDenoiser, DenoiseRequest, DenoiserOracle, EpsilonModel, IdentityDenoiser,
    LinearShrinkDenoiser, ZeroEpsilon,
};
pub use repaint::{
    initial_state, latent_mask, repaint_run, repaint_run_with, repaint_step, run_candidates,
    sample_background, LatentState, RepaintInputs,
};
pub use schedule::{
    ConstantNoise, NoiseSchedule, NoiseSource, SeededNoise, DEFAULT_BASE_STEPS, DEFAULT_BETA_END,
    DEFAULT_BETA_START, DEFAULT_STEPS,
};
pub use strength::{
    score_candidates, select_control_strength, PoseEstimator, StrengthCandidates, DEFAULT_STRENGTHS,
};

use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum DeoccluderError {
    #[error("step {t} outside schedule of {steps} steps")]
    StepOutOfRange { t: usize, steps: usize },
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("mask entries must be exactly 0 or 1")]
    NonBinaryMask,
    #[error("invalid noise schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid candidates: {0}")]
    InvalidCandidates(String),
    #[error("no candidate strengths")]
    EmptyCandidates,
    #[error("{scores} scores for {candidates} candidates")]
    ScoreCountMismatch { candidates: usize, scores: usize },
    #[error("every candidate failed")]
    AllCandidatesFailed,
    #[error("denoiser failed: {0}")]
    DenoiserFailure(String),
    #[error("estimator failed: {0}")]
    EstimatorFailure(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
