use super::schedule::NoiseSchedule;
use super::DeoccluderError;
use crate::tensor::FeatureTensor;

/// Inputs of one denoiser call at step `t`.
#[derive(Debug, Clone, Copy)]
pub struct DenoiseRequest<'a> {
    pub x_t: &'a FeatureTensor,
    /// Original latent with the repaint region zeroed.
    pub x_masked: &'a FeatureTensor,
    pub depth: Option<&'a FeatureTensor>,
    pub t: usize,
    pub strength: f64,
}

/// Proposes `x_{t−1}` for the repaint region. Must be deterministic and
/// return the shape of `x_t`.
pub trait DenoiserOracle: Send + Sync {
    fn propose(&self, request: &DenoiseRequest<'_>) -> Result<FeatureTensor, DeoccluderError>;
}

/// Returns `x_t` unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityDenoiser;

impl DenoiserOracle for IdentityDenoiser {
    fn propose(&self, r: &DenoiseRequest<'_>) -> Result<FeatureTensor, DeoccluderError> {
        Ok(r.x_t.clone())
    }
}

/// Returns `factor · x_t`.
#[derive(Debug, Clone, Copy)]
pub struct LinearShrinkDenoiser {
    pub factor: f64,
}

impl DenoiserOracle for LinearShrinkDenoiser {
    fn propose(&self, r: &DenoiseRequest<'_>) -> Result<FeatureTensor, DeoccluderError> {
        Ok(r.x_t.map(|v| self.factor * v))
    }
}

/// Returns a constant-valued latent.
#[derive(Debug, Clone, Copy)]
pub struct ConstantDenoiser {
    pub value: f64,
}

impl DenoiserOracle for ConstantDenoiser {
    fn propose(&self, r: &DenoiseRequest<'_>) -> Result<FeatureTensor, DeoccluderError> {
        Ok(FeatureTensor::filled(r.x_t.shape().to_vec(), self.value))
    }
}

/// Noise-prediction network `ε_θ(x_t, D, t, strength)`.
pub trait EpsilonModel: Send + Sync {
    fn predict(&self, request: &DenoiseRequest<'_>) -> Result<FeatureTensor, DeoccluderError>;
}

/// Predicts zero noise everywhere.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroEpsilon;

impl EpsilonModel for ZeroEpsilon {
    fn predict(&self, r: &DenoiseRequest<'_>) -> Result<FeatureTensor, DeoccluderError> {
        Ok(FeatureTensor::zeros(r.x_t.shape().to_vec()))
    }
}

/// Deterministic DDIM update around an [`EpsilonModel`]:
/// `x̂₀ = (x_t − √(1−ᾱ_t)·ε) / √ᾱ_t`, `x_{t−1} = √ᾱ_{t−1}·x̂₀ + √(1−ᾱ_{t−1})·ε`.
#[derive(Debug, Clone)]
pub struct DdimDenoiser<M> {
    pub model: M,
    pub schedule: NoiseSchedule,
}

impl<M: EpsilonModel> DenoiserOracle for DdimDenoiser<M> {
    fn propose(&self, r: &DenoiseRequest<'_>) -> Result<FeatureTensor, DeoccluderError> {
        if r.t == 0 {
            return Err(DeoccluderError::StepOutOfRange {
                t: 0,
                steps: self.schedule.steps(),
            });
        }
        let a_t = self.schedule.alpha_bar(r.t)?;
        let a_prev = self.schedule.alpha_bar(r.t - 1)?;
        let eps = self.model.predict(r)?;
        if eps.shape() != r.x_t.shape() {
            return Err(DeoccluderError::ShapeMismatch {
                expected: r.x_t.shape().to_vec(),
                got: eps.shape().to_vec(),
            });
        }
        let data = r
            .x_t
            .data()
            .iter()
            .zip(eps.data())
            .map(|(x, e)| {
                let x0 = (x - (1.0 - a_t).sqrt() * e) / a_t.sqrt();
                a_prev.sqrt() * x0 + (1.0 - a_prev).sqrt() * e
            })
            .collect();
        Ok(FeatureTensor::new(r.x_t.shape().to_vec(), data)?)
    }
}
