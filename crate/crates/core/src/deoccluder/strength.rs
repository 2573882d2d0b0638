use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DeoccluderError;
use crate::geometry::PointSet3;
use crate::metrics::mean_position_error;
use crate::tensor::FeatureTensor;

pub const DEFAULT_STRENGTHS: [f64; 6] = [0.25, 0.4, 0.55, 0.7, 0.85, 1.0];

/// Ascending control strengths in (0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct StrengthCandidates {
    values: Vec<f64>,
}

impl StrengthCandidates {
    pub fn new(values: Vec<f64>) -> Result<Self, DeoccluderError> {
        if values.is_empty() {
            return Err(DeoccluderError::EmptyCandidates);
        }
        if values.iter().any(|v| !(*v > 0.0 && *v <= 1.0)) {
            return Err(DeoccluderError::InvalidCandidates(
                "strengths must lie in (0, 1]".into(),
            ));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(DeoccluderError::InvalidCandidates(
                "strengths must be strictly ascending".into(),
            ));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl Default for StrengthCandidates {
    fn default() -> Self {
        Self {
            values: DEFAULT_STRENGTHS.to_vec(),
        }
    }
}

impl TryFrom<Vec<f64>> for StrengthCandidates {
    type Error = DeoccluderError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<StrengthCandidates> for Vec<f64> {
    fn from(c: StrengthCandidates) -> Self {
        c.values
    }
}

/// Lowest-scoring candidate; ties go to the smaller strength. Infinite
/// scores mark failed candidates.
pub fn select_control_strength(
    candidates: &StrengthCandidates,
    scores: &[f64],
) -> Result<(f64, usize), DeoccluderError> {
    if scores.len() != candidates.values.len() {
        return Err(DeoccluderError::ScoreCountMismatch {
            candidates: candidates.values.len(),
            scores: scores.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan() || *s == f64::NEG_INFINITY) {
        return Err(DeoccluderError::InvalidCandidates(
            "scores must be finite or +inf".into(),
        ));
    }
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        if s.is_finite() && best.is_none_or(|b| *s < scores[b]) {
            best = Some(i);
        }
    }
    let i = best.ok_or(DeoccluderError::AllCandidatesFailed)?;
    Ok((candidates.values[i], i))
}

/// Hand-joint estimator applied to a generated candidate.
pub trait PoseEstimator: Send + Sync {
    fn estimate(&self, candidate: &FeatureTensor) -> Result<PointSet3, DeoccluderError>;
}

/// Mean joint error of each candidate against `gt`; failures score `+∞`.
pub fn score_candidates(
    gt: &PointSet3,
    estimator: &dyn PoseEstimator,
    candidates: &[FeatureTensor],
) -> Vec<f64> {
    candidates
        .par_iter()
        .map(|c| {
            estimator
                .estimate(c)
                .ok()
                .and_then(|joints| mean_position_error(&joints, gt).ok())
                .unwrap_or(f64::INFINITY)
        })
        .collect()
}
