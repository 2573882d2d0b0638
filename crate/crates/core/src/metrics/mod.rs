//! Hand and object evaluation metrics.
//!
//! Per-point errors are Euclidean distances in millimeters. Percentages
//! (AUC, F-score, ADD-0.5D) are reported on a 0–100 scale.

mod object;
mod report;

pub use object::{add_half_diameter, add_metric, AddReport, AddSample};
pub use report::{
    bucket_by_occlusion, evaluate_hand, EvalConfig, FrameMetrics, HandEvaluation, HandPair,
    MetricMeans, OcclusionBucket, PoseErrorReport, DEFAULT_OCCLUSION_EDGES,
};

use serde::{Deserialize, Serialize};

use crate::geometry::{linalg, procrustes_align, GeometryError, PointSet3};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("point count mismatch: {pred} predicted vs {gt} ground truth")]
    ShapeMismatch { pred: usize, gt: usize },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("thresholds must be finite and strictly ascending")]
    UnsortedThresholds,
    #[error("object diameter must be positive, got {0}")]
    InvalidDiameter(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Default AUC threshold range: 0–50 mm in 100 uniform steps.
pub fn default_thresholds() -> Vec<f64> {
    (0..=100).map(|i| i as f64 * 0.5).collect()
}

fn check_same_len(pred: &PointSet3, gt: &PointSet3) -> Result<(), MetricsError> {
    if pred.len() != gt.len() {
        return Err(MetricsError::ShapeMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    Ok(())
}

/// Euclidean distance per corresponding point.
pub fn per_point_errors(pred: &PointSet3, gt: &PointSet3) -> Result<Vec<f64>, MetricsError> {
    check_same_len(pred, gt)?;
    Ok(pred
        .points()
        .iter()
        .zip(gt.points())
        .map(|(p, g)| linalg::norm(linalg::sub(*p, *g)))
        .collect())
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Mean per-point position error (MPJPE / MPVPE).
pub fn mean_position_error(pred: &PointSet3, gt: &PointSet3) -> Result<f64, MetricsError> {
    Ok(mean(&per_point_errors(pred, gt)?))
}

/// `pred` after similarity alignment onto `gt`.
pub fn procrustes_aligned(pred: &PointSet3, gt: &PointSet3) -> Result<PointSet3, MetricsError> {
    check_same_len(pred, gt)?;
    let transform = procrustes_align(pred, gt)?;
    Ok(transform.apply_all(pred))
}

/// Mean position error after Procrustes alignment of `pred` onto `gt`.
pub fn pa_position_error(pred: &PointSet3, gt: &PointSet3) -> Result<f64, MetricsError> {
    mean_position_error(&procrustes_aligned(pred, gt)?, gt)
}

/// Fraction of correct keypoints at each threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PckCurve {
    pub thresholds: Vec<f64>,
    pub pck: Vec<f64>,
}

fn check_thresholds(thresholds: &[f64]) -> Result<(), MetricsError> {
    if thresholds.is_empty() {
        return Err(MetricsError::EmptyInput("thresholds"));
    }
    if thresholds.iter().any(|t| !t.is_finite()) || thresholds.windows(2).any(|w| w[1] <= w[0]) {
        return Err(MetricsError::UnsortedThresholds);
    }
    Ok(())
}

/// `pck[i]` is the fraction of `errors` at or below `thresholds[i]`. Errors are
/// pooled over all joints of all samples.
pub fn pck_curve(errors: &[f64], thresholds: &[f64]) -> Result<PckCurve, MetricsError> {
    check_thresholds(thresholds)?;
    if errors.is_empty() {
        return Err(MetricsError::EmptyInput("errors"));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let pck = thresholds
        .iter()
        .map(|t| sorted.partition_point(|e| e <= t) as f64 / n)
        .collect();
    Ok(PckCurve {
        thresholds: thresholds.to_vec(),
        pck,
    })
}

/// Trapezoidal area under a PCK curve, normalized by the threshold span, in percent.
pub fn auc(curve: &PckCurve) -> Result<f64, MetricsError> {
    if curve.thresholds.len() < 2 || curve.pck.len() != curve.thresholds.len() {
        return Err(MetricsError::EmptyInput("at least two thresholds"));
    }
    check_thresholds(&curve.thresholds)?;
    let t = &curve.thresholds;
    let area: f64 = (1..t.len())
        .map(|i| 0.5 * (curve.pck[i] + curve.pck[i - 1]) * (t[i] - t[i - 1]))
        .sum();
    Ok(100.0 * area / (t[t.len() - 1] - t[0]))
}

fn fraction_within(from: &PointSet3, to: &PointSet3, threshold: f64) -> f64 {
    let hits = from
        .points()
        .iter()
        .filter(|p| {
            to.points()
                .iter()
                .any(|q| linalg::norm(linalg::sub(**p, *q)) <= threshold)
        })
        .count();
    hits as f64 / from.len() as f64
}

/// Harmonic mean of precision and recall between two point sets, in percent.
///
/// Precision is the fraction of predicted points whose nearest ground-truth
/// point is within `threshold`; recall swaps the roles.
pub fn f_score(pred: &PointSet3, gt: &PointSet3, threshold: f64) -> Result<f64, MetricsError> {
    if pred.is_empty() || gt.is_empty() {
        return Err(MetricsError::EmptyInput("point set"));
    }
    let precision = fraction_within(pred, gt, threshold);
    let recall = fraction_within(gt, pred, threshold);
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(200.0 * precision * recall / (precision + recall))
}
