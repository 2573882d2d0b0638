use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    auc, default_thresholds, f_score, mean_position_error, pck_curve, per_point_errors,
    procrustes_aligned, MetricsError, PckCurve,
};
use crate::geometry::PointSet3;

/// Occlusion-level bucket edges: 25–50%, 50–75%, 75–100%.
pub const DEFAULT_OCCLUSION_EDGES: [f64; 4] = [0.25, 0.50, 0.75, 1.0];

/// Predicted and ground-truth hand geometry for one frame.
#[derive(Debug, Clone)]
pub struct HandPair {
    pub pred_joints: PointSet3,
    pub gt_joints: PointSet3,
    pub vertices: Option<(PointSet3, PointSet3)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub thresholds: Vec<f64>,
    /// Compute the Procrustes-aligned columns.
    pub procrustes: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            thresholds: default_thresholds(),
            procrustes: true,
        }
    }
}

/// Metrics of a single frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub j_pe: f64,
    pub pa_j_pe: Option<f64>,
    pub v_pe: Option<f64>,
    pub pa_v_pe: Option<f64>,
    pub f_at_5: Option<f64>,
    pub f_at_15: Option<f64>,
}

/// Aggregate hand metrics over a set of frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseErrorReport {
    pub frames: usize,
    pub j_pe: f64,
    pub pa_j_pe: Option<f64>,
    pub v_pe: Option<f64>,
    pub pa_v_pe: Option<f64>,
    pub j_auc: f64,
    pub v_auc: Option<f64>,
    pub f_at_5: Option<f64>,
    pub f_at_15: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandEvaluation {
    pub report: PoseErrorReport,
    pub frames: Vec<FrameMetrics>,
    pub joint_curve: PckCurve,
    pub vertex_curve: Option<PckCurve>,
}

struct FrameResult {
    metrics: FrameMetrics,
    joint_errors: Vec<f64>,
    vertex_errors: Option<Vec<f64>>,
}

fn evaluate_frame(pair: &HandPair, procrustes: bool) -> Result<FrameResult, MetricsError> {
    let joint_errors = per_point_errors(&pair.pred_joints, &pair.gt_joints)?;
    let j_pe = mean_position_error(&pair.pred_joints, &pair.gt_joints)?;
    let pa_j_pe = if procrustes {
        let aligned = procrustes_aligned(&pair.pred_joints, &pair.gt_joints)?;
        Some(mean_position_error(&aligned, &pair.gt_joints)?)
    } else {
        None
    };
    let (mut v_pe, mut pa_v_pe, mut f5, mut f15, mut vertex_errors) =
        (None, None, None, None, None);
    if let Some((pred_v, gt_v)) = &pair.vertices {
        vertex_errors = Some(per_point_errors(pred_v, gt_v)?);
        v_pe = Some(mean_position_error(pred_v, gt_v)?);
        if procrustes {
            let aligned = procrustes_aligned(pred_v, gt_v)?;
            pa_v_pe = Some(mean_position_error(&aligned, gt_v)?);
        }
        f5 = Some(f_score(pred_v, gt_v, 5.0)?);
        f15 = Some(f_score(pred_v, gt_v, 15.0)?);
    }
    Ok(FrameResult {
        metrics: FrameMetrics {
            j_pe,
            pa_j_pe,
            v_pe,
            pa_v_pe,
            f_at_5: f5,
            f_at_15: f15,
        },
        joint_errors,
        vertex_errors,
    })
}

/// Mean of the present values, accumulated in index order; `None` unless
/// every entry is present.
fn mean_all(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        sum += v?;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Evaluates every frame (in parallel on the current rayon pool) and folds
/// the results in input order.
pub fn evaluate_hand(
    pairs: &[HandPair],
    config: &EvalConfig,
) -> Result<HandEvaluation, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput("frames"));
    }
    let results: Vec<FrameResult> = pairs
        .par_iter()
        .map(|p| evaluate_frame(p, config.procrustes))
        .collect::<Result<_, _>>()?;

    let joint_errors: Vec<f64> = results
        .iter()
        .flat_map(|r| r.joint_errors.iter().copied())
        .collect();
    let joint_curve = pck_curve(&joint_errors, &config.thresholds)?;
    let vertex_curve = if results.iter().all(|r| r.vertex_errors.is_some()) {
        let errs: Vec<f64> = results
            .iter()
            .flat_map(|r| r.vertex_errors.iter().flatten().copied())
            .collect();
        Some(pck_curve(&errs, &config.thresholds)?)
    } else {
        None
    };

    let frames: Vec<FrameMetrics> = results.into_iter().map(|r| r.metrics).collect();
    let report = PoseErrorReport {
        frames: frames.len(),
        j_pe: mean_all(frames.iter().map(|f| Some(f.j_pe))).unwrap_or(0.0),
        pa_j_pe: mean_all(frames.iter().map(|f| f.pa_j_pe)),
        v_pe: mean_all(frames.iter().map(|f| f.v_pe)),
        pa_v_pe: mean_all(frames.iter().map(|f| f.pa_v_pe)),
        j_auc: auc(&joint_curve)?,
        v_auc: vertex_curve.as_ref().map(auc).transpose()?,
        f_at_5: mean_all(frames.iter().map(|f| f.f_at_5)),
        f_at_15: mean_all(frames.iter().map(|f| f.f_at_15)),
    };
    Ok(HandEvaluation {
        report,
        frames,
        joint_curve,
        vertex_curve,
    })
}

/// Per-bucket means of the frame metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricMeans {
    pub count: usize,
    pub j_pe: f64,
    pub pa_j_pe: Option<f64>,
    pub v_pe: Option<f64>,
    pub pa_v_pe: Option<f64>,
    pub f_at_5: Option<f64>,
    pub f_at_15: Option<f64>,
}

impl MetricMeans {
    pub fn of(frames: &[&FrameMetrics]) -> Option<Self> {
        if frames.is_empty() {
            return None;
        }
        Some(Self {
            count: frames.len(),
            j_pe: mean_all(frames.iter().map(|f| Some(f.j_pe)))?,
            pa_j_pe: mean_all(frames.iter().map(|f| f.pa_j_pe)),
            v_pe: mean_all(frames.iter().map(|f| f.v_pe)),
            pa_v_pe: mean_all(frames.iter().map(|f| f.pa_v_pe)),
            f_at_5: mean_all(frames.iter().map(|f| f.f_at_5)),
            f_at_15: mean_all(frames.iter().map(|f| f.f_at_15)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcclusionBucket {
    pub lower: f64,
    pub upper: f64,
    /// `None` when no sample fell in the bucket.
    pub metrics: Option<MetricMeans>,
}

/// Assigns each sample to `[edges[i], edges[i+1])` (last bucket closed) and
/// averages per bucket. Samples below the first edge are left out.
pub fn bucket_by_occlusion(
    samples: &[(f64, FrameMetrics)],
    edges: &[f64],
) -> Result<Vec<OcclusionBucket>, MetricsError> {
    if edges.len() < 2 {
        return Err(MetricsError::EmptyInput("at least two bucket edges"));
    }
    if edges.windows(2).any(|w| w[1] <= w[0]) || edges.iter().any(|e| !e.is_finite()) {
        return Err(MetricsError::UnsortedThresholds);
    }
    let nb = edges.len() - 1;
    let mut members: Vec<Vec<&FrameMetrics>> = vec![Vec::new(); nb];
    for (proportion, metrics) in samples {
        if let Some(b) = bucket_index(*proportion, edges) {
            members[b].push(metrics);
        }
    }
    Ok(members
        .iter()
        .enumerate()
        .map(|(i, m)| OcclusionBucket {
            lower: edges[i],
            upper: edges[i + 1],
            metrics: MetricMeans::of(m),
        })
        .collect())
}

fn bucket_index(p: f64, edges: &[f64]) -> Option<usize> {
    let last = edges.len() - 1;
    if p == edges[last] {
        return Some(last - 1);
    }
    (0..last).find(|&i| p >= edges[i] && p < edges[i + 1])
}
