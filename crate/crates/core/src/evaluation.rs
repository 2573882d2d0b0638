//! Manifest-level evaluation: hand metrics per scene split, object ADD,
//! occlusion buckets, and PnP object-pose recovery.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataprep::{DataprepError, FrameRecord, ManifestLine};
use crate::geometry::{solve_pnp_epnp, PointSet3, RigidPose};
use crate::metrics::{
    add_half_diameter, add_metric, bucket_by_occlusion, evaluate_hand, AddReport, AddSample,
    EvalConfig, HandPair, MetricsError, OcclusionBucket, PckCurve, PoseErrorReport,
};

#[derive(Debug, thiserror::Error)]
pub enum EvaluationError {
    #[error("frames without a counterpart: {missing_in_pred:?} missing from predictions, {missing_in_gt:?} missing from ground truth")]
    FrameMismatch {
        missing_in_pred: Vec<String>,
        missing_in_gt: Vec<String>,
    },
    #[error("duplicate frame id `{0}`")]
    DuplicateFrame(String),
    #[error("frame `{frame_id}`: {source}")]
    Frame {
        frame_id: String,
        #[source]
        source: MetricsError,
    },
    #[error(transparent)]
    Dataprep(#[from] DataprepError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, PartialEq)]
#[derive(Default)]
pub struct EvaluationOptions {
    pub config: EvalConfig,
    /// Occlusion bucket edges; `None` skips bucketing.
    pub occlusion_edges: Option<Vec<f64>>,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub hand: PoseErrorReport,
    /// ADD-0.5D over frames whose ground truth carries pose, keypoints and diameter.
    pub objects: Option<AddReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRange {
    pub start: f64,
    pub end: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub thresholds: ThresholdRange,
    pub procrustes: bool,
    pub all: SplitReport,
    /// Present when every ground-truth frame carries a grasping label and
    /// the split is non-empty.
    pub hand_only: Option<SplitReport>,
    pub hand_object: Option<SplitReport>,
    pub occlusion: Option<Vec<OcclusionBucket>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvaluationReport,
    pub joint_curve: PckCurve,
    pub vertex_curve: Option<PckCurve>,
}

struct Matched<'a> {
    pred: &'a FrameRecord,
    gt: &'a FrameRecord,
    pair: HandPair,
}

fn index_by_id(records: &[FrameRecord]) -> Result<BTreeMap<&str, &FrameRecord>, EvaluationError> {
    let mut map = BTreeMap::new();
    for r in records {
        if map.insert(r.frame_id.as_str(), r).is_some() {
            return Err(EvaluationError::DuplicateFrame(r.frame_id.clone()));
        }
    }
    Ok(map)
}

/// Pairs predictions with ground truth by frame id, in ground-truth order.
fn match_frames<'a>(
    pred: &'a [FrameRecord],
    gt: &'a [FrameRecord],
    pred_dir: &Path,
    gt_dir: &Path,
) -> Result<Vec<Matched<'a>>, EvaluationError> {
    let pred_by_id = index_by_id(pred)?;
    let gt_by_id = index_by_id(gt)?;
    let missing_in_pred: Vec<String> = gt_by_id
        .keys()
        .filter(|id| !pred_by_id.contains_key(*id))
        .map(|s| s.to_string())
        .collect();
    let missing_in_gt: Vec<String> = pred_by_id
        .keys()
        .filter(|id| !gt_by_id.contains_key(*id))
        .map(|s| s.to_string())
        .collect();
    if !missing_in_pred.is_empty() || !missing_in_gt.is_empty() {
        return Err(EvaluationError::FrameMismatch {
            missing_in_pred,
            missing_in_gt,
        });
    }
    gt.iter()
        .map(|g| {
            let p = pred_by_id[g.frame_id.as_str()];
            let vertices = match (&p.hand.vertices_3d, &g.hand.vertices_3d) {
                (Some(pv), Some(gv)) => Some((pv.resolve(pred_dir)?, gv.resolve(gt_dir)?)),
                _ => None,
            };
            Ok(Matched {
                pred: p,
                gt: g,
                pair: HandPair {
                    pred_joints: p.hand.joints_3d.clone(),
                    gt_joints: g.hand.joints_3d.clone(),
                    vertices,
                },
            })
        })
        .collect()
}

fn add_sample(pred: &FrameRecord, gt: &FrameRecord) -> Option<AddSample> {
    let object = gt.object.as_ref()?;
    Some(AddSample {
        object_id: object.id.clone(),
        model_points: object.keypoints.clone()?,
        diameter: object.diameter?,
        pred: pred.object_pose().copied(),
        gt: object.pose?,
    })
}

fn split_report(
    frames: &[&Matched<'_>],
    config: &EvalConfig,
) -> Result<Option<SplitReport>, EvaluationError> {
    if frames.is_empty() {
        return Ok(None);
    }
    let pairs: Vec<HandPair> = frames.iter().map(|m| m.pair.clone()).collect();
    let hand = evaluate_hand(&pairs, config)?.report;
    let samples: Vec<AddSample> = frames
        .iter()
        .filter_map(|m| add_sample(m.pred, m.gt))
        .collect();
    let objects = if samples.is_empty() {
        None
    } else {
        Some(add_half_diameter(&samples)?)
    };
    Ok(Some(SplitReport { hand, objects }))
}

/// Evaluates predictions against ground truth. Vertex files are resolved
/// relative to the respective manifest directories.
pub fn evaluate_manifests(
    pred: &[FrameRecord],
    gt: &[FrameRecord],
    pred_dir: &Path,
    gt_dir: &Path,
    options: &EvaluationOptions,
) -> Result<Evaluation, EvaluationError> {
    let matched = match_frames(pred, gt, pred_dir, gt_dir)?;
    if matched.is_empty() {
        return Err(MetricsError::EmptyInput("frames").into());
    }
    let config = &options.config;
    let pairs: Vec<HandPair> = matched.iter().map(|m| m.pair.clone()).collect();
    let full = evaluate_hand(&pairs, config)?;
    let everything: Vec<&Matched<'_>> = matched.iter().collect();
    let all = split_report(&everything, config)?.expect("non-empty");

    let labeled = matched.iter().all(|m| m.gt.grasping.is_some());
    let (hand_only, hand_object) = if labeled {
        let ho: Vec<&Matched<'_>> = matched
            .iter()
            .filter(|m| m.gt.grasping == Some(false))
            .collect();
        let obj: Vec<&Matched<'_>> = matched
            .iter()
            .filter(|m| m.gt.grasping == Some(true))
            .collect();
        (split_report(&ho, config)?, split_report(&obj, config)?)
    } else {
        (None, None)
    };

    let occlusion = match &options.occlusion_edges {
        None => None,
        Some(edges) => {
            let samples: Vec<(f64, _)> = matched
                .iter()
                .zip(&full.frames)
                .filter_map(|(m, f)| m.gt.occlusion.map(|o| (o, f.clone())))
                .collect();
            Some(bucket_by_occlusion(&samples, edges)?)
        }
    };

    let t = &config.thresholds;
    Ok(Evaluation {
        report: EvaluationReport {
            thresholds: ThresholdRange {
                start: t[0],
                end: t[t.len() - 1],
                count: t.len(),
            },
            procrustes: config.procrustes,
            all,
            hand_only,
            hand_object,
            occlusion,
        },
        joint_curve: full.joint_curve,
        vertex_curve: full.vertex_curve,
    })
}

/// PnP outcome for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnpFrame {
    pub frame_id: String,
    pub pose: Option<RigidPose>,
    /// ADD against the ground-truth pose, when available.
    pub add: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnpReport {
    pub frames: Vec<PnpFrame>,
    pub solved: usize,
    pub failed: usize,
    pub objects: Option<AddReport>,
}

fn solve_frame(record: &FrameRecord) -> Result<RigidPose, String> {
    let object = record.object.as_ref().ok_or("no object annotation")?;
    let model = object.keypoints.as_ref().ok_or("no model keypoints")?;
    let image = object
        .keypoints_2d
        .as_ref()
        .ok_or("no predicted 2D keypoints")?;
    solve_pnp_epnp(model, image, &record.intrinsics).map_err(|e| e.to_string())
}

/// Recovers object poses from predicted 2D keypoints. Lines that fail
/// validation and frames where PnP fails are recorded and skipped; ADD is
/// computed against `gt` (matched by frame id) when given.
pub fn recover_object_poses(
    lines: Vec<ManifestLine>,
    gt: Option<&[FrameRecord]>,
) -> Result<(PnpReport, Vec<FrameRecord>), EvaluationError> {
    let gt_by_id = gt.map(index_by_id).transpose()?;
    let mut seen = BTreeSet::new();
    for l in &lines {
        if let Some(id) = l.frame_id() {
            if !seen.insert(id.to_string()) {
                return Err(EvaluationError::DuplicateFrame(id.to_string()));
            }
        }
    }
    let results: Vec<(PnpFrame, Option<FrameRecord>)> = lines
        .into_par_iter()
        .map(|line| {
            let fallback_id = line
                .frame_id()
                .map(str::to_string)
                .unwrap_or_else(|| format!("line {}", line.line));
            let record = match line.validate() {
                Ok(r) => r,
                Err(e) => {
                    let frame = PnpFrame {
                        frame_id: fallback_id,
                        pose: None,
                        add: None,
                        error: Some(e.to_string()),
                    };
                    return (frame, None);
                }
            };
            let solved = solve_frame(&record);
            let gt_object = gt_by_id
                .as_ref()
                .and_then(|m| m.get(record.frame_id.as_str()))
                .and_then(|g| g.object.as_ref());
            let add = match (&solved, gt_object) {
                (Ok(pose), Some(o)) => o
                    .pose
                    .zip(o.keypoints.as_ref())
                    .map(|(g, model)| add_metric(model, pose, &g)),
                _ => None,
            };
            let mut updated = record.clone();
            if let (Ok(pose), Some(o)) = (&solved, updated.object.as_mut()) {
                o.pose = Some(*pose);
            }
            let frame = PnpFrame {
                frame_id: record.frame_id.clone(),
                pose: solved.as_ref().ok().copied(),
                add,
                error: solved.err(),
            };
            (frame, Some(updated))
        })
        .collect();

    let mut samples = Vec::new();
    if let Some(map) = &gt_by_id {
        for (frame, _) in &results {
            if let Some(g) = map.get(frame.frame_id.as_str()) {
                let Some(o) = g.object.as_ref() else { continue };
                if let (Some(gt_pose), Some(model), Some(diameter)) =
                    (o.pose, o.keypoints.clone(), o.diameter)
                {
                    samples.push(AddSample {
                        object_id: o.id.clone(),
                        model_points: model,
                        diameter,
                        pred: frame.pose,
                        gt: gt_pose,
                    });
                }
            }
        }
    }
    let objects = if samples.is_empty() {
        None
    } else {
        Some(add_half_diameter(&samples)?)
    };
    let solved = results.iter().filter(|(f, _)| f.pose.is_some()).count();
    let (frames, records): (Vec<PnpFrame>, Vec<Option<FrameRecord>>) = results.into_iter().unzip();
    Ok((
        PnpReport {
            failed: frames.len() - solved,
            solved,
            frames,
            objects,
        },
        records.into_iter().flatten().collect(),
    ))
}

/// Model points of an axis-aligned box centered at the origin: its 8 corners.
pub fn box_corners(half_extents: [f64; 3]) -> PointSet3 {
    let [a, b, c] = half_extents;
    let mut pts = Vec::with_capacity(8);
    for sx in [-1.0, 1.0] {
        for sy in [-1.0, 1.0] {
            for sz in [-1.0, 1.0] {
                pts.push([sx * a, sy * b, sz * c]);
            }
        }
    }
    PointSet3::new(pts).expect("finite corners")
}
