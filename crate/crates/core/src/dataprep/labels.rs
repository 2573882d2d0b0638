use super::record::FrameRecord;
use super::DataprepError;
use crate::geometry::{relative_rotation_error, relative_translation_error, RigidPose};

/// Default grasp thresholds: 5° rotation, 10 mm translation.
pub const DEFAULT_RRE_DEG: f64 = 5.0;
pub const DEFAULT_RTE_MM: f64 = 10.0;
/// Default occlusion threshold for paired feature enhancement.
pub const DEFAULT_TAU: f64 = 0.1;

// Slack absorbing rounding in the recovered angle/distance so that a frame
// constructed exactly at a threshold is not labeled by accident.
const ANGLE_SLACK: f64 = 1e-12;
const DIST_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspThresholds {
    pub rre_rad: f64,
    pub rte_mm: f64,
}

impl Default for GraspThresholds {
    fn default() -> Self {
        Self {
            rre_rad: DEFAULT_RRE_DEG.to_radians(),
            rte_mm: DEFAULT_RTE_MM,
        }
    }
}

impl GraspThresholds {
    pub fn from_degrees(rre_deg: f64, rte_mm: f64) -> Self {
        Self {
            rre_rad: rre_deg.to_radians(),
            rte_mm,
        }
    }
}

/// Which frame serves as the motion reference of a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReferencePolicy {
    /// The lowest-index frame; it must carry a pose whenever any frame does.
    #[default]
    StrictInitial,
    /// The lowest-index frame that carries an object pose.
    FirstAnnotated,
}

/// Whether the object moved beyond either threshold relative to `reference`.
pub fn is_grasped(pose: &RigidPose, reference: &RigidPose, thresholds: GraspThresholds) -> bool {
    let rre = relative_rotation_error(&pose.rotation, &reference.rotation);
    let rte = relative_translation_error(pose.translation, reference.translation);
    rre > thresholds.rre_rad + ANGLE_SLACK || rte > thresholds.rte_mm + DIST_SLACK
}

/// Labels every frame of one sequence. Frames without an object pose are
/// non-grasping. Output order follows the input.
pub fn label_grasping(
    sequence: &[FrameRecord],
    thresholds: GraspThresholds,
    policy: ReferencePolicy,
) -> Result<Vec<FrameRecord>, DataprepError> {
    let Some(first) = sequence.first() else {
        return Ok(Vec::new());
    };
    if let Some(other) = sequence.iter().find(|r| r.sequence_id != first.sequence_id) {
        return Err(DataprepError::MixedSequences {
            expected: first.sequence_id.clone(),
            found: other.sequence_id.clone(),
        });
    }
    let initial = sequence
        .iter()
        .min_by_key(|r| r.frame_index)
        .expect("non-empty");
    let annotated = sequence
        .iter()
        .filter(|r| r.object_pose().is_some())
        .min_by_key(|r| r.frame_index);
    let reference = match (policy, annotated) {
        (_, None) => None,
        (ReferencePolicy::FirstAnnotated, Some(r)) => r.object_pose().copied(),
        (ReferencePolicy::StrictInitial, Some(_)) => Some(*initial.object_pose().ok_or_else(
            || DataprepError::MissingReference {
                sequence_id: first.sequence_id.clone(),
                frame_id: initial.frame_id.clone(),
            },
        )?),
    };
    Ok(sequence
        .iter()
        .map(|r| {
            let mut out = r.clone();
            out.grasping = Some(match (reference.as_ref(), r.object_pose()) {
                (Some(reference), Some(pose)) => is_grasped(pose, reference, thresholds),
                _ => false,
            });
            out
        })
        .collect())
}

/// Groups records by sequence (first-appearance order), labels each, and
/// returns them in the original order.
pub fn label_all(
    records: &[FrameRecord],
    thresholds: GraspThresholds,
    policy: ReferencePolicy,
) -> Result<Vec<FrameRecord>, DataprepError> {
    let mut order: Vec<&str> = Vec::new();
    for r in records {
        if !order.contains(&r.sequence_id.as_str()) {
            order.push(&r.sequence_id);
        }
    }
    let mut labeled: Vec<Option<FrameRecord>> = vec![None; records.len()];
    for seq in order {
        let idx: Vec<usize> = (0..records.len())
            .filter(|&i| records[i].sequence_id == seq)
            .collect();
        let frames: Vec<FrameRecord> = idx.iter().map(|&i| records[i].clone()).collect();
        for (i, r) in idx
            .into_iter()
            .zip(label_grasping(&frames, thresholds, policy)?)
        {
            labeled[i] = Some(r);
        }
    }
    Ok(labeled
        .into_iter()
        .map(|r| r.expect("every record labeled"))
        .collect())
}

/// Partitions labeled records into hand-only and hand-object scenes,
/// preserving order within each part.
pub fn split_scenes(
    records: &[FrameRecord],
) -> Result<(Vec<FrameRecord>, Vec<FrameRecord>), DataprepError> {
    let mut hand_only = Vec::new();
    let mut hand_object = Vec::new();
    for r in records {
        match r.grasping {
            Some(true) => hand_object.push(r.clone()),
            Some(false) => hand_only.push(r.clone()),
            None => {
                return Err(DataprepError::UnlabeledRecord {
                    frame_id: r.frame_id.clone(),
                })
            }
        }
    }
    Ok((hand_only, hand_object))
}

/// The occlusion-aware case filter: occluded enough and grasping.
pub fn is_enhancement_eligible(occlusion: f64, grasping: bool, tau: f64) -> bool {
    occlusion >= tau && grasping
}

pub fn enhancement_eligible(record: &FrameRecord, tau: f64) -> Result<bool, DataprepError> {
    let missing = |field: &str| DataprepError::MissingAnnotation {
        frame_id: record.frame_id.clone(),
        field: field.to_string(),
    };
    let occlusion = record
        .occlusion
        .ok_or_else(|| missing("labels.occlusion"))?;
    let grasping = record.grasping.ok_or_else(|| missing("labels.grasping"))?;
    Ok(is_enhancement_eligible(occlusion, grasping, tau))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataprep::record::{HandAnnotation, ObjectAnnotation};
    use crate::geometry::{CameraIntrinsics, PointSet3, Rotation3};

    fn record(index: u64, pose: Option<RigidPose>) -> FrameRecord {
        FrameRecord {
            frame_id: format!("f{index}"),
            sequence_id: "seq".into(),
            frame_index: index,
            hand: HandAnnotation {
                joints_3d: PointSet3::new(vec![[0.0; 3]; 21]).unwrap(),
                joints_2d: vec![[0.0; 2]; 21],
                vertices_3d: None,
                mano_pose: vec![0.0; 48],
                mano_shape: vec![0.0; 10],
            },
            intrinsics: CameraIntrinsics::new(500.0, 500.0, 0.0, 0.0).unwrap(),
            object: pose.map(|p| ObjectAnnotation {
                id: "box".into(),
                pose: Some(p),
                keypoints: None,
                keypoints_2d: None,
                diameter: None,
            }),
            amodal_mask: None,
            full_mask: None,
            grasping: None,
            occlusion: None,
        }
    }

    fn at(angle_deg: f64, shift_mm: f64) -> RigidPose {
        RigidPose::new(
            Rotation3::rot_z(angle_deg.to_radians()),
            [shift_mm, 0.0, 500.0],
        )
    }

    fn labels(records: &[FrameRecord]) -> Vec<bool> {
        label_grasping(
            records,
            GraspThresholds::default(),
            ReferencePolicy::default(),
        )
        .unwrap()
        .iter()
        .map(|r| r.grasping.unwrap())
        .collect()
    }

    #[test]
    fn static_object_never_grasped() {
        let seq: Vec<_> = (0..5).map(|i| record(i, Some(at(0.0, 0.0)))).collect();
        assert_eq!(labels(&seq), vec![false; 5]);
    }

    #[test]
    fn rotation_beyond_threshold() {
        let seq = vec![record(0, Some(at(0.0, 0.0))), record(1, Some(at(6.0, 0.0)))];
        assert_eq!(labels(&seq), vec![false, true]);
    }

    #[test]
    fn either_criterion_suffices() {
        let pose = at(4.0, 12.0);
        let reference = at(0.0, 0.0);
        // Scalar evaluation of the two error measures.
        let rre = relative_rotation_error(&pose.rotation, &reference.rotation).to_degrees();
        let rte = relative_translation_error(pose.translation, reference.translation);
        assert!(rre < 5.0 && rte > 10.0);
        let seq = vec![record(0, Some(reference)), record(1, Some(pose))];
        assert_eq!(labels(&seq), vec![false, true]);
    }

    #[test]
    fn frames_without_object_are_not_grasped() {
        let seq = vec![
            record(0, None),
            record(1, Some(at(0.0, 0.0))),
            record(2, Some(at(20.0, 0.0))),
        ];
        let labeled = label_grasping(
            &seq,
            GraspThresholds::default(),
            ReferencePolicy::FirstAnnotated,
        )
        .unwrap();
        let got: Vec<bool> = labeled.iter().map(|r| r.grasping.unwrap()).collect();
        assert_eq!(got, vec![false, false, true]);
        let gap = vec![
            record(0, Some(at(0.0, 0.0))),
            record(1, None),
            record(2, Some(at(20.0, 0.0))),
        ];
        assert_eq!(labels(&gap), vec![false, false, true]);
    }

    #[test]
    fn strict_policy_requires_initial_pose() {
        let seq = vec![record(0, None), record(1, Some(at(0.0, 0.0)))];
        assert!(matches!(
            label_grasping(&seq, GraspThresholds::default(), ReferencePolicy::default()),
            Err(DataprepError::MissingReference { .. })
        ));
        let none = vec![record(0, None), record(1, None)];
        assert!(label_grasping(
            &none,
            GraspThresholds::default(),
            ReferencePolicy::StrictInitial
        )
        .is_ok());
    }

    #[test]
    fn order_independent_and_idempotent() {
        let seq: Vec<_> = (0..6)
            .map(|i| record(i, Some(at(i as f64 * 2.0, 0.0))))
            .collect();
        let forward = labels(&seq);
        let mut reversed = seq.clone();
        reversed.reverse();
        let mut back = labels(&reversed);
        back.reverse();
        assert_eq!(forward, back);
        let once =
            label_grasping(&seq, GraspThresholds::default(), ReferencePolicy::default()).unwrap();
        let twice = label_grasping(
            &once,
            GraspThresholds::default(),
            ReferencePolicy::default(),
        )
        .unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn split_partitions() {
        let mut a = record(0, Some(at(0.0, 0.0)));
        let mut b = record(1, Some(at(0.0, 0.0)));
        let mut c = record(2, Some(at(0.0, 0.0)));
        a.grasping = Some(false);
        b.grasping = Some(true);
        c.grasping = Some(false);
        let (ho, obj) = split_scenes(&[a.clone(), b.clone(), c.clone()]).unwrap();
        assert_eq!(ho, vec![a, c.clone()]);
        assert_eq!(obj, vec![b]);
        let unlabeled = record(3, None);
        assert!(matches!(
            split_scenes(&[c, unlabeled]),
            Err(DataprepError::UnlabeledRecord { .. })
        ));
    }

    #[test]
    fn eligibility() {
        assert!(is_enhancement_eligible(0.3, true, DEFAULT_TAU));
        assert!(!is_enhancement_eligible(0.05, true, DEFAULT_TAU));
        assert!(!is_enhancement_eligible(0.5, false, DEFAULT_TAU));
        assert!(is_enhancement_eligible(DEFAULT_TAU, true, DEFAULT_TAU));
        let r = record(0, None);
        assert!(matches!(
            enhancement_eligible(&r, DEFAULT_TAU),
            Err(DataprepError::MissingAnnotation { .. })
        ));
    }
}
