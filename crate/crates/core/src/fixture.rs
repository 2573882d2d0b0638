//! Deterministic synthetic hand-object sequences for tests and demos.
//!
//! Two sequences of six frames: in `static` the object never moves, in
//! `grasp` it rotates by 4° and shifts by 3 mm per frame, so from the third
//! frame on it exceeds the default grasp thresholds. Occlusion grows with
//! the frame index. Noise is uniform so that outputs do not depend on
//! platform math libraries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataprep::{
    BinaryMask, FrameRecord, HandAnnotation, MaskRef, ObjectAnnotation, VertexData, MANO_POSE_DIM,
    MANO_SHAPE_DIM, NUM_JOINTS, NUM_VERTICES,
};
use crate::evaluation::box_corners;
use crate::geometry::{CameraIntrinsics, PointSet3, RigidPose, Rotation3, Vec3};

pub const FRAMES_PER_SEQUENCE: u64 = 6;
pub const MASK_SIZE: usize = 32;
pub const BOX_HALF_EXTENTS: [f64; 3] = [30.0, 20.0, 40.0];

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureOptions {
    pub seed: u64,
    /// Half-width of the uniform joint noise of predictions, in mm.
    pub joint_noise_mm: f64,
    pub vertex_noise_mm: f64,
    /// Half-width of the uniform noise on predicted 2D object keypoints.
    pub keypoint_noise_px: f64,
}

impl Default for FixtureOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            joint_noise_mm: 6.0,
            vertex_noise_mm: 8.0,
            keypoint_noise_px: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub gt: Vec<FrameRecord>,
    pub pred: Vec<FrameRecord>,
}

pub fn intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::new(600.0, 600.0, 128.0, 128.0).expect("valid intrinsics")
}

fn jitter(rng: &mut ChaCha8Rng, p: Vec3, half_width: f64) -> Vec3 {
    if half_width == 0.0 {
        return p;
    }
    [
        p[0] + rng.random_range(-half_width..half_width),
        p[1] + rng.random_range(-half_width..half_width),
        p[2] + rng.random_range(-half_width..half_width),
    ]
}

fn project_all(cam: &CameraIntrinsics, points: &[Vec3]) -> Vec<[f64; 2]> {
    points
        .iter()
        .map(|p| cam.project(*p).expect("points lie in front of the camera"))
        .collect()
}

fn hand_for(rng: &mut ChaCha8Rng, center: Vec3) -> (Vec<Vec3>, Vec<Vec3>) {
    let joints: Vec<Vec3> = (0..NUM_JOINTS).map(|_| jitter(rng, center, 45.0)).collect();
    let vertices = (0..NUM_VERTICES)
        .map(|i| jitter(rng, joints[i % NUM_JOINTS], 10.0))
        .collect();
    (joints, vertices)
}

fn object_pose(sequence: usize, index: u64) -> RigidPose {
    let base = RigidPose::new(
        Rotation3::from_axis_angle([0.2, 1.0, 0.3], 0.4),
        [70.0, -25.0, 640.0],
    );
    if sequence == 0 {
        return base;
    }
    let k = index as f64;
    let motion = Rotation3::from_axis_angle([0.3, 1.0, 0.2], (4.0 * k).to_radians());
    RigidPose::new(
        motion.compose(&base.rotation),
        [
            base.translation[0] + 3.0 * k,
            base.translation[1],
            base.translation[2],
        ],
    )
}

/// Occluded rows (out of 24) of the visible hand mask per global frame.
const OCCLUDED_ROWS: [usize; 12] = [0, 3, 6, 9, 12, 15, 18, 21, 2, 8, 14, 20];

fn masks(frame: usize) -> (MaskRef, MaskRef) {
    let full = BinaryMask::from_rect(MASK_SIZE, MASK_SIZE, 4, 4, 28, 28);
    let visible = BinaryMask::from_rect(MASK_SIZE, MASK_SIZE, 4, 4, 28, 28 - OCCLUDED_ROWS[frame]);
    (MaskRef::inline(&visible), MaskRef::inline(&full))
}

pub fn synthetic_fixture(options: &FixtureOptions) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let cam = intrinsics();
    let model = box_corners(BOX_HALF_EXTENTS);
    let diameter = model.diameter();
    let mut gt = Vec::new();
    let mut pred = Vec::new();
    for (s, name) in ["static", "grasp"].iter().enumerate() {
        for index in 0..FRAMES_PER_SEQUENCE {
            let frame = s * FRAMES_PER_SEQUENCE as usize + index as usize;
            let frame_id = format!("{name}_{index:03}");
            let center = [-40.0 + 6.0 * frame as f64, 15.0, 600.0 + 4.0 * frame as f64];
            let (joints, vertices) = hand_for(&mut rng, center);
            let mano_pose: Vec<f64> = (0..MANO_POSE_DIM)
                .map(|_| rng.random_range(-0.5..0.5))
                .collect();
            let mano_shape: Vec<f64> = (0..MANO_SHAPE_DIM)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let pose = object_pose(s, index);
            let (amodal, full) = masks(frame);
            gt.push(FrameRecord {
                frame_id: frame_id.clone(),
                sequence_id: name.to_string(),
                frame_index: index,
                hand: HandAnnotation {
                    joints_3d: PointSet3::new(joints.clone()).expect("finite"),
                    joints_2d: project_all(&cam, &joints),
                    vertices_3d: Some(VertexData::Inline(
                        PointSet3::new(vertices.clone()).expect("finite"),
                    )),
                    mano_pose: mano_pose.clone(),
                    mano_shape: mano_shape.clone(),
                },
                intrinsics: cam,
                object: Some(ObjectAnnotation {
                    id: format!("box_{name}"),
                    pose: Some(pose),
                    keypoints: Some(model.clone()),
                    keypoints_2d: None,
                    diameter: Some(diameter),
                }),
                amodal_mask: Some(amodal),
                full_mask: Some(full),
                grasping: None,
                occlusion: None,
            });

            let pred_joints: Vec<Vec3> = joints
                .iter()
                .map(|p| jitter(&mut rng, *p, options.joint_noise_mm))
                .collect();
            let pred_vertices: Vec<Vec3> = vertices
                .iter()
                .map(|p| jitter(&mut rng, *p, options.vertex_noise_mm))
                .collect();
            // Every fourth frame the predicted object is badly misplaced.
            let offset = if frame % 4 == 3 {
                80.0
            } else {
                rng.random_range(-6.0..6.0)
            };
            let tilt = Rotation3::from_axis_angle([1.0, 0.0, 0.5], rng.random_range(-0.03..0.03));
            let pred_pose = RigidPose::new(
                tilt.compose(&pose.rotation),
                [
                    pose.translation[0] + offset,
                    pose.translation[1],
                    pose.translation[2],
                ],
            );
            let corners: Vec<Vec3> = model.points().iter().map(|p| pose.apply(*p)).collect();
            let keypoints_2d = project_all(&cam, &corners)
                .into_iter()
                .map(|[u, v]| {
                    if options.keypoint_noise_px == 0.0 {
                        [u, v]
                    } else {
                        let w = options.keypoint_noise_px;
                        [u + rng.random_range(-w..w), v + rng.random_range(-w..w)]
                    }
                })
                .collect();
            pred.push(FrameRecord {
                frame_id,
                sequence_id: name.to_string(),
                frame_index: index,
                hand: HandAnnotation {
                    joints_3d: PointSet3::new(pred_joints.clone()).expect("finite"),
                    joints_2d: project_all(&cam, &pred_joints),
                    vertices_3d: Some(VertexData::Inline(
                        PointSet3::new(pred_vertices).expect("finite"),
                    )),
                    mano_pose: mano_pose
                        .iter()
                        .map(|v| v + rng.random_range(-0.05..0.05))
                        .collect(),
                    mano_shape: mano_shape
                        .iter()
                        .map(|v| v + rng.random_range(-0.05..0.05))
                        .collect(),
                },
                intrinsics: cam,
                object: Some(ObjectAnnotation {
                    id: format!("box_{name}"),
                    pose: Some(pred_pose),
                    keypoints: Some(model.clone()),
                    keypoints_2d: Some(keypoints_2d),
                    diameter: Some(diameter),
                }),
                amodal_mask: None,
                full_mask: None,
                grasping: None,
                occlusion: None,
            });
        }
    }
    Fixture { gt, pred }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataprep::{
        label_all, occlusion_proportion, split_scenes, GraspThresholds, ReferencePolicy,
    };

    #[test]
    fn deterministic_and_mixed() {
        let a = synthetic_fixture(&FixtureOptions::default());
        assert_eq!(a, synthetic_fixture(&FixtureOptions::default()));
        assert_eq!(a.gt.len(), 12);
        let labeled = label_all(
            &a.gt,
            GraspThresholds::default(),
            ReferencePolicy::default(),
        )
        .unwrap();
        let (ho, obj) = split_scenes(&labeled).unwrap();
        assert_eq!((ho.len(), obj.len()), (8, 4));
    }

    #[test]
    fn occlusion_levels() {
        let f = synthetic_fixture(&FixtureOptions::default());
        let levels: Vec<f64> =
            f.gt.iter()
                .map(|r| {
                    let a = r
                        .amodal_mask
                        .as_ref()
                        .unwrap()
                        .resolve(std::path::Path::new("."))
                        .unwrap();
                    let b = r
                        .full_mask
                        .as_ref()
                        .unwrap()
                        .resolve(std::path::Path::new("."))
                        .unwrap();
                    occlusion_proportion(&a, &b).unwrap()
                })
                .collect();
        for (l, rows) in levels.iter().zip(OCCLUDED_ROWS) {
            assert!((l - rows as f64 / 24.0).abs() < 1e-15);
        }
    }
}
