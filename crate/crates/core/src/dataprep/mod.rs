//! Manifest IO, occlusion proportions from masks, and grasp labeling.

mod labels;
mod mask;
mod record;

use std::path::PathBuf;

pub use labels::{
    enhancement_eligible, is_enhancement_eligible, is_grasped, label_all, label_grasping,
    split_scenes, GraspThresholds, ReferencePolicy, DEFAULT_RRE_DEG, DEFAULT_RTE_MM, DEFAULT_TAU,
};
pub use mask::{
    mask_iou, occlusion_proportion, occlusion_proportion_with, BinaryMask, MaskRef, OcclusionMode,
};
pub use record::{
    load_manifest, read_manifest, read_manifest_lines, record_to_line, save_manifest,
    write_manifest, FrameRecord, HandAnnotation, ManifestLine, ObjectAnnotation, VertexData,
    MANO_POSE_DIM, MANO_SHAPE_DIM, NUM_JOINTS, NUM_VERTICES,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DataprepError {
    #[error("invalid mask: {0}")]
    InvalidMask(String),
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error("mask size mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("both masks are empty")]
    EmptyUnion,
    #[error("line {line}: field `{field}`: {message}")]
    Schema {
        line: usize,
        field: String,
        message: String,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("sequence `{sequence_id}`: initial frame `{frame_id}` has no object pose")]
    MissingReference {
        sequence_id: String,
        frame_id: String,
    },
    #[error("frame `{frame_id}` has no grasping label")]
    UnlabeledRecord { frame_id: String },
    #[error("frame `{frame_id}` is missing `{field}`")]
    MissingAnnotation { frame_id: String, field: String },
    #[error("expected sequence `{expected}`, found `{found}`")]
    MixedSequences { expected: String, found: String },
}
