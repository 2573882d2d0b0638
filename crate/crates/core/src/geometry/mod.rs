//! Rigid and similarity transforms, rotation error measures, Procrustes
//! alignment, pinhole projection and EPnP pose recovery.
//!
//! Units are millimeters and radians throughout.

mod camera;
mod epnp;
pub mod linalg;
mod pose;
mod procrustes;

pub use camera::{project_points, CameraIntrinsics};
pub use epnp::{reprojection_error, solve_pnp_epnp, solve_pnp_epnp_with, EpnpOptions};
pub use linalg::{svd3, Mat3, Svd3, Vec3};
pub use pose::{
    relative_rotation_error, relative_translation_error, PointSet3, RigidPose, Rotation3,
    SimilarityTransform,
};
pub use procrustes::{alignment_residual, procrustes_align};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("invalid rotation matrix: {0}")]
    InvalidRotation(String),
    #[error("similarity scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("point set is empty")]
    EmptyPointSet,
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("flat array of length {len} is not a multiple of {stride}")]
    FlatLength { len: usize, stride: usize },
    #[error("point count mismatch: {left} vs {right}")]
    ShapeMismatch { left: usize, right: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("camera intrinsics need positive finite focal lengths")]
    InvalidIntrinsics,
    #[error("point behind camera (depth {depth})")]
    BehindCamera { depth: f64 },
    #[error("PnP needs at least {need} points, got {got}")]
    InsufficientPoints { got: usize, need: usize },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}
