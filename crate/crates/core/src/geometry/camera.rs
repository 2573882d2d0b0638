use serde::{Deserialize, Serialize};

use super::pose::{PointSet3, RigidPose};
use super::GeometryError;

const MIN_DEPTH: f64 = 1e-9;

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, GeometryError> {
        let cam = Self { fx, fy, cx, cy };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0)
            || ![self.fx, self.fy, self.cx, self.cy]
                .iter()
                .all(|v| v.is_finite())
        {
            return Err(GeometryError::InvalidIntrinsics);
        }
        Ok(())
    }

    /// Projects a camera-frame point.
    pub fn project(&self, p: [f64; 3]) -> Result<[f64; 2], GeometryError> {
        if p[2] <= MIN_DEPTH {
            return Err(GeometryError::BehindCamera { depth: p[2] });
        }
        Ok([
            self.fx * p[0] / p[2] + self.cx,
            self.fy * p[1] / p[2] + self.cy,
        ])
    }
}

/// Transforms `points` by `pose` and projects them with the pinhole model.
pub fn project_points(
    points: &PointSet3,
    pose: &RigidPose,
    cam: &CameraIntrinsics,
) -> Result<Vec<[f64; 2]>, GeometryError> {
    points
        .points()
        .iter()
        .map(|p| cam.project(pose.apply(*p)))
        .collect()
}
