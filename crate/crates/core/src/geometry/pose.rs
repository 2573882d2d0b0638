use serde::{Deserialize, Serialize};

use super::linalg::{self, Mat3, Vec3, IDENTITY3};
use super::GeometryError;

const ROTATION_TOL: f64 = 1e-9;

/// A proper rotation matrix (orthonormal, determinant +1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 3]; 3]", into = "[[f64; 3]; 3]")]
pub struct Rotation3(Mat3);

impl Rotation3 {
    pub const IDENTITY: Rotation3 = Rotation3(IDENTITY3);

    pub fn new(m: Mat3) -> Result<Self, GeometryError> {
        if m.iter().flatten().any(|x| !x.is_finite()) {
            return Err(GeometryError::InvalidRotation("non-finite entry".into()));
        }
        let gram = linalg::mat_mul(&linalg::transpose(&m), &m);
        for i in 0..3 {
            for j in 0..3 {
                if (gram[i][j] - IDENTITY3[i][j]).abs() > ROTATION_TOL {
                    return Err(GeometryError::InvalidRotation(format!(
                        "not orthonormal (entry ({i},{j}) of mᵀm is {})",
                        gram[i][j]
                    )));
                }
            }
        }
        let d = linalg::det(&m);
        if (d - 1.0).abs() > ROTATION_TOL {
            return Err(GeometryError::InvalidRotation(format!("determinant {d}")));
        }
        Ok(Rotation3(m))
    }

    /// Builds from a row-major 9-vector.
    pub fn from_row_major(v: &[f64]) -> Result<Self, GeometryError> {
        if v.len() != 9 {
            return Err(GeometryError::InvalidRotation(format!(
                "expected 9 entries, got {}",
                v.len()
            )));
        }
        Self::new([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]])
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let n = linalg::norm(axis);
        if n == 0.0 || angle == 0.0 {
            return Self::IDENTITY;
        }
        let [x, y, z] = linalg::scale(axis, 1.0 / n);
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        Rotation3([
            [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
            [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
            [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
        ])
    }

    pub fn rot_x(angle: f64) -> Self {
        Self::from_axis_angle([1.0, 0.0, 0.0], angle)
    }

    pub fn rot_y(angle: f64) -> Self {
        Self::from_axis_angle([0.0, 1.0, 0.0], angle)
    }

    pub fn rot_z(angle: f64) -> Self {
        Self::from_axis_angle([0.0, 0.0, 1.0], angle)
    }

    /// Rotation from a (not necessarily normalized) quaternion `w, x, y, z`.
    pub fn from_quaternion(q: [f64; 4]) -> Self {
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        let [w, x, y, z] = q.map(|v| v / n);
        Rotation3([
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ])
    }

    /// Wraps a matrix already known to be a rotation up to rounding.
    pub(crate) fn from_matrix_unchecked(m: Mat3) -> Self {
        Rotation3(m)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        ]
    }

    pub fn transpose(&self) -> Self {
        Rotation3(linalg::transpose(&self.0))
    }

    pub fn compose(&self, other: &Rotation3) -> Self {
        Rotation3(linalg::mat_mul(&self.0, &other.0))
    }

    pub fn apply(&self, v: Vec3) -> Vec3 {
        linalg::mat_vec(&self.0, v)
    }
}

impl TryFrom<[[f64; 3]; 3]> for Rotation3 {
    type Error = GeometryError;

    fn try_from(m: [[f64; 3]; 3]) -> Result<Self, Self::Error> {
        Rotation3::new(m)
    }
}

impl From<Rotation3> for [[f64; 3]; 3] {
    fn from(r: Rotation3) -> Self {
        r.0
    }
}

/// Object pose: `x_cam = R·x + t`, translation in millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidPose {
    pub rotation: Rotation3,
    pub translation: Vec3,
}

impl RigidPose {
    pub const IDENTITY: RigidPose = RigidPose {
        rotation: Rotation3::IDENTITY,
        translation: [0.0; 3],
    };

    pub fn new(rotation: Rotation3, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        linalg::add(self.rotation.apply(p), self.translation)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidPose) -> RigidPose {
        RigidPose {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.apply(other.translation),
        }
    }

    pub fn inverse(&self) -> RigidPose {
        let rt = self.rotation.transpose();
        RigidPose {
            rotation: rt,
            translation: linalg::scale(rt.apply(self.translation), -1.0),
        }
    }
}

/// `y = s·R·x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: Rotation3,
    pub translation: Vec3,
}

impl SimilarityTransform {
    pub fn new(scale: f64, rotation: Rotation3, translation: Vec3) -> Result<Self, GeometryError> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(GeometryError::InvalidScale(scale));
        }
        Ok(Self {
            scale,
            rotation,
            translation,
        })
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        linalg::add(
            linalg::scale(self.rotation.apply(p), self.scale),
            self.translation,
        )
    }

    pub fn apply_all(&self, points: &PointSet3) -> PointSet3 {
        PointSet3(points.0.iter().map(|p| self.apply(*p)).collect())
    }
}

/// Non-empty set of finite 3D points (millimeters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 3]>", into = "Vec<[f64; 3]>")]
pub struct PointSet3(Vec<Vec3>);

impl PointSet3 {
    pub fn new(points: Vec<Vec3>) -> Result<Self, GeometryError> {
        if points.is_empty() {
            return Err(GeometryError::EmptyPointSet);
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        Ok(PointSet3(points))
    }

    /// Groups a flat `[x0, y0, z0, x1, …]` array.
    pub fn from_flat(flat: &[f64]) -> Result<Self, GeometryError> {
        if !flat.len().is_multiple_of(3) {
            return Err(GeometryError::FlatLength {
                len: flat.len(),
                stride: 3,
            });
        }
        Self::new(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
    }

    pub fn points(&self) -> &[Vec3] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.0.iter().flatten().copied().collect()
    }

    pub fn centroid(&self) -> Vec3 {
        linalg::centroid(&self.0)
    }

    pub fn transformed(&self, pose: &RigidPose) -> PointSet3 {
        PointSet3(self.0.iter().map(|p| pose.apply(*p)).collect())
    }

    /// Largest pairwise distance.
    pub fn diameter(&self) -> f64 {
        let mut best = 0.0_f64;
        for (i, a) in self.0.iter().enumerate() {
            for b in &self.0[i + 1..] {
                best = best.max(linalg::norm(linalg::sub(*a, *b)));
            }
        }
        best
    }
}

impl TryFrom<Vec<[f64; 3]>> for PointSet3 {
    type Error = GeometryError;

    fn try_from(v: Vec<[f64; 3]>) -> Result<Self, Self::Error> {
        PointSet3::new(v)
    }
}

impl From<PointSet3> for Vec<[f64; 3]> {
    fn from(p: PointSet3) -> Self {
        p.0
    }
}

/// Angle of the relative rotation `aᵀb`, in radians within `[0, π]`.
pub fn relative_rotation_error(a: &Rotation3, b: &Rotation3) -> f64 {
    let rel = linalg::mat_mul(&linalg::transpose(a.matrix()), b.matrix());
    let cos = (linalg::trace(&rel) - 1.0) / 2.0;
    let sin = 0.5
        * linalg::norm([
            rel[2][1] - rel[1][2],
            rel[0][2] - rel[2][0],
            rel[1][0] - rel[0][1],
        ]);
    sin.atan2(cos)
}

/// Euclidean distance between two translations, in millimeters.
pub fn relative_translation_error(a: Vec3, b: Vec3) -> f64 {
    linalg::norm(linalg::sub(a, b))
}
