//! Efficient Perspective-n-Point.
//!
//! Model points are written as barycentric combinations of four control points
//! (three when the model is planar). The camera-frame control points lie in the
//! null space of a `2N × 3k` system built from the image observations; their
//! scale is fixed by preserving the inter-control-point distances, optionally
//! refined by Gauss-Newton on the null-space coefficients. The best candidate
//! by reprojection error wins.

use super::camera::CameraIntrinsics;
use super::linalg::{self, Vec3};
use super::pose::{PointSet3, RigidPose};
use super::procrustes::rigid_align;
use super::GeometryError;

const GN_MAX_ITERS: usize = 10;
const GN_REL_STEP: f64 = 1e-10;
const PLANAR_RATIO: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpnpOptions {
    /// Gauss-Newton refinement of the null-space coefficients.
    pub refine: bool,
}

impl Default for EpnpOptions {
    fn default() -> Self {
        Self { refine: true }
    }
}

/// Recovers the object pose from 2D-3D correspondences with default options.
pub fn solve_pnp_epnp(
    model_points: &PointSet3,
    image_points: &[[f64; 2]],
    cam: &CameraIntrinsics,
) -> Result<RigidPose, GeometryError> {
    solve_pnp_epnp_with(model_points, image_points, cam, EpnpOptions::default())
}

pub fn solve_pnp_epnp_with(
    model_points: &PointSet3,
    image_points: &[[f64; 2]],
    cam: &CameraIntrinsics,
    options: EpnpOptions,
) -> Result<RigidPose, GeometryError> {
    let world = model_points.points();
    let n = world.len();
    if n < 4 {
        return Err(GeometryError::InsufficientPoints { got: n, need: 4 });
    }
    if image_points.len() != n {
        return Err(GeometryError::ShapeMismatch {
            left: n,
            right: image_points.len(),
        });
    }
    if image_points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    cam.validate()?;

    let basis = ControlBasis::new(world)?;
    let nc = basis.count();
    let alphas: Vec<Vec<f64>> = world.iter().map(|p| basis.barycentric(*p)).collect();

    let null_vectors = null_space(&alphas, image_points, cam, nc)?;
    let diffs = PairDiffs::new(&basis.points, &null_vectors);

    let mut candidates = vec![diffs.betas_one()];
    candidates.push(diffs.betas_two());
    if nc == 4 {
        candidates.push(diffs.betas_three());
    }

    let mut best: Option<(f64, RigidPose)> = None;
    for mut betas in candidates {
        if betas.iter().any(|b| !b.is_finite()) {
            continue;
        }
        if options.refine {
            diffs.gauss_newton(&mut betas);
        }
        let Some(pose) = pose_from_betas(world, &alphas, &null_vectors, &betas, nc) else {
            continue;
        };
        let err = reprojection_error(world, image_points, &pose, cam);
        if err.is_finite() && best.as_ref().is_none_or(|(e, _)| err < *e) {
            best = Some((err, pose));
        }
    }
    best.map(|(_, pose)| pose).ok_or_else(|| {
        GeometryError::NumericalFailure("no EPnP candidate produced a valid pose".into())
    })
}

/// Mean pixel distance between observations and reprojected model points.
pub fn reprojection_error(
    world: &[Vec3],
    image_points: &[[f64; 2]],
    pose: &RigidPose,
    cam: &CameraIntrinsics,
) -> f64 {
    let mut total = 0.0;
    for (p, uv) in world.iter().zip(image_points) {
        match cam.project(pose.apply(*p)) {
            Ok(proj) => total += ((proj[0] - uv[0]).powi(2) + (proj[1] - uv[1]).powi(2)).sqrt(),
            Err(_) => return f64::INFINITY,
        }
    }
    total / world.len() as f64
}

struct ControlBasis {
    /// `points[0]` is the centroid; the rest sit along principal axes.
    points: Vec<Vec3>,
    axes: Vec<Vec3>,
    extents: Vec<f64>,
}

impl ControlBasis {
    fn new(world: &[Vec3]) -> Result<Self, GeometryError> {
        let n = world.len() as f64;
        let c0 = linalg::centroid(world);
        let mut cov = [0.0; 9];
        for p in world {
            let d = linalg::sub(*p, c0);
            for i in 0..3 {
                for j in 0..3 {
                    cov[i * 3 + j] += d[i] * d[j];
                }
            }
        }
        let (values, vectors) = linalg::symmetric_eigen(&cov, 3);
        let largest = values[2];
        if !(largest > 0.0) || values[1] <= PLANAR_RATIO * largest {
            return Err(GeometryError::NumericalFailure(
                "model points are collinear or coincident".into(),
            ));
        }
        let planar = values[0] <= PLANAR_RATIO * largest;
        let used: &[usize] = if planar { &[2, 1] } else { &[2, 1, 0] };
        let mut points = vec![c0];
        let mut axes = Vec::new();
        let mut extents = Vec::new();
        for &k in used {
            let axis = [vectors[k][0], vectors[k][1], vectors[k][2]];
            let extent = (values[k] / n).sqrt();
            points.push(linalg::add(c0, linalg::scale(axis, extent)));
            axes.push(axis);
            extents.push(extent);
        }
        Ok(Self {
            points,
            axes,
            extents,
        })
    }

    fn count(&self) -> usize {
        self.points.len()
    }

    fn barycentric(&self, p: Vec3) -> Vec<f64> {
        let d = linalg::sub(p, self.points[0]);
        let mut alphas = vec![0.0; self.count()];
        let mut rest = 1.0;
        for (k, (axis, extent)) in self.axes.iter().zip(&self.extents).enumerate() {
            let a = linalg::dot(d, *axis) / extent;
            alphas[k + 1] = a;
            rest -= a;
        }
        alphas[0] = rest;
        alphas
    }
}

/// The `nc` eigenvectors of `MᵀM` with the smallest eigenvalues, each reshaped
/// to `nc` camera-frame control points.
fn null_space(
    alphas: &[Vec<f64>],
    image_points: &[[f64; 2]],
    cam: &CameraIntrinsics,
    nc: usize,
) -> Result<Vec<Vec<Vec3>>, GeometryError> {
    let dim = 3 * nc;
    let mut mtm = vec![0.0; dim * dim];
    let mut row_u = vec![0.0; dim];
    let mut row_v = vec![0.0; dim];
    for (a, uv) in alphas.iter().zip(image_points) {
        for j in 0..nc {
            row_u[3 * j] = a[j] * cam.fx;
            row_u[3 * j + 1] = 0.0;
            row_u[3 * j + 2] = a[j] * (cam.cx - uv[0]);
            row_v[3 * j] = 0.0;
            row_v[3 * j + 1] = a[j] * cam.fy;
            row_v[3 * j + 2] = a[j] * (cam.cy - uv[1]);
        }
        for row in [&row_u, &row_v] {
            for i in 0..dim {
                if row[i] == 0.0 {
                    continue;
                }
                for k in 0..dim {
                    mtm[i * dim + k] += row[i] * row[k];
                }
            }
        }
    }
    let (values, vectors) = linalg::symmetric_eigen(&mtm, dim);
    if values.iter().any(|v| !v.is_finite()) {
        return Err(GeometryError::NumericalFailure(
            "non-finite eigenvalues in the EPnP system".into(),
        ));
    }
    // A vanishing eigenvalue beyond the nc-th means the image evidence cannot
    // pin down the control points.
    let largest = values[dim - 1].max(f64::MIN_POSITIVE);
    if values.len() > nc && values[nc] <= 1e-14 * largest {
        return Err(GeometryError::NumericalFailure(
            "EPnP system is rank-deficient".into(),
        ));
    }
    Ok(vectors
        .into_iter()
        .take(nc)
        .map(|v| v.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
        .collect())
}

/// Control-point pair differences for each null vector and the target squared
/// distances they must reproduce.
struct PairDiffs {
    /// `diffs[pair][k]`: difference of null vector `k` across the pair.
    diffs: Vec<Vec<Vec3>>,
    rho: Vec<f64>,
    nc: usize,
}

impl PairDiffs {
    fn new(control: &[Vec3], null_vectors: &[Vec<Vec3>]) -> Self {
        let nc = control.len();
        let mut diffs = Vec::new();
        let mut rho = Vec::new();
        for a in 0..nc {
            for b in (a + 1)..nc {
                let d = linalg::sub(control[a], control[b]);
                rho.push(linalg::dot(d, d));
                diffs.push(
                    null_vectors
                        .iter()
                        .map(|v| linalg::sub(v[a], v[b]))
                        .collect(),
                );
            }
        }
        Self { diffs, rho, nc }
    }

    fn betas_one(&self) -> Vec<f64> {
        let mut num = 0.0;
        let mut den = 0.0;
        for (d, rho) in self.diffs.iter().zip(&self.rho) {
            let len = linalg::norm(d[0]);
            num += len * rho.sqrt();
            den += len * len;
        }
        let mut betas = vec![0.0; self.nc];
        betas[0] = num / den;
        betas
    }

    /// Linearized solve for the products `B_kl = β_k β_l` with `k ≤ l < count`.
    fn products(&self, count: usize) -> Vec<f64> {
        let pairs: Vec<(usize, usize)> = (0..count)
            .flat_map(|l| (0..=l).map(move |k| (k, l)))
            .collect();
        let mut a = Vec::with_capacity(self.rho.len() * pairs.len());
        for d in &self.diffs {
            for &(k, l) in &pairs {
                let c = linalg::dot(d[k], d[l]);
                a.push(if k == l { c } else { 2.0 * c });
            }
        }
        linalg::least_squares(&a, self.rho.len(), pairs.len(), &self.rho)
    }

    fn betas_two(&self) -> Vec<f64> {
        // Unknown order: B11, B12, B22.
        let b = self.products(2);
        let s = b[0].signum();
        let mut betas = vec![0.0; self.nc];
        betas[0] = b[0].abs().sqrt();
        betas[1] = (s * b[2]).max(0.0).sqrt() * (s * b[1]).signum();
        betas
    }

    fn betas_three(&self) -> Vec<f64> {
        // Unknown order: B11, B12, B22, B13, B23, B33.
        let b = self.products(3);
        let s = b[0].signum();
        let mut betas = vec![0.0; self.nc];
        betas[0] = b[0].abs().sqrt();
        betas[1] = (s * b[2]).max(0.0).sqrt() * (s * b[1]).signum();
        betas[2] = if betas[0] > 0.0 {
            s * b[3] / betas[0]
        } else {
            0.0
        };
        betas
    }

    fn residuals(&self, betas: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = self.rho.len();
        let k = betas.len();
        let mut r = Vec::with_capacity(m);
        let mut jac = Vec::with_capacity(m * k);
        for (d, rho) in self.diffs.iter().zip(&self.rho) {
            let mut combo = [0.0; 3];
            for (beta, dk) in betas.iter().zip(d) {
                combo = linalg::add(combo, linalg::scale(*dk, *beta));
            }
            r.push(linalg::dot(combo, combo) - rho);
            for dk in d.iter().take(k) {
                jac.push(2.0 * linalg::dot(combo, *dk));
            }
        }
        (r, jac)
    }

    fn gauss_newton(&self, betas: &mut [f64]) {
        let k = betas.len();
        for _ in 0..GN_MAX_ITERS {
            let (r, jac) = self.residuals(betas);
            let neg: Vec<f64> = r.iter().map(|v| -v).collect();
            let step = linalg::least_squares(&jac, r.len(), k, &neg);
            if step.iter().any(|s| !s.is_finite()) {
                return;
            }
            let step_norm = step.iter().map(|s| s * s).sum::<f64>().sqrt();
            let beta_norm = betas.iter().map(|b| b * b).sum::<f64>().sqrt();
            for (b, s) in betas.iter_mut().zip(&step) {
                *b += s;
            }
            if step_norm <= GN_REL_STEP * beta_norm.max(f64::MIN_POSITIVE) {
                return;
            }
        }
    }
}

fn pose_from_betas(
    world: &[Vec3],
    alphas: &[Vec<f64>],
    null_vectors: &[Vec<Vec3>],
    betas: &[f64],
    nc: usize,
) -> Option<RigidPose> {
    let mut control_cam = vec![[0.0; 3]; nc];
    for (beta, v) in betas.iter().zip(null_vectors) {
        for (c, vj) in control_cam.iter_mut().zip(v) {
            *c = linalg::add(*c, linalg::scale(*vj, *beta));
        }
    }
    let mut cam_points: Vec<Vec3> = alphas
        .iter()
        .map(|a| {
            a.iter().zip(&control_cam).fold([0.0; 3], |acc, (w, c)| {
                linalg::add(acc, linalg::scale(*c, *w))
            })
        })
        .collect();
    let mean_depth: f64 = cam_points.iter().map(|p| p[2]).sum();
    if mean_depth < 0.0 {
        for p in &mut cam_points {
            *p = linalg::scale(*p, -1.0);
        }
    }
    let (rotation, translation) = rigid_align(world, &cam_points).ok()?;
    if rotation
        .matrix()
        .iter()
        .flatten()
        .chain(&translation)
        .any(|v| !v.is_finite())
    {
        return None;
    }
    Some(RigidPose::new(rotation, translation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{
        project_points, relative_rotation_error, relative_translation_error, Rotation3,
    };

    fn box_corners(dx: f64, dy: f64, dz: f64) -> PointSet3 {
        let mut pts = Vec::new();
        for x in [-dx, dx] {
            for y in [-dy, dy] {
                for z in [-dz, dz] {
                    pts.push([x, y, z]);
                }
            }
        }
        PointSet3::new(pts).unwrap()
    }

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics::new(600.0, 610.0, 320.0, 240.0).unwrap()
    }

    #[test]
    fn recovers_known_pose_from_cube() {
        let model = box_corners(40.0, 60.0, 30.0);
        let truth = RigidPose::new(
            Rotation3::from_axis_angle([0.3, -1.0, 0.5], 0.9),
            [25.0, -40.0, 800.0],
        );
        let uv = project_points(&model, &truth, &cam()).unwrap();
        let est = solve_pnp_epnp(&model, &uv, &cam()).unwrap();
        assert!(relative_rotation_error(&est.rotation, &truth.rotation) < 1e-6);
        assert!(relative_translation_error(est.translation, truth.translation) < 1e-3);
    }

    #[test]
    fn identity_pose_centered_object() {
        let model = box_corners(50.0, 50.0, 50.0);
        let truth = RigidPose::new(Rotation3::IDENTITY, [0.0, 0.0, 1000.0]);
        let uv = project_points(&model, &truth, &cam()).unwrap();
        let est = solve_pnp_epnp(&model, &uv, &cam()).unwrap();
        for k in 0..3 {
            assert!((est.translation[k] - truth.translation[k]).abs() < 1e-3);
        }
    }

    #[test]
    fn unrefined_solution_is_also_exact_without_noise() {
        let model = box_corners(40.0, 30.0, 20.0);
        let truth = RigidPose::new(Rotation3::rot_y(0.4), [10.0, 5.0, 600.0]);
        let uv = project_points(&model, &truth, &cam()).unwrap();
        let est = solve_pnp_epnp_with(&model, &uv, &cam(), EpnpOptions { refine: false }).unwrap();
        assert!(relative_rotation_error(&est.rotation, &truth.rotation) < 1e-6);
    }

    #[test]
    fn planar_model_uses_reduced_basis() {
        let model = PointSet3::new(vec![
            [-50.0, -50.0, 0.0],
            [50.0, -50.0, 0.0],
            [50.0, 50.0, 0.0],
            [-50.0, 50.0, 0.0],
            [10.0, -20.0, 0.0],
            [-30.0, 25.0, 0.0],
        ])
        .unwrap();
        let truth = RigidPose::new(
            Rotation3::from_axis_angle([1.0, 0.2, 0.1], 0.5),
            [-20.0, 15.0, 700.0],
        );
        let uv = project_points(&model, &truth, &cam()).unwrap();
        let est = solve_pnp_epnp(&model, &uv, &cam()).unwrap();
        assert!(relative_rotation_error(&est.rotation, &truth.rotation) < 1e-6);
        assert!(relative_translation_error(est.translation, truth.translation) < 1e-3);
    }

    #[test]
    fn too_few_points() {
        let model = PointSet3::new(vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        let uv = vec![[0.0; 2]; 3];
        assert!(matches!(
            solve_pnp_epnp(&model, &uv, &cam()),
            Err(GeometryError::InsufficientPoints { got: 3, .. })
        ));
    }

    #[test]
    fn collinear_model_fails() {
        let model = PointSet3::new((0..5).map(|i| [i as f64, 0.0, 0.0]).collect()).unwrap();
        let uv = vec![[0.0; 2]; 5];
        assert!(matches!(
            solve_pnp_epnp(&model, &uv, &cam()),
            Err(GeometryError::NumericalFailure(_))
        ));
    }
}
