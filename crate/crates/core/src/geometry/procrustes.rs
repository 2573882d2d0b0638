use super::linalg::{self, Mat3};
use super::pose::{PointSet3, Rotation3, SimilarityTransform};
use super::GeometryError;

/// Closed-form least-squares similarity alignment of `source` onto `target`
/// (Umeyama): minimizes `Σ‖s·R·xᵢ + t − yᵢ‖²` with `det(R) = +1`.
pub fn procrustes_align(
    source: &PointSet3,
    target: &PointSet3,
) -> Result<SimilarityTransform, GeometryError> {
    let (rotation, scale, translation) = align(source.points(), target.points(), true)?;
    if source == target {
        // Identical sets: return the exact identity rather than its rounded SVD estimate.
        return SimilarityTransform::new(1.0, Rotation3::IDENTITY, [0.0; 3]);
    }
    SimilarityTransform::new(scale, rotation, translation)
}

/// Rigid (unit-scale) variant used by the PnP pose extraction.
pub(crate) fn rigid_align(
    source: &[linalg::Vec3],
    target: &[linalg::Vec3],
) -> Result<(Rotation3, linalg::Vec3), GeometryError> {
    let (rotation, _, translation) = align(source, target, false)?;
    Ok((rotation, translation))
}

fn align(
    source: &[linalg::Vec3],
    target: &[linalg::Vec3],
    with_scale: bool,
) -> Result<(Rotation3, f64, linalg::Vec3), GeometryError> {
    if source.len() != target.len() {
        return Err(GeometryError::ShapeMismatch {
            left: source.len(),
            right: target.len(),
        });
    }
    let n = source.len();
    if n < 3 {
        return Err(GeometryError::DegenerateInput(format!(
            "need at least 3 correspondences, got {n}"
        )));
    }
    let mu_x = linalg::centroid(source);
    let mu_y = linalg::centroid(target);

    let mut cov: Mat3 = [[0.0; 3]; 3];
    let mut src_cov: Mat3 = [[0.0; 3]; 3];
    let mut var_x = 0.0;
    for (x, y) in source.iter().zip(target) {
        let dx = linalg::sub(*x, mu_x);
        let dy = linalg::sub(*y, mu_y);
        var_x += linalg::dot(dx, dx);
        for i in 0..3 {
            for j in 0..3 {
                cov[i][j] += dy[i] * dx[j];
                src_cov[i][j] += dx[i] * dx[j];
            }
        }
    }
    let inv_n = 1.0 / n as f64;
    var_x *= inv_n;
    for i in 0..3 {
        for j in 0..3 {
            cov[i][j] *= inv_n;
            src_cov[i][j] *= inv_n;
        }
    }
    if var_x <= 0.0 {
        return Err(GeometryError::DegenerateInput(
            "all source points coincide".into(),
        ));
    }
    let spread = linalg::svd3(&src_cov).sigma;
    if spread[1] <= 1e-12 * spread[0] {
        return Err(GeometryError::DegenerateInput(
            "source points are collinear".into(),
        ));
    }

    let svd = linalg::svd3(&cov);
    let reflect = linalg::det(&svd.u) * linalg::det(&svd.v_t) < 0.0;
    let signs = [1.0, 1.0, if reflect { -1.0 } else { 1.0 }];
    let r = linalg::mat_mul(&linalg::mat_mul(&svd.u, &linalg::diag(signs)), &svd.v_t);
    let rotation = Rotation3::from_matrix_unchecked(r);

    let scale = if with_scale {
        (0..3).map(|k| svd.sigma[k] * signs[k]).sum::<f64>() / var_x
    } else {
        1.0
    };
    let translation = linalg::sub(mu_y, linalg::scale(rotation.apply(mu_x), scale));
    Ok((rotation, scale, translation))
}

/// Root of the summed squared residual after applying `transform` to `source`.
pub fn alignment_residual(
    transform: &SimilarityTransform,
    source: &PointSet3,
    target: &PointSet3,
) -> f64 {
    source
        .points()
        .iter()
        .zip(target.points())
        .map(|(x, y)| {
            let d = linalg::sub(transform.apply(*x), *y);
            linalg::dot(d, d)
        })
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::relative_rotation_error;
    use std::f64::consts::FRAC_PI_2;

    fn cube() -> PointSet3 {
        let mut pts = Vec::new();
        for x in [-1.0, 1.0] {
            for y in [-1.0, 1.0] {
                for z in [-1.0, 1.0] {
                    pts.push([x * 50.0, y * 50.0, z * 50.0]);
                }
            }
        }
        PointSet3::new(pts).unwrap()
    }

    #[test]
    fn identical_sets_give_identity() {
        let c = cube();
        let t = procrustes_align(&c, &c).unwrap();
        assert!((t.scale - 1.0).abs() < 1e-12);
        assert!(relative_rotation_error(&t.rotation, &Rotation3::IDENTITY) < 1e-7);
        assert!(linalg::norm(t.translation) < 1e-10);
        assert!(alignment_residual(&t, &c, &c) < 1e-10);
    }

    #[test]
    fn recovers_known_similarity() {
        let src = PointSet3::new(vec![
            [1.0, 0.0, 0.0],
            [0.0, 2.0, 0.0],
            [0.0, 0.0, 3.0],
            [1.0, 1.0, 1.0],
            [-2.0, 0.5, 1.5],
        ])
        .unwrap();
        let truth =
            SimilarityTransform::new(2.0, Rotation3::rot_z(FRAC_PI_2), [1.0, 2.0, 3.0]).unwrap();
        let tgt = truth.apply_all(&src);
        let est = procrustes_align(&src, &tgt).unwrap();
        assert!((est.scale - 2.0).abs() < 1e-9);
        for i in 0..3 {
            for j in 0..3 {
                let d = est.rotation.matrix()[i][j] - truth.rotation.matrix()[i][j];
                assert!(d.abs() < 1e-9);
            }
            assert!((est.translation[i] - truth.translation[i]).abs() < 1e-9);
        }
        assert!(alignment_residual(&est, &src, &tgt) < 1e-9);
    }

    #[test]
    fn perturbed_cube_matches_grid_search() {
        let src = cube();
        let mut pts = src.points().to_vec();
        pts[0][0] += 1.0;
        let tgt = PointSet3::new(pts).unwrap();
        let est = procrustes_align(&src, &tgt).unwrap();
        let residual = alignment_residual(&est, &src, &tgt);
        assert!(residual > 0.0);
        assert!((est.scale - 1.0).abs() < 0.01);

        // Brute force: small rotations about each axis, scale grid, optimal
        // translation (centroid difference) for every candidate.
        let mu_y = tgt.centroid();
        let mut best = f64::INFINITY;
        let steps = 10;
        for ix in -steps..=steps {
            for iy in -steps..=steps {
                for iz in -steps..=steps {
                    let ang = |i: i32| i as f64 * 3e-4;
                    let r = Rotation3::rot_x(ang(ix))
                        .compose(&Rotation3::rot_y(ang(iy)))
                        .compose(&Rotation3::rot_z(ang(iz)));
                    for is in -5..=5 {
                        let s = 1.0 + is as f64 * 1e-3;
                        let t = linalg::sub(mu_y, linalg::scale(r.apply(src.centroid()), s));
                        let cand = SimilarityTransform::new(s, r, t).unwrap();
                        best = best.min(alignment_residual(&cand, &src, &tgt));
                    }
                }
            }
        }
        assert!(
            residual <= best + 1e-12,
            "closed form {residual} vs grid {best}"
        );
        assert!(best - residual < 1e-2);
    }

    #[test]
    fn degenerate_inputs() {
        let two = PointSet3::new(vec![[0.0; 3], [1.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(
            procrustes_align(&two, &two),
            Err(GeometryError::DegenerateInput(_))
        ));
        let same = PointSet3::new(vec![[1.0, 2.0, 3.0]; 4]).unwrap();
        assert!(matches!(
            procrustes_align(&same, &same),
            Err(GeometryError::DegenerateInput(_))
        ));
        let a = PointSet3::new(vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        let b = PointSet3::new(vec![[0.0; 3]; 4]).unwrap();
        assert!(matches!(
            procrustes_align(&a, &b),
            Err(GeometryError::ShapeMismatch { .. })
        ));
    }
}
