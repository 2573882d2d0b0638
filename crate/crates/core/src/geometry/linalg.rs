//! Small fixed-size and symmetric linear algebra used by the geometry solvers.
//!
//! Everything here is deliberately tiny: 3-vectors, 3×3 matrices, a 3×3 SVD and
//! a cyclic Jacobi eigensolver for the small symmetric systems that EPnP builds.

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY3: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 60;

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn mat_vec(m: &Mat3, v: Vec3) -> Vec3 {
    [dot(m[0], v), dot(m[1], v), dot(m[2], v)]
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn transpose(m: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = m[j][i];
        }
    }
    out
}

pub fn trace(m: &Mat3) -> f64 {
    m[0][0] + m[1][1] + m[2][2]
}

pub fn det(m: &Mat3) -> f64 {
    dot(m[0], cross(m[1], m[2]))
}

pub fn frobenius(m: &Mat3) -> f64 {
    m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn diag(d: Vec3) -> Mat3 {
    [[d[0], 0.0, 0.0], [0.0, d[1], 0.0], [0.0, 0.0, d[2]]]
}

pub fn centroid(points: &[Vec3]) -> Vec3 {
    let n = points.len() as f64;
    let mut c = [0.0; 3];
    for p in points {
        c = add(c, *p);
    }
    scale(c, 1.0 / n)
}

/// Singular value decomposition of a 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Svd3 {
    pub u: Mat3,
    /// Non-negative, descending.
    pub sigma: Vec3,
    pub v_t: Mat3,
}

impl Svd3 {
    pub fn reconstruct(&self) -> Mat3 {
        mat_mul(&mat_mul(&self.u, &diag(self.sigma)), &self.v_t)
    }
}

/// 3×3 SVD by one-sided cyclic Jacobi: plane rotations are applied to the
/// columns of `m` until `mᵀm` is diagonal, and accumulated into `V`.
pub fn svd3(m: &Mat3) -> Svd3 {
    // Work on columns: a[c] is column c of the working matrix.
    let mut a = transpose(m);
    let mut v = IDENTITY3; // v[c] is column c of V
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..2 {
            for q in (p + 1)..3 {
                let alpha = dot(a[p], a[p]);
                let beta = dot(a[q], a[q]);
                let gamma = dot(a[p], a[q]);
                if gamma == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for cols in [&mut a, &mut v] {
                    let (cp, cq) = (cols[p], cols[q]);
                    cols[p] = sub(scale(cp, c), scale(cq, s));
                    cols[q] = add(scale(cp, s), scale(cq, c));
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order = [0usize, 1, 2];
    let norms = [norm(a[0]), norm(a[1]), norm(a[2])];
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let mut sigma = [0.0; 3];
    let mut u_cols = [[0.0; 3]; 3];
    let mut v_cols = [[0.0; 3]; 3];
    let scale_ref = norms[order[0]].max(f64::MIN_POSITIVE);
    let mut rank = 0;
    for (k, &i) in order.iter().enumerate() {
        sigma[k] = norms[i];
        v_cols[k] = v[i];
        if norms[i] > 1e-14 * scale_ref && norms[i] > 0.0 {
            u_cols[k] = scale(a[i], 1.0 / norms[i]);
            rank += 1;
        }
    }
    complete_basis(&mut u_cols, rank);

    Svd3 {
        u: transpose(&u_cols),
        sigma,
        v_t: v_cols,
    }
}

/// Fill columns `rank..3` with unit vectors orthogonal to the first `rank`.
fn complete_basis(cols: &mut [Vec3; 3], rank: usize) {
    if rank == 0 {
        *cols = IDENTITY3;
        return;
    }
    if rank == 1 {
        let a = cols[0];
        // Pick the axis least aligned with `a`.
        let mut axis = [0.0; 3];
        let k = (0..3)
            .min_by(|&i, &j| a[i].abs().total_cmp(&a[j].abs()))
            .unwrap_or(0);
        axis[k] = 1.0;
        let b = cross(a, axis);
        cols[1] = scale(b, 1.0 / norm(b));
    }
    if rank <= 2 {
        let c = cross(cols[0], cols[1]);
        cols[2] = scale(c, 1.0 / norm(c));
    }
}

/// Eigen-decomposition of a symmetric `n×n` matrix (row-major) by cyclic Jacobi.
///
/// Returns eigenvalues ascending and the matching eigenvectors as rows.
pub fn symmetric_eigen(matrix: &[f64], n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    debug_assert_eq!(matrix.len(), n * n);
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        let total: f64 = a.iter().map(|x| x * x).sum();
        if off <= JACOBI_TOL * JACOBI_TOL * total.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = order
        .iter()
        .map(|&i| (0..n).map(|k| v[k * n + i]).collect())
        .collect();
    (values, vectors)
}

/// Minimum-norm least-squares solution of `A x = b` for a small dense `A`
/// (`rows×cols`, row-major), via the eigen-decomposition of `AᵀA`.
pub fn least_squares(a: &[f64], rows: usize, cols: usize, b: &[f64]) -> Vec<f64> {
    let mut ata = vec![0.0; cols * cols];
    let mut atb = vec![0.0; cols];
    for r in 0..rows {
        let row = &a[r * cols..(r + 1) * cols];
        for i in 0..cols {
            atb[i] += row[i] * b[r];
            for j in 0..cols {
                ata[i * cols + j] += row[i] * row[j];
            }
        }
    }
    let (values, vectors) = symmetric_eigen(&ata, cols);
    let largest = values.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = largest * 1e-14;
    let mut x = vec![0.0; cols];
    for (lambda, vec) in values.iter().zip(&vectors) {
        if *lambda <= cutoff || *lambda <= 0.0 {
            continue;
        }
        let coeff: f64 = vec.iter().zip(&atb).map(|(v, g)| v * g).sum::<f64>() / lambda;
        for (xi, vi) in x.iter_mut().zip(vec) {
            *xi += coeff * vi;
        }
    }
    x
}
