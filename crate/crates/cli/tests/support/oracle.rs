//! Plain-loop reference implementations of the evaluation metrics. Nothing
//! here calls into the library's numerics.

use std::collections::BTreeMap;

pub type P3 = [f64; 3];

pub fn dist(a: P3, b: P3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

pub fn mean_error(pred: &[P3], gt: &[P3]) -> f64 {
    let mut sum = 0.0;
    for i in 0..pred.len() {
        sum += dist(pred[i], gt[i]);
    }
    sum / pred.len() as f64
}

fn mean_point(p: &[P3]) -> P3 {
    let mut m = [0.0; 3];
    for q in p {
        for k in 0..3 {
            m[k] += q[k];
        }
    }
    for v in &mut m {
        *v /= p.len() as f64;
    }
    m
}

/// Eigenpairs of a symmetric 4×4 matrix by cyclic Jacobi rotations.
fn jacobi4(mut a: [[f64; 4]; 4]) -> ([f64; 4], [[f64; 4]; 4]) {
    let mut v = [[0.0; 4]; 4];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _ in 0..100 {
        let mut off = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    off += a[i][j] * a[i][j];
                }
            }
        }
        if off < 1e-60 {
            break;
        }
        for p in 0..4 {
            for q in p + 1..4 {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..4 {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..4 {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    ([a[0][0], a[1][1], a[2][2], a[3][3]], v)
}

/// Similarity alignment of `pred` onto `gt` via Horn's unit-quaternion
/// method, followed by the mean point error.
pub fn pa_error(pred: &[P3], gt: &[P3]) -> f64 {
    let mx = mean_point(pred);
    let my = mean_point(gt);
    let xs: Vec<P3> = pred
        .iter()
        .map(|p| [p[0] - mx[0], p[1] - mx[1], p[2] - mx[2]])
        .collect();
    let ys: Vec<P3> = gt
        .iter()
        .map(|p| [p[0] - my[0], p[1] - my[1], p[2] - my[2]])
        .collect();
    let mut s = [[0.0; 3]; 3];
    for (x, y) in xs.iter().zip(&ys) {
        for a in 0..3 {
            for b in 0..3 {
                s[a][b] += x[a] * y[b];
            }
        }
    }
    let [[sxx, sxy, sxz], [syx, syy, syz], [szx, szy, szz]] = s;
    let n = [
        [sxx + syy + szz, syz - szy, szx - sxz, sxy - syx],
        [syz - szy, sxx - syy - szz, sxy + syx, szx + sxz],
        [szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy],
        [sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz],
    ];
    let (values, vectors) = jacobi4(n);
    let mut best = 0;
    for i in 1..4 {
        if values[i] > values[best] {
            best = i;
        }
    }
    let q: Vec<f64> = (0..4).map(|r| vectors[r][best]).collect();
    let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (w, x, y, z) = (q[0] / norm, q[1] / norm, q[2] / norm, q[3] / norm);
    let r = [
        [
            w * w + x * x - y * y - z * z,
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            w * w - x * x + y * y - z * z,
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            w * w - x * x - y * y + z * z,
        ],
    ];
    let rotate = |p: P3| {
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2],
        ]
    };
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        let rx = rotate(*x);
        num += rx[0] * y[0] + rx[1] * y[1] + rx[2] * y[2];
        den += x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
    }
    let scale = num / den;
    let mut sum = 0.0;
    for (x, g) in xs.iter().zip(gt) {
        let rx = rotate(*x);
        sum += dist(
            [
                scale * rx[0] + my[0],
                scale * rx[1] + my[1],
                scale * rx[2] + my[2],
            ],
            *g,
        );
    }
    sum / xs.len() as f64
}

fn within(from: &[P3], to: &[P3], t: f64) -> f64 {
    let mut hits = 0;
    for p in from {
        let mut best = f64::INFINITY;
        for q in to {
            best = best.min(dist(*p, *q));
        }
        if best <= t {
            hits += 1;
        }
    }
    hits as f64 / from.len() as f64
}

pub fn f_score(pred: &[P3], gt: &[P3], t: f64) -> f64 {
    let precision = within(pred, gt, t);
    let recall = within(gt, pred, t);
    if precision + recall == 0.0 {
        0.0
    } else {
        100.0 * 2.0 * precision * recall / (precision + recall)
    }
}

pub fn thresholds() -> Vec<f64> {
    (0..=100).map(|i| i as f64 * 0.5).collect()
}

pub fn pck(errors: &[f64], thresholds: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for t in thresholds {
        let mut hits = 0;
        for e in errors {
            if *e <= *t {
                hits += 1;
            }
        }
        out.push(hits as f64 / errors.len() as f64);
    }
    out
}

pub fn auc(thresholds: &[f64], pck: &[f64]) -> f64 {
    let mut area = 0.0;
    for i in 1..thresholds.len() {
        area += (thresholds[i] - thresholds[i - 1]) * (pck[i] + pck[i - 1]) / 2.0;
    }
    100.0 * area / (thresholds[thresholds.len() - 1] - thresholds[0])
}

/// Rigid transform given as a row-major rotation and a translation.
pub fn transform(rotation: &[f64; 9], translation: P3, p: P3) -> P3 {
    let mut out = [0.0; 3];
    for r in 0..3 {
        out[r] = rotation[3 * r] * p[0]
            + rotation[3 * r + 1] * p[1]
            + rotation[3 * r + 2] * p[2]
            + translation[r];
    }
    out
}

pub fn add(model: &[P3], pred: (&[f64; 9], P3), gt: (&[f64; 9], P3)) -> f64 {
    let mut sum = 0.0;
    for p in model {
        sum += dist(transform(pred.0, pred.1, *p), transform(gt.0, gt.1, *p));
    }
    sum / model.len() as f64
}

pub fn diameter(model: &[P3]) -> f64 {
    let mut d: f64 = 0.0;
    for a in model {
        for b in model {
            d = d.max(dist(*a, *b));
        }
    }
    d
}

/// Success rate per object id (percent) and the unweighted mean.
pub fn add_half_diameter(samples: &[(String, f64, f64)]) -> (BTreeMap<String, f64>, f64) {
    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (id, add, diameter) in samples {
        let e = counts.entry(id.clone()).or_default();
        e.1 += 1;
        if *add < 0.5 * diameter {
            e.0 += 1;
        }
    }
    let rates: BTreeMap<String, f64> = counts
        .into_iter()
        .map(|(k, (hit, n))| (k, 100.0 * hit as f64 / n as f64))
        .collect();
    let mut mean = 0.0;
    for v in rates.values() {
        mean += v;
    }
    mean /= rates.len() as f64;
    (rates, mean)
}

pub fn occlusion(amodal: &[bool], full: &[bool]) -> f64 {
    let mut inter = 0;
    let mut union = 0;
    for i in 0..amodal.len() {
        if amodal[i] && full[i] {
            inter += 1;
        }
        if amodal[i] || full[i] {
            union += 1;
        }
    }
    1.0 - inter as f64 / union as f64
}

/// Bucket index for `[lo, hi)` intervals with the last one closed.
pub fn bucket(p: f64, edges: &[f64]) -> Option<usize> {
    for i in 0..edges.len() - 1 {
        let last = i == edges.len() - 2;
        if p >= edges[i] && (p < edges[i + 1] || (last && p == edges[i + 1])) {
            return Some(i);
        }
    }
    None
}
