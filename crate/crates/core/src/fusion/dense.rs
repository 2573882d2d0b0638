//! Row-major matrix kernels with a fixed accumulation order.

/// `a (m×k) · b (k×n)`.
pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let aip = a[i * k + p];
            for j in 0..n {
                out[i * n + j] += aip * b[p * n + j];
            }
        }
    }
    out
}

/// `a (m×k) · bᵀ` where `b` is `n×k`.
pub(crate) fn matmul_bt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a[i * k + p] * b[j * k + p];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

/// `aᵀ · b` where `a` is `k×m` and `b` is `k×n`.
pub(crate) fn matmul_at(a: &[f64], b: &[f64], k: usize, m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for p in 0..k {
        for i in 0..m {
            let api = a[p * m + i];
            for j in 0..n {
                out[i * n + j] += api * b[p * n + j];
            }
        }
    }
    out
}

pub(crate) fn add_into(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

/// Max-shifted softmax over each row of an `rows×cols` matrix.
pub(crate) fn softmax_rows(s: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        let row = &s[i * cols..(i + 1) * cols];
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for j in 0..cols {
            let e = (row[j] - m).exp();
            out[i * cols + j] = e;
            z += e;
        }
        for v in &mut out[i * cols..(i + 1) * cols] {
            *v /= z;
        }
    }
    out
}

/// Backward of [`softmax_rows`]: `dS = P ⊙ (dP − rowsum(P ⊙ dP))`.
pub(crate) fn softmax_rows_backward(p: &[f64], dp: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut ds = vec![0.0; rows * cols];
    for i in 0..rows {
        let r = i * cols..(i + 1) * cols;
        let dot: f64 = p[r.clone()]
            .iter()
            .zip(&dp[r.clone()])
            .map(|(a, b)| a * b)
            .sum();
        for j in r {
            ds[j] = p[j] * (dp[j] - dot);
        }
    }
    ds
}

pub(crate) fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}
