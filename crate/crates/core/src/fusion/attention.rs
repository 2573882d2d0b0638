use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::dense;
use super::FusionError;
use crate::tensor::{self, FeatureTensor};

/// Multi-head self-attention parameters. All projections are `d × d`
/// (row-major, applied as `X · W`); head `h` uses columns `h·d/H .. (h+1)·d/H`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    heads: usize,
    dim: usize,
    pub wq: Vec<f64>,
    pub wk: Vec<f64>,
    pub wv: Vec<f64>,
    pub wo: Vec<f64>,
}

impl AttentionParams {
    pub fn new(
        heads: usize,
        dim: usize,
        wq: Vec<f64>,
        wk: Vec<f64>,
        wv: Vec<f64>,
        wo: Vec<f64>,
    ) -> Result<Self, FusionError> {
        if heads == 0 || dim == 0 || !dim.is_multiple_of(heads) {
            return Err(FusionError::InvalidParams(format!(
                "model dimension {dim} not divisible by {heads} heads"
            )));
        }
        for w in [&wq, &wk, &wv, &wo] {
            if w.len() != dim * dim {
                return Err(FusionError::InvalidParams(format!(
                    "projection must be {dim}x{dim}"
                )));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(FusionError::InvalidParams(
                    "non-finite projection entry".into(),
                ));
            }
        }
        Ok(Self {
            heads,
            dim,
            wq,
            wk,
            wv,
            wo,
        })
    }

    pub fn identity(heads: usize, dim: usize) -> Result<Self, FusionError> {
        let mut eye = vec![0.0; dim * dim];
        for i in 0..dim {
            eye[i * dim + i] = 1.0;
        }
        Self::new(heads, dim, eye.clone(), eye.clone(), eye.clone(), eye)
    }

    /// Xavier-style Gaussian initialization.
    pub fn seeded(heads: usize, dim: usize, seed: u64) -> Result<Self, FusionError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, (1.0 / dim.max(1) as f64).sqrt()).expect("positive std");
        let mut draw = || {
            (0..dim * dim)
                .map(|_| normal.sample(&mut rng))
                .collect::<Vec<_>>()
        };
        let (wq, wk, wv, wo) = (draw(), draw(), draw(), draw());
        Self::new(heads, dim, wq, wk, wv, wo)
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn save(&self, path: &Path) -> Result<(), FusionError> {
        let d = self.dim;
        let heads = FeatureTensor::new(vec![1], vec![self.heads as f64])?;
        let ws = [
            FeatureTensor::new(vec![d, d], self.wq.clone())?,
            FeatureTensor::new(vec![d, d], self.wk.clone())?,
            FeatureTensor::new(vec![d, d], self.wv.clone())?,
            FeatureTensor::new(vec![d, d], self.wo.clone())?,
        ];
        Ok(tensor::save_tensors(
            path,
            &[
                ("heads", &heads),
                ("wq", &ws[0]),
                ("wk", &ws[1]),
                ("wv", &ws[2]),
                ("wo", &ws[3]),
            ],
        )?)
    }

    pub fn load(path: &Path) -> Result<Self, FusionError> {
        let get = |name: &str| tensor::load_tensor(path, name);
        let heads = get("heads")?.data()[0] as usize;
        let wq = get("wq")?;
        let dim = wq
            .dims2()
            .map(|(r, _)| r)
            .ok_or_else(|| FusionError::InvalidParams("wq must be rank 2".into()))?;
        Self::new(
            heads,
            dim,
            wq.into_data(),
            get("wk")?.into_data(),
            get("wv")?.into_data(),
            get("wo")?.into_data(),
        )
    }
}

/// Cached intermediates of one attention call.
#[derive(Debug)]
pub struct AttentionContext {
    len: usize,
    params: AttentionParams,
    x: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// Per head, `L × L` row-softmaxed scores.
    probs: Vec<Vec<f64>>,
    concat: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionGrads {
    pub x: FeatureTensor,
    pub wq: Vec<f64>,
    pub wk: Vec<f64>,
    pub wv: Vec<f64>,
    pub wo: Vec<f64>,
}

fn head_slice(m: &[f64], len: usize, dim: usize, h: usize, dk: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len * dk);
    for i in 0..len {
        out.extend_from_slice(&m[i * dim + h * dk..i * dim + (h + 1) * dk]);
    }
    out
}

fn scatter_head(dst: &mut [f64], src: &[f64], len: usize, dim: usize, h: usize, dk: usize) {
    for i in 0..len {
        dst[i * dim + h * dk..i * dim + (h + 1) * dk].copy_from_slice(&src[i * dk..(i + 1) * dk]);
    }
}

/// Scaled dot-product self-attention over an `L × d` sequence.
pub fn multihead_attention(
    x: &FeatureTensor,
    params: &AttentionParams,
) -> Result<FeatureTensor, FusionError> {
    Ok(multihead_attention_forward(x, params)?.0)
}

pub fn multihead_attention_forward(
    x: &FeatureTensor,
    params: &AttentionParams,
) -> Result<(FeatureTensor, AttentionContext), FusionError> {
    let d = params.dim;
    let len = match x.dims2() {
        Some((l, c)) if c == d && l > 0 => l,
        _ => {
            return Err(FusionError::ShapeMismatch {
                expected: vec![0, d],
                got: x.shape().to_vec(),
            })
        }
    };
    let dk = d / params.heads;
    let scale = 1.0 / (dk as f64).sqrt();
    let xd = x.data();
    let q = dense::matmul(xd, &params.wq, len, d, d);
    let k = dense::matmul(xd, &params.wk, len, d, d);
    let v = dense::matmul(xd, &params.wv, len, d, d);
    let mut concat = vec![0.0; len * d];
    let mut probs = Vec::with_capacity(params.heads);
    for h in 0..params.heads {
        let qh = head_slice(&q, len, d, h, dk);
        let kh = head_slice(&k, len, d, h, dk);
        let vh = head_slice(&v, len, d, h, dk);
        let mut s = dense::matmul_bt(&qh, &kh, len, dk, len);
        s.iter_mut().for_each(|e| *e *= scale);
        let p = dense::softmax_rows(&s, len, len);
        let oh = dense::matmul(&p, &vh, len, len, dk);
        scatter_head(&mut concat, &oh, len, d, h, dk);
        probs.push(p);
    }
    let y = dense::matmul(&concat, &params.wo, len, d, d);
    let ctx = AttentionContext {
        len,
        params: params.clone(),
        x: xd.to_vec(),
        q,
        k,
        v,
        probs,
        concat,
    };
    Ok((FeatureTensor::new(vec![len, d], y)?, ctx))
}

impl AttentionContext {
    /// Per-head attention probabilities (`L × L`, rows sum to one).
    pub fn probabilities(&self) -> &[Vec<f64>] {
        &self.probs
    }

    pub fn backward(self, upstream: &FeatureTensor) -> Result<AttentionGrads, FusionError> {
        let (len, d) = (self.len, self.params.dim);
        if upstream.shape() != [len, d] {
            return Err(FusionError::StaleCache {
                cached: vec![len, d],
                got: upstream.shape().to_vec(),
            });
        }
        let heads = self.params.heads;
        let dk = d / heads;
        let scale = 1.0 / (dk as f64).sqrt();
        let dy = upstream.data();
        let d_wo = dense::matmul_at(&self.concat, dy, len, d, d);
        let d_concat = dense::matmul_bt(dy, &self.params.wo, len, d, d);
        let mut dq = vec![0.0; len * d];
        let mut dk_all = vec![0.0; len * d];
        let mut dv = vec![0.0; len * d];
        for h in 0..heads {
            let qh = head_slice(&self.q, len, d, h, dk);
            let kh = head_slice(&self.k, len, d, h, dk);
            let vh = head_slice(&self.v, len, d, h, dk);
            let doh = head_slice(&d_concat, len, d, h, dk);
            let p = &self.probs[h];
            let dp = dense::matmul_bt(&doh, &vh, len, dk, len);
            let dvh = dense::matmul_at(p, &doh, len, len, dk);
            let mut ds = dense::softmax_rows_backward(p, &dp, len, len);
            ds.iter_mut().for_each(|e| *e *= scale);
            let dqh = dense::matmul(&ds, &kh, len, len, dk);
            let dkh = dense::matmul_at(&ds, &qh, len, len, dk);
            scatter_head(&mut dq, &dqh, len, d, h, dk);
            scatter_head(&mut dk_all, &dkh, len, d, h, dk);
            scatter_head(&mut dv, &dvh, len, d, h, dk);
        }
        let mut dx = dense::matmul_bt(&dq, &self.params.wq, len, d, d);
        dense::add_into(
            &mut dx,
            &dense::matmul_bt(&dk_all, &self.params.wk, len, d, d),
        );
        dense::add_into(&mut dx, &dense::matmul_bt(&dv, &self.params.wv, len, d, d));
        Ok(AttentionGrads {
            x: FeatureTensor::new(vec![len, d], dx)?,
            wq: dense::matmul_at(&self.x, &dq, len, d, d),
            wk: dense::matmul_at(&self.x, &dk_all, len, d, d),
            wv: dense::matmul_at(&self.x, &dv, len, d, d),
            wo: d_wo,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(len: usize, d: usize, seed: u64) -> FeatureTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 1.0).unwrap();
        FeatureTensor::new(
            vec![len, d],
            (0..len * d).map(|_| n.sample(&mut rng)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_token_identity() {
        let p = AttentionParams::identity(1, 3).unwrap();
        let x = FeatureTensor::new(vec![1, 3], vec![0.5, -2.0, 7.0]).unwrap();
        assert_eq!(multihead_attention(&x, &p).unwrap(), x);
    }

    #[test]
    fn permutation_equivariant() {
        let p = AttentionParams::seeded(2, 4, 3).unwrap();
        let x = seq(5, 4, 1);
        let perm = [3, 0, 4, 1, 2];
        let mut xp = Vec::new();
        for &i in &perm {
            xp.extend_from_slice(&x.data()[i * 4..(i + 1) * 4]);
        }
        let y = multihead_attention(&x, &p).unwrap();
        let yp = multihead_attention(&FeatureTensor::new(vec![5, 4], xp).unwrap(), &p).unwrap();
        for (r, &i) in perm.iter().enumerate() {
            for c in 0..4 {
                assert!((yp.data()[r * 4 + c] - y.data()[i * 4 + c]).abs() < 1e-12);
            }
        }
    }

    // Naive per-element evaluation: every score, weight and output entry is
    // formed from explicit index loops.
    #[test]
    fn two_heads_match_naive_loops() {
        let (len, d, heads) = (3, 4, 2);
        let p = AttentionParams::seeded(heads, d, 11).unwrap();
        let x = seq(len, d, 2);
        let xv = x.data();
        let proj = |w: &[f64], i: usize, c: usize| {
            (0..d).map(|j| xv[i * d + j] * w[j * d + c]).sum::<f64>()
        };
        let dk = d / heads;
        let mut concat = vec![0.0; len * d];
        for h in 0..heads {
            for i in 0..len {
                let scores: Vec<f64> = (0..len)
                    .map(|j| {
                        (0..dk)
                            .map(|c| proj(&p.wq, i, h * dk + c) * proj(&p.wk, j, h * dk + c))
                            .sum::<f64>()
                            / (dk as f64).sqrt()
                    })
                    .collect();
                let z: f64 = scores.iter().map(|s| s.exp()).sum();
                for c in 0..dk {
                    concat[i * d + h * dk + c] = (0..len)
                        .map(|j| scores[j].exp() / z * proj(&p.wv, j, h * dk + c))
                        .sum();
                }
            }
        }
        let y = multihead_attention(&x, &p).unwrap();
        for i in 0..len {
            for c in 0..d {
                let want: f64 = (0..d).map(|j| concat[i * d + j] * p.wo[j * d + c]).sum();
                assert!((y.data()[i * d + c] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rescaled_query_key_projections() {
        let p = AttentionParams::seeded(2, 4, 5).unwrap();
        let mut q = p.clone();
        q.wq.iter_mut().for_each(|w| *w *= 3.0);
        q.wk.iter_mut().for_each(|w| *w /= 3.0);
        let x = seq(4, 4, 9);
        let a = multihead_attention(&x, &p).unwrap();
        let b = multihead_attention(&x, &q).unwrap();
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn invalid_configuration() {
        assert!(AttentionParams::identity(3, 4).is_err());
        let p = AttentionParams::identity(2, 4).unwrap();
        assert!(matches!(
            multihead_attention(&seq(2, 3, 0), &p),
            Err(FusionError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn params_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("adapter.bin");
        let p = AttentionParams::identity(2, 4).unwrap();
        p.save(&path).unwrap();
        assert_eq!(AttentionParams::load(&path).unwrap(), p);
    }
}
