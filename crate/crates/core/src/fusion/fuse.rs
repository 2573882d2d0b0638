use super::dense;
use super::FusionError;
use crate::tensor::FeatureTensor;

/// Axis over which the fusion attention matrix is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SoftmaxAxis {
    /// Each row sums to one (standard attention).
    #[default]
    Row,
    /// Each column sums to one.
    Column,
}

/// Cached intermediates of one fusion call, consumed by [`FuseContext::backward`].
#[derive(Debug)]
pub struct FuseContext {
    channels: usize,
    spatial: usize,
    grasping: bool,
    axis: SoftmaxAxis,
    scale: f64,
    stacked: Vec<f64>,
    attention: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuseGrads {
    pub hand: FeatureTensor,
    pub object: FeatureTensor,
    /// Gradient w.r.t. the selected second half of the stacked feature.
    pub branch: FeatureTensor,
}

fn check_pair(hand: &FeatureTensor, object: &FeatureTensor) -> Result<(usize, usize), FusionError> {
    let dims = hand.dims2().ok_or_else(|| FusionError::ShapeMismatch {
        expected: vec![0, 0],
        got: hand.shape().to_vec(),
    })?;
    if object.shape() != hand.shape() {
        return Err(FusionError::ShapeMismatch {
            expected: hand.shape().to_vec(),
            got: object.shape().to_vec(),
        });
    }
    Ok(dims)
}

/// Grasp-aware fusion of `C × N` hand and object features.
///
/// The stacked feature is `[hand; object]` when grasping and `[hand; hand]`
/// otherwise. The output is `softmax(F Fᵀ / √N) · F`, shape `2C × N`.
pub fn grasp_aware_fuse(
    hand: &FeatureTensor,
    object: &FeatureTensor,
    grasping: bool,
) -> Result<(FeatureTensor, FuseContext), FusionError> {
    grasp_aware_fuse_with(hand, object, grasping, SoftmaxAxis::default())
}

pub fn grasp_aware_fuse_with(
    hand: &FeatureTensor,
    object: &FeatureTensor,
    grasping: bool,
    axis: SoftmaxAxis,
) -> Result<(FeatureTensor, FuseContext), FusionError> {
    let (c, n) = check_pair(hand, object)?;
    let m = 2 * c;
    let mut stacked = Vec::with_capacity(m * n);
    stacked.extend_from_slice(hand.data());
    stacked.extend_from_slice(if grasping { object.data() } else { hand.data() });
    let scale = 1.0 / (n as f64).sqrt();
    let mut scores = dense::matmul_bt(&stacked, &stacked, m, n, m);
    scores.iter_mut().for_each(|v| *v *= scale);
    let attention = match axis {
        SoftmaxAxis::Row => dense::softmax_rows(&scores, m, m),
        SoftmaxAxis::Column => {
            let t = dense::softmax_rows(&dense::transpose(&scores, m, m), m, m);
            dense::transpose(&t, m, m)
        }
    };
    let out = dense::matmul(&attention, &stacked, m, m, n);
    let ctx = FuseContext {
        channels: c,
        spatial: n,
        grasping,
        axis,
        scale,
        stacked,
        attention,
    };
    Ok((FeatureTensor::new(vec![m, n], out)?, ctx))
}

impl FuseContext {
    /// Normalized attention matrix (`2C × 2C`).
    pub fn attention(&self) -> &[f64] {
        &self.attention
    }

    pub fn output_shape(&self) -> [usize; 2] {
        [2 * self.channels, self.spatial]
    }

    pub fn backward(self, upstream: &FeatureTensor) -> Result<FuseGrads, FusionError> {
        let [m, n] = self.output_shape();
        if upstream.shape() != [m, n] {
            return Err(FusionError::StaleCache {
                cached: vec![m, n],
                got: upstream.shape().to_vec(),
            });
        }
        let dy = upstream.data();
        let x = &self.stacked;
        let p = &self.attention;
        let mut dx = dense::matmul_at(p, dy, m, m, n);
        let dp = dense::matmul_bt(dy, x, m, n, m);
        let ds = match self.axis {
            SoftmaxAxis::Row => dense::softmax_rows_backward(p, &dp, m, m),
            SoftmaxAxis::Column => {
                let pt = dense::transpose(p, m, m);
                let dpt = dense::transpose(&dp, m, m);
                dense::transpose(&dense::softmax_rows_backward(&pt, &dpt, m, m), m, m)
            }
        };
        let mut sym = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                sym[i * m + j] = self.scale * (ds[i * m + j] + ds[j * m + i]);
            }
        }
        dense::add_into(&mut dx, &dense::matmul(&sym, x, m, m, n));
        let half = self.channels * n;
        let top = &dx[..half];
        let bottom = dx[half..].to_vec();
        let shape = vec![self.channels, n];
        let (hand, object) = if self.grasping {
            (top.to_vec(), bottom.clone())
        } else {
            let hand = top.iter().zip(&bottom).map(|(a, b)| a + b).collect();
            (hand, vec![0.0; half])
        };
        Ok(FuseGrads {
            hand: FeatureTensor::new(shape.clone(), hand)?,
            object: FeatureTensor::new(shape.clone(), object)?,
            branch: FeatureTensor::new(shape, bottom)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(c: usize, n: usize, v: Vec<f64>) -> FeatureTensor {
        FeatureTensor::new(vec![c, n], v).unwrap()
    }

    #[test]
    fn hand_only_ignores_object() {
        let hand = t(2, 3, vec![0.1, 0.2, 0.3, -0.4, 0.5, 0.6]);
        let a = t(2, 3, vec![9.0, 8.0, 7.0, 6.0, 5.0, 4.0]);
        let b = t(2, 3, vec![-1.0, 0.0, 1.0, 2.0, 3.0, 4.0]);
        let (ya, _) = grasp_aware_fuse(&hand, &a, false).unwrap();
        let (yb, _) = grasp_aware_fuse(&hand, &b, false).unwrap();
        assert_eq!(ya, yb);
        let (yc, _) = grasp_aware_fuse(&hand, &hand, true).unwrap();
        assert_eq!(ya, yc);
    }

    // Hand-computed evaluation of a 1-channel, 2-element instance (stacked
    // feature is 2×2): F = [[1, 0], [0, 1]], scores = I/√2.
    #[test]
    fn golden_identity_pair() {
        let hand = t(1, 2, vec![1.0, 0.0]);
        let object = t(1, 2, vec![0.0, 1.0]);
        let (y, ctx) = grasp_aware_fuse(&hand, &object, true).unwrap();
        let e = (1.0 / 2f64.sqrt()).exp();
        let a = e / (e + 1.0);
        let b = 1.0 / (e + 1.0);
        let expected = [a, b, b, a];
        for (got, want) in y.data().iter().zip(expected) {
            assert!((got - want).abs() < 1e-15);
        }
        assert_eq!(ctx.output_shape(), [2, 2]);
    }

    #[test]
    fn rows_or_columns_sum_to_one() {
        let hand = t(2, 3, vec![0.3, -0.1, 0.7, 0.2, 0.9, -0.5]);
        let object = t(2, 3, vec![1.3, 0.4, -0.2, 0.0, 0.1, 0.8]);
        let (_, ctx) = grasp_aware_fuse(&hand, &object, true).unwrap();
        for row in ctx.attention().chunks(4) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let (_, ctx) = grasp_aware_fuse_with(&hand, &object, true, SoftmaxAxis::Column).unwrap();
        for j in 0..4 {
            let s: f64 = (0..4).map(|i| ctx.attention()[i * 4 + j]).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_errors_and_zero_upstream() {
        let hand = t(2, 3, vec![0.3, -0.1, 0.7, 0.2, 0.9, -0.5]);
        let (_, ctx) = grasp_aware_fuse(&hand, &hand, false).unwrap();
        assert!(matches!(
            ctx.backward(&FeatureTensor::zeros(vec![2, 3])),
            Err(FusionError::StaleCache { .. })
        ));
        let (_, ctx) = grasp_aware_fuse(&hand, &hand, true).unwrap();
        let g = ctx.backward(&FeatureTensor::zeros(vec![4, 3])).unwrap();
        assert!(g
            .hand
            .data()
            .iter()
            .chain(g.object.data())
            .all(|v| *v == 0.0));
    }

    #[test]
    fn mismatched_inputs() {
        let a = t(2, 3, vec![0.0; 6]);
        let b = t(3, 2, vec![0.0; 6]);
        assert!(matches!(
            grasp_aware_fuse(&a, &b, true),
            Err(FusionError::ShapeMismatch { .. })
        ));
    }
}
