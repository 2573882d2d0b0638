use hopekit::fusion::{
    grasp_aware_fuse, grasp_aware_fuse_with, multihead_attention_forward, switcher_loss,
    AttentionParams, SoftmaxAxis,
};
use hopekit::tensor::FeatureTensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;

fn random(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> FeatureTensor {
    let n = shape.iter().product();
    FeatureTensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = dot(analytic, analytic)
        .sqrt()
        .max(dot(numeric, numeric).sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Central differences of `f` at every entry of `x`.
fn numeric_grad(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + EPS;
            let up = f(&probe);
            probe[i] = orig - EPS;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * EPS)
        })
        .collect()
}

#[test]
fn switcher_loss_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let logits = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
        let label = rng.random_bool(0.5);
        let (_, grad) = switcher_loss(logits, label);
        let num = numeric_grad(&logits, |l| switcher_loss([l[0], l[1]], label).0);
        assert!(relative_error(&grad, &num) < 1e-6, "{grad:?} vs {num:?}");
    }
}

#[test]
fn fusion_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for seed in 0..20 {
        let c = 1 + seed % 3;
        let n = 2 + seed % 4;
        let hand = random(vec![c, n], &mut rng);
        let object = random(vec![c, n], &mut rng);
        let upstream = random(vec![2 * c, n], &mut rng);
        for grasping in [false, true] {
            for axis in [SoftmaxAxis::Row, SoftmaxAxis::Column] {
                let (_, ctx) = grasp_aware_fuse_with(&hand, &object, grasping, axis).unwrap();
                let g = ctx.backward(&upstream).unwrap();
                let loss = |h: &[f64], o: &[f64]| {
                    let h = FeatureTensor::new(vec![c, n], h.to_vec()).unwrap();
                    let o = FeatureTensor::new(vec![c, n], o.to_vec()).unwrap();
                    let (y, _) = grasp_aware_fuse_with(&h, &o, grasping, axis).unwrap();
                    dot(y.data(), upstream.data())
                };
                let nh = numeric_grad(hand.data(), |h| loss(h, object.data()));
                let no = numeric_grad(object.data(), |o| loss(hand.data(), o));
                assert!(relative_error(g.hand.data(), &nh) < 1e-4);
                if grasping {
                    assert!(relative_error(g.object.data(), &no) < 1e-4);
                } else {
                    assert!(g.object.data().iter().all(|v| *v == 0.0));
                    assert!(no.iter().all(|v| *v == 0.0));
                }
            }
        }
    }
}

#[test]
fn fusion_gradient_of_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let hand = random(vec![2, 3], &mut rng);
    let object = random(vec![2, 3], &mut rng);
    let (_, ctx) = grasp_aware_fuse(&hand, &object, true).unwrap();
    let g = ctx
        .backward(&FeatureTensor::filled(vec![4, 3], 1.0))
        .unwrap();
    let sum = |h: &[f64], o: &[f64]| {
        let h = FeatureTensor::new(vec![2, 3], h.to_vec()).unwrap();
        let o = FeatureTensor::new(vec![2, 3], o.to_vec()).unwrap();
        grasp_aware_fuse(&h, &o, true)
            .unwrap()
            .0
            .data()
            .iter()
            .sum::<f64>()
    };
    let nh = numeric_grad(hand.data(), |h| sum(h, object.data()));
    let no = numeric_grad(object.data(), |o| sum(hand.data(), o));
    assert!(relative_error(g.hand.data(), &nh) < 1e-5);
    assert!(relative_error(g.object.data(), &no) < 1e-5);
}

#[test]
fn attention_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for seed in 0..20u64 {
        let heads = 1 + (seed as usize % 2);
        let d = 2 * heads * (1 + seed as usize % 2);
        let len = 1 + seed as usize % 4;
        let params = AttentionParams::seeded(heads, d, seed).unwrap();
        let x = random(vec![len, d], &mut rng);
        let upstream = random(vec![len, d], &mut rng);
        let (_, ctx) = multihead_attention_forward(&x, &params).unwrap();
        let g = ctx.backward(&upstream).unwrap();
        let eval = |x: &FeatureTensor, p: &AttentionParams| {
            dot(
                multihead_attention_forward(x, p).unwrap().0.data(),
                upstream.data(),
            )
        };
        let nx = numeric_grad(x.data(), |v| {
            eval(
                &FeatureTensor::new(vec![len, d], v.to_vec()).unwrap(),
                &params,
            )
        });
        assert!(relative_error(g.x.data(), &nx) < 1e-4, "seed {seed}");
        type Field = fn(&mut AttentionParams) -> &mut Vec<f64>;
        let fields: [(Field, &Vec<f64>); 4] = [
            (|p| &mut p.wq, &g.wq),
            (|p| &mut p.wk, &g.wk),
            (|p| &mut p.wv, &g.wv),
            (|p| &mut p.wo, &g.wo),
        ];
        for (field, analytic) in fields {
            let mut base = params.clone();
            let w = field(&mut base).clone();
            let num = numeric_grad(&w, |v| {
                let mut p = params.clone();
                *field(&mut p) = v.to_vec();
                eval(&x, &p)
            });
            assert!(relative_error(analytic, &num) < 1e-4, "seed {seed}");
        }
    }
}

#[test]
fn hand_only_fusion_is_bit_stable() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let hand = random(vec![3, 4], &mut rng);
    let object = random(vec![3, 4], &mut rng);
    let (reference, _) = grasp_aware_fuse(&hand, &object, false).unwrap();
    for _ in 0..100 {
        let perturbed = random(vec![3, 4], &mut rng).map(|v| v * 1e3);
        let (y, ctx) = grasp_aware_fuse(&hand, &perturbed, false).unwrap();
        assert_eq!(
            y.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            reference
                .data()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        );
        let g = ctx.backward(&random(vec![6, 4], &mut rng)).unwrap();
        assert!(g.object.data().iter().all(|v| *v == 0.0));
    }
}
