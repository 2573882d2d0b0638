//! Built-in numerical checks. Each check reports its worst observed error
//! against a fixed tolerance; output is identical for any thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hopekit::deoccluder::{
    repaint_run, run_candidates, ConstantDenoiser, LinearShrinkDenoiser, NoiseSchedule,
    RepaintInputs, StrengthCandidates,
};
use hopekit::fixture::{synthetic_fixture, FixtureOptions};
use hopekit::fusion::{
    grasp_aware_fuse, grasp_aware_fuse_with, multihead_attention_forward, switcher_loss,
    AttentionParams, SoftmaxAxis,
};
use hopekit::geometry::{
    procrustes_align, project_points, relative_rotation_error, relative_translation_error,
    solve_pnp_epnp, PointSet3, RigidPose, Rotation3, SimilarityTransform,
};
use hopekit::metrics::{auc, default_thresholds, mean_position_error, pck_curve, per_point_errors};
use hopekit::tensor::FeatureTensor;

use crate::{CliError, Global};

const EPS: f64 = 1e-5;

struct Outcome {
    worst: f64,
    tolerance: f64,
}

type Check = fn(u64, bool) -> Outcome;

const CHECKS: [(&str, Check); 9] = [
    ("gradient.switcher", switcher),
    ("gradient.fusion", fusion),
    ("gradient.attention", attention),
    ("fusion.gating", gating),
    ("geometry.procrustes", procrustes),
    ("geometry.epnp", epnp),
    ("metrics.oracle", metric_oracle),
    ("repaint.background", background),
    ("repaint.determinism", determinism),
];

pub fn run(global: &Global, fault: Option<&str>) -> Result<(), CliError> {
    if let Some(name) = fault {
        if !CHECKS.iter().any(|(n, _)| *n == name) {
            return Err(CliError::Input(format!("unknown check `{name}`")));
        }
    }
    let mut out = String::new();
    let mut failed = Vec::new();
    for (name, check) in CHECKS {
        let o = check(global.seed, fault == Some(name));
        let pass = o.worst <= o.tolerance;
        if !pass {
            failed.push(name);
        }
        out.push_str(&format!(
            "{} {name:<22} worst={:.1e} tol={:.0e}\n",
            if pass { "PASS" } else { "FAIL" },
            o.worst,
            o.tolerance
        ));
    }
    out.push_str(&format!(
        "{}/{} checks passed\n",
        CHECKS.len() - failed.len(),
        CHECKS.len()
    ));
    global.emit(&out)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "failed checks: {}",
            failed.join(", ")
        )))
    }
}

fn random(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> FeatureTensor {
    let n = shape.iter().product();
    FeatureTensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .expect("consistent shape")
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
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

fn perturb(grad: &mut [f64], fault: bool) {
    if fault {
        grad[0] += 0.1;
    }
}

fn switcher(seed: u64, fault: bool) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let logits = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
        let label = rng.random_bool(0.5);
        let (_, mut grad) = switcher_loss(logits, label);
        perturb(&mut grad, fault);
        let num = numeric_grad(&logits, |l| switcher_loss([l[0], l[1]], label).0);
        worst = worst.max(relative_error(&grad, &num));
    }
    Outcome {
        worst,
        tolerance: 1e-6,
    }
}

fn fusion(seed: u64, fault: bool) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let (c, n) = (1 + k % 3, 2 + k % 4);
        let hand = random(vec![c, n], &mut rng);
        let object = random(vec![c, n], &mut rng);
        let upstream = random(vec![2 * c, n], &mut rng);
        let (_, ctx) =
            grasp_aware_fuse_with(&hand, &object, true, SoftmaxAxis::Row).expect("valid shapes");
        let g = ctx.backward(&upstream).expect("matching upstream");
        let loss = |h: &[f64], o: &[f64]| {
            let h = FeatureTensor::new(vec![c, n], h.to_vec()).expect("shape");
            let o = FeatureTensor::new(vec![c, n], o.to_vec()).expect("shape");
            dot(
                grasp_aware_fuse(&h, &o, true)
                    .expect("valid shapes")
                    .0
                    .data(),
                upstream.data(),
            )
        };
        let mut gh = g.hand.data().to_vec();
        perturb(&mut gh, fault);
        let nh = numeric_grad(hand.data(), |h| loss(h, object.data()));
        let no = numeric_grad(object.data(), |o| loss(hand.data(), o));
        worst = worst
            .max(relative_error(&gh, &nh))
            .max(relative_error(g.object.data(), &no));
    }
    Outcome {
        worst,
        tolerance: 1e-4,
    }
}

fn attention(seed: u64, fault: bool) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
    let mut worst: f64 = 0.0;
    for k in 0..20u64 {
        let heads = 1 + (k as usize % 2);
        let d = 2 * heads;
        let len = 1 + k as usize % 4;
        let params = AttentionParams::seeded(heads, d, seed.wrapping_add(k)).expect("valid params");
        let x = random(vec![len, d], &mut rng);
        let upstream = random(vec![len, d], &mut rng);
        let (_, ctx) = multihead_attention_forward(&x, &params).expect("valid shapes");
        let g = ctx.backward(&upstream).expect("matching upstream");
        let eval = |x: &FeatureTensor, p: &AttentionParams| {
            dot(
                multihead_attention_forward(x, p)
                    .expect("valid shapes")
                    .0
                    .data(),
                upstream.data(),
            )
        };
        let mut gx = g.x.data().to_vec();
        perturb(&mut gx, fault);
        let nx = numeric_grad(x.data(), |v| {
            eval(
                &FeatureTensor::new(vec![len, d], v.to_vec()).expect("shape"),
                &params,
            )
        });
        let nq = numeric_grad(&params.wq, |v| {
            let mut p = params.clone();
            p.wq = v.to_vec();
            eval(&x, &p)
        });
        worst = worst
            .max(relative_error(&gx, &nx))
            .max(relative_error(&g.wq, &nq));
    }
    Outcome {
        worst,
        tolerance: 1e-4,
    }
}

fn gating(seed: u64, fault: bool) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(3));
    let hand = random(vec![3, 4], &mut rng);
    let object = random(vec![3, 4], &mut rng);
    let (reference, _) = grasp_aware_fuse(&hand, &object, false).expect("valid shapes");
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let other = random(vec![3, 4], &mut rng).map(|v| v * 1e3);
        let (y, ctx) = grasp_aware_fuse(&hand, &other, fault).expect("valid shapes");
        let g = ctx
            .backward(&random(vec![6, 4], &mut rng))
            .expect("matching upstream");
        for (a, b) in y.data().iter().zip(reference.data()) {
            if a.to_bits() != b.to_bits() {
                worst = worst.max((a - b).abs().max(f64::MIN_POSITIVE));
            }
        }
        for v in g.object.data() {
            worst = worst.max(v.abs());
        }
    }
    Outcome {
        worst,
        tolerance: 0.0,
    }
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation3 {
    let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
    let q = if q.iter().all(|v| v.abs() < 1e-3) {
        [1.0, 0.0, 0.0, 0.0]
    } else {
        q
    };
    Rotation3::from_quaternion(q)
}

fn procrustes(seed: u64, fault: bool) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(4));
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let truth = SimilarityTransform::new(
            rng.random_range(0.5..2.0),
            random_rotation(&mut rng),
            std::array::from_fn(|_| rng.random_range(-100.0..100.0)),
        )
        .expect("positive scale");
        let src: Vec<[f64; 3]> = (0..12)
            .map(|_| std::array::from_fn(|_| rng.random_range(-50.0..50.0)))
            .collect();
        let src = PointSet3::new(src).expect("finite");
        let mut tgt: Vec<[f64; 3]> = truth.apply_all(&src).points().to_vec();
        if fault {
            tgt[0][0] += 1e-3;
        }
        let tgt = PointSet3::new(tgt).expect("finite");
        let est = procrustes_align(&src, &tgt).expect("non-degenerate");
        worst = worst
            .max((est.scale - truth.scale).abs())
            .max(relative_rotation_error(&est.rotation, &truth.rotation))
            .max(relative_translation_error(est.translation, truth.translation) / 100.0);
    }
    Outcome {
        worst,
        tolerance: 1e-8,
    }
}

fn epnp(seed: u64, fault: bool) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(5));
    let cam = hopekit::fixture::intrinsics();
    let model = hopekit::evaluation::box_corners([40.0, 30.0, 50.0]);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let depth = rng.random_range(500.0..2000.0);
        let truth = RigidPose::new(
            random_rotation(&mut rng),
            [
                rng.random_range(-100.0..100.0),
                rng.random_range(-100.0..100.0),
                depth,
            ],
        );
        let mut image = project_points(&model, &truth, &cam).expect("in front of camera");
        if fault {
            image[0][0] += 5.0;
        }
        let est = solve_pnp_epnp(&model, &image, &cam).expect("well-posed");
        worst = worst
            .max(relative_rotation_error(&est.rotation, &truth.rotation))
            .max(relative_translation_error(est.translation, truth.translation) * 1e-3);
    }
    Outcome {
        worst,
        tolerance: 1e-6,
    }
}

/// Pooled joint error, PCK and AUC on the fixture against plain loops.
fn metric_oracle(seed: u64, fault: bool) -> Outcome {
    let fixture = synthetic_fixture(&FixtureOptions {
        seed,
        ..FixtureOptions::default()
    });
    let thresholds = default_thresholds();
    let mut errors = Vec::new();
    let mut worst: f64 = 0.0;
    for (p, g) in fixture.pred.iter().zip(&fixture.gt) {
        let (pj, gj) = (&p.hand.joints_3d, &g.hand.joints_3d);
        let mut sum = 0.0;
        for (a, b) in pj.points().iter().zip(gj.points()) {
            sum += ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
        }
        let oracle = sum / pj.len() as f64;
        let got =
            mean_position_error(pj, gj).expect("matching sizes") + if fault { 1e-6 } else { 0.0 };
        worst = worst.max((got - oracle).abs());
        errors.extend(per_point_errors(pj, gj).expect("matching sizes"));
    }
    let curve = pck_curve(&errors, &thresholds).expect("sorted thresholds");
    let mut area = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for (i, t) in thresholds.iter().enumerate() {
        let hits = errors.iter().filter(|e| **e <= *t).count();
        let frac = hits as f64 / errors.len() as f64;
        worst = worst.max((curve.pck[i] - frac).abs());
        if let Some((t0, f0)) = prev {
            area += (t - t0) * (frac + f0) / 2.0;
        }
        prev = Some((*t, frac));
    }
    let oracle_auc = 100.0 * area / (thresholds[thresholds.len() - 1] - thresholds[0]);
    worst = worst.max((auc(&curve).expect("non-empty") - oracle_auc).abs());
    Outcome {
        worst,
        tolerance: 1e-9,
    }
}

fn toy_latent(seed: u64) -> (FeatureTensor, FeatureTensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = random(vec![4, 8, 8], &mut rng);
    let mask = (0..64)
        .map(|i| if (i % 8) >= 4 && i / 8 >= 2 { 1.0 } else { 0.0 })
        .collect();
    (x0, FeatureTensor::new(vec![8, 8], mask).expect("shape"))
}

fn background(seed: u64, fault: bool) -> Outcome {
    let (x0, mask) = toy_latent(seed.wrapping_add(6));
    let inputs = RepaintInputs {
        x0: &x0,
        mask: &mask,
        depth: None,
    };
    let schedule = NoiseSchedule::default();
    let a = repaint_run(
        &inputs,
        &LinearShrinkDenoiser { factor: 0.5 },
        &schedule,
        1.0,
        seed,
    )
    .expect("valid inputs");
    let b = repaint_run(
        &inputs,
        &ConstantDenoiser { value: 3.0 },
        &schedule,
        1.0,
        seed ^ u64::from(fault),
    )
    .expect("valid inputs");
    let mut worst: f64 = 0.0;
    let plane = 64;
    for (i, (va, vb)) in a.x.data().iter().zip(b.x.data()).enumerate() {
        if mask.data()[i % plane] == 0.0 && va.to_bits() != vb.to_bits() {
            worst = worst.max((va - vb).abs().max(f64::MIN_POSITIVE));
        }
    }
    Outcome {
        worst,
        tolerance: 0.0,
    }
}

fn determinism(seed: u64, fault: bool) -> Outcome {
    let (x0, mask) = toy_latent(seed.wrapping_add(7));
    let inputs = RepaintInputs {
        x0: &x0,
        mask: &mask,
        depth: None,
    };
    let schedule = NoiseSchedule::default();
    let denoiser = LinearShrinkDenoiser { factor: 0.9 };
    let candidates = StrengthCandidates::default();
    let one =
        run_candidates(&inputs, &denoiser, &schedule, &candidates, seed, 1).expect("valid inputs");
    let eight = run_candidates(
        &inputs,
        &denoiser,
        &schedule,
        &candidates,
        seed + u64::from(fault),
        8,
    )
    .expect("valid inputs");
    let mut worst: f64 = 0.0;
    for (a, b) in one.iter().zip(&eight) {
        for (va, vb) in a.data().iter().zip(b.data()) {
            if va.to_bits() != vb.to_bits() {
                worst = worst.max((va - vb).abs().max(f64::MIN_POSITIVE));
            }
        }
    }
    Outcome {
        worst,
        tolerance: 0.0,
    }
}
