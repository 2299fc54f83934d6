mod common;

use std::rc::Rc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cotsfa::augment::{
    augment_batch, inject_pointwise, AugmentConfig, ContinuousMode, CurveParams, CurveSampler,
    PointwiseKind, PointwiseSpec,
};
use cotsfa::dataset::{Origin, WindowPair};
use cotsfa::eval::{
    delta_improvement, paired_t_test, CellResult, MetricAccumulator, Metrics, ScenarioReport,
};
use cotsfa::loss::{similarity_tape, SimilarityBatch};
use cotsfa::model::{encode, init_model, predict, ModelConfig, ModelParams, ParamVars};
use cotsfa::numeric::{grad_check, logsumexp, Tape, Tensor, Var};
use cotsfa::train::{batch_objective, lr_schedule, TrainConfig};

use common::{brute_similarity, nested, random_tensor};

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn weighted_sum(tape: &mut Tape, y: Var, rng: &mut ChaCha8Rng) -> cotsfa::Result<Var> {
    let w = random_tensor(rng, tape.shape(y), -1.0, 1.0);
    let w = tape.constant(w);
    let p = tape.mul(y, w)?;
    tape.sum(p, None)
}

/// Check `op` at ten random points drawn from `[lo, hi)`.
fn check_op<F>(name: &str, shape: &[usize], lo: f64, hi: f64, op: F)
where
    F: Fn(&mut Tape, Var, &mut ChaCha8Rng) -> cotsfa::Result<Var>,
{
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let point = random_tensor(&mut rng, shape, lo, hi);
        let report = grad_check(
            |tape, x| {
                let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
                let y = op(tape, x, &mut rng)?;
                weighted_sum(tape, y, &mut rng)
            },
            &point,
            EPS,
        )
        .unwrap();
        assert!(report.passed(TOL), "{name} seed {seed}: {report:?}");
    }
}

fn away_from_zero(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = random_tensor(&mut rng, shape, 0.1, 2.0);
    for v in t.data_mut() {
        if rng.random_bool(0.5) {
            *v = -*v;
        }
    }
    t
}

#[test]
fn grad_matmul() {
    check_op("matmul lhs", &[3, 4], -1.0, 1.0, |t, x, r| {
        let b = t.constant(random_tensor(r, &[4, 2], -1.0, 1.0));
        t.matmul(x, b)
    });
    check_op("matmul rhs", &[4, 2], -1.0, 1.0, |t, x, r| {
        let a = t.constant(random_tensor(r, &[3, 4], -1.0, 1.0));
        t.matmul(a, x)
    });
    check_op("batched matmul", &[2, 3, 4], -1.0, 1.0, |t, x, r| {
        let b = t.constant(random_tensor(r, &[2, 4, 2], -1.0, 1.0));
        t.matmul(x, b)
    });
    check_op("batched matmul rhs", &[2, 4, 2], -1.0, 1.0, |t, x, r| {
        let a = t.constant(random_tensor(r, &[2, 3, 4], -1.0, 1.0));
        t.matmul(a, x)
    });
}

#[test]
fn grad_elementwise_binary() {
    check_op("add row broadcast", &[1, 4], -1.0, 1.0, |t, x, r| {
        let a = t.constant(random_tensor(r, &[3, 4], -1.0, 1.0));
        t.add(a, x)
    });
    check_op("add lhs", &[3, 4], -1.0, 1.0, |t, x, r| {
        let b = t.constant(random_tensor(r, &[1, 4], -1.0, 1.0));
        t.add(x, b)
    });
    check_op("sub column broadcast", &[2, 1, 3], -1.0, 1.0, |t, x, r| {
        let a = t.constant(random_tensor(r, &[2, 4, 3], -1.0, 1.0));
        t.sub(a, x)
    });
    check_op("sub scalar", &[], -1.0, 1.0, |t, x, r| {
        let a = t.constant(random_tensor(r, &[3, 2], -1.0, 1.0));
        t.sub(a, x)
    });
    check_op("mul", &[3, 4], -1.0, 1.0, |t, x, r| {
        let a = t.constant(random_tensor(r, &[3, 4], -1.0, 1.0));
        t.mul(x, a)
    });
    check_op("mul self", &[3, 2], -1.0, 1.0, |t, x, _| t.mul(x, x));
}

#[test]
fn grad_elementwise_unary() {
    check_op("scale", &[3, 3], -1.0, 1.0, |t, x, _| Ok(t.scale(x, -2.5)));
    check_op("add_scalar", &[3, 3], -1.0, 1.0, |t, x, _| {
        Ok(t.add_scalar(x, 0.7))
    });
    check_op("exp", &[3, 3], -2.0, 2.0, |t, x, _| Ok(t.exp(x)));
    check_op("log", &[3, 3], 0.2, 3.0, |t, x, _| Ok(t.log(x)));
    check_op("tanh", &[3, 3], -2.0, 2.0, |t, x, _| Ok(t.tanh(x)));
    for seed in 0..10u64 {
        let point = away_from_zero(&[3, 3], seed);
        let report = grad_check(
            |tape, x| {
                let y = tape.abs(x);
                weighted_sum(tape, y, &mut ChaCha8Rng::seed_from_u64(seed))
            },
            &point,
            EPS,
        )
        .unwrap();
        assert!(report.passed(TOL), "abs seed {seed}: {report:?}");
    }
}

#[test]
fn grad_reductions() {
    for axis in [None, Some(0), Some(1), Some(2)] {
        check_op("sum", &[2, 3, 4], -1.0, 1.0, |t, x, _| t.sum(x, axis));
        check_op("mean", &[2, 3, 4], -1.0, 1.0, |t, x, _| t.mean(x, axis));
    }
    check_op("logsumexp", &[3, 5], -3.0, 3.0, |t, x, _| t.logsumexp(x));
    check_op("logsumexp 3d", &[2, 2, 4], -30.0, 30.0, |t, x, _| {
        t.logsumexp(x)
    });
}

#[test]
fn grad_shape_ops() {
    for axis in 0..3 {
        check_op("concat", &[2, 2, 2], -1.0, 1.0, |t, x, r| {
            let mut shape = vec![2, 2, 2];
            shape[axis] = 3;
            let other = t.constant(random_tensor(r, &shape, -1.0, 1.0));
            let sq = t.mul(x, x)?;
            t.concat(&[x, other, sq], axis)
        });
    }
    check_op("slice", &[4, 3], -1.0, 1.0, |t, x, _| t.slice(x, 0, 1, 3));
    check_op("slice inner", &[2, 5, 2], -1.0, 1.0, |t, x, _| {
        t.slice(x, 1, 2, 5)
    });
    check_op("reshape", &[2, 6], -1.0, 1.0, |t, x, _| {
        t.reshape(x, &[3, 2, 2])
    });
    check_op("permute", &[2, 3, 4], -1.0, 1.0, |t, x, _| {
        t.permute(x, &[2, 0, 1])
    });
    check_op("gather with repeats", &[5], -1.0, 1.0, |t, x, _| {
        t.gather(x, Rc::new(vec![4, 0, 0, 2, 4, 4]), &[2, 3])
    });
}

#[test]
fn grad_custom_similarity() {
    for (b, views) in [(1usize, 1usize), (2, 2), (3, 1)] {
        let n = b * (1 + views);
        check_op("similarity", &[n, 3, 2], -1.0, 1.0, |t, x, _| {
            let orig = t.slice(x, 0, 0, b)?;
            let aug = t.slice(x, 0, b, n)?;
            similarity_tape(t, orig, aug, views, 0.7)
        });
    }
}

#[test]
fn backward_is_linear_in_the_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let point = random_tensor(&mut rng, &[3, 4], -1.0, 1.0);
    let w = random_tensor(&mut rng, &[4, 2], -1.0, 1.0);
    let build = |tape: &mut Tape, x: Var| -> (Var, Var) {
        let wv = tape.constant(w.clone());
        let h = tape.matmul(x, wv).unwrap();
        let h = tape.tanh(h);
        let l1 = tape.sum(h, None).unwrap();
        let e = tape.exp(x);
        let l2 = tape.mean(e, None).unwrap();
        (l1, l2)
    };
    let grad_of = |which: usize| -> Tensor {
        let mut tape = Tape::new();
        let x = tape.leaf(point.clone());
        let (l1, l2) = build(&mut tape, x);
        let loss = match which {
            1 => l1,
            2 => l2,
            _ => tape.add(l1, l2).unwrap(),
        };
        tape.backward(loss).unwrap().get_or_zeros(x, &[3, 4])
    };
    let (g1, g2, g12) = (grad_of(1), grad_of(2), grad_of(0));
    for k in 0..12 {
        assert!((g12.data()[k] - g1.data()[k] - g2.data()[k]).abs() <= 1e-12);
    }
}

fn window(rng: &mut ChaCha8Rng, l: usize, h: usize, c: usize, k: usize) -> WindowPair {
    WindowPair {
        x: random_tensor(rng, &[l, c], 0.2, 2.0),
        y: random_tensor(rng, &[h, c], 0.2, 2.0),
        origin: Origin {
            series_id: "p".into(),
            start: k,
        },
    }
}

fn similarity_inputs(
    seed: u64,
    b: usize,
    views: usize,
    steps: usize,
    width: usize,
) -> (Vec<Tensor>, Vec<Tensor>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let orig = (0..b)
        .map(|_| random_tensor(&mut rng, &[steps, width], -1.5, 1.5))
        .collect();
    let aug = (0..views * b)
        .map(|_| random_tensor(&mut rng, &[steps, width], -1.5, 1.5))
        .collect();
    (orig, aug)
}

#[test]
fn similarity_oracle_at_smallest_shapes() {
    for seed in 0..20u64 {
        let (z, za) = similarity_inputs(seed, 2, 2, 2, 2);
        let (y, ya) = similarity_inputs(seed + 100, 2, 2, 2, 2);
        let (zn, zan) = (
            z.iter().map(nested).collect::<Vec<_>>(),
            za.iter().map(nested).collect::<Vec<_>>(),
        );
        let (yn, yan) = (
            y.iter().map(nested).collect::<Vec<_>>(),
            ya.iter().map(nested).collect::<Vec<_>>(),
        );
        let batch = SimilarityBatch::new(z, y, za, ya, 2, 1.0).unwrap();
        let mut expected = 0.0;
        for i in 0..2 {
            for a in 0..2 {
                let sz = brute_similarity(&zn, &zan, 2, 1.0, i, a);
                let sy = brute_similarity(&yn, &yan, 2, 1.0, i, a);
                let mean_z = (0..2)
                    .map(|t| batch.latent_similarity(i, a, t))
                    .sum::<f64>()
                    / 2.0;
                assert!((mean_z - sz).abs() <= 1e-10);
                expected += (sz - sy).abs();
            }
        }
        expected /= 4.0;
        assert!(
            (batch.alignment_loss() - expected).abs() <= 1e-10,
            "seed {seed}"
        );
    }
}

#[test]
fn frozen_head_still_passes_gradient_to_encoder() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let model = ModelConfig::new(8, 4, 1, 3);
    let params = init_model(&model).unwrap();
    let pairs: Vec<WindowPair> = (0..3).map(|k| window(&mut rng, 8, 4, 1, k)).collect();
    let refs: Vec<&WindowPair> = pairs.iter().collect();
    let cfg = TrainConfig {
        batch_size: 3,
        views: 2,
        lambda_align: 1.0,
        ..TrainConfig::default()
    };
    let aug: Vec<_> = cfg
        .modes
        .iter()
        .map(|m| augment_batch(&refs, *m, cfg.views, &AugmentConfig::default(), &mut rng).unwrap())
        .collect();

    let mut tape = Tape::new();
    let vars: Vec<Var> = params
        .tensors
        .iter()
        .enumerate()
        .map(|(k, t)| {
            if k >= 8 {
                tape.constant(t.clone())
            } else {
                tape.leaf(t.clone())
            }
        })
        .collect();
    let pv = ParamVars(vars.clone().try_into().unwrap());
    let obj = batch_objective(&mut tape, &model, &pv, &refs, &aug, &cfg).unwrap();
    let align = obj.align.expect("alignment enabled");
    assert!(tape.value(align).item().unwrap() > 0.0);
    let grads = tape.backward(align).unwrap();
    for (k, v) in vars.iter().enumerate().take(6) {
        let g = grads.get_or_zeros(*v, params.tensors[k].shape());
        assert!(g.max_abs() > 0.0, "encoder tensor {k} has zero gradient");
    }
    for v in &vars[8..] {
        assert!(grads.get(*v).is_none_or(|g| g.max_abs() == 0.0));
    }
}

/// `P(|T| > |t|)` for Student's t with `df` degrees of freedom, by Simpson's
/// rule on the density over `[0, |t|]`.
fn student_two_sided(t: f64, df: usize) -> f64 {
    // Γ(k/2) for integer k by the half-integer recurrence.
    let gamma_half = |k: usize| -> f64 {
        let (mut g, mut x) = if k.is_multiple_of(2) {
            (1.0, 1.0)
        } else {
            (std::f64::consts::PI.sqrt(), 0.5)
        };
        while 2.0 * x < k as f64 {
            g *= x;
            x += 1.0;
        }
        g
    };
    let nu = df as f64;
    let norm = gamma_half(df + 1) / ((nu * std::f64::consts::PI).sqrt() * gamma_half(df));
    let pdf = |x: f64| norm * (1.0 + x * x / nu).powf(-(nu + 1.0) / 2.0);
    let n = 200_000;
    let h = t.abs() / n as f64;
    let mut s = pdf(0.0) + pdf(t.abs());
    for k in 1..n {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * pdf(k as f64 * h);
    }
    1.0 - 2.0 * s * h / 3.0
}

#[test]
fn paired_t_test_matches_integrated_density() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut fixtures: Vec<(Vec<f64>, Vec<f64>)> =
        vec![(vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![1.1, 1.9, 3.3, 3.7, 5.4])];
    for n in [2usize, 3, 4, 6, 10, 25] {
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        let b: Vec<f64> = a
            .iter()
            .map(|v| v - 0.2 + rng.random_range(-0.3..0.3))
            .collect();
        fixtures.push((a, b));
    }
    for (a, b) in fixtures {
        let r = paired_t_test(&a, &b).unwrap();
        let oracle = student_two_sided(r.t, a.len() - 1);
        assert!(
            (r.p - oracle).abs() <= 1e-6,
            "n = {}: p {} vs {}",
            a.len(),
            r.p,
            oracle
        );
    }
}

fn metrics_of(windows: &[(Tensor, Tensor)]) -> Metrics {
    let mut acc = MetricAccumulator::default();
    for (p, t) in windows {
        acc.add(p, t).unwrap();
    }
    acc.finish().unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn logsumexp_is_shift_invariant(
        v in prop::collection::vec(-50.0f64..50.0, 1..20),
        c in -50.0f64..50.0,
    ) {
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        let lhs = logsumexp(&shifted).unwrap();
        let rhs = logsumexp(&v).unwrap() + c;
        prop_assert!((lhs - rhs).abs() <= 1e-12, "{lhs} vs {rhs}");
    }

    #[test]
    fn input_only_leaves_targets_untouched(seed in any::<u64>(), b in 1usize..4, views in 1usize..4, c in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pairs: Vec<WindowPair> = (0..b).map(|k| window(&mut rng, 16, 4, c, k)).collect();
        let refs: Vec<&WindowPair> = pairs.iter().collect();
        let aug = augment_batch(&refs, ContinuousMode::InputOnly, views, &AugmentConfig::default(), &mut rng).unwrap();
        prop_assert_eq!(aug.len(), views * b);
        for (k, a) in aug.iter().enumerate() {
            prop_assert_eq!(&a.y, &pairs[k % b].y);
            let t0 = a.t0.unwrap();
            prop_assert!(t0 <= 8);
            prop_assert_eq!(&a.x.data()[..t0 * c], &pairs[k % b].x.data()[..t0 * c]);
        }
    }

    #[test]
    fn injectors_are_deterministic(seed in any::<u64>(), ratio in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pairs: Vec<WindowPair> = (0..2).map(|k| window(&mut rng, 16, 4, 2, k)).collect();
        let refs: Vec<&WindowPair> = pairs.iter().collect();
        for mode in [ContinuousMode::InputOnly, ContinuousMode::InputOutput] {
            let run = || augment_batch(&refs, mode, 3, &AugmentConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(run(), run());
        }
        for kind in [PointwiseKind::Const, PointwiseKind::Missing, PointwiseKind::Gaussian] {
            let spec = PointwiseSpec::new(kind, ratio);
            let run = || inject_pointwise(&pairs[0].x, &spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let (x, idx) = run();
            prop_assert_eq!(run(), (x, idx.clone()));
            prop_assert_eq!(idx.len(), spec.count(16));
        }
    }

    #[test]
    fn sampled_curves_meet_constraints(seed in any::<u64>(), span in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p: CurveParams = CurveSampler::default().sample(&mut rng, span).unwrap();
        prop_assert!(p.is_valid(span));
        for t in 0..=span.max(30) {
            let v = p.eval(t as f64);
            prop_assert!(v.is_finite() && (0.0..2.0).contains(&v));
        }
        prop_assert!(p.eval(30.0) < 0.4);
    }

    #[test]
    fn model_is_deterministic_with_stable_latent_shape(
        seed in 0u64..1000,
        magnitude in prop::sample::select(vec![1.0, 1e3, 1e8]),
        c in 1usize..3,
    ) {
        let model = ModelConfig::new(16, 4, c, seed);
        let params: ModelParams = init_model(&model).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_tensor(&mut rng, &[16, c], -magnitude, magnitude);
        let z = encode(&params, &x).unwrap();
        prop_assert_eq!(z.shape(), &[model.latent_len, model.latent_dim][..]);
        prop_assert!(z.is_finite());
        prop_assert_eq!(&z, &encode(&params, &x).unwrap());
        let y = predict(&params, &x).unwrap();
        prop_assert_eq!(y.shape(), &[4, c][..]);
        prop_assert_eq!(&y, &predict(&params, &x).unwrap());
    }

    #[test]
    fn alignment_and_similarities_are_nonnegative_and_order_free(
        seed in any::<u64>(),
        b in 1usize..5,
        views in 1usize..4,
        tau in 0.2f64..3.0,
        rot in 0usize..5,
    ) {
        let (z, za) = similarity_inputs(seed, b, views, 3, 4);
        let (y, ya) = similarity_inputs(seed ^ 1, b, views, 3, 2);
        let batch = SimilarityBatch::new(z.clone(), y.clone(), za.clone(), ya.clone(), views, tau).unwrap();
        let loss = batch.alignment_loss();
        prop_assert!(loss >= 0.0);
        for i in 0..b {
            for a in 0..views {
                for t in 0..3 {
                    prop_assert!(batch.latent_similarity(i, a, t) >= 0.0);
                    prop_assert!(batch.output_similarity(i, a, t) >= 0.0);
                }
            }
        }
        let perm: Vec<usize> = (0..b).map(|k| (k + rot) % b).collect();
        let permute = |orig: &[Tensor], aug: &[Tensor]| -> (Vec<Tensor>, Vec<Tensor>) {
            let o = perm.iter().map(|&p| orig[p].clone()).collect();
            let a = (0..views).flat_map(|v| perm.iter().map(move |&p| v * b + p)).map(|k| aug[k].clone()).collect();
            (o, a)
        };
        let (zp, zap) = permute(&z, &za);
        let (yp, yap) = permute(&y, &ya);
        let shuffled = SimilarityBatch::new(zp, yp, zap, yap, views, tau).unwrap().alignment_loss();
        prop_assert!(close(loss, shuffled), "{loss} vs {shuffled}");
    }

    #[test]
    fn lr_halves_exactly(lr0 in 1e-6f64..1.0, epoch in 0usize..60) {
        prop_assert_eq!(lr_schedule(lr0, epoch + 1), lr_schedule(lr0, epoch) / 2.0);
        prop_assert_eq!(lr_schedule(lr0, 0), lr0);
    }

    #[test]
    fn metrics_ignore_window_order(seed in any::<u64>(), n in 1usize..12, rot in 0usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let windows: Vec<(Tensor, Tensor)> = (0..n)
            .map(|_| (random_tensor(&mut rng, &[4, 2], -2.0, 2.0), random_tensor(&mut rng, &[4, 2], -2.0, 2.0)))
            .collect();
        let mut shuffled = windows.clone();
        shuffled.rotate_left(rot % n);
        shuffled.reverse();
        let (m1, m2) = (metrics_of(&windows), metrics_of(&shuffled));
        prop_assert!(close(m1.mae, m2.mae) && close(m1.mse, m2.mse));
        prop_assert_eq!(m1.smape.is_some(), m2.smape.is_some());
        if let (Some(a), Some(b)) = (m1.smape, m2.smape) {
            prop_assert!(close(a, b));
        }
    }

    #[test]
    fn smape_only_counts_positive_targets(
        target in prop::collection::vec(prop_oneof![Just(0.0), Just(-1.0), 0.1f64..5.0], 1..16),
        noise in prop::collection::vec(-1.0f64..1.0, 16),
    ) {
        let n = target.len();
        let pred: Vec<f64> = target.iter().zip(&noise).map(|(t, e)| t + e).collect();
        let m = cotsfa::eval::compute_metrics(
            &Tensor::new(vec![n, 1], pred.clone()).unwrap(),
            &Tensor::new(vec![n, 1], target.clone()).unwrap(),
        ).unwrap();
        let kept: Vec<f64> = target
            .iter()
            .zip(&pred)
            .filter(|(t, _)| **t > 0.0)
            .map(|(t, p)| 200.0 * (p - t).abs() / (p.abs() + t.abs()))
            .collect();
        match m.smape {
            None => prop_assert!(kept.is_empty()),
            Some(s) => {
                let expected = kept.iter().sum::<f64>() / kept.len() as f64;
                prop_assert!(close(s, expected), "{s} vs {expected}");
            }
        }
    }

    #[test]
    fn delta_is_antisymmetric_in_sign(a in 0.01f64..10.0, b in 0.01f64..10.0) {
        let ab = delta_improvement(a, b).unwrap();
        let ba = delta_improvement(b, a).unwrap();
        prop_assert!(ab.signum() == -ba.signum() || (ab == 0.0 && ba == 0.0));
        prop_assert!(close(ab, 100.0 * (b - a) / a));
    }

    #[test]
    fn aggregates_recompute_from_cells(values in prop::collection::vec((0.0f64..5.0, 0.0f64..5.0), 1..6)) {
        let cells: Vec<CellResult> = values
            .iter()
            .enumerate()
            .flat_map(|(seed, &(b, c))| {
                [("base", b), ("co", c)].map(|(v, mae)| CellResult {
                    variant: v.into(),
                    scenario: "clean".into(),
                    seed: seed as u64,
                    metrics: Some(Metrics { mae, mse: mae * mae, smape: None }),
                    error: None,
                })
            })
            .collect();
        let report = ScenarioReport::from_cells(cells, "base", 2);
        let n = values.len() as f64;
        let base: Vec<f64> = values.iter().map(|v| v.0).collect();
        let mean = base.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (base.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let agg = report.aggregate("base", "clean").unwrap();
        prop_assert!(close(agg.mae.mean, mean) && close(agg.mae.std, std));
        prop_assert_eq!(agg.seeds.len(), values.len());
    }
}
