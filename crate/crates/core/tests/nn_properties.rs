use fuda::nn::{
    check_gradients_with, fit, loss_and_grad, sgd_step, softmax, ArchitectureSpec, LossKind, Matrix, ModelParams,
    Targets, TrainConfig,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
struct Case {
    params: ModelParams,
    batch: Matrix,
    labels: Vec<usize>,
    soft: Matrix,
}

fn random_case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..=5);
    let depth = rng.random_range(0..=2);
    let widths: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=6)).collect();
    let c = rng.random_range(2..=5);
    let n = rng.random_range(1..=6);
    let arch = ArchitectureSpec::new(d, widths, c).unwrap();
    let mut params = ModelParams::init(&arch, rng.random());
    // Nonzero biases so every code path is exercised.
    for layer in &mut params.layers {
        for b in layer.bias.iter_mut() {
            *b = rng.random_range(-0.5..0.5);
        }
    }
    let batch = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
    let labels = (0..n).map(|_| rng.random_range(0..c)).collect();
    let mut soft = Vec::with_capacity(n * c);
    for _ in 0..n {
        let raw: Vec<f64> = (0..c).map(|_| rng.random_range(0.01..1.0)).collect();
        let s: f64 = raw.iter().sum();
        soft.extend(raw.iter().map(|v| v / s));
    }
    Case {
        params,
        batch,
        labels,
        soft: Matrix::from_vec(n, c, soft).unwrap(),
    }
}

fn one_hot(labels: &[usize], c: usize) -> Matrix {
    let mut m = Matrix::zeros(labels.len(), c);
    for (i, &y) in labels.iter().enumerate() {
        m.row_mut(i)[y] = 1.0;
    }
    m
}

fn max_abs_diff(a: &ModelParams, b: &ModelParams) -> f64 {
    a.values()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn softmax_normalised_and_shift_invariant(
        logits in prop::collection::vec(-50.0f64..50.0, 2..12),
        shift in -100.0f64..100.0,
    ) {
        let p = softmax(&logits).unwrap();
        prop_assert!(p.iter().all(|&v| v > 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let shifted: Vec<f64> = logits.iter().map(|z| z + shift).collect();
        let q = softmax(&shifted).unwrap();
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn analytic_gradients_match_finite_differences(seed in any::<u64>()) {
        let case = random_case(seed);
        let c = case.params.num_classes();
        let runs = [
            (Targets::Classes(case.labels.clone()), LossKind::HardCe),
            (Targets::Distributions(case.soft.clone()), LossKind::SoftCe),
            (Targets::Distributions(case.soft.clone()), LossKind::Ssce { epsilon: 0.9 }),
            (Targets::Distributions(one_hot(&case.labels, c)), LossKind::Ssce { epsilon: 0.3 }),
        ];
        for (targets, kind) in runs {
            let (_, grads) = loss_and_grad(&case.params, &case.batch, &targets, kind).unwrap();
            let report = check_gradients_with(&case.params, &grads, &case.batch, &targets, kind, 1e-5).unwrap();
            prop_assert!(report.max_relative_error <= 1e-4, "{kind:?}: {report:?}");
        }
    }

    #[test]
    fn loss_reductions_hold(seed in any::<u64>()) {
        let case = random_case(seed);
        let soft = Targets::Distributions(case.soft.clone());
        let (l_soft, g_soft) = loss_and_grad(&case.params, &case.batch, &soft, LossKind::SoftCe).unwrap();
        let (l_ssce, g_ssce) = loss_and_grad(&case.params, &case.batch, &soft, LossKind::Ssce { epsilon: 0.0 }).unwrap();
        prop_assert!((l_soft - l_ssce).abs() <= 1e-12);
        prop_assert!(max_abs_diff(&g_soft, &g_ssce) <= 1e-12);

        let hot = Targets::Distributions(one_hot(&case.labels, case.params.num_classes()));
        let hard = Targets::Classes(case.labels.clone());
        let (l_hot, g_hot) = loss_and_grad(&case.params, &case.batch, &hot, LossKind::SoftCe).unwrap();
        let (l_hard, g_hard) = loss_and_grad(&case.params, &case.batch, &hard, LossKind::HardCe).unwrap();
        prop_assert!((l_hot - l_hard).abs() <= 1e-12);
        prop_assert!(max_abs_diff(&g_hot, &g_hard) <= 1e-12);
    }

    #[test]
    fn ssce_invariant_under_joint_class_permutation(seed in any::<u64>(), eps in 0.0f64..=1.0) {
        let case = random_case(seed);
        let c = case.params.num_classes();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
        let mut perm: Vec<usize> = (0..c).collect();
        for i in (1..c).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        // Class k of the permuted model is class perm[k] of the original.
        let mut permuted = case.params.clone();
        let head = permuted.layers.last_mut().unwrap();
        let orig = case.params.layers.last().unwrap();
        let width = orig.in_dim;
        for (k, &src) in perm.iter().enumerate() {
            head.bias[k] = orig.bias[src];
            head.weights[k * width..(k + 1) * width].copy_from_slice(&orig.weights[src * width..(src + 1) * width]);
        }
        let mut targets = Matrix::zeros(case.soft.rows(), c);
        for i in 0..case.soft.rows() {
            for (k, &src) in perm.iter().enumerate() {
                targets.row_mut(i)[k] = case.soft.row(i)[src];
            }
        }
        let kind = LossKind::Ssce { epsilon: eps };
        let (a, _) = loss_and_grad(&case.params, &case.batch, &Targets::Distributions(case.soft.clone()), kind).unwrap();
        let (b, _) = loss_and_grad(&permuted, &case.batch, &Targets::Distributions(targets), kind).unwrap();
        prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }

    #[test]
    fn zero_momentum_is_plain_gradient_descent(seed in any::<u64>(), lr in 1e-4f64..1.0) {
        let case = random_case(seed);
        let (_, grads) = loss_and_grad(&case.params, &case.batch, &Targets::Classes(case.labels.clone()), LossKind::HardCe).unwrap();
        let mut stepped = case.params.clone();
        let mut velocity = case.params.zeros_like();
        sgd_step(&mut stepped, &grads, &mut velocity, lr, 0.0).unwrap();
        for ((s, p), g) in stepped.values().zip(case.params.values()).zip(grads.values()) {
            prop_assert_eq!(s, p - lr * g);
        }
    }
}

#[test]
fn training_is_bit_reproducible() {
    let case = random_case(11);
    let targets = Targets::Classes(case.labels.clone());
    let cfg = TrainConfig {
        epochs: 5,
        batch_size: 2,
        ..TrainConfig::client_default()
    };
    let run = || {
        let mut p = case.params.clone();
        fit(&mut p, &case.batch, &targets, LossKind::HardCe, &cfg).unwrap();
        p
    };
    let (a, b) = (run(), run());
    assert!(a.values().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_ne!(a, case.params);
}
