use boundloop_core::features::FeatureMatrix;
use boundloop_core::predictor::loss::frame_bce;
use boundloop_core::predictor::{init_model, loss_and_grads, train, Mlp, ModelSpec, Mode, TrainConfig, TrainItem};
use boundloop_core::rng;
use proptest::prelude::*;
use rand::Rng;

fn random_features(n: usize, dim: usize, seed: u64) -> FeatureMatrix {
    let mut r = rng::rng(seed);
    let data = (0..n * dim).map(|_| r.random_range(-1.0f32..1.0)).collect();
    FeatureMatrix::new("u", n, dim, 0.02, data).unwrap()
}

fn labels(n: usize, seed: u64) -> Vec<u8> {
    let mut r = rng::rng(seed ^ 0xabc);
    (0..n).map(|_| r.random_bool(0.3) as u8).collect()
}

fn loss_at(model: &Mlp, f: &FeatureMatrix, y: &[u8], keep: f64) -> f64 {
    loss_and_grads(model, &[(f, y)], keep, Mode::Eval).unwrap().0.loss
}

fn nudged(model: &Mlp, layer: usize, which: usize, i: usize, by: f64) -> Mlp {
    let mut m = model.clone();
    let l = &mut m.layers[layer];
    if which == 0 {
        l.weights[i] += by;
    } else {
        l.bias[i] += by;
    }
    m
}

/// Worst relative error between analytic and central-difference gradients.
fn gradient_error(spec: &ModelSpec, seed: u64, n: usize) -> f64 {
    let mut model = init_model(spec, seed).unwrap();
    for (l, layer) in model.layers.iter_mut().enumerate() {
        for (i, b) in layer.bias.iter_mut().enumerate() {
            *b = 0.05 * ((i + l) as f64).sin();
        }
    }
    let f = random_features(n, spec.feature_dim, seed);
    let y = labels(n, seed);
    let (_, g) = loss_and_grads(&model, &[(&f, &y)], 1.0, Mode::Eval).unwrap();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for l in 0..model.layers.len() {
        for (which, len) in [(0, model.layers[l].weights.len()), (1, model.layers[l].bias.len())] {
            for i in 0..len {
                let plus = nudged(&model, l, which, i, h);
                let minus = nudged(&model, l, which, i, -h);
                let numeric = (loss_at(&plus, &f, &y, 1.0) - loss_at(&minus, &f, &y, 1.0)) / (2.0 * h);
                let analytic = if which == 0 { g.layers[l].weights[i] } else { g.layers[l].bias[i] };
                let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(err);
            }
        }
    }
    worst
}

#[test]
fn six_frame_gradient_check() {
    let spec = ModelSpec { context_radius: 1, feature_dim: 3, hidden: vec![5, 4] };
    for seed in 0..5 {
        let e = gradient_error(&spec, seed, 6);
        assert!(e < 1e-4, "seed {seed}: relative error {e}");
    }
}

#[test]
fn keep_all_is_plain_mean_bce() {
    let spec = ModelSpec { context_radius: 2, feature_dim: 4, hidden: vec![6] };
    let model = init_model(&spec, 9).unwrap();
    let f = random_features(30, 4, 2);
    let y = labels(30, 2);
    let probs = model.predict(&f).unwrap();
    let direct = probs.iter().zip(&y).map(|(&p, &l)| frame_bce(p, l)).sum::<f64>() / 30.0;
    assert!((loss_at(&model, &f, &y, 1.0) - direct).abs() < 1e-12);
}

#[test]
fn duplicated_batch_keeps_the_mean_gradient() {
    let spec = ModelSpec { context_radius: 1, feature_dim: 2, hidden: vec![4] };
    let model = init_model(&spec, 4).unwrap();
    let f = random_features(12, 2, 5);
    let y = labels(12, 5);
    let (a, ga) = loss_and_grads(&model, &[(&f, &y)], 1.0, Mode::Eval).unwrap();
    let (b, gb) = loss_and_grads(&model, &[(&f, &y), (&f, &y)], 1.0, Mode::Eval).unwrap();
    assert!((a.loss - b.loss).abs() < 1e-12);
    for (la, lb) in ga.layers.iter().zip(&gb.layers) {
        for (x, z) in la.weights.iter().zip(&lb.weights) {
            assert!((x - z).abs() < 1e-12);
        }
    }
}

fn toy_item(n: usize, seed: u64) -> TrainItem {
    let mut r = rng::rng(seed);
    let labels: Vec<u8> = (0..n).map(|i| (i % 9 == 4 || r.random_bool(0.05)) as u8).collect();
    let data = labels
        .iter()
        .flat_map(|&l| {
            let s = if l == 1 { 1.0 } else { -1.0 };
            [s, r.random_range(-0.5f32..0.5)]
        })
        .collect();
    TrainItem { features: FeatureMatrix::new(format!("t{seed}"), n, 2, 0.02, data).unwrap(), labels, audio: None }
}

/// Masked centre frames carry no label information, so the toy trains without input noise.
fn toy_config() -> TrainConfig {
    TrainConfig {
        mask_fraction: 0.0,
        dropout: 0.0,
        max_updates: 500,
        peak_lr: 1e-2,
        warmup_updates: 50,
        cosine_period: 450,
        augment: false,
        seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn separable_toy_is_learned_within_500_updates() {
    let tr: Vec<TrainItem> = (0..24).map(|i| toy_item(120, i)).collect();
    let dev: Vec<TrainItem> = (100..104).map(|i| toy_item(120, i)).collect();
    let spec = ModelSpec { context_radius: 2, feature_dim: 2, hidden: vec![16] };
    let out = train(&tr, &dev, &spec, &toy_config(), None).unwrap();
    let last = out.curve.last().unwrap();
    assert_eq!(last.step, 500);
    assert!(last.train_loss < 0.1, "train loss {}", last.train_loss);
    assert!(out.best_dev_loss < 0.1, "dev loss {}", out.best_dev_loss);
}

#[test]
fn same_seed_same_parameters() {
    let tr: Vec<TrainItem> = (0..6).map(|i| toy_item(80, i)).collect();
    let dev = vec![toy_item(80, 50)];
    let spec = ModelSpec { context_radius: 1, feature_dim: 2, hidden: vec![8] };
    let cfg = TrainConfig { max_updates: 60, ..toy_config() };
    let a = train(&tr, &dev, &spec, &cfg, None).unwrap();
    let b = train(&tr, &dev, &spec, &cfg, None).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.curve, b.curve);
    let c = train(&tr, &dev, &spec, &TrainConfig { seed: 4, ..cfg }, None).unwrap();
    assert_ne!(a.model, c.model);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn random_small_models_pass_gradient_check(
        seed in any::<u64>(),
        radius in 0usize..3,
        dim in 1usize..4,
        hidden in prop::collection::vec(1usize..8, 1..3),
        n in 1usize..10,
    ) {
        let spec = ModelSpec { context_radius: radius, feature_dim: dim, hidden };
        prop_assert!(gradient_error(&spec, seed, n) < 1e-4);
    }
}
