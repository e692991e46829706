use graspgen::augment::AugmentFamily;
use graspgen::contrastive::gradcheck::{run_all, CASES, TOLERANCE};
use graspgen::contrastive::{
    info_nce_grad, info_nce_keys, momentum_update, overall_loss, smooth_l1, smooth_l1_grad, synthetic_depth_images,
    toy_contrastive_train, StageSchedule, ToyTrainConfig,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn every_gradient_passes_finite_differences() {
    for seed in [0, 1, 2] {
        let reports = run_all(seed);
        assert_eq!(reports.len(), 6);
        for r in reports {
            assert_eq!(r.cases, CASES);
            assert!(r.passed && r.max_rel_error <= TOLERANCE, "seed {seed}: {r:?}");
        }
    }
}

#[test]
fn two_way_softmax_value() {
    let q = [1.0, 0.0];
    let (kp, kn) = ([2.0, 0.0], [0.0, 5.0]);
    let loss = info_nce_keys(&q, &[&kp, &kn], 1.0).unwrap();
    assert!((loss - (1.0 + (-2.0f64).exp()).ln()).abs() < 1e-12);
    assert!((loss - 0.1269).abs() < 1e-4);
}

#[test]
fn smooth_l1_joins_smoothly() {
    for s in [-1.0, 1.0] {
        let (lo, hi) = (s * (1.0 - 1e-9), s * (1.0 + 1e-9));
        assert!((smooth_l1(lo) - smooth_l1(hi)).abs() < 1e-8);
        assert!((smooth_l1_grad(lo) - smooth_l1_grad(hi)).abs() < 1e-8);
        assert_eq!(smooth_l1(s), 0.5);
    }
}

#[test]
fn toy_training_is_reproducible() {
    let data = synthetic_depth_images(32, 56, &mut ChaCha8Rng::seed_from_u64(3));
    let cfg = ToyTrainConfig {
        epochs: 3,
        batch: 8,
        seed: 4,
        ..ToyTrainConfig::default()
    };
    let a = toy_contrastive_train(&data, &AugmentFamily::default(), &cfg).unwrap();
    let b = toy_contrastive_train(&data, &AugmentFamily::default(), &cfg).unwrap();
    assert_eq!(a.epoch_losses.len(), 3);
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.epoch_losses), bits(&b.epoch_losses));
    assert_eq!(a.encoder, b.encoder);
    // Eight candidates: near ln 8 before any learning has happened.
    assert!((a.epoch_losses[0] - 8f64.ln()).abs() <= 0.5, "{:?}", a.epoch_losses);
    let other = toy_contrastive_train(&data, &AugmentFamily::default(), &ToyTrainConfig { seed: 5, ..cfg }).unwrap();
    assert_ne!(bits(&a.epoch_losses), bits(&other.epoch_losses));
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.into_iter().map(|x| x / n).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn info_nce_is_nonnegative_with_exact_gradient_shape(
        q in prop::collection::vec(-1.0f64..1.0, 16),
        keys in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 16), 2..10),
        tau in 0.05f64..2.0,
    ) {
        let (q, keys): (Vec<f64>, Vec<Vec<f64>>) = (unit(q), keys.into_iter().map(unit).collect());
        let refs: Vec<&[f64]> = keys.iter().map(|k| k.as_slice()).collect();
        let g = info_nce_grad(&q, &refs, tau).unwrap();
        prop_assert!(g.loss >= 0.0);
        prop_assert_eq!(g.loss, info_nce_keys(&q, &refs, tau).unwrap());
        prop_assert_eq!(g.d_keys.len(), keys.len());
        // The key gradients sum to zero along q: softmax weights sum to one.
        let total: f64 = (0..16).map(|d| g.d_keys.iter().map(|k| k[d]).sum::<f64>()).map(|x| x.abs()).sum();
        prop_assert!(total <= 1e-9);
    }

    #[test]
    fn info_nce_uniform_and_monotone(n in 2usize..40, s in -1.0f64..1.0, bump in 0.001f64..0.5, tau in 0.05f64..1.0) {
        // q = e0, keys share their first coordinate, so every similarity is s.
        let mut q = vec![0.0; 2];
        q[0] = 1.0;
        let key = vec![s, (1.0 - s * s).sqrt()];
        let keys: Vec<&[f64]> = vec![key.as_slice(); n];
        let loss = info_nce_keys(&q, &keys, tau).unwrap();
        prop_assert!((loss - (n as f64).ln()).abs() <= 1e-9);
        let better = vec![s + bump, 0.0];
        let mut bumped = keys.clone();
        bumped[0] = &better;
        prop_assert!(info_nce_keys(&q, &bumped, tau).unwrap() < loss);
    }

    #[test]
    fn momentum_converges_geometrically(
        key in prop::collection::vec(-5.0f64..5.0, 1..8),
        m in 0.0f64..0.99,
        steps in 1usize..30,
    ) {
        let query: Vec<f64> = key.iter().map(|k| 1.0 - k).collect();
        prop_assert_eq!(momentum_update(&key, &query, 1.0).unwrap(), key.clone());
        let mut k = key.clone();
        for _ in 0..steps {
            k = momentum_update(&k, &query, m).unwrap();
        }
        for ((now, start), target) in k.iter().zip(&key).zip(&query) {
            let expected = m.powi(steps as i32) * (start - target);
            prop_assert!((now - target - expected).abs() <= 1e-9);
        }
    }

    #[test]
    fn overall_loss_is_linear(a in 0.0f64..10.0, b in 0.0f64..10.0, c in 0.0f64..10.0, t in 0.0f64..3.0, epoch in 0usize..60) {
        let w = StageSchedule::default().weights_for(epoch);
        let base = overall_loss(a, b, c, &w);
        prop_assert!((overall_loss(t * a, t * b, t * c, &w) - t * base).abs() <= 1e-9);
        let split = overall_loss(a, 0.0, 0.0, &w) + overall_loss(0.0, b, 0.0, &w) + overall_loss(0.0, 0.0, c, &w);
        prop_assert!((base - split).abs() <= 1e-9);
    }
}
