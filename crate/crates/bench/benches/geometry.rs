use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use graspgen::rotated::{generate_anchors, iou_matrix, rotated_nms, skew_iou, AnchorConfig, RotatedBox};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_boxes(n: usize, seed: u64) -> Vec<RotatedBox> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            RotatedBox::new(
                rng.random_range(0.0..224.0),
                rng.random_range(0.0..224.0),
                rng.random_range(8.0..80.0),
                rng.random_range(8.0..40.0),
                rng.random_range(-90.0..90.0),
            )
        })
        .collect()
}

fn bench_geometry(c: &mut Criterion) {
    let a = RotatedBox::new(50.0, 50.0, 40.0, 20.0, 10.0);
    let b = RotatedBox::new(55.0, 48.0, 30.0, 25.0, -35.0);
    c.bench_function("skew_iou overlapping pair", |bench| bench.iter(|| skew_iou(black_box(&a), black_box(&b))));

    let anchors = generate_anchors(14, 14, &AnchorConfig::default()).unwrap().boxes;
    let gts = random_boxes(10, 1);
    c.bench_function("iou_matrix 7056 anchors x 10 labels", |bench| {
        bench.iter(|| iou_matrix(black_box(&anchors), black_box(&gts)))
    });

    let boxes = random_boxes(500, 2);
    let scores: Vec<f64> = (0..boxes.len()).map(|i| (i * 7919 % 500) as f64).collect();
    c.bench_function("rotated_nms 500 boxes", |bench| {
        bench.iter(|| rotated_nms(black_box(&boxes), black_box(&scores), 0.3).unwrap())
    });
}

criterion_group!(benches, bench_geometry);
criterion_main!(benches);
