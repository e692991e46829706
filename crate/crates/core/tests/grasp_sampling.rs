use graspgen::grasp::{
    force_closure, label_top_fraction, robust_force_closure, sample_antipodal, ContactPair, GripperModel,
};
use graspgen::mesh::{load_mesh, primitives};
use graspgen::Vec3;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cube() -> graspgen::mesh::TriangleMesh {
    primitives::cuboid(Vec3::new(1.0, 1.0, 1.0))
}

fn gripper(max_width: f64, mu: f64) -> GripperModel {
    GripperModel {
        max_width,
        friction_mu: mu,
        ..GripperModel::default()
    }
}

fn on_face(p: &Vec3, axis: usize, sign: f64) -> bool {
    (p[axis] - 0.5 * sign).abs() < 1e-9 && (0..3).all(|k| p[k].abs() <= 0.5 + 1e-9)
}

#[test]
fn cube_pairs_connect_opposite_faces() {
    let pairs = sample_antipodal(&cube(), &gripper(1.2, 0.5), 100, &mut ChaCha8Rng::seed_from_u64(1));
    assert_eq!(pairs.len(), 100);
    for p in &pairs {
        assert!((p.width() - 1.0).abs() <= 1e-6, "width {}", p.width());
        let axis = p.n1.iamax();
        let s = -p.n1[axis].signum();
        assert!(on_face(&p.c1, axis, s) && on_face(&p.c2, axis, -s));
        assert!(force_closure(p, 0.5).unwrap());
        assert!((p.n1.norm() - 1.0).abs() < 1e-9 && (p.n2.norm() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn narrow_gripper_and_determinism() {
    assert!(sample_antipodal(&cube(), &gripper(0.5, 0.5), 20, &mut ChaCha8Rng::seed_from_u64(1)).is_empty());
    let g = GripperModel::default();
    let mug = load_mesh(std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets/meshes/mug.off")).unwrap();
    let a = sample_antipodal(&mug, &g, 50, &mut ChaCha8Rng::seed_from_u64(3));
    let b = sample_antipodal(&mug, &g, 50, &mut ChaCha8Rng::seed_from_u64(3));
    assert_eq!(a, b);
    assert!(!a.is_empty());
    for p in &a {
        assert!(p.width() <= g.max_width + 1e-12);
        assert!(force_closure(p, g.friction_mu).unwrap());
    }
}

fn opposite_face_pair() -> ContactPair {
    ContactPair {
        c1: Vec3::new(-0.5, 0.1, -0.05),
        c2: Vec3::new(0.5, 0.1, -0.05),
        n1: Vec3::x(),
        n2: -Vec3::x(),
    }
}

#[test]
fn robust_scores_against_larger_oracle() {
    let mesh = cube();
    let good = opposite_face_pair();
    let q = robust_force_closure(&good, &mesh, 0.5, 1e-3, 100, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let oracle = robust_force_closure(&good, &mesh, 0.5, 1e-3, 1000, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    assert!(q.in_force_closure && q.score >= 0.9 && oracle.score >= 0.9);

    // Two adjacent faces meeting at 90 degrees: far outside a tan^-1(0.5) cone.
    let bad = ContactPair {
        c1: Vec3::new(-0.5, 0.2, 0.0),
        c2: Vec3::new(0.2, 0.5, 0.0),
        n1: Vec3::x(),
        n2: -Vec3::y(),
    };
    let q = robust_force_closure(&bad, &mesh, 0.5, 1e-3, 100, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    assert!(!q.in_force_closure && q.score <= 0.1);
}

#[test]
fn independent_seeds_agree_within_binomial_bound() {
    let mesh = cube();
    // A grasp near an edge so trials fail at a non-trivial rate.
    let pair = ContactPair {
        c1: Vec3::new(-0.5, 0.497, 0.0),
        c2: Vec3::new(0.5, 0.497, 0.0),
        n1: Vec3::x(),
        n2: -Vec3::x(),
    };
    for (s1, s2) in [(1, 2), (3, 4), (5, 6)] {
        let a = robust_force_closure(&pair, &mesh, 0.5, 2.5e-3, 1000, &mut ChaCha8Rng::seed_from_u64(s1)).unwrap();
        let b = robust_force_closure(&pair, &mesh, 0.5, 2.5e-3, 1000, &mut ChaCha8Rng::seed_from_u64(s2)).unwrap();
        assert!((a.score - b.score).abs() <= 0.06, "{} vs {}", a.score, b.score);
    }
}

#[test]
fn top_fraction_examples() {
    let scores: Vec<f64> = (0..100).map(|i| ((i * 37) % 100) as f64 / 100.0).collect();
    let l = label_top_fraction(&scores, 0.2).unwrap();
    assert_eq!(l.iter().filter(|x| **x).count(), 20);
    let min_pos = scores.iter().zip(&l).filter(|(_, p)| **p).map(|(s, _)| *s).fold(1.0, f64::min);
    let max_neg = scores.iter().zip(&l).filter(|(_, p)| !**p).map(|(s, _)| *s).fold(0.0, f64::max);
    assert!(min_pos >= max_neg);
    let tied = label_top_fraction(&[0.5; 10], 0.2).unwrap();
    assert_eq!(tied, [true, true, false, false, false, false, false, false, false, false]);
    assert!(label_top_fraction(&scores, 1.0).unwrap().iter().all(|x| *x));
    assert!(label_top_fraction(&[], 0.2).unwrap().is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn score_is_monotone_in_friction(seed in any::<u64>(), mu in 0.05f64..1.0, dmu in 0.0f64..1.0, y in -0.49f64..0.49) {
        let mesh = cube();
        let pair = ContactPair { c1: Vec3::new(-0.5, y, 0.0), c2: Vec3::new(0.5, -y * 0.5, 0.2), n1: Vec3::x(), n2: -Vec3::x() };
        let lo = robust_force_closure(&pair, &mesh, mu, 0.02, 50, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let hi = robust_force_closure(&pair, &mesh, mu + dmu, 0.02, 50, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert!(hi.score >= lo.score);
        prop_assert!(!lo.in_force_closure || hi.in_force_closure);
    }

    #[test]
    fn top_fraction_count_and_order(scores in prop::collection::vec(0.0f64..1.0, 0..120), fraction in 0.01f64..=1.0) {
        let l = label_top_fraction(&scores, fraction).unwrap();
        let k = l.iter().filter(|x| **x).count();
        prop_assert_eq!(k, graspgen::grasp::top_count(scores.len(), fraction));
        // Smallest integer not below fraction * n.
        let target = fraction * scores.len() as f64;
        prop_assert!(k as f64 >= target - 1e-9 && (k as f64) < target + 1.0 - 1e-9);
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if l[i] && !l[j] {
                    prop_assert!(scores[i] > scores[j] || (scores[i] == scores[j] && i < j));
                }
            }
        }
    }
}
