//! End-to-end acceptance checks, one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so every line is printed even when an
//! earlier criterion fails; the process exits non-zero if any criterion does.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::{
    assets_dir, axis_rods_depth, center_grasp, label_error, labelled_view, mc_iou_shifted_grid, mirror,
    random_box_pair, random_projection_case, ray_parity, roll, wall_scene_depth,
};
use graspgen::augment::{apply_flip, apply_rotate, sim_to_real, AugmentFamily, FlipAxis, SimToRealParams};
use graspgen::camera::{CameraIntrinsics, CameraPose};
use graspgen::collision::{build_scene, refine_beta};
use graspgen::contrastive::gradcheck::{run_all, CASES, TOLERANCE};
use graspgen::contrastive::{synthetic_depth_images, toy_contrastive_train, ToyTrainConfig};
use graspgen::dataset::{DatasetManifest, MANIFEST_FILE};
use graspgen::grasp::GripperModel;
use graspgen::mesh::{load_mesh, primitives};
use graspgen::projection::{back_project, project_grasp};
use graspgen::rotated::{generate_anchors, match_topk, skew_iou, AnchorConfig, AnchorLabel, MatchConfig, RotatedBox};
use graspgen::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn graspgen(args: &[&Path]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_graspgen")).args(args).output().expect("binary runs")
}

fn within_budget(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    check(elapsed.as_secs_f64() < limit_s, || {
        format!("took {:.1} s, limit {limit_s} s", elapsed.as_secs_f64())
    })
}

/// Skew IoU against a 10^7-sample Monte-Carlo area estimate on 1,000 random
/// pairs, and BVH ray casting against per-face testing on 10,000 rays.
fn geometry_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pairs: Vec<(RotatedBox, RotatedBox)> = (0..1000).map(|_| random_box_pair(&mut rng)).collect();
    let side = (1e7f64).sqrt().ceil() as usize;
    let worst = pairs
        .par_iter()
        .enumerate()
        .map(|(i, (a, b))| {
            let oracle = mc_iou_shifted_grid(a, b, side, &mut ChaCha8Rng::seed_from_u64(1000 + i as u64));
            ((skew_iou(a, b) - oracle).abs(), i)
        })
        .reduce(|| (0.0, 0), |x, y| if y.0 > x.0 { y } else { x });
    check(worst.0 <= 1e-3, || format!("pair {} off by {:.2e}", worst.1, worst.0))?;

    let mug = load_mesh(common::asset("mug.off")).map_err(|e| e.to_string())?;
    let cube_hits = ray_parity(&primitives::cuboid(Vec3::new(1.0, 1.0, 1.0)), 5_000, 1)?;
    let mug_hits = ray_parity(&mug, 5_000, 2)?;
    within_budget(start.elapsed(), 60.0)?;
    Ok(format!(
        "max IoU error {:.1e} over 1000 pairs ({} samples each); 10000 rays agree ({} hits)",
        worst.0,
        side * side,
        cube_hits + mug_hits
    ))
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let reports = run_all(0);
    for r in &reports {
        check(r.cases >= 100, || format!("{} ran {} cases", r.name, r.cases))?;
        check(r.passed && r.max_rel_error <= 1e-4, || {
            format!("{}: relative error {:.2e}", r.name, r.max_rel_error)
        })?;
    }
    let worst = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let out = graspgen(&[Path::new("losscheck")]);
    check(out.status.code() == Some(0), || format!("losscheck exited {:?}", out.status.code()))?;
    within_budget(start.elapsed(), 10.0)?;
    Ok(format!(
        "{} losses x {CASES} inputs, worst relative error {worst:.1e} (tolerance {TOLERANCE:.0e}); losscheck exits 0",
        reports.len()
    ))
}

fn projection_fidelity() -> Outcome {
    let intr = CameraIntrinsics::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut px, mut deg, mut dz) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..1000 {
        let case = random_projection_case(&mut rng);
        let g = project_grasp(&case.c1, &case.c2, &intr, &case.pose).map_err(|e| format!("case {i}: {e}"))?;
        let back = back_project(&g, &intr, &case.pose);
        let again = project_grasp(&back.c1, &back.c2, &intr, &case.pose).map_err(|e| format!("case {i}: {e}"))?;
        let (p, d) = label_error(&g, &again);
        px = px.max(p);
        deg = deg.max(d);
        dz = dz.max((g.z - again.z).abs());
        let swapped = project_grasp(&case.c2, &case.c1, &intr, &case.pose).map_err(|e| e.to_string())?;
        check(swapped == g, || format!("case {i}: swapping the contacts changed the label"))?;
    }
    check(px <= 1e-6 && deg <= 0.1 && dz <= 1e-9, || {
        format!("worst errors {px:.1e} px, {deg:.1e} deg, {dz:.1e} m")
    })?;
    Ok(format!("1000 round trips: {px:.1e} px, {deg:.1e} deg, {dz:.1e} m; contact swap is a no-op"))
}

fn dataset_pipeline() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let out = graspgen(&[Path::new("--out"), dir.path(), Path::new("gen-dataset"), &assets_dir()]);
    let elapsed = start.elapsed();
    check(out.status.code() == Some(0), || {
        format!("gen-dataset exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr))
    })?;
    within_budget(elapsed, 120.0)?;
    let manifest_path = dir.path().join(MANIFEST_FILE);
    let v = graspgen(&[Path::new("validate"), &manifest_path]);
    check(v.status.code() == Some(0), || {
        format!("validate exited {:?}: {}", v.status.code(), String::from_utf8_lossy(&v.stdout))
    })?;
    let m = DatasetManifest::load(&manifest_path).map_err(|e| e.to_string())?;
    check(m.objects.len() == 3, || format!("{} objects", m.objects.len()))?;
    check(
        m.config.views_per_object == 20 && m.config.grasps_per_object == 100 && m.config.top_fraction == 0.2,
        || "run did not use the default configuration".into(),
    )?;
    let mut positives = 0;
    for o in &m.objects {
        check(o.views.len() == 20, || format!("{} has {} views", o.name, o.views.len()))?;
        for view in &o.views {
            let lowest_pos = view.grasps.iter().filter(|g| g.positive).map(|g| g.score).fold(f64::INFINITY, f64::min);
            let highest_neg = view.grasps.iter().filter(|g| !g.positive).map(|g| g.score).fold(f64::NEG_INFINITY, f64::max);
            check(lowest_pos >= highest_neg, || {
                format!("{} view {}: positive {lowest_pos} below negative {highest_neg}", o.name, view.index)
            })?;
            positives += view.grasps.iter().filter(|g| g.positive).count();
        }
    }
    Ok(format!(
        "{} views in {:.1} s, validate exits 0, {positives} positives all outscore their view's negatives",
        m.view_count(),
        elapsed.as_secs_f64()
    ))
}

fn contrastive_training() -> Outcome {
    let start = Instant::now();
    let data = synthetic_depth_images(64, 112, &mut ChaCha8Rng::seed_from_u64(0));
    let cfg = ToyTrainConfig::default();
    check(cfg.batch == 16 && cfg.epochs == 50, || "default trainer is not batch 16 x 50 epochs".into())?;
    let family = AugmentFamily::default();
    let a = toy_contrastive_train(&data, &family, &cfg).map_err(|e| e.to_string())?;
    let b = toy_contrastive_train(&data, &family, &cfg).map_err(|e| e.to_string())?;
    let chance = 16f64.ln();
    let (first, last) = (a.epoch_losses[0], *a.epoch_losses.last().unwrap());
    check(a.epoch_losses.len() == 50, || format!("{} epochs", a.epoch_losses.len()))?;
    check((first - chance).abs() <= 0.5, || format!("initial loss {first:.4}, ln 16 = {chance:.4}"))?;
    check(last < chance - 0.5, || format!("final loss {last:.4} not below {:.4}", chance - 0.5))?;
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    check(bits(&a.epoch_losses) == bits(&b.epoch_losses), || "reruns differ".into())?;
    within_budget(start.elapsed(), 300.0)?;
    Ok(format!("loss {first:.3} -> {last:.3} (ln 16 = {chance:.3}); reruns bitwise identical"))
}

fn circular_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

fn collision_refinement() -> Outcome {
    let (intr, pose) = (CameraIntrinsics::default(), CameraPose::identity());
    let gripper = GripperModel::default();
    let g = center_grasp();
    let err = |e: graspgen::Error| e.to_string();

    let wall = build_scene(vec![wall_scene_depth()], &intr, &pose, 0.1).map_err(err)?;
    let (coarse, cs) = refine_beta(&g, &wall, &gripper, 5.0, None).map_err(err)?;
    let (fine, fs) = refine_beta(&g, &wall, &gripper, 0.5, None).map_err(err)?;
    check(circular_gap(coarse, fine) <= 5.0, || format!("wall: 5 deg grid at {coarse}, 0.5 deg grid at {fine}"))?;

    let rods = build_scene(vec![axis_rods_depth()], &intr, &pose, 0.1).map_err(err)?;
    let (beta, _) = refine_beta(&g, &rods, &gripper, 5.0, None).map_err(err)?;
    check(beta == 0.0, || format!("symmetric scene gave beta {beta}"))?;

    let empty = build_scene(vec![], &intr, &pose, 0.1).map_err(err)?;
    let e = refine_beta(&g, &empty, &gripper, 5.0, None).map_err(err)?;
    check(e == (0.0, 0.0), || format!("empty scene gave {e:?}"))?;
    Ok(format!(
        "wall: {coarse} deg ({cs:.4}) vs oracle {fine} deg ({fs:.4}); symmetric beta 0; empty (0, 0)"
    ))
}

fn augmentation_contract() -> Outcome {
    let view = labelled_view(5, 40);
    let params = SimToRealParams {
        paint_threshold: Some(0.005),
        noise_std: 0.003,
        paint_probability: 0.5,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut painted = 0;
    for i in 0..1000 {
        let out = sim_to_real(&view.depth, &view.labels, &params, &mut rng);
        painted += (out.image != view.depth) as usize;
        let same = out.labels.len() == view.labels.len()
            && out.labels.iter().zip(&view.labels).all(|(a, b)| {
                [(a.x, b.x), (a.y, b.y), (a.theta, b.theta), (a.gamma, b.gamma), (a.z, b.z), (a.w, b.w), (a.h, b.h)]
                    .iter()
                    .all(|(x, y)| x.to_bits() == y.to_bits())
            });
        check(same, || format!("sample {i}: labels changed"))?;
    }

    let (mut px, mut deg, mut compared) = (0.0f64, 0.0f64, 0);
    let view = labelled_view(1, 60);
    for angle in [90.0, 180.0, 270.0, -90.0, 33.0, -141.5] {
        let out = apply_rotate(&view.depth, &view.labels, angle);
        let cam = roll(&view.pose, angle);
        let mut kept = out.labels.iter();
        for p in &view.pairs {
            let oracle = project_grasp(&p.c1, &p.c2, &view.intr, &cam).map_err(|e| e.to_string())?;
            if !(oracle.x >= -0.5 && oracle.y >= -0.5 && oracle.x < 223.5 && oracle.y < 223.5) {
                continue;
            }
            let got = kept.next().ok_or_else(|| format!("rotate {angle}: label dropped"))?;
            let (p, d) = label_error(got, &oracle);
            (px, deg, compared) = (px.max(p), deg.max(d), compared + 1);
        }
        check(kept.next().is_none(), || format!("rotate {angle}: label kept outside the frame"))?;
    }
    for (axis, horizontal) in [(FlipAxis::Horizontal, true), (FlipAxis::Vertical, false)] {
        let out = apply_flip(&view.depth, &view.labels, axis);
        for (p, got) in view.pairs.iter().zip(&out.labels) {
            let (c1, c2) = (mirror(&view.pose, &p.c1, horizontal), mirror(&view.pose, &p.c2, horizontal));
            let oracle = project_grasp(&c1, &c2, &view.intr, &view.pose).map_err(|e| e.to_string())?;
            let (p, d) = label_error(got, &oracle);
            (px, deg, compared) = (px.max(p), deg.max(d), compared + 1);
        }
    }
    check(px <= 1e-6 && deg <= 0.1, || format!("spatial labels off by {px:.1e} px, {deg:.1e} deg"))?;
    Ok(format!(
        "1000 sim-to-real samples ({painted} altered images) keep labels bitwise; {compared} spatial labels within {px:.1e} px, {deg:.1e} deg"
    ))
}

fn matching_behavior() -> Outcome {
    let gt = RotatedBox::new(50.0, 50.0, 40.0, 20.0, 10.0);
    let cfg = MatchConfig {
        k: 2,
        ..MatchConfig::default()
    };
    let n = 10_000;
    let mut first = 0;
    for seed in 0..n {
        let m = match_topk(&[gt], &[gt, gt], &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(|e| e.to_string())?;
        first += (m.labels[0] == AnchorLabel::Positive(0)) as usize;
    }
    let freq = first as f64 / n as f64;
    check((freq - 0.5).abs() <= 0.02, || format!("first duplicate picked {freq:.4} of the time"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let anchors = generate_anchors(6, 6, &AnchorConfig::default()).map_err(|e| e.to_string())?.boxes;
    let gts: Vec<RotatedBox> = (0..8)
        .map(|_| {
            RotatedBox::new(
                rng.random_range(0.0..96.0),
                rng.random_range(0.0..96.0),
                rng.random_range(10.0..60.0),
                rng.random_range(10.0..60.0),
                rng.random_range(-90.0..90.0),
            )
        })
        .collect();
    let cfg = MatchConfig {
        k: 1,
        pos_thresh: 0.5,
        neg_thresh: 0.2,
    };
    let m = match_topk(&anchors, &gts, &cfg, &mut rng).map_err(|e| e.to_string())?;
    let mut positives = 0;
    for (i, (a, label)) in anchors.iter().zip(&m.labels).enumerate() {
        let (best, iou) = gts
            .iter()
            .enumerate()
            .map(|(g, gt)| (g, skew_iou(a, gt)))
            .fold((0, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b });
        let expected = if iou < cfg.neg_thresh {
            AnchorLabel::Negative
        } else if iou < cfg.pos_thresh {
            AnchorLabel::Ignore
        } else {
            positives += 1;
            AnchorLabel::Positive(best)
        };
        check(*label == expected, || format!("anchor {i}: {label:?}, argmax gives {expected:?}"))?;
    }
    Ok(format!(
        "duplicates picked {:.1}% / {:.1}% over {n} seeds; k = 1 equals argmax on {} anchors ({positives} positive)",
        100.0 * freq,
        100.0 * (1.0 - freq),
        anchors.len()
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("geometry oracles", geometry_oracles),
        ("gradient suite", gradient_suite),
        ("projection fidelity", projection_fidelity),
        ("dataset pipeline", dataset_pipeline),
        ("contrastive toy training", contrastive_training),
        ("collision refinement", collision_refinement),
        ("augmentation contract", augmentation_contract),
        ("matching behavior", matching_behavior),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} ({name}): PASS [{secs:.1} s] {detail}", i + 1),
            Err(reason) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL [{secs:.1} s] {reason}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
