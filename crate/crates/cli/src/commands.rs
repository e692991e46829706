use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use graspgen::augment::sample_pair;
use graspgen::camera::{render_depth, CameraIntrinsics, CameraPose, DepthImage};
use graspgen::collision::{build_scene, rank_graspable, refine_beta as refine_one};
use graspgen::contrastive::gradcheck::run_all;
use graspgen::contrastive::{synthetic_depth_images, toy_contrastive_train};
use graspgen::dataset::{
    derive_seed, generate_dataset, load_centered, sample_scored_grasps, validate_manifest, view_pose, DatasetManifest,
    GraspRecord, MeshTransform, RunConfig, MANIFEST_FILE,
};
use graspgen::depth_io::{read_depth, write_depth, DepthFormat};
use graspgen::projection::ImageGrasp;
use graspgen::rotated::{generate_anchors, match_topk, AnchorLabel, RotatedBox};
use graspgen::{Error, Vec3};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{io_error, plot, CliError};

type CliResult<T = ()> = Result<T, CliError>;

/// Camera of one depth image; `camera.json` of a refine-beta scene.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraFile {
    pub intrinsics: CameraIntrinsics,
    pub pose: CameraPose,
}

#[derive(Debug, Serialize)]
struct RenderedView {
    depth: String,
    seed: u64,
    camera: CameraFile,
}

#[derive(Debug, Serialize)]
struct GraspFile<'a> {
    mesh: String,
    transform: &'a MeshTransform,
    grasps: &'a [GraspRecord],
}

#[derive(Debug, Serialize)]
struct AugmentRecord {
    pair: usize,
    view: &'static str,
    depth: String,
    ops: Vec<graspgen::augment::AppliedOp>,
    labels: Vec<ImageGrasp>,
}

#[derive(Debug, Serialize)]
struct MatchReport {
    feature_height: usize,
    feature_width: usize,
    anchors: usize,
    positives: usize,
    negatives: usize,
    ignored: usize,
    /// Positive anchors per ground-truth box.
    per_label: Vec<usize>,
    labels: Vec<AnchorLabel>,
}

fn create_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn write_text(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    write_text(path, &(text + "\n"))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    Ok(serde_json::from_str(&text).map_err(Error::from)?)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "object".into())
}

pub fn render(mesh: &Path, cfg: &RunConfig, out: &Path) -> CliResult {
    let centered = load_centered(mesh, cfg.mesh_scale)?;
    let name = stem(mesh);
    let ext = cfg.depth_format.extension();
    create_dir(out)?;
    let views = (0..cfg.views_per_object)
        .into_par_iter()
        .map(|k| {
            let seed = derive_seed(cfg.seed, k as u64);
            let pose = view_pose(&Vec3::zeros(), centered.radius, k, seed)?;
            let img = render_depth(&centered.mesh, &cfg.camera, &pose);
            let file = format!("{name}_view{k:02}.{ext}");
            write_depth(&img, out.join(&file))?;
            Ok(RenderedView {
                depth: file,
                seed,
                camera: CameraFile {
                    intrinsics: cfg.camera,
                    pose,
                },
            })
        })
        .collect::<graspgen::Result<Vec<_>>>()?;
    write_json(&out.join(format!("{name}_views.json")), &views)?;
    println!("rendered {} views of {name} into {}", views.len(), out.display());
    Ok(())
}

pub fn sample_grasps(mesh: &Path, cfg: &RunConfig, out: &Path) -> CliResult {
    let centered = load_centered(mesh, cfg.mesh_scale)?;
    let grasps = sample_scored_grasps(&centered.mesh, cfg, cfg.seed)?;
    let name = stem(mesh);
    create_dir(out)?;
    let path = out.join(format!("{name}_grasps.json"));
    write_json(
        &path,
        &GraspFile {
            mesh: mesh.to_string_lossy().into_owned(),
            transform: &centered.transform,
            grasps: &grasps,
        },
    )?;
    let closed = grasps.iter().filter(|g| g.in_force_closure).count();
    let mean = grasps.iter().map(|g| g.score).sum::<f64>() / grasps.len().max(1) as f64;
    println!(
        "{name}: {} grasps, {closed} in force closure, mean score {mean:.3}; wrote {}",
        grasps.len(),
        path.display()
    );
    Ok(())
}

pub fn gen_dataset(object_dir: &Path, cfg: &RunConfig, out: &Path) -> CliResult {
    let manifest = generate_dataset(object_dir, cfg, out)?;
    let labels: usize = manifest.objects.iter().flat_map(|o| &o.views).map(|v| v.grasps.len()).sum();
    for w in &manifest.warnings {
        eprintln!("warning: skipped {}: {}", w.path, w.message);
    }
    println!(
        "{} objects, {} views, {labels} labels; wrote {}",
        manifest.objects.len(),
        manifest.view_count(),
        out.join(MANIFEST_FILE).display()
    );
    Ok(())
}

pub fn augment(depth: &Path, labels: Option<&Path>, count: usize, cfg: &RunConfig, out: &Path) -> CliResult {
    let img = read_depth(depth)?;
    let labels: Vec<ImageGrasp> = match labels {
        Some(p) => read_json(p)?,
        None => Vec::new(),
    };
    let ext = DepthFormat::from_path(depth).unwrap_or(cfg.depth_format).extension();
    let name = stem(depth);
    create_dir(out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::with_capacity(2 * count);
    for pair in 0..count {
        let (t, t_prime) = sample_pair(&cfg.augment, &mut rng)?;
        for (view, pipeline) in [("a", t), ("b", t_prime)] {
            let sample = pipeline.apply(&img, &labels, &mut rng);
            let file = format!("{name}_aug{pair:02}{view}.{ext}");
            write_depth(&sample.image, out.join(&file))?;
            records.push(AugmentRecord {
                pair,
                view,
                depth: file,
                ops: sample.applied_ops,
                labels: sample.labels,
            });
        }
    }
    write_json(&out.join(format!("{name}_aug.json")), &records)?;
    println!("wrote {count} augmentation pairs of {name} into {}", out.display());
    Ok(())
}

pub fn match_anchors(labels: &Path, cfg: &RunConfig, out: &Path) -> CliResult {
    let grasps: Vec<ImageGrasp> = read_json(labels)?;
    let gts: Vec<RotatedBox> = grasps.iter().map(RotatedBox::from_grasp).collect();
    if let Some(i) = gts.iter().position(|b| !b.is_valid()) {
        return Err(CliError::Data(Error::InvalidParameter(format!("label {i} is not a valid box"))));
    }
    let stride = cfg.anchors.stride;
    let feat_h = (cfg.camera.height as f64 / stride).ceil() as usize;
    let feat_w = (cfg.camera.width as f64 / stride).ceil() as usize;
    let anchors = generate_anchors(feat_h, feat_w, &cfg.anchors).map_err(CliError::Config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let assignment = match_topk(&anchors.boxes, &gts, &cfg.matching, &mut rng).map_err(CliError::Config)?;
    let mut per_label = vec![0; gts.len()];
    for (_, g) in assignment.positives() {
        per_label[g] += 1;
    }
    let report = MatchReport {
        feature_height: feat_h,
        feature_width: feat_w,
        anchors: anchors.boxes.len(),
        positives: assignment.count(|l| matches!(l, AnchorLabel::Positive(_))),
        negatives: assignment.count(|l| *l == AnchorLabel::Negative),
        ignored: assignment.count(|l| *l == AnchorLabel::Ignore),
        per_label,
        labels: assignment.labels,
    };
    create_dir(out)?;
    write_json(&out.join("match.json"), &report)?;
    println!(
        "{} anchors on a {feat_h}x{feat_w} grid: {} positive, {} negative, {} ignored",
        report.anchors, report.positives, report.negatives, report.ignored
    );
    for (i, n) in report.per_label.iter().enumerate() {
        println!("label {i}: {n} positive anchors");
    }
    Ok(())
}

pub fn losscheck(cfg: &RunConfig) -> CliResult {
    let reports = run_all(cfg.seed);
    println!("{:<18} {:>6} {:>14} {:>10}  result", "check", "cases", "max rel error", "tolerance");
    for r in &reports {
        println!(
            "{:<18} {:>6} {:>14.3e} {:>10.0e}  {}",
            r.name,
            r.cases,
            r.max_rel_error,
            r.tolerance,
            if r.passed { "PASS" } else { "FAIL" }
        );
    }
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("gradient check failed for {}", failed.join(", "))))
    }
}

/// Depth files of a scene directory, sorted by name: one per object.
fn scene_depths(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_error(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && DepthFormat::from_path(p).is_some())
        .collect();
    paths.sort();
    Ok(paths)
}

pub fn refine_beta(scene_dir: &Path, grasps: Option<&Path>, cfg: &RunConfig, out: &Path) -> CliResult {
    let camera: CameraFile = read_json(&scene_dir.join("camera.json"))?;
    let depth_paths = scene_depths(scene_dir)?;
    let depths = depth_paths.iter().map(read_depth).collect::<graspgen::Result<Vec<DepthImage>>>()?;
    let grasps_path = grasps.map(Path::to_path_buf).unwrap_or_else(|| scene_dir.join("grasps.json"));
    let object_grasps: Vec<Vec<ImageGrasp>> = read_json(&grasps_path)?;
    if object_grasps.len() > depths.len() {
        return Err(CliError::Data(Error::ShapeMismatch {
            expected: depths.len(),
            actual: object_grasps.len(),
        }));
    }
    info!("scene with {} objects", depths.len());
    let scene = build_scene(depths, &camera.intrinsics, &camera.pose, cfg.collision.trunc)?;
    let step = cfg.collision.grid_step;

    let mut table = String::from("object,grasp,beta,score,status\n");
    for (object, list) in object_grasps.iter().enumerate() {
        for (i, g) in list.iter().enumerate() {
            match refine_one(g, &scene, &cfg.gripper, step, Some(object)) {
                Ok((beta, score)) => {
                    let status = if score < 0.0 { "clear" } else { "collides" };
                    writeln!(table, "{object},{i},{beta},{score:.6},{status}").unwrap();
                }
                Err(Error::DegenerateGrasp(why)) => {
                    writeln!(table, "{object},{i},,,degenerate: {why}").unwrap();
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    let ranking = rank_graspable(&object_grasps, &scene, &cfg.gripper, step)?;
    let mut text = String::new();
    for (rank, e) in ranking.entries.iter().enumerate() {
        let name = depth_paths[e.object].file_name().unwrap_or_default().to_string_lossy();
        writeln!(
            text,
            "{}. object {} ({name}): score {:.4} at beta {}",
            rank + 1,
            e.object,
            e.score,
            e.grasp.beta
        )
        .unwrap();
    }
    for s in &ranking.skipped {
        writeln!(text, "skipped object {}: {}", s.object, s.reason).unwrap();
    }
    create_dir(out)?;
    write_text(&out.join("beta_table.csv"), &table)?;
    write_text(&out.join("ranking.txt"), &text)?;
    print!("{text}");
    Ok(())
}

pub fn train_toy(manifest: Option<&Path>, images: usize, side: usize, cfg: &RunConfig, out: &Path) -> CliResult {
    let data = match manifest {
        Some(path) => {
            let m = DatasetManifest::load(path)?;
            let base = path.parent().unwrap_or(Path::new("."));
            m.objects
                .iter()
                .flat_map(|o| &o.views)
                .map(|v| read_depth(base.join(&v.depth_path)))
                .collect::<graspgen::Result<Vec<_>>>()?
        }
        None => synthetic_depth_images(images, side, &mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0))),
    };
    let outcome = toy_contrastive_train(&data, &cfg.augment, &cfg.train)?;
    let losses = &outcome.epoch_losses;
    create_dir(out)?;
    let mut csv = String::from("epoch,loss\n");
    for (i, l) in losses.iter().enumerate() {
        writeln!(csv, "{},{l}", i + 1).unwrap();
    }
    write_text(&out.join("loss.csv"), &csv)?;
    let reference = (cfg.train.batch as f64).ln();
    write_text(&out.join("loss.svg"), &plot::loss_curve_svg(losses, reference))?;
    if let (Some(first), Some(last)) = (losses.first(), losses.last()) {
        println!(
            "{} images, {} epochs: loss {first:.4} -> {last:.4} (ln batch = {reference:.4})",
            data.len(),
            losses.len()
        );
    }
    Ok(())
}

pub fn validate(manifest: &Path) -> CliResult {
    let report = validate_manifest(manifest)?;
    println!(
        "{} objects, {} views, {} labels, {} positives",
        report.objects, report.views, report.labels, report.positives
    );
    for issue in &report.issues {
        println!("issue: {issue}");
    }
    if report.is_clean() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("{} issues", report.issues.len())))
    }
}
