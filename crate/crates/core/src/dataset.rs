//! End-to-end dataset generation, the JSON manifest and its validator.
//!
//! Seeds form a tree: the master seed derives one seed per object (by
//! object index), and each object seed derives one seed per view (by view
//! index), one for contact sampling and one per grasp for the robustness
//! trials. [`derive_seed`] is a SplitMix64 step on `parent + (index + 1) *
//! 0x9E3779B97F4A7C15`, so results never depend on scheduling.

use std::fs;
use std::path::{Component, Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::AugmentFamily;
use crate::camera::{icosahedron_face_directions, render_depth, CameraIntrinsics, CameraPose};
use crate::contrastive::{LossWeights, ToyTrainConfig};
use crate::depth_io::{read_depth, write_depth, DepthFormat};
use crate::error::{Error, Result};
use crate::grasp::{
    label_top_fraction, robust_force_closure, sample_antipodal, top_count, ContactPair, GripperModel,
    RobustnessParams,
};
use crate::mesh::{load_mesh_scaled, MeshFormat, TriangleMesh};
use crate::projection::{box_height, passes_tilt, project_grasp_with, ImageGrasp, ProjectionConfig};
use crate::rotated::{AnchorConfig, MatchConfig};
use crate::Vec3;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;
pub const MAX_VIEWS: usize = 20;

const SAMPLING_STREAM: u64 = 1 << 20;
const ROBUSTNESS_STREAM: u64 = 1 << 21;

/// SplitMix64 output for the `index`-th child of `parent`.
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    let mut z = parent.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollisionConfig {
    pub trunc: f64,
    pub grid_step: f64,
}

impl Default for CollisionConfig {
    fn default() -> Self {
        CollisionConfig {
            trunc: crate::collision::DEFAULT_TRUNCATION,
            grid_step: 5.0,
        }
    }
}

/// Every tunable of a run. Loaded from TOML; missing keys take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub camera: CameraIntrinsics,
    pub grasps_per_object: usize,
    pub views_per_object: usize,
    pub top_fraction: f64,
    /// Uniform scale applied to every mesh on load (e.g. 0.001 for mm files).
    pub mesh_scale: f64,
    pub depth_format: DepthFormat,
    pub gripper: GripperModel,
    pub robustness: RobustnessParams,
    pub projection: ProjectionConfig,
    pub augment: AugmentFamily,
    pub anchors: AnchorConfig,
    pub matching: MatchConfig,
    pub loss: LossWeights,
    pub collision: CollisionConfig,
    pub train: ToyTrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            camera: CameraIntrinsics::default(),
            grasps_per_object: 100,
            views_per_object: MAX_VIEWS,
            top_fraction: 0.2,
            mesh_scale: 1.0,
            depth_format: DepthFormat::Png,
            gripper: GripperModel::default(),
            robustness: RobustnessParams::default(),
            projection: ProjectionConfig::default(),
            augment: AugmentFamily::default(),
            anchors: AnchorConfig::default(),
            matching: MatchConfig::default(),
            loss: LossWeights::default(),
            collision: CollisionConfig::default(),
            train: ToyTrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        self.gripper.validate()?;
        self.augment.validate()?;
        self.loss.validate()?;
        if self.grasps_per_object == 0 {
            return Err(Error::invalid("grasps_per_object must be positive"));
        }
        if !(1..=MAX_VIEWS).contains(&self.views_per_object) {
            return Err(Error::invalid(format!("views_per_object must lie in 1..={MAX_VIEWS}")));
        }
        if !(self.top_fraction > 0.0 && self.top_fraction <= 1.0) {
            return Err(Error::invalid("top_fraction must lie in (0, 1]"));
        }
        if !(self.mesh_scale > 0.0 && self.mesh_scale.is_finite()) {
            return Err(Error::invalid("mesh_scale must be positive"));
        }
        if self.robustness.trials == 0 || !(self.robustness.sigma_c >= 0.0) {
            return Err(Error::invalid("robustness needs trials >= 1 and sigma_c >= 0"));
        }
        if !(self.matching.pos_thresh > self.matching.neg_thresh) || self.matching.k == 0 {
            return Err(Error::invalid("matching needs pos_thresh > neg_thresh and k >= 1"));
        }
        if !(self.collision.trunc > 0.0) {
            return Err(Error::invalid("collision truncation must be positive"));
        }
        crate::collision::beta_grid(self.collision.grid_step)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshTransform {
    pub scale: f64,
    /// Applied after scaling; moves the bounding-ball center to the origin.
    pub translation: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspRecord {
    pub contacts: ContactPair,
    pub score: f64,
    pub in_force_closure: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewGrasp {
    /// Index into the object's `grasps`.
    pub grasp: usize,
    pub label: ImageGrasp,
    pub score: f64,
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewRecord {
    pub index: usize,
    pub seed: u64,
    pub intrinsics: CameraIntrinsics,
    pub pose: CameraPose,
    /// Relative to the manifest directory.
    pub depth_path: String,
    pub grasps: Vec<ViewGrasp>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub index: usize,
    pub name: String,
    /// Relative to the manifest directory.
    pub mesh_path: String,
    pub transform: MeshTransform,
    pub seed: u64,
    pub bounding_radius: f64,
    pub grasps: Vec<GraspRecord>,
    pub views: Vec<ViewRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestWarning {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub config: RunConfig,
    pub objects: Vec<ObjectRecord>,
    pub warnings: Vec<ManifestWarning>,
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn view_count(&self) -> usize {
        self.objects.iter().map(|o| o.views.len()).sum()
    }
}

/// Mesh files in `dir` (by extension), sorted by file name.
pub fn list_meshes(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && MeshFormat::from_path(&path).is_some() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// `target` relative to `base`; both are canonicalized first.
pub fn relative_path(target: &Path, base: &Path) -> Result<PathBuf> {
    let t = target.canonicalize().map_err(|e| Error::io(target, e))?;
    let b = base.canonicalize().map_err(|e| Error::io(base, e))?;
    let tc: Vec<Component> = t.components().collect();
    let bc: Vec<Component> = b.components().collect();
    let common = tc.iter().zip(&bc).take_while(|(x, y)| x == y).count();
    let mut rel = PathBuf::new();
    for _ in common..bc.len() {
        rel.push("..");
    }
    for c in &tc[common..] {
        rel.push(c.as_os_str());
    }
    Ok(rel)
}

fn path_string(p: &Path) -> String {
    p.to_string_lossy().replace('\\', "/")
}

/// Camera for view `k`: icosahedron face direction `k`, distance drawn from
/// `U(sqrt(3) r, 2 r)` with the view's own generator.
pub fn view_pose(center: &Vec3, radius: f64, k: usize, seed: u64) -> Result<CameraPose> {
    if !(radius > 0.0) {
        return Err(Error::DegenerateObject);
    }
    let dir = icosahedron_face_directions()[k];
    let dist = ChaCha8Rng::seed_from_u64(seed).random_range(3f64.sqrt() * radius..2.0 * radius);
    CameraPose::look_at(center + dir * dist, *center)
}

fn in_frame(label: &ImageGrasp, intr: &CameraIntrinsics) -> bool {
    let (p1, p2) = label.endpoints();
    intr.contains(p1[0], p1[1]) && intr.contains(p2[0], p2[1])
}

/// Labels of the stored grasps as seen from one view, before top-fraction marking.
pub fn view_labels(
    grasps: &[GraspRecord],
    intr: &CameraIntrinsics,
    pose: &CameraPose,
    proj: &ProjectionConfig,
) -> Vec<(usize, ImageGrasp)> {
    grasps
        .iter()
        .enumerate()
        .filter_map(|(i, g)| {
            let label = project_grasp_with(&g.contacts.c1, &g.contacts.c2, intr, pose, proj).ok()?;
            (passes_tilt(&label) && in_frame(&label, intr)).then_some((i, label))
        })
        .collect()
}

/// A mesh moved so its bounding-ball center is the origin.
#[derive(Debug, Clone)]
pub struct CenteredMesh {
    pub mesh: TriangleMesh,
    pub transform: MeshTransform,
    pub radius: f64,
}

pub fn center_mesh(mesh: &TriangleMesh, scale: f64) -> CenteredMesh {
    let ball = mesh.bounding_ball();
    CenteredMesh {
        mesh: mesh.translated(-ball.center),
        transform: MeshTransform {
            scale,
            translation: -ball.center,
        },
        radius: ball.radius,
    }
}

pub fn load_centered(path: &Path, scale: f64) -> Result<CenteredMesh> {
    Ok(center_mesh(&load_mesh_scaled(path, scale)?, scale))
}

/// Antipodal contacts with robust force-closure scores, all drawn from
/// streams derived from `seed`.
pub fn sample_scored_grasps(mesh: &TriangleMesh, cfg: &RunConfig, seed: u64) -> Result<Vec<GraspRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, SAMPLING_STREAM));
    let pairs = sample_antipodal(mesh, &cfg.gripper, cfg.grasps_per_object, &mut rng);
    pairs
        .par_iter()
        .enumerate()
        .map(|(j, pair)| {
            let mut r = ChaCha8Rng::seed_from_u64(derive_seed(seed, ROBUSTNESS_STREAM + j as u64));
            let q = robust_force_closure(
                pair,
                mesh,
                cfg.gripper.friction_mu,
                cfg.robustness.sigma_c,
                cfg.robustness.trials,
                &mut r,
            )?;
            Ok(GraspRecord {
                contacts: *pair,
                score: q.score,
                in_force_closure: q.in_force_closure,
            })
        })
        .collect()
}

fn generate_object(
    index: usize,
    path: &Path,
    object: CenteredMesh,
    cfg: &RunConfig,
    out_dir: &Path,
    depth_dir: &Path,
) -> Result<ObjectRecord> {
    let CenteredMesh { mesh, transform, radius } = object;
    let center = Vec3::zeros();
    let seed = derive_seed(cfg.seed, index as u64);

    let grasps = sample_scored_grasps(&mesh, cfg, seed)?;

    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut views = Vec::with_capacity(cfg.views_per_object);
    for k in 0..cfg.views_per_object {
        let view_seed = derive_seed(seed, k as u64);
        let pose = view_pose(&center, radius, k, view_seed)?;
        let depth = render_depth(&mesh, &cfg.camera, &pose);
        let file = depth_dir.join(format!("obj{index:03}_view{k:02}.{}", cfg.depth_format.extension()));
        write_depth(&depth, &file)?;
        let labelled = view_labels(&grasps, &cfg.camera, &pose, &cfg.projection);
        let scores: Vec<f64> = labelled.iter().map(|(i, _)| grasps[*i].score).collect();
        let flags = label_top_fraction(&scores, cfg.top_fraction)?;
        views.push(ViewRecord {
            index: k,
            seed: view_seed,
            intrinsics: cfg.camera,
            pose,
            depth_path: path_string(&relative_path(&file, out_dir)?),
            grasps: labelled
                .into_iter()
                .zip(flags)
                .map(|((i, label), positive)| ViewGrasp {
                    grasp: i,
                    label,
                    score: grasps[i].score,
                    positive,
                })
                .collect(),
        });
    }
    Ok(ObjectRecord {
        index,
        name: stem,
        mesh_path: path_string(&relative_path(path, out_dir)?),
        transform,
        seed,
        bounding_radius: radius,
        grasps,
        views,
    })
}

/// Generates depth files and `manifest.json` under `out_dir` for every mesh
/// in `object_dir`. Unloadable meshes are skipped with a warning.
pub fn generate_dataset(object_dir: &Path, cfg: &RunConfig, out_dir: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    let paths = list_meshes(object_dir)?;
    let depth_dir = out_dir.join("depth");
    fs::create_dir_all(&depth_dir).map_err(|e| Error::io(&depth_dir, e))?;

    let mut warnings = Vec::new();
    let mut loaded = Vec::new();
    for path in &paths {
        match load_centered(path, cfg.mesh_scale) {
            Ok(object) => loaded.push((path.clone(), object)),
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                warnings.push(ManifestWarning {
                    path: path_string(&relative_path(path, out_dir)?),
                    message: e.to_string(),
                });
            }
        }
    }
    if loaded.is_empty() {
        return Err(Error::EmptyGeometry("no loadable mesh in the object directory"));
    }
    let objects = loaded
        .into_par_iter()
        .enumerate()
        .map(|(i, (path, object))| generate_object(i, &path, object, cfg, out_dir, &depth_dir))
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        config: cfg.clone(),
        objects,
        warnings,
    };
    let file = out_dir.join(MANIFEST_FILE);
    fs::write(&file, manifest.to_json()?).map_err(|e| Error::io(&file, e))?;
    Ok(manifest)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub objects: usize,
    pub views: usize,
    pub labels: usize,
    pub positives: usize,
    pub issues: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Re-checks every manifest invariant: files exist and match the camera,
/// labels pass the tilt filter and re-project from their contacts, each
/// view's positives are exactly its top fraction by score, and counts stay
/// within the configuration.
pub fn validate_manifest(manifest_path: &Path) -> Result<ValidationReport> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let cfg = &manifest.config;
    let mut r = ValidationReport {
        objects: manifest.objects.len(),
        ..ValidationReport::default()
    };
    for obj in &manifest.objects {
        let who = format!("object {} ({})", obj.index, obj.name);
        if !base.join(&obj.mesh_path).is_file() {
            r.issues.push(format!("{who}: missing mesh file {}", obj.mesh_path));
        }
        if obj.grasps.len() > cfg.grasps_per_object {
            r.issues.push(format!("{who}: {} grasps exceed the configured {}", obj.grasps.len(), cfg.grasps_per_object));
        }
        if obj.views.len() != cfg.views_per_object {
            r.issues.push(format!("{who}: {} views, expected {}", obj.views.len(), cfg.views_per_object));
        }
        for view in &obj.views {
            r.views += 1;
            let at = format!("{who} view {}", view.index);
            let depth_file = base.join(&view.depth_path);
            if !depth_file.is_file() {
                r.issues.push(format!("{at}: missing depth file {}", view.depth_path));
            } else {
                match read_depth(&depth_file) {
                    Ok(d) if d.width() == view.intrinsics.width && d.height() == view.intrinsics.height => {}
                    Ok(d) => r.issues.push(format!(
                        "{at}: depth file {} is {}x{}, camera is {}x{}",
                        view.depth_path,
                        d.width(),
                        d.height(),
                        view.intrinsics.width,
                        view.intrinsics.height
                    )),
                    Err(e) => r.issues.push(format!("{at}: unreadable depth file {}: {e}", view.depth_path)),
                }
            }
            if view.grasps.len() > cfg.grasps_per_object {
                r.issues.push(format!("{at}: {} labels exceed the configured {}", view.grasps.len(), cfg.grasps_per_object));
            }
            let h = box_height(&view.intrinsics);
            for vg in &view.grasps {
                r.labels += 1;
                r.positives += vg.positive as usize;
                let Some(rec) = obj.grasps.get(vg.grasp) else {
                    r.issues.push(format!("{at}: label references missing grasp {}", vg.grasp));
                    continue;
                };
                if !passes_tilt(&vg.label) {
                    r.issues.push(format!("{at}: grasp {} fails the tilt filter (gamma {})", vg.grasp, vg.label.gamma));
                }
                if vg.score != rec.score {
                    r.issues.push(format!("{at}: grasp {} score differs from its object record", vg.grasp));
                }
                if (vg.label.h - h).abs() > 1e-9 {
                    r.issues.push(format!("{at}: grasp {} box height {} != {h}", vg.grasp, vg.label.h));
                }
                match project_grasp_with(&rec.contacts.c1, &rec.contacts.c2, &view.intrinsics, &view.pose, &cfg.projection) {
                    Ok(p) if label_matches(&p, &vg.label) => {}
                    _ => r.issues.push(format!("{at}: grasp {} label does not re-project from its contacts", vg.grasp)),
                }
            }
            let n_pos = view.grasps.iter().filter(|g| g.positive).count();
            let expected = top_count(view.grasps.len(), cfg.top_fraction);
            if n_pos != expected {
                r.issues.push(format!("{at}: {n_pos} positives, expected {expected}"));
            }
            let min_pos = view.grasps.iter().filter(|g| g.positive).map(|g| g.score).fold(f64::INFINITY, f64::min);
            let max_neg = view.grasps.iter().filter(|g| !g.positive).map(|g| g.score).fold(f64::NEG_INFINITY, f64::max);
            if min_pos < max_neg {
                r.issues.push(format!("{at}: a negative outscores a positive ({max_neg} > {min_pos})"));
            }
        }
    }
    Ok(r)
}

/// Label agreement within the projection round-trip tolerances.
pub fn label_matches(a: &ImageGrasp, b: &ImageGrasp) -> bool {
    (a.x - b.x).abs() <= 1e-6
        && (a.y - b.y).abs() <= 1e-6
        && (a.w - b.w).abs() <= 1e-6
        && (a.theta - b.theta).abs() <= 0.1
        && (a.gamma - b.gamma).abs() <= 0.1
        && (a.z - b.z).abs() <= 1e-9
        && (a.h - b.h).abs() <= 1e-9
}
