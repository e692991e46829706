//! Projective signed-distance scenes and the search over the rotation about
//! the grasp axis.
//!
//! Each object is a segmented depth image from one shared camera. A query
//! point that projects onto a valid pixel gets `depth - Z` (positive in front
//! of the surface), truncated to `[-trunc, trunc]`; any other query gets the
//! distance to the nearest observed point of that object, capped at `trunc`.

use kiddo::{KdTree, SquaredEuclidean};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{deproject, CameraIntrinsics, CameraPose, DepthImage};
use crate::error::{Error, Result};
use crate::grasp::GripperModel;
use crate::projection::{back_project, Grasp6DoF, ImageGrasp};
use crate::{Mat3, Vec3};

pub const DEFAULT_TRUNCATION: f64 = 0.1;
/// Sample spacing of the gripper body (m).
pub const SWEEP_SPACING: f64 = 0.005;
pub const MIN_SWEEP_POINTS: usize = 200;
/// Scores within this of the best count as ties.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Observed points of one object, for nearest-point queries off the depth map.
#[derive(Debug, Clone)]
struct PointIndex {
    tree: KdTree<f64, 3>,
    empty: bool,
}

impl PointIndex {
    fn new(points: &[Vec3]) -> Self {
        let mut tree = KdTree::with_capacity(points.len().max(1));
        for (i, p) in points.iter().enumerate() {
            tree.add(&[p.x, p.y, p.z], i as u64);
        }
        PointIndex {
            tree,
            empty: points.is_empty(),
        }
    }

    /// Distance to the nearest point, or `cap` if none is that close.
    fn nearest_capped(&self, p: &Vec3, cap: f64) -> f64 {
        if self.empty {
            return cap;
        }
        let hit = self.tree.nearest_one::<SquaredEuclidean>(&[p.x, p.y, p.z]);
        hit.distance.sqrt().min(cap)
    }
}

#[derive(Debug, Clone)]
struct SceneObject {
    depth: DepthImage,
    points: PointIndex,
}

/// Immutable per-object projective signed-distance scene.
#[derive(Debug, Clone)]
pub struct SceneSDF {
    intrinsics: CameraIntrinsics,
    pose: CameraPose,
    trunc: f64,
    objects: Vec<SceneObject>,
}

pub fn build_scene(
    objects: Vec<DepthImage>,
    intrinsics: &CameraIntrinsics,
    pose: &CameraPose,
    trunc: f64,
) -> Result<SceneSDF> {
    intrinsics.validate()?;
    if !(trunc > 0.0 && trunc.is_finite()) {
        return Err(Error::invalid("truncation distance must be positive"));
    }
    let objects = objects
        .into_iter()
        .map(|depth| {
            if depth.width() != intrinsics.width || depth.height() != intrinsics.height {
                return Err(Error::ShapeMismatch {
                    expected: intrinsics.width * intrinsics.height,
                    actual: depth.width() * depth.height(),
                });
            }
            let world: Vec<Vec3> = deproject(&depth, intrinsics)
                .points
                .iter()
                .map(|p| pose.to_world(p))
                .collect();
            Ok(SceneObject {
                points: PointIndex::new(&world),
                depth,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SceneSDF {
        intrinsics: *intrinsics,
        pose: *pose,
        trunc,
        objects,
    })
}

impl SceneSDF {
    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn trunc(&self) -> f64 {
        self.trunc
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }

    pub fn pose(&self) -> &CameraPose {
        &self.pose
    }

    /// Truncated signed distance of world point `p` to object `i`.
    pub fn signed_distance(&self, i: usize, p: &Vec3) -> f64 {
        let obj = &self.objects[i];
        let cam = self.pose.to_camera(p);
        if cam.z > 0.0 {
            let u = self.intrinsics.fx * cam.x / cam.z + self.intrinsics.cx;
            let v = self.intrinsics.fy * cam.y / cam.z + self.intrinsics.cy;
            if let Some((pu, pv)) = self.intrinsics.pixel_of(u, v) {
                let d = obj.depth.get(pu, pv);
                if d > 0.0 {
                    return (d - cam.z).clamp(-self.trunc, self.trunc);
                }
            }
        }
        obj.points.nearest_capped(p, self.trunc)
    }
}

/// Sample points of a posed parallel-jaw gripper.
#[derive(Debug, Clone, PartialEq)]
pub struct GripperSweep {
    pub points: Vec<Vec3>,
    /// Whether each point belongs to a finger (as opposed to the palm).
    pub is_finger: Vec<bool>,
    pub center: Vec3,
    /// Unit closing axis from the first contact to the second.
    pub axis: Vec3,
    /// Unit approach direction, from the palm toward the fingertips.
    pub approach: Vec3,
    /// Jaw opening: `min(contact distance, max_width)`.
    pub separation: f64,
}

impl GripperSweep {
    /// Centers of the two inner fingertip faces.
    pub fn fingertips(&self) -> (Vec3, Vec3) {
        let h = 0.5 * self.separation;
        (self.center - self.axis * h, self.center + self.axis * h)
    }
}

fn rodrigues(axis: &Vec3, deg: f64) -> Mat3 {
    nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_unchecked(*axis), deg.to_radians()).into_inner()
}

/// `ceil(len / spacing) + 1` evenly spaced offsets spanning `[lo, hi]`.
fn span(lo: f64, hi: f64, spacing: f64) -> Vec<f64> {
    let n = ((hi - lo) / spacing).ceil().max(1.0) as usize;
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

/// Gripper pose from a label and the rotation `beta` (degrees) about the
/// closing axis. At `beta = 0` the approach direction is the viewing ray
/// through the grasp center made orthogonal to the axis. Fingertips sit at
/// the contacts (clamped to the maximum opening), the fingers extend
/// `jaw_length` back along the approach, and the palm closes them off.
pub fn fk_gripper(
    g: &ImageGrasp,
    beta: f64,
    gripper: &GripperModel,
    intr: &CameraIntrinsics,
    pose: &CameraPose,
) -> Result<GripperSweep> {
    gripper.validate()?;
    let vals = [g.x, g.y, g.theta, g.gamma, g.z, g.w, beta];
    if vals.iter().any(|v| !v.is_finite()) || !(g.z > 0.0) || !(g.w > 0.0) {
        return Err(Error::DegenerateGrasp("non-finite or non-positive grasp parameters"));
    }
    let contacts = back_project(g, intr, pose);
    let axis = contacts.c2 - contacts.c1;
    let width = axis.norm();
    if width < 1e-12 {
        return Err(Error::DegenerateGrasp("coincident contacts"));
    }
    let axis = axis / width;
    let center = (contacts.c1 + contacts.c2) * 0.5;
    let view = center - pose.center();
    let ortho = view - axis * view.dot(&axis);
    if ortho.norm() < 1e-9 * view.norm().max(1.0) {
        return Err(Error::DegenerateGrasp("closing axis parallel to the viewing ray"));
    }
    let approach = rodrigues(&axis, beta.rem_euclid(360.0)) * ortho.normalize();
    let side = axis.cross(&approach);
    let sep = width.min(gripper.max_width);
    let (t, l, fw) = (gripper.finger_thickness, gripper.jaw_length, gripper.finger_width);

    let mut spacing = SWEEP_SPACING;
    loop {
        let mut points = Vec::new();
        let mut is_finger = Vec::new();
        let mut emit = |a: &[f64], d: &[f64], finger: bool| {
            for &sa in a {
                for &sd in d {
                    for &sb in &span(-0.5 * fw, 0.5 * fw, spacing) {
                        points.push(center + axis * sa + approach * sd + side * sb);
                        is_finger.push(finger);
                    }
                }
            }
        };
        let along = span(-l, 0.0, spacing);
        emit(&span(0.5 * sep, 0.5 * sep + t, spacing), &along, true);
        emit(&span(-0.5 * sep - t, -0.5 * sep, spacing), &along, true);
        emit(&span(-0.5 * sep - t, 0.5 * sep + t, spacing), &span(-l - t, -l, spacing), false);
        if points.len() >= MIN_SWEEP_POINTS {
            return Ok(GripperSweep {
                points,
                is_finger,
                center,
                axis,
                approach,
                separation: sep,
            });
        }
        spacing *= 0.5;
    }
}

/// `C = sum_i -min_p SD_i(p)`. For the `target` object the finger points are
/// left out, since they are meant to touch it.
pub fn sweep_score(sweep: &GripperSweep, scene: &SceneSDF, target: Option<usize>) -> f64 {
    (0..scene.len())
        .map(|i| {
            let min = sweep
                .points
                .iter()
                .zip(&sweep.is_finger)
                .filter(|(_, f)| !(Some(i) == target && **f))
                .map(|(p, _)| scene.signed_distance(i, p))
                .fold(f64::INFINITY, f64::min);
            if min.is_finite() {
                -min
            } else {
                -scene.trunc
            }
        })
        .sum()
}

pub fn collision_score(
    g: &ImageGrasp,
    beta: f64,
    scene: &SceneSDF,
    gripper: &GripperModel,
    target: Option<usize>,
) -> Result<f64> {
    if scene.is_empty() {
        return Ok(0.0);
    }
    let sweep = fk_gripper(g, beta, gripper, &scene.intrinsics, &scene.pose)?;
    Ok(sweep_score(&sweep, scene, target))
}

/// The `beta` grid `0, step, ..., 360 - step`.
pub fn beta_grid(step: f64) -> Result<Vec<f64>> {
    let n = 360.0 / step;
    if !(step > 0.0) || (n - n.round()).abs() > 1e-9 {
        return Err(Error::invalid(format!("grid step {step} does not divide 360")));
    }
    Ok((0..n.round() as usize).map(|i| i as f64 * step).collect())
}

/// Exhaustive search of the collision score over the `beta` grid; ties go
/// to the smallest angle. An empty scene gives `(0, 0)`.
pub fn refine_beta(
    g: &ImageGrasp,
    scene: &SceneSDF,
    gripper: &GripperModel,
    grid_step: f64,
    target: Option<usize>,
) -> Result<(f64, f64)> {
    let grid = beta_grid(grid_step)?;
    if scene.is_empty() {
        return Ok((0.0, 0.0));
    }
    let scores: Vec<f64> = grid
        .par_iter()
        .map(|&b| collision_score(g, b, scene, gripper, target))
        .collect::<Result<_>>()?;
    let mut best = (grid[0], scores[0]);
    for (&b, &s) in grid.iter().zip(&scores).skip(1) {
        if s < best.1 - TIE_TOLERANCE {
            best = (b, s);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub object: usize,
    pub grasp: Grasp6DoF,
    /// Collision score of the refined grasp; negative means clearance.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSkip {
    pub object: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub entries: Vec<RankEntry>,
    pub skipped: Vec<RankSkip>,
}

/// Refines every grasp of every object and orders objects by their best
/// collision-free score (lowest first, ties to the lower object index).
pub fn rank_graspable(
    object_grasps: &[Vec<ImageGrasp>],
    scene: &SceneSDF,
    gripper: &GripperModel,
    grid_step: f64,
) -> Result<Ranking> {
    let mut ranking = Ranking::default();
    for (object, grasps) in object_grasps.iter().enumerate() {
        let target = (object < scene.len()).then_some(object);
        let mut best: Option<RankEntry> = None;
        let mut failures = 0usize;
        for g in grasps {
            match refine_beta(g, scene, gripper, grid_step, target) {
                Ok((beta, score)) if score < 0.0 => {
                    if best.as_ref().is_none_or(|b| score < b.score - TIE_TOLERANCE) {
                        best = Some(RankEntry {
                            object,
                            grasp: g.with_beta(beta),
                            score,
                        });
                    }
                }
                Ok(_) => {}
                Err(Error::DegenerateGrasp(_)) => failures += 1,
                Err(e) => return Err(e),
            }
        }
        match best {
            Some(entry) => ranking.entries.push(entry),
            None => ranking.skipped.push(RankSkip {
                object,
                reason: if grasps.is_empty() {
                    "no grasps".into()
                } else {
                    format!("no collision-free grasp among {} ({failures} degenerate)", grasps.len())
                },
            }),
        }
    }
    ranking
        .entries
        .sort_by(|a, b| a.score.total_cmp(&b.score).then(a.object.cmp(&b.object)));
    Ok(ranking)
}
