//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use graspgen::camera::{render_depth, CameraIntrinsics, CameraPose, DepthImage};
use graspgen::grasp::{sample_antipodal, ContactPair, GripperModel};
use graspgen::mesh::{load_mesh, TriangleMesh};
use graspgen::projection::{project_grasp, ImageGrasp};
use graspgen::{Mat3, Vec3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn asset(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../assets/meshes").join(name)
}

pub fn assets_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../assets/meshes")
}

/// Default resolution with the principal point on the image center, so
/// image rotations and flips are camera motions.
pub fn centered_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::new(200.0, 200.0, 111.5, 111.5, 224, 224).unwrap()
}

/// Camera rolled by `alpha` degrees about its optical axis.
pub fn roll(pose: &CameraPose, alpha: f64) -> CameraPose {
    let m: Mat3 = *nalgebra::Rotation3::from_axis_angle(&Vec3::z_axis(), alpha.to_radians()).matrix();
    CameraPose {
        rotation: m * pose.rotation,
        translation: m * pose.translation,
    }
}

/// World point mirrored through the camera's `x = 0` (horizontal) or `y = 0` plane.
pub fn mirror(pose: &CameraPose, p: &Vec3, horizontal: bool) -> Vec3 {
    let mut c = pose.to_camera(p);
    if horizontal {
        c.x = -c.x;
    } else {
        c.y = -c.y;
    }
    pose.to_world(&c)
}

pub struct LabelledView {
    pub intr: CameraIntrinsics,
    pub pose: CameraPose,
    pub depth: DepthImage,
    pub pairs: Vec<ContactPair>,
    pub labels: Vec<ImageGrasp>,
}

/// The bundled mug seen from an oblique camera, with every sampled grasp
/// whose endpoints project inside the frame.
pub fn labelled_view(seed: u64, n: usize) -> LabelledView {
    let mesh = load_mesh(asset("mug.off")).unwrap();
    let intr = centered_intrinsics();
    let pose = CameraPose::look_at(Vec3::new(0.12, -0.16, 0.1), Vec3::zeros()).unwrap();
    let depth = render_depth(&mesh, &intr, &pose);
    let all = sample_antipodal(&mesh, &GripperModel::default(), n, &mut ChaCha8Rng::seed_from_u64(seed));
    let mut pairs = Vec::new();
    let mut labels = Vec::new();
    for p in all {
        let Ok(g) = project_grasp(&p.c1, &p.c2, &intr, &pose) else { continue };
        let (a, b) = g.endpoints();
        if intr.contains(a[0], a[1]) && intr.contains(b[0], b[1]) {
            pairs.push(p);
            labels.push(g);
        }
    }
    LabelledView {
        intr,
        pose,
        depth,
        pairs,
        labels,
    }
}

/// Largest pixel error over `(x, y, w)` and largest angle error over
/// `(theta, gamma)`; theta is compared modulo 180.
pub fn label_error(a: &ImageGrasp, b: &ImageGrasp) -> (f64, f64) {
    let px = (a.x - b.x).abs().max((a.y - b.y).abs()).max((a.w - b.w).abs());
    let dt = (a.theta - b.theta).rem_euclid(180.0);
    let deg = dt.min(180.0 - dt).max((a.gamma - b.gamma).abs());
    (px, deg)
}

/// Exact IoU of two unit squares rotated 45 degrees apart about one center.
pub fn unit_square_45_iou() -> f64 {
    let inter = 2.0 * (2f64.sqrt() - 1.0);
    inter / (2.0 - inter)
}

/// Point of `b`'s local frame `(s, t)`, both in `[-1/2, 1/2]`, in image coordinates.
fn box_point(b: &graspgen::rotated::RotatedBox, s: f64, t: f64) -> [f64; 2] {
    let (ew, eh) = b.axes();
    let (a, c) = (s * b.w, t * b.h);
    [b.x + a * ew[0] + c * eh[0], b.y + a * ew[1] + c * eh[1]]
}

fn iou_from_fraction(a: &graspgen::rotated::RotatedBox, b: &graspgen::rotated::RotatedBox, frac: f64) -> f64 {
    let inter = frac * a.area();
    inter / (a.area() + b.area() - inter)
}

/// IoU estimated from `samples` uniform points inside `a`.
pub fn mc_iou_iid<R: rand::Rng>(a: &graspgen::rotated::RotatedBox, b: &graspgen::rotated::RotatedBox, samples: usize, rng: &mut R) -> f64 {
    let hits = (0..samples)
        .filter(|_| b.contains(box_point(a, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)))
        .count();
    iou_from_fraction(a, b, hits as f64 / samples as f64)
}

/// IoU estimated from one jittered point in each cell of an `n x n` grid over `a`.
pub fn mc_iou_stratified<R: rand::Rng>(a: &graspgen::rotated::RotatedBox, b: &graspgen::rotated::RotatedBox, n: usize, rng: &mut R) -> f64 {
    let mut hits = 0usize;
    for i in 0..n {
        for j in 0..n {
            let s = (i as f64 + rng.random::<f64>()) / n as f64 - 0.5;
            let t = (j as f64 + rng.random::<f64>()) / n as f64 - 0.5;
            hits += b.contains(box_point(a, s, t)) as usize;
        }
    }
    iou_from_fraction(a, b, hits as f64 / (n * n) as f64)
}

/// A random box pair that overlaps most of the time.
pub fn random_box_pair<R: rand::Rng>(rng: &mut R) -> (graspgen::rotated::RotatedBox, graspgen::rotated::RotatedBox) {
    use graspgen::rotated::RotatedBox;
    let a = RotatedBox::new(
        rng.random_range(-5.0..5.0),
        rng.random_range(-5.0..5.0),
        rng.random_range(0.5..10.0),
        rng.random_range(0.5..10.0),
        rng.random_range(-90.0..90.0),
    );
    let b = RotatedBox::new(
        a.x + rng.random_range(-4.0..4.0),
        a.y + rng.random_range(-4.0..4.0),
        rng.random_range(0.5..10.0),
        rng.random_range(0.5..10.0),
        rng.random_range(-90.0..90.0),
    );
    (a, b)
}

/// Horizontal grasp at the image center of the default camera, 0.5 m deep
/// and 5 cm wide; its closing axis is the camera `x` axis.
pub fn center_grasp() -> ImageGrasp {
    ImageGrasp {
        x: 112.0,
        y: 112.0,
        theta: 90.0,
        gamma: 0.0,
        z: 0.5,
        w: 20.0,
        h: 20.0,
    }
}

/// Depth image of the plane through `p0` with unit normal `n`, seen by the
/// default camera at the identity pose. Rays that miss it read 0.
pub fn plane_depth(p0: &Vec3, n: &Vec3) -> DepthImage {
    let intr = CameraIntrinsics::default();
    let mut img = DepthImage::new(intr.width, intr.height);
    for v in 0..intr.height {
        for u in 0..intr.width {
            let dir = Vec3::new((u as f64 - intr.cx) / intr.fx, (v as f64 - intr.cy) / intr.fy, 1.0);
            let denom = n.dot(&dir);
            if denom > 1e-6 {
                let t = n.dot(p0) / denom;
                if t > 0.0 && t < 3.0 {
                    img.set(u, v, t);
                }
            }
        }
    }
    img
}

/// A plane 3 cm from the center grasp, behind it and below, tilted
/// so the best roll about the grasp axis falls between coarse grid angles.
pub fn wall_scene_depth() -> DepthImage {
    let a = 47.3f64.to_radians();
    let n = Vec3::new(0.0, a.sin(), a.cos());
    plane_depth(&(Vec3::new(0.0, 0.0, 0.5) + n * 0.03), &n)
}

/// Two short rods of depth pixels lying on the center grasp's axis, beyond
/// the fingers on both sides: the scene looks the same from every roll.
pub fn axis_rods_depth() -> DepthImage {
    let intr = CameraIntrinsics::default();
    let mut img = DepthImage::new(intr.width, intr.height);
    for u in (52..=80).chain(144..=172) {
        img.set(u, 112, 0.5);
    }
    img
}

/// Plain Möller–Trumbore against one triangle, no culling.
pub fn ray_triangle(o: &Vec3, d: &Vec3, [a, b, c]: [Vec3; 3]) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let p = d.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-15 {
        return None;
    }
    let s = o - a;
    let u = s.dot(&p) / det;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = d.dot(&q) / det;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) / det;
    (t > 1e-9).then_some(t)
}

pub fn brute_force_hit(mesh: &TriangleMesh, o: &Vec3, d: &Vec3) -> Option<f64> {
    (0..mesh.faces().len())
        .filter_map(|f| ray_triangle(o, d, mesh.face_vertices(f)))
        .min_by(f64::total_cmp)
}

pub fn random_unit<R: rand::Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Compares the BVH against `brute_force_hit` on `n` rays aimed around the
/// mesh; returns the number of hits or the first disagreement.
pub fn ray_parity(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<usize, String> {
    use rand::Rng;
    let ball = mesh.bounding_ball();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0;
    for i in 0..n {
        let origin = ball.center + random_unit(&mut rng) * ball.radius * rng.random_range(0.2..2.5);
        let aim = ball.center + random_unit(&mut rng) * ball.radius * rng.random_range(0.0..1.2);
        let dir = (aim - origin).normalize();
        match (mesh.ray_intersect(&origin, &dir), brute_force_hit(mesh, &origin, &dir)) {
            (None, None) => {}
            (Some(h), Some(t)) => {
                hits += 1;
                if (h.distance - t).abs() > 1e-9 {
                    return Err(format!("ray {i}: {} vs {t}", h.distance));
                }
                // The reported face must itself be hit there (ties at shared edges are fine).
                match ray_triangle(&origin, &dir, mesh.face_vertices(h.face_id)) {
                    Some(own) if (own - t).abs() <= 1e-9 => {}
                    own => return Err(format!("ray {i}: face {} gives {own:?}, expected {t}", h.face_id)),
                }
                if (h.point - (origin + dir * t)).norm() > 1e-9 {
                    return Err(format!("ray {i}: hit point off the ray"));
                }
            }
            (f, s) => return Err(format!("ray {i}: bvh {:?} vs brute force {s:?}", f.map(|h| h.distance))),
        }
    }
    Ok(hits)
}

/// Two contacts 1 to 8.5 cm apart seen by a random camera, with enough
/// pixel width to invert.
pub struct ProjectionCase {
    pub c1: Vec3,
    pub c2: Vec3,
    pub pose: CameraPose,
}

pub fn random_projection_case<R: rand::Rng>(rng: &mut R) -> ProjectionCase {
    fn v<R: rand::Rng>(rng: &mut R, lo: f64, hi: f64) -> Vec3 {
        Vec3::new(rng.random_range(lo..hi), rng.random_range(lo..hi), rng.random_range(lo..hi))
    }
    loop {
        let dir = v(rng, -1.0, 1.0);
        if dir.norm() < 0.1 {
            continue;
        }
        let target = v(rng, -0.1, 0.1);
        let eye = target + dir.normalize() * rng.random_range(0.3..1.0);
        let Ok(pose) = CameraPose::look_at(eye, target) else { continue };
        let mid = target + v(rng, -0.05, 0.05);
        let axis = v(rng, -1.0, 1.0);
        if axis.norm() < 0.1 {
            continue;
        }
        let half = 0.5 * rng.random_range(0.01..0.085) * axis.normalize();
        let case = ProjectionCase {
            c1: mid - half,
            c2: mid + half,
            pose,
        };
        if let Ok(g) = project_grasp(&case.c1, &case.c2, &CameraIntrinsics::default(), &case.pose) {
            // Nearly end-on grasps leave almost no pixel width to invert.
            if g.w > 1.0 {
                return case;
            }
        }
    }
}

/// IoU estimated from an `n x n` grid over `a` shifted by one uniform random
/// offset: every sample is uniform in `a`, and the grid keeps the variance low.
pub fn mc_iou_shifted_grid<R: rand::Rng>(a: &graspgen::rotated::RotatedBox, b: &graspgen::rotated::RotatedBox, n: usize, rng: &mut R) -> f64 {
    let (aw, ah) = a.axes();
    let (bw, bh) = b.axes();
    let (sx, sy): (f64, f64) = (rng.random(), rng.random());
    let step = 1.0 / n as f64;
    let (hw, hh) = (0.5 * b.w, 0.5 * b.h);
    // Along a row the sample's coordinates in b's frame are linear in the column.
    let (du, dv) = (step * a.w * (aw[0] * bw[0] + aw[1] * bw[1]), step * a.w * (aw[0] * bh[0] + aw[1] * bh[1]));
    let mut hits = 0usize;
    for i in 0..n {
        let t = ((i as f64 + sy) * step - 0.5) * a.h;
        let s0 = (sx * step - 0.5) * a.w;
        let (rx, ry) = (a.x + t * ah[0] + s0 * aw[0] - b.x, a.y + t * ah[1] + s0 * aw[1] - b.y);
        let (u0, v0) = (rx * bw[0] + ry * bw[1], rx * bh[0] + ry * bh[1]);
        hits += (0..n)
            .map(|j| {
                let j = j as f64;
                (((u0 + j * du).abs() <= hw) & ((v0 + j * dv).abs() <= hh)) as usize
            })
            .sum::<usize>();
    }
    iou_from_fraction(a, b, hits as f64 / (n * n) as f64)
}
