//! Pinhole camera, icosahedron viewpoints, depth rendering and re-projection.
//!
//! Camera frame: +x right (image u), +y down (image v), +z forward along the
//! optical axis. Pixel centers sit at integer coordinates, so pixel `(u, v)`
//! covers `[u - 0.5, u + 0.5) x [v - 0.5, v + 0.5)`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{bounding_ball_of, BoundingBall, TriangleMesh};
use crate::{Mat3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for CameraIntrinsics {
    /// 224x224 with fx = fy = 200 and the principal point at (112, 112).
    fn default() -> Self {
        CameraIntrinsics {
            fx: 200.0,
            fy: 200.0,
            cx: 112.0,
            cy: 112.0,
            width: 224,
            height: 224,
        }
    }
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let intr = CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::invalid("focal lengths must be positive"));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64 && self.cy > 0.0 && self.cy < self.height as f64) {
            return Err(Error::invalid("principal point must lie inside the image"));
        }
        Ok(())
    }

    /// Nearest pixel index for a continuous image coordinate, if inside the frame.
    pub fn pixel_of(&self, u: f64, v: f64) -> Option<(usize, usize)> {
        let (pu, pv) = (u.round(), v.round());
        if pu >= 0.0 && pv >= 0.0 && pu < self.width as f64 && pv < self.height as f64 {
            Some((pu as usize, pv as usize))
        } else {
            None
        }
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        self.pixel_of(u, v).is_some()
    }
}

/// Rigid world-to-camera transform: `x_cam = rotation * x_world + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl CameraPose {
    pub fn identity() -> Self {
        CameraPose {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Camera at `eye` with its optical axis pointing at `target`.
    pub fn look_at(eye: Vec3, target: Vec3) -> Result<Self> {
        let forward = target - eye;
        let dist = forward.norm();
        if dist < 1e-12 {
            return Err(Error::invalid("look-at eye and target coincide"));
        }
        let z = forward / dist;
        let up = if z.z.abs() > 0.99 { Vec3::y() } else { Vec3::z() };
        let x = z.cross(&up).normalize();
        let y = z.cross(&x);
        let rotation = Mat3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        Ok(CameraPose {
            rotation,
            translation: -(rotation * eye),
        })
    }

    pub fn to_camera(&self, world: &Vec3) -> Vec3 {
        self.rotation * world + self.translation
    }

    pub fn to_world(&self, cam: &Vec3) -> Vec3 {
        self.rotation.transpose() * (cam - self.translation)
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    /// Pose followed by a further camera-frame rigid motion `(r, t)`.
    pub fn then(&self, r: &Mat3, t: &Vec3) -> CameraPose {
        CameraPose {
            rotation: r * self.rotation,
            translation: r * self.translation + t,
        }
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        let r = &self.rotation;
        (r.transpose() * r - Mat3::identity()).abs().max() <= tol && (r.determinant() - 1.0).abs() <= tol
    }
}

/// Depth in meters along the camera z axis; `0` marks an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize) -> Self {
        DepthImage {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::ShapeMismatch {
                expected: width * height,
                actual: data.len(),
            });
        }
        if data.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::invalid("depth values must be finite and non-negative"));
        }
        Ok(DepthImage { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, depth: f64) {
        self.data[v * self.width + u] = depth;
    }

    #[inline]
    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        self.get(u, v) > 0.0
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|d| **d > 0.0).count()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
}

impl PointCloud {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }
}

/// Unit directions from the center of a regular icosahedron to its 20 face centers.
pub fn icosahedron_face_directions() -> Vec<Vec3> {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts = Vec::with_capacity(12);
    for &a in &[-1.0, 1.0] {
        for &b in &[-phi, phi] {
            verts.push(Vec3::new(0.0, a, b));
            verts.push(Vec3::new(a, b, 0.0));
            verts.push(Vec3::new(b, 0.0, a));
        }
    }
    // Edge length is 2.
    let adjacent = |i: usize, j: usize| ((verts[i] - verts[j]).norm() - 2.0).abs() < 1e-9;
    let mut dirs = Vec::with_capacity(20);
    for i in 0..12 {
        for j in i + 1..12 {
            if !adjacent(i, j) {
                continue;
            }
            for k in j + 1..12 {
                if adjacent(i, k) && adjacent(j, k) {
                    dirs.push(((verts[i] + verts[j] + verts[k]) / 3.0).normalize());
                }
            }
        }
    }
    debug_assert_eq!(dirs.len(), 20);
    dirs
}

/// Twenty cameras at the icosahedron face directions around `ball`, each
/// looking at the center from a distance drawn from `U(sqrt(3) r, 2 r)`.
pub fn icosahedron_viewpoints<R: Rng + ?Sized>(ball: &BoundingBall, rng: &mut R) -> Result<Vec<CameraPose>> {
    if !(ball.radius > 0.0) {
        return Err(Error::DegenerateObject);
    }
    let lo = 3f64.sqrt() * ball.radius;
    let hi = 2.0 * ball.radius;
    icosahedron_face_directions()
        .into_iter()
        .map(|dir| {
            let dist = rng.random_range(lo..hi);
            CameraPose::look_at(ball.center + dir * dist, ball.center)
        })
        .collect()
}

/// Pinhole projection of a world point: `(u, v, depth)`.
pub fn project_point(intr: &CameraIntrinsics, pose: &CameraPose, world: &Vec3) -> Result<(f64, f64, f64)> {
    project_camera_point(intr, &pose.to_camera(world))
}

/// Pinhole projection of a point already in the camera frame.
pub fn project_camera_point(intr: &CameraIntrinsics, cam: &Vec3) -> Result<(f64, f64, f64)> {
    if !(cam.z > 1e-9) {
        return Err(Error::BehindCamera(cam.z));
    }
    Ok((intr.fx * cam.x / cam.z + intr.cx, intr.fy * cam.y / cam.z + intr.cy, cam.z))
}

/// Camera-frame point at pixel `(u, v)` with depth `z`.
pub fn unproject(intr: &CameraIntrinsics, u: f64, v: f64, z: f64) -> Vec3 {
    Vec3::new((u - intr.cx) * z / intr.fx, (v - intr.cy) * z / intr.fy, z)
}

/// Ray-cast depth image: one ray per pixel center, nearest hit's camera z.
pub fn render_depth(mesh: &TriangleMesh, intr: &CameraIntrinsics, pose: &CameraPose) -> DepthImage {
    let mut img = DepthImage::new(intr.width, intr.height);
    let origin = pose.center();
    let r_t = pose.rotation.transpose();
    img.data
        .par_chunks_mut(intr.width)
        .enumerate()
        .for_each(|(v, row)| {
            for (u, px) in row.iter_mut().enumerate() {
                let ray_cam = unproject(intr, u as f64, v as f64, 1.0);
                let len = ray_cam.norm();
                let dir = r_t * (ray_cam / len);
                if let Some(hit) = mesh.ray_intersect(&origin, &dir) {
                    *px = hit.distance / len;
                }
            }
        });
    img
}

/// One camera-frame point per valid pixel, in row-major pixel order.
pub fn deproject(img: &DepthImage, intr: &CameraIntrinsics) -> PointCloud {
    let mut points = Vec::with_capacity(img.valid_count());
    for v in 0..img.height() {
        for u in 0..img.width() {
            let z = img.get(u, v);
            if z > 0.0 {
                points.push(unproject(intr, u as f64, v as f64, z));
            }
        }
    }
    PointCloud { points }
}

/// Re-renders a camera-frame cloud from a virtual camera on the original
/// optical axis.
///
/// The virtual camera keeps the original orientation and slides along z so
/// the cloud's bounding-ball center sits at a depth drawn from
/// `U(sqrt(3) r, 2 r)`. Each point is splatted over the footprint its source
/// pixel covers at the new depth; collisions keep the nearest depth. The
/// returned pose maps original camera coordinates to virtual ones.
pub fn reproject_virtual<R: Rng + ?Sized>(
    cloud: &PointCloud,
    intr: &CameraIntrinsics,
    rng: &mut R,
) -> Result<(DepthImage, CameraPose)> {
    let ball = bounding_ball_of(&cloud.points)?;
    let shift = if ball.radius > 1e-12 {
        let target = rng.random_range(3f64.sqrt() * ball.radius..2.0 * ball.radius);
        target - ball.center.z
    } else {
        0.0
    };
    let pose = CameraPose {
        rotation: Mat3::identity(),
        translation: Vec3::new(0.0, 0.0, shift),
    };
    let mut img = DepthImage::new(intr.width, intr.height);
    for p in &cloud.points {
        let q = p + pose.translation;
        let Ok((u, v, z)) = project_camera_point(intr, &q) else {
            continue;
        };
        // Source pixel pitch at depth p.z, measured in target pixels.
        let footprint = p.z / z;
        let (u0, u1, v0, v1) = if footprint <= 1.0 {
            let (pu, pv) = (u.round(), v.round());
            (pu, pu, pv, pv)
        } else {
            let h = 0.5 * footprint;
            ((u - h).ceil(), (u + h).floor(), (v - h).ceil(), (v + h).floor())
        };
        let u0 = u0.max(0.0);
        let v0 = v0.max(0.0);
        let u1 = u1.min(intr.width as f64 - 1.0);
        let v1 = v1.min(intr.height as f64 - 1.0);
        if u0 > u1 || v0 > v1 {
            continue;
        }
        for pv in v0 as usize..=v1 as usize {
            for pu in u0 as usize..=u1 as usize {
                let cur = img.get(pu, pv);
                if cur == 0.0 || z < cur {
                    img.set(pu, pv, z);
                }
            }
        }
    }
    Ok((img, pose))
}
