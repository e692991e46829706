//! Contact pairs to rotated-box image labels, and back.
//!
//! A label is the 5-DoF image grasp `(x, y, theta, gamma, z)` plus the box
//! size `(w, h)`. The projected contacts are ordered so that `v2 > v1` (ties
//! broken by `u2 > u1`); `theta = atan((u2 - u1) / (v2 - v1))` then lies in
//! `(-90, 90]` degrees and the tilt `gamma` carries the sign of `Z2 - Z1`
//! for the ordered pair.

use serde::{Deserialize, Serialize};

use crate::camera::{project_point, unproject, CameraIntrinsics, CameraPose};
use crate::error::{Error, Result};
use crate::Vec3;

/// Box height in pixels at the reference 224-pixel image width.
pub const REFERENCE_BOX_HEIGHT: f64 = 20.0;
pub const REFERENCE_WIDTH: f64 = 224.0;
/// Tilt range kept by [`filter_tilt`], degrees (closed interval).
pub const TILT_LIMIT_DEG: f64 = 30.0;

const V_TIE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageGrasp {
    /// Box center, pixels.
    pub x: f64,
    pub y: f64,
    /// In-plane rotation, degrees in `[-90, 90]`.
    pub theta: f64,
    /// Tilt out of the image plane, degrees.
    pub gamma: f64,
    /// Grasp depth, meters.
    pub z: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grasp6DoF {
    #[serde(flatten)]
    pub grasp: ImageGrasp,
    /// Rotation about the grasp axis, degrees in `[0, 360)`.
    pub beta: f64,
}

/// Contact positions reconstructed from a label (no normals).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactPositions {
    pub c1: Vec3,
    pub c2: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionConfig {
    /// Use the pixel box width instead of the metric lateral contact
    /// separation as the denominator of the tilt angle.
    pub gamma_pixel_w: bool,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig { gamma_pixel_w: false }
    }
}

/// Box height scaled from the 224-pixel reference.
pub fn box_height(intr: &CameraIntrinsics) -> f64 {
    REFERENCE_BOX_HEIGHT * intr.width as f64 / REFERENCE_WIDTH
}

/// Whether `(u2, v2)` must be swapped with `(u1, v1)` to satisfy the ordering.
#[inline]
fn needs_swap(du: f64, dv: f64) -> bool {
    dv < -V_TIE || (dv.abs() < V_TIE && du < 0.0)
}

impl ImageGrasp {
    /// Image endpoints of the grasp axis in canonical order.
    pub fn endpoints(&self) -> ([f64; 2], [f64; 2]) {
        let t = self.theta.to_radians();
        let (hu, hv) = (0.5 * self.w * t.sin(), 0.5 * self.w * t.cos());
        ([self.x - hu, self.y - hv], [self.x + hu, self.y + hv])
    }

    /// Label from two image endpoints; `gamma` is the tilt for the order
    /// given, and flips sign if the endpoints need reordering.
    pub fn from_endpoints(p1: [f64; 2], p2: [f64; 2], gamma: f64, z: f64, h: f64) -> ImageGrasp {
        let (mut du, mut dv) = (p2[0] - p1[0], p2[1] - p1[1]);
        let mut gamma = gamma;
        if needs_swap(du, dv) {
            du = -du;
            dv = -dv;
            gamma = -gamma;
        }
        ImageGrasp {
            x: 0.5 * (p1[0] + p2[0]),
            y: 0.5 * (p1[1] + p2[1]),
            theta: du.atan2(dv.max(0.0)).to_degrees(),
            gamma,
            z,
            w: du.hypot(dv),
            h,
        }
    }

    pub fn with_beta(self, beta: f64) -> Grasp6DoF {
        Grasp6DoF {
            grasp: self,
            beta: beta.rem_euclid(360.0),
        }
    }
}

pub fn project_grasp(c1: &Vec3, c2: &Vec3, intr: &CameraIntrinsics, pose: &CameraPose) -> Result<ImageGrasp> {
    project_grasp_with(c1, c2, intr, pose, &ProjectionConfig::default())
}

pub fn project_grasp_with(
    c1: &Vec3,
    c2: &Vec3,
    intr: &CameraIntrinsics,
    pose: &CameraPose,
    cfg: &ProjectionConfig,
) -> Result<ImageGrasp> {
    let (mut a, mut b) = (pose.to_camera(c1), pose.to_camera(c2));
    let (mut p1, mut p2) = (project_point(intr, pose, c1)?, project_point(intr, pose, c2)?);
    if needs_swap(p2.0 - p1.0, p2.1 - p1.1) {
        std::mem::swap(&mut p1, &mut p2);
        std::mem::swap(&mut a, &mut b);
    }
    let (du, dv) = (p2.0 - p1.0, p2.1 - p1.1);
    let w = du.hypot(dv);
    if w < 1e-12 {
        return Err(Error::DegenerateProjection);
    }
    let dz = p2.2 - p1.2;
    let denom = if cfg.gamma_pixel_w {
        w
    } else {
        (b.x - a.x).hypot(b.y - a.y)
    };
    Ok(ImageGrasp {
        x: 0.5 * (p1.0 + p2.0),
        y: 0.5 * (p1.1 + p2.1),
        theta: du.atan2(dv.max(0.0)).to_degrees(),
        gamma: dz.atan2(denom).to_degrees(),
        z: 0.5 * (p1.2 + p2.2),
        w,
        h: box_height(intr),
    })
}

/// Keeps labels with `|gamma| <= 30` degrees.
pub fn filter_tilt(grasps: &[ImageGrasp]) -> Vec<ImageGrasp> {
    grasps.iter().copied().filter(passes_tilt).collect()
}

pub fn passes_tilt(g: &ImageGrasp) -> bool {
    (-TILT_LIMIT_DEG..=TILT_LIMIT_DEG).contains(&g.gamma)
}

pub fn back_project(g: &ImageGrasp, intr: &CameraIntrinsics, pose: &CameraPose) -> ContactPositions {
    back_project_with(g, intr, pose, &ProjectionConfig::default())
}

/// Reconstructs contact positions in world coordinates.
///
/// The contact depths are `z -+ delta`. In pixel mode
/// `delta = tan(gamma) w / 2`; in metric mode `2 delta = tan(gamma) L(delta)`
/// where `L` is the lateral separation of the unprojected contacts, which is
/// linear in `delta`, so `delta` solves a quadratic.
pub fn back_project_with(
    g: &ImageGrasp,
    intr: &CameraIntrinsics,
    pose: &CameraPose,
    cfg: &ProjectionConfig,
) -> ContactPositions {
    let (p1, p2) = g.endpoints();
    let t = g.gamma.to_radians().tan();
    let delta = if cfg.gamma_pixel_w {
        0.5 * t * g.w
    } else {
        let (du, dv) = (p2[0] - p1[0], p2[1] - p1[1]);
        let a = [du * g.z / intr.fx, dv * g.z / intr.fy];
        let b = [2.0 * (g.x - intr.cx) / intr.fx, 2.0 * (g.y - intr.cy) / intr.fy];
        metric_delta(t, a, b)
    };
    let cam1 = unproject(intr, p1[0], p1[1], g.z - delta);
    let cam2 = unproject(intr, p2[0], p2[1], g.z + delta);
    ContactPositions {
        c1: pose.to_world(&cam1),
        c2: pose.to_world(&cam2),
    }
}

/// Solves `delta = (t / 2) |a + b delta|` for the root whose sign matches `t`.
fn metric_delta(t: f64, a: [f64; 2], b: [f64; 2]) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let dot = |x: [f64; 2], y: [f64; 2]| x[0] * y[0] + x[1] * y[1];
    let t2 = t * t;
    let qa = 1.0 - 0.25 * t2 * dot(b, b);
    let qb = -0.5 * t2 * dot(a, b);
    let qc = -0.25 * t2 * dot(a, a);
    let residual = |d: f64| {
        let l = [a[0] + b[0] * d, a[1] + b[1] * d];
        (d - 0.5 * t * dot(l, l).sqrt()).abs()
    };
    let mut candidates = Vec::with_capacity(2);
    if qa.abs() < 1e-15 {
        if qb != 0.0 {
            candidates.push(-qc / qb);
        }
    } else {
        let disc = (qb * qb - 4.0 * qa * qc).max(0.0);
        let q = -0.5 * (qb + qb.signum() * disc.sqrt());
        if q != 0.0 {
            candidates.push(q / qa);
            candidates.push(qc / q);
        } else {
            candidates.push(0.0);
        }
    }
    candidates
        .into_iter()
        .filter(|d| d.signum() == t.signum() || *d == 0.0)
        .min_by(|x, y| residual(*x).total_cmp(&residual(*y)))
        .unwrap_or(0.0)
}
