//! Depth-image augmentation with grasp label co-transformation.
//!
//! Spatial operations (rotation, flip) move labels with the pixels; dropout
//! and the sim-to-real corruption never touch labels. Image-plane rotations
//! and flips act about the image center `((W - 1) / 2, (H - 1) / 2)` in
//! pixel coordinates (u right, v down); a rotation by `angle` maps
//! `p -> c + R(angle) (p - c)` with the standard 2x2 rotation matrix, which
//! lowers each label's `theta` by `angle` before re-wrapping.

pub mod filters;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::camera::DepthImage;
use crate::error::{Error, Result};
use crate::projection::ImageGrasp;

pub use filters::{canny_edges, laplacian_map, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlipAxis {
    /// Mirror left-right (u -> W - 1 - u).
    Horizontal,
    /// Mirror top-bottom (v -> H - 1 - v).
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimToRealParams {
    /// Pixels whose Laplacian magnitude exceeds this, and Canny edges with
    /// hysteresis thresholds `(threshold / 2, threshold)`, are candidates for
    /// painting. `None` disables painting.
    pub paint_threshold: Option<f64>,
    /// Standard deviation of additive depth noise (m).
    pub noise_std: f64,
    #[serde(default = "default_paint_probability")]
    pub paint_probability: f64,
}

fn default_paint_probability() -> f64 {
    0.5
}

impl SimToRealParams {
    /// Parameters that leave the image untouched.
    pub fn identity() -> Self {
        SimToRealParams {
            paint_threshold: None,
            noise_std: 0.0,
            paint_probability: default_paint_probability(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AugmentKind {
    Rotate { angle: f64 },
    Flip { axis: FlipAxis },
    Dropout { fraction: f64 },
    SimToReal(SimToRealParams),
}

impl AugmentKind {
    pub fn is_spatial(&self) -> bool {
        !matches!(self, AugmentKind::SimToReal(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentOp {
    #[serde(flatten)]
    pub kind: AugmentKind,
    pub exec_probability: f64,
}

/// The configured transformation family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentFamily {
    pub ops: Vec<AugmentOp>,
    /// Permit rotation angles that are not multiples of 90 degrees.
    pub allow_arbitrary_rotation: bool,
}

impl Default for AugmentFamily {
    fn default() -> Self {
        let op = |kind, p| AugmentOp {
            kind,
            exec_probability: p,
        };
        AugmentFamily {
            ops: vec![
                op(AugmentKind::Rotate { angle: 90.0 }, 0.5),
                op(AugmentKind::Rotate { angle: 180.0 }, 0.5),
                op(AugmentKind::Flip { axis: FlipAxis::Horizontal }, 0.5),
                op(AugmentKind::Flip { axis: FlipAxis::Vertical }, 0.5),
                op(AugmentKind::Dropout { fraction: 0.05 }, 0.5),
                op(
                    AugmentKind::SimToReal(SimToRealParams {
                        paint_threshold: Some(0.01),
                        noise_std: 0.003,
                        paint_probability: 0.5,
                    }),
                    0.8,
                ),
            ],
            allow_arbitrary_rotation: false,
        }
    }
}

impl AugmentFamily {
    pub fn validate(&self) -> Result<()> {
        if self.ops.is_empty() {
            return Err(Error::invalid("augmentation family is empty"));
        }
        let mut sim_ops = 0;
        for op in &self.ops {
            if !(0.0..=1.0).contains(&op.exec_probability) {
                return Err(Error::invalid("execution probability must lie in [0, 1]"));
            }
            match op.kind {
                AugmentKind::Rotate { angle } => {
                    if !angle.is_finite() {
                        return Err(Error::invalid("rotation angle must be finite"));
                    }
                    if !self.allow_arbitrary_rotation && angle.rem_euclid(90.0) != 0.0 {
                        return Err(Error::invalid(format!(
                            "rotation {angle} is not a multiple of 90 (set allow_arbitrary_rotation)"
                        )));
                    }
                }
                AugmentKind::Dropout { fraction } => {
                    if !(0.0..1.0).contains(&fraction) {
                        return Err(Error::invalid("dropout fraction must lie in [0, 1)"));
                    }
                }
                AugmentKind::SimToReal(p) => {
                    sim_ops += 1;
                    if !(p.noise_std >= 0.0) || !(0.0..=1.0).contains(&p.paint_probability) {
                        return Err(Error::invalid("invalid sim-to-real parameters"));
                    }
                }
                AugmentKind::Flip { .. } => {}
            }
        }
        if sim_ops > 1 {
            return Err(Error::invalid("at most one sim-to-real operation per family"));
        }
        Ok(())
    }
}

/// Spatial operations in order, then exactly one sim-to-real step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentPipeline {
    pub spatial: Vec<AugmentKind>,
    pub sim_to_real: SimToRealParams,
}

/// What an executed operation did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum AppliedOp {
    Rotate { angle: f64, labels_dropped: usize },
    Flip { axis: FlipAxis },
    Dropout { fraction: f64, pixels_removed: usize },
    SimToReal {
        paint_threshold: Option<f64>,
        noise_std: f64,
        pixels_painted: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSample {
    pub image: DepthImage,
    pub labels: Vec<ImageGrasp>,
    pub applied_ops: Vec<AppliedOp>,
}

fn image_center(img: &DepthImage) -> (f64, f64) {
    ((img.width() as f64 - 1.0) * 0.5, (img.height() as f64 - 1.0) * 0.5)
}

/// `(sin, cos)` with exact values at multiples of 90 degrees.
fn sin_cos_deg(angle: f64) -> (f64, f64) {
    let a = angle.rem_euclid(360.0);
    if a.rem_euclid(90.0) == 0.0 {
        match (a / 90.0) as u32 {
            0 => (0.0, 1.0),
            1 => (1.0, 0.0),
            2 => (0.0, -1.0),
            _ => (-1.0, 0.0),
        }
    } else {
        a.to_radians().sin_cos()
    }
}

fn in_frame(img: &DepthImage, x: f64, y: f64) -> bool {
    x >= -0.5 && y >= -0.5 && x < img.width() as f64 - 0.5 && y < img.height() as f64 - 0.5
}

fn map_label(g: &ImageGrasp, f: impl Fn([f64; 2]) -> [f64; 2]) -> ImageGrasp {
    let (p1, p2) = g.endpoints();
    ImageGrasp::from_endpoints(f(p1), f(p2), g.gamma, g.z, g.h)
}

/// Rotates the image (nearest-neighbour) and its labels about the image
/// center; labels whose centers leave the frame are dropped.
pub fn apply_rotate(img: &DepthImage, labels: &[ImageGrasp], angle: f64) -> AugmentedSample {
    let (s, c) = sin_cos_deg(angle);
    let (cu, cv) = image_center(img);
    let (w, h) = (img.width(), img.height());
    let mut out = DepthImage::new(w, h);
    for v in 0..h {
        for u in 0..w {
            // Inverse map: rotate the destination pixel by -angle.
            let (du, dv) = (u as f64 - cu, v as f64 - cv);
            let su = (cu + c * du + s * dv).round();
            let sv = (cv - s * du + c * dv).round();
            if su >= 0.0 && sv >= 0.0 && su < w as f64 && sv < h as f64 {
                out.set(u, v, img.get(su as usize, sv as usize));
            }
        }
    }
    let rotate = |p: [f64; 2]| {
        let (du, dv) = (p[0] - cu, p[1] - cv);
        [cu + c * du - s * dv, cv + s * du + c * dv]
    };
    let mapped: Vec<ImageGrasp> = labels.iter().map(|g| map_label(g, rotate)).collect();
    let kept: Vec<ImageGrasp> = mapped.into_iter().filter(|g| in_frame(&out, g.x, g.y)).collect();
    let dropped = labels.len() - kept.len();
    AugmentedSample {
        image: out,
        labels: kept,
        applied_ops: vec![AppliedOp::Rotate {
            angle,
            labels_dropped: dropped,
        }],
    }
}

/// Mirrors a label. Works on the fields directly so a double flip restores
/// `theta`, `gamma` and `w` exactly: mirroring negates one component of the
/// axis, which either keeps the contact order (`theta -> -theta`) or, for a
/// vertical flip, reverses it (`gamma -> -gamma` as well). A horizontal axis
/// (`theta = 90`) keeps its angle and reverses order under a horizontal flip.
fn flip_label(g: &ImageGrasp, axis: FlipAxis, width: usize, height: usize) -> ImageGrasp {
    let horizontal_axis = g.theta == 90.0;
    let mut out = *g;
    match axis {
        FlipAxis::Horizontal => {
            out.x = (width - 1) as f64 - g.x;
            if horizontal_axis {
                out.gamma = -g.gamma;
            } else {
                out.theta = -g.theta;
            }
        }
        FlipAxis::Vertical => {
            out.y = (height - 1) as f64 - g.y;
            if !horizontal_axis {
                out.theta = -g.theta;
                out.gamma = -g.gamma;
            }
        }
    }
    out
}

pub fn apply_flip(img: &DepthImage, labels: &[ImageGrasp], axis: FlipAxis) -> AugmentedSample {
    let (w, h) = (img.width(), img.height());
    let mut out = DepthImage::new(w, h);
    for v in 0..h {
        for u in 0..w {
            let (su, sv) = match axis {
                FlipAxis::Horizontal => (w - 1 - u, v),
                FlipAxis::Vertical => (u, h - 1 - v),
            };
            out.set(u, v, img.get(su, sv));
        }
    }
    AugmentedSample {
        image: out,
        labels: labels.iter().map(|g| flip_label(g, axis, w, h)).collect(),
        applied_ops: vec![AppliedOp::Flip { axis }],
    }
}

/// Invalidates `round(fraction * valid)` valid pixels chosen without replacement.
pub fn apply_dropout<R: Rng + ?Sized>(
    img: &DepthImage,
    labels: &[ImageGrasp],
    fraction: f64,
    rng: &mut R,
) -> AugmentedSample {
    let mut out = img.clone();
    let valid: Vec<usize> = (0..img.data().len()).filter(|&i| img.data()[i] > 0.0).collect();
    let k = ((fraction.clamp(0.0, 1.0) * valid.len() as f64).round() as usize).min(valid.len());
    for i in index::sample(rng, valid.len(), k) {
        out.data_mut()[valid[i]] = 0.0;
    }
    AugmentedSample {
        image: out,
        labels: labels.to_vec(),
        applied_ops: vec![AppliedOp::Dropout {
            fraction,
            pixels_removed: k,
        }],
    }
}

/// Paint candidates: valid pixels of high Laplacian magnitude or on Canny edges.
pub fn paint_candidates(img: &DepthImage, threshold: f64) -> Grid<bool> {
    let lap = laplacian_map(img);
    let edges = canny_edges(img, 0.5 * threshold, threshold);
    let mut out = Grid::filled(img.width(), img.height(), false);
    for i in 0..out.data.len() {
        out.data[i] = img.data()[i] > 0.0 && (lap.data[i] > threshold || edges.data[i]);
    }
    out
}

/// Sim-to-real corruption: paints candidate pixels invalid with probability
/// `paint_probability`, then adds Gaussian noise to the surviving valid
/// pixels. Labels pass through untouched.
///
/// One uniform draw is taken per pixel in row-major order whether or not it
/// is a candidate, so for a fixed seed a lower threshold paints a superset.
pub fn sim_to_real<R: Rng + ?Sized>(
    img: &DepthImage,
    labels: &[ImageGrasp],
    params: &SimToRealParams,
    rng: &mut R,
) -> AugmentedSample {
    let mut out = img.clone();
    let mut painted = 0usize;
    if let Some(th) = params.paint_threshold {
        let cand = paint_candidates(img, th);
        for (i, d) in out.data_mut().iter_mut().enumerate() {
            let draw: f64 = rng.random();
            if cand.data[i] && draw < params.paint_probability {
                *d = 0.0;
                painted += 1;
            }
        }
    }
    if params.noise_std > 0.0 {
        let normal = Normal::new(0.0, params.noise_std).expect("finite noise std");
        for d in out.data_mut().iter_mut().filter(|d| **d > 0.0) {
            // Noise never turns a valid pixel invalid.
            *d = (*d + normal.sample(rng)).max(1e-6);
        }
    }
    AugmentedSample {
        image: out,
        labels: labels.to_vec(),
        applied_ops: vec![AppliedOp::SimToReal {
            paint_threshold: params.paint_threshold,
            noise_std: params.noise_std,
            pixels_painted: painted,
        }],
    }
}

fn draw_pipeline<R: Rng + ?Sized>(family: &AugmentFamily, rng: &mut R) -> AugmentPipeline {
    let mut spatial = Vec::new();
    let mut sim = SimToRealParams::identity();
    for op in &family.ops {
        let execute = rng.random::<f64>() < op.exec_probability;
        match op.kind {
            AugmentKind::SimToReal(p) if execute => sim = p,
            AugmentKind::SimToReal(_) => {}
            kind if execute => spatial.push(kind),
            _ => {}
        }
    }
    AugmentPipeline {
        spatial,
        sim_to_real: sim,
    }
}

/// Draws two independent pipelines `(t, t')` from the family.
pub fn sample_pair<R: Rng + ?Sized>(family: &AugmentFamily, rng: &mut R) -> Result<(AugmentPipeline, AugmentPipeline)> {
    family.validate()?;
    let t = draw_pipeline(family, rng);
    let t_prime = draw_pipeline(family, rng);
    Ok((t, t_prime))
}

impl AugmentPipeline {
    pub fn identity() -> Self {
        AugmentPipeline {
            spatial: Vec::new(),
            sim_to_real: SimToRealParams::identity(),
        }
    }

    pub fn apply<R: Rng + ?Sized>(&self, img: &DepthImage, labels: &[ImageGrasp], rng: &mut R) -> AugmentedSample {
        let mut sample = AugmentedSample {
            image: img.clone(),
            labels: labels.to_vec(),
            applied_ops: Vec::new(),
        };
        let steps = self
            .spatial
            .iter()
            .copied()
            .chain(std::iter::once(AugmentKind::SimToReal(self.sim_to_real)));
        for kind in steps {
            let next = match kind {
                AugmentKind::Rotate { angle } => apply_rotate(&sample.image, &sample.labels, angle),
                AugmentKind::Flip { axis } => apply_flip(&sample.image, &sample.labels, axis),
                AugmentKind::Dropout { fraction } => apply_dropout(&sample.image, &sample.labels, fraction, rng),
                AugmentKind::SimToReal(p) => sim_to_real(&sample.image, &sample.labels, &p, rng),
            };
            sample.image = next.image;
            sample.labels = next.labels;
            sample.applied_ops.extend(next.applied_ops);
        }
        sample
    }
}
