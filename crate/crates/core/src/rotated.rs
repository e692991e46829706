//! Rotated-box geometry for region proposals.
//!
//! A [`RotatedBox`] has its `w` side along the direction `theta` degrees from
//! the image +x axis toward +y, with `theta` in `[-90, 90)`. The boxes
//! `(w, h, theta)` and `(h, w, theta +- 90)` describe the same point set.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::ImageGrasp;

/// Intersections below this area count as empty.
pub const MIN_INTERSECTION_AREA: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotatedBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub theta: f64,
}

/// Wraps degrees into `[-90, 90)`.
pub fn wrap_angle(deg: f64) -> f64 {
    let a = (deg + 90.0).rem_euclid(180.0) - 90.0;
    if a >= 90.0 {
        a - 180.0
    } else {
        a
    }
}

impl RotatedBox {
    /// Box with `theta` wrapped into range.
    pub fn new(x: f64, y: f64, w: f64, h: f64, theta: f64) -> Self {
        RotatedBox {
            x,
            y,
            w,
            h,
            theta: wrap_angle(theta),
        }
    }

    /// The label box of an image grasp: width along the grasp axis.
    pub fn from_grasp(g: &ImageGrasp) -> Self {
        RotatedBox::new(g.x, g.y, g.w, g.h, 90.0 - g.theta)
    }

    pub fn is_valid(&self) -> bool {
        [self.x, self.y, self.w, self.h, self.theta].iter().all(|v| v.is_finite())
            && self.w > 0.0
            && self.h > 0.0
            && (-90.0..90.0).contains(&self.theta)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Unit vectors along the `w` and `h` sides.
    pub fn axes(&self) -> ([f64; 2], [f64; 2]) {
        let (s, c) = self.theta.to_radians().sin_cos();
        ([c, s], [-s, c])
    }

    /// Corners with positive shoelace orientation.
    pub fn corners(&self) -> [[f64; 2]; 4] {
        let (ew, eh) = self.axes();
        let (a, b) = (0.5 * self.w, 0.5 * self.h);
        let p = |sa: f64, sb: f64| {
            [
                self.x + sa * a * ew[0] + sb * b * eh[0],
                self.y + sa * a * ew[1] + sb * b * eh[1],
            ]
        };
        [p(1.0, 1.0), p(-1.0, 1.0), p(-1.0, -1.0), p(1.0, -1.0)]
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let (ew, eh) = self.axes();
        let (dx, dy) = (p[0] - self.x, p[1] - self.y);
        (dx * ew[0] + dy * ew[1]).abs() <= 0.5 * self.w && (dx * eh[0] + dy * eh[1]).abs() <= 0.5 * self.h
    }

    /// The equivalent box with `w` and `h` exchanged.
    pub fn swapped(&self) -> RotatedBox {
        RotatedBox::new(self.x, self.y, self.h, self.w, self.theta + 90.0)
    }
}

fn shoelace(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (p, q) = (poly[i], poly[(i + 1) % n]);
            p[0] * q[1] - q[0] * p[1]
        })
        .sum::<f64>()
        * 0.5
}

fn cross(o: [f64; 2], a: [f64; 2], p: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (p[1] - o[1]) - (a[1] - o[1]) * (p[0] - o[0])
}

/// Sutherland-Hodgman clipping of `subject` by the convex, positively
/// oriented `clip` polygon.
fn clip_polygon(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut output = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let (dc, dp) = (cross(a, b, cur), cross(a, b, prev));
            if dc >= 0.0 {
                if dp < 0.0 {
                    output.push(lerp(prev, cur, dp / (dp - dc)));
                }
                output.push(cur);
            } else if dp >= 0.0 {
                output.push(lerp(prev, cur, dp / (dp - dc)));
            }
        }
    }
    output
}

fn lerp(p: [f64; 2], q: [f64; 2], t: f64) -> [f64; 2] {
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

pub fn intersection_area(a: &RotatedBox, b: &RotatedBox) -> f64 {
    let poly = clip_polygon(&a.corners(), &b.corners());
    if poly.len() < 3 {
        return 0.0;
    }
    let area = shoelace(&poly);
    if area < MIN_INTERSECTION_AREA {
        0.0
    } else {
        area
    }
}

/// Intersection over union of two rotated boxes.
pub fn skew_iou(a: &RotatedBox, b: &RotatedBox) -> f64 {
    let inter = intersection_area(a, b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// IoU of every anchor (row) against every gt (column).
pub fn iou_matrix(anchors: &[RotatedBox], gts: &[RotatedBox]) -> Vec<Vec<f64>> {
    anchors
        .par_iter()
        .map(|a| gts.iter().map(|g| skew_iou(a, g)).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnchorConfig {
    pub stride: f64,
    pub scales: Vec<f64>,
    pub ratios: Vec<f64>,
    pub angles: Vec<f64>,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        AnchorConfig {
            stride: 16.0,
            scales: vec![16.0, 32.0, 64.0],
            ratios: vec![0.5, 2.0],
            angles: vec![-75.0, -45.0, -15.0, 15.0, 45.0, 75.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSet {
    pub boxes: Vec<RotatedBox>,
    pub stride: f64,
    pub scales: Vec<f64>,
    pub ratios: Vec<f64>,
    pub angles: Vec<f64>,
}

/// Anchors centered on the cells of a `feat_h x feat_w` grid, ordered by
/// row, column, scale, ratio, angle. An anchor of scale `s` and ratio `r`
/// has `w * h = s^2` and `w / h = r`.
pub fn generate_anchors(feat_h: usize, feat_w: usize, cfg: &AnchorConfig) -> Result<AnchorSet> {
    if cfg.scales.is_empty() || cfg.ratios.is_empty() || cfg.angles.is_empty() {
        return Err(Error::invalid("anchor scales, ratios and angles must be non-empty"));
    }
    if !(cfg.stride > 0.0) || cfg.scales.iter().chain(&cfg.ratios).any(|v| !(*v > 0.0)) {
        return Err(Error::invalid("anchor stride, scales and ratios must be positive"));
    }
    let per_cell = cfg.scales.len() * cfg.ratios.len() * cfg.angles.len();
    let mut boxes = Vec::with_capacity(feat_h * feat_w * per_cell);
    for row in 0..feat_h {
        for col in 0..feat_w {
            let (x, y) = ((col as f64 + 0.5) * cfg.stride, (row as f64 + 0.5) * cfg.stride);
            for &s in &cfg.scales {
                for &r in &cfg.ratios {
                    let (w, h) = (s * r.sqrt(), s / r.sqrt());
                    for &a in &cfg.angles {
                        boxes.push(RotatedBox::new(x, y, w, h, a));
                    }
                }
            }
        }
    }
    Ok(AnchorSet {
        boxes,
        stride: cfg.stride,
        scales: cfg.scales.clone(),
        ratios: cfg.ratios.clone(),
        angles: cfg.angles.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "label", content = "gt", rename_all = "lowercase")]
pub enum AnchorLabel {
    Positive(usize),
    Negative,
    Ignore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchAssignment {
    pub labels: Vec<AnchorLabel>,
}

impl MatchAssignment {
    pub fn positives(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.labels.iter().enumerate().filter_map(|(i, l)| match l {
            AnchorLabel::Positive(g) => Some((i, *g)),
            _ => None,
        })
    }

    pub fn count(&self, pred: impl Fn(&AnchorLabel) -> bool) -> usize {
        self.labels.iter().filter(|l| pred(l)).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    pub pos_thresh: f64,
    pub neg_thresh: f64,
    pub k: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            pos_thresh: 0.7,
            neg_thresh: 0.3,
            k: 3,
        }
    }
}

/// The `k` best gts of one IoU row, descending, ties to the lower index.
pub fn top_k_indices(row: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// Three-way anchor labelling with a uniform random pick among the top-k
/// sufficiently overlapping gts. The generator is consulted only for
/// anchors with at least two candidates, in anchor order.
pub fn match_topk<R: Rng + ?Sized>(
    anchors: &[RotatedBox],
    gts: &[RotatedBox],
    cfg: &MatchConfig,
    rng: &mut R,
) -> Result<MatchAssignment> {
    if !(cfg.pos_thresh > cfg.neg_thresh) || cfg.k == 0 {
        return Err(Error::invalid("matching needs pos_thresh > neg_thresh and k >= 1"));
    }
    if gts.is_empty() {
        return Ok(MatchAssignment {
            labels: vec![AnchorLabel::Negative; anchors.len()],
        });
    }
    let ious = iou_matrix(anchors, gts);
    let labels = ious
        .iter()
        .map(|row| {
            let top = top_k_indices(row, cfg.k);
            let best = row[top[0]];
            if best < cfg.neg_thresh {
                return AnchorLabel::Negative;
            }
            if best < cfg.pos_thresh {
                return AnchorLabel::Ignore;
            }
            let cands: Vec<usize> = top.into_iter().filter(|&g| row[g] >= cfg.pos_thresh).collect();
            let pick = if cands.len() == 1 {
                cands[0]
            } else {
                cands[rng.random_range(0..cands.len())]
            };
            AnchorLabel::Positive(pick)
        })
        .collect();
    Ok(MatchAssignment { labels })
}

/// Regression target of a gt box relative to an anchor.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BoxDelta {
    pub dx: f64,
    pub dy: f64,
    pub dw: f64,
    pub dh: f64,
    /// Angle difference in degrees divided by 90.
    pub dtheta: f64,
}

impl BoxDelta {
    pub fn to_array(&self) -> [f64; 5] {
        [self.dx, self.dy, self.dw, self.dh, self.dtheta]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        BoxDelta {
            dx: a[0],
            dy: a[1],
            dw: a[2],
            dh: a[3],
            dtheta: a[4],
        }
    }
}

/// Encodes `gt` against `anchor`, first choosing the representation of `gt`
/// whose angle is within 45 degrees of the anchor's.
pub fn encode_targets(anchor: &RotatedBox, gt: &RotatedBox) -> BoxDelta {
    let d = wrap_angle(gt.theta - anchor.theta);
    let (w, h, d) = if d.abs() <= 45.0 {
        (gt.w, gt.h, d)
    } else {
        (gt.h, gt.w, wrap_angle(d + 90.0))
    };
    BoxDelta {
        dx: (gt.x - anchor.x) / anchor.w,
        dy: (gt.y - anchor.y) / anchor.h,
        dw: (w / anchor.w).ln(),
        dh: (h / anchor.h).ln(),
        dtheta: d / 90.0,
    }
}

pub fn decode_box(anchor: &RotatedBox, d: &BoxDelta) -> RotatedBox {
    RotatedBox::new(
        anchor.x + d.dx * anchor.w,
        anchor.y + d.dy * anchor.h,
        anchor.w * d.dw.exp(),
        anchor.h * d.dh.exp(),
        anchor.theta + 90.0 * d.dtheta,
    )
}

/// Whether two boxes agree within `tol` under the `(w, h, theta)` equivalence.
pub fn boxes_equivalent(a: &RotatedBox, b: &RotatedBox, tol: f64) -> bool {
    let same = |p: &RotatedBox, q: &RotatedBox| {
        let dt = wrap_angle(p.theta - q.theta).abs();
        (p.x - q.x).abs() <= tol
            && (p.y - q.y).abs() <= tol
            && (p.w - q.w).abs() <= tol
            && (p.h - q.h).abs() <= tol
            && dt.min(180.0 - dt) <= tol
    };
    same(a, b) || same(&a.swapped(), b)
}

/// Greedy non-maximum suppression in descending score order (ties to the
/// lower index). Returns kept indices in that order.
pub fn rotated_nms(boxes: &[RotatedBox], scores: &[f64], iou_thresh: f64) -> Result<Vec<usize>> {
    if boxes.len() != scores.len() {
        return Err(Error::ShapeMismatch {
            expected: boxes.len(),
            actual: scores.len(),
        });
    }
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept.iter().all(|&k| skew_iou(&boxes[k], &boxes[i]) < iou_thresh) {
            kept.push(i);
        }
    }
    Ok(kept)
}

/// Row-major grid of feature vectors; cell `(u, v)` sits at integer coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl FeatureGrid {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        FeatureGrid {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn from_fn(width: usize, height: usize, channels: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut g = FeatureGrid::zeros(width, height, channels);
        for v in 0..height {
            for u in 0..width {
                for c in 0..channels {
                    g.data[(v * width + u) * channels + c] = f(u, v, c);
                }
            }
        }
        g
    }

    pub fn at(&self, u: usize, v: usize) -> &[f64] {
        let i = (v * self.width + u) * self.channels;
        &self.data[i..i + self.channels]
    }

    fn read(&self, u: isize, v: isize, c: usize) -> f64 {
        if u < 0 || v < 0 || u >= self.width as isize || v >= self.height as isize {
            0.0
        } else {
            self.data[(v as usize * self.width + u as usize) * self.channels + c]
        }
    }

    /// Bilinear interpolation; cells outside the grid read as zero.
    pub fn bilinear(&self, x: f64, y: f64, out: &mut [f64]) {
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let (u, v) = (x0 as isize, y0 as isize);
        for (c, o) in out.iter_mut().enumerate() {
            *o = (1.0 - fx) * (1.0 - fy) * self.read(u, v, c)
                + fx * (1.0 - fy) * self.read(u + 1, v, c)
                + (1.0 - fx) * fy * self.read(u, v + 1, c)
                + fx * fy * self.read(u + 1, v + 1, c);
        }
    }
}

/// Rotated region pooling: bilinear samples at the cell midpoints of an
/// `out_h x out_w` lattice laid over the box, rows along `h`, columns along `w`.
pub fn rrpool(feature: &FeatureGrid, b: &RotatedBox, out_h: usize, out_w: usize) -> Result<FeatureGrid> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::invalid("pooled size must be positive"));
    }
    let corners = b.corners();
    let (fw, fh) = (feature.width as f64, feature.height as f64);
    let outside = corners.iter().all(|p| p[0] <= -1.0)
        || corners.iter().all(|p| p[0] >= fw)
        || corners.iter().all(|p| p[1] <= -1.0)
        || corners.iter().all(|p| p[1] >= fh);
    if outside {
        return Err(Error::EmptyRegion);
    }
    let (ew, eh) = b.axes();
    let mut out = FeatureGrid::zeros(out_w, out_h, feature.channels);
    for i in 0..out_h {
        let bh = ((i as f64 + 0.5) / out_h as f64 - 0.5) * b.h;
        for j in 0..out_w {
            let aw = ((j as f64 + 0.5) / out_w as f64 - 0.5) * b.w;
            let x = b.x + aw * ew[0] + bh * eh[0];
            let y = b.y + aw * ew[1] + bh * eh[1];
            let k = (i * out_w + j) * feature.channels;
            feature.bilinear(x, y, &mut out.data[k..k + feature.channels]);
        }
    }
    Ok(out)
}
