//! Laplacian and Canny operators on depth images.
//!
//! Invalid pixels read as depth 0, so object silhouettes on an invalid
//! background show up as strong responses. Thresholds are in meters (per
//! pixel for gradients, per pixel squared for the Laplacian).

use std::collections::VecDeque;

use crate::camera::DepthImage;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Copy> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Grid {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> T {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: T) {
        self.data[v * self.width + u] = value;
    }

    /// Border-replicating read.
    #[inline]
    fn clamped(&self, u: isize, v: isize) -> T {
        let u = u.clamp(0, self.width as isize - 1) as usize;
        let v = v.clamp(0, self.height as isize - 1) as usize;
        self.get(u, v)
    }
}

impl Grid<bool> {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|b| **b).count()
    }
}

fn as_grid(img: &DepthImage) -> Grid<f64> {
    Grid {
        width: img.width(),
        height: img.height(),
        data: img.data().to_vec(),
    }
}

/// `|laplacian|` with the 4-neighbour kernel; invalid pixels output 0.
pub fn laplacian_map(img: &DepthImage) -> Grid<f64> {
    let g = as_grid(img);
    let mut out = Grid::filled(g.width, g.height, 0.0);
    for v in 0..g.height {
        for u in 0..g.width {
            let c = g.get(u, v);
            if c <= 0.0 {
                continue;
            }
            let (ui, vi) = (u as isize, v as isize);
            let sum = g.clamped(ui - 1, vi) + g.clamped(ui + 1, vi) + g.clamped(ui, vi - 1) + g.clamped(ui, vi + 1);
            out.set(u, v, (sum - 4.0 * c).abs());
        }
    }
    out
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= s);
    k
}

fn blur(g: &Grid<f64>, sigma: f64) -> Grid<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let mut tmp = Grid::filled(g.width, g.height, 0.0);
    for v in 0..g.height {
        for u in 0..g.width {
            let s: f64 = k
                .iter()
                .enumerate()
                .map(|(i, w)| w * g.clamped(u as isize + i as isize - r, v as isize))
                .sum();
            tmp.set(u, v, s);
        }
    }
    let mut out = Grid::filled(g.width, g.height, 0.0);
    for v in 0..g.height {
        for u in 0..g.width {
            let s: f64 = k
                .iter()
                .enumerate()
                .map(|(i, w)| w * tmp.clamped(u as isize, v as isize + i as isize - r))
                .sum();
            out.set(u, v, s);
        }
    }
    out
}

/// Canny edges: Gaussian smoothing (sigma = 1), Sobel gradients scaled to
/// meters per pixel, non-maximum suppression and 8-connected hysteresis.
pub fn canny_edges(img: &DepthImage, low: f64, high: f64) -> Grid<bool> {
    assert!(low <= high, "canny thresholds must satisfy low <= high");
    let smooth = blur(&as_grid(img), 1.0);
    let (w, h) = (smooth.width, smooth.height);
    let mut mag = Grid::filled(w, h, 0.0);
    let mut dir = Grid::filled(w, h, 0u8);
    for v in 0..h {
        for u in 0..w {
            let p = |du: isize, dv: isize| smooth.clamped(u as isize + du, v as isize + dv);
            let gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1) - p(-1, -1) - 2.0 * p(-1, 0) - p(-1, 1)) / 8.0;
            let gy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1) - p(-1, -1) - 2.0 * p(0, -1) - p(1, -1)) / 8.0;
            mag.set(u, v, gx.hypot(gy));
            // Quantize the gradient direction to 0, 45, 90 or 135 degrees.
            let mut angle = gy.atan2(gx).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            let bin = ((angle + 22.5) / 45.0).floor() as u8 % 4;
            dir.set(u, v, bin);
        }
    }

    let mut nms = Grid::filled(w, h, 0.0);
    for v in 1..h.saturating_sub(1) {
        for u in 1..w.saturating_sub(1) {
            let m = mag.get(u, v);
            if m <= 0.0 {
                continue;
            }
            let (du, dv): (isize, isize) = match dir.get(u, v) {
                0 => (1, 0),
                1 => (1, 1),
                2 => (0, 1),
                _ => (-1, 1),
            };
            let a = mag.get((u as isize + du) as usize, (v as isize + dv) as usize);
            let b = mag.get((u as isize - du) as usize, (v as isize - dv) as usize);
            // Asymmetric comparison keeps one pixel of a two-pixel plateau.
            if m > a && m >= b {
                nms.set(u, v, m);
            }
        }
    }

    let mut edges = Grid::filled(w, h, false);
    let mut queue = VecDeque::new();
    for v in 0..h {
        for u in 0..w {
            let m = nms.get(u, v);
            if m > 0.0 && m >= high {
                edges.set(u, v, true);
                queue.push_back((u, v));
            }
        }
    }
    while let Some((u, v)) = queue.pop_front() {
        for dv in -1isize..=1 {
            for du in -1isize..=1 {
                let (nu, nv) = (u as isize + du, v as isize + dv);
                if nu < 0 || nv < 0 || nu >= w as isize || nv >= h as isize {
                    continue;
                }
                let (nu, nv) = (nu as usize, nv as usize);
                let m = nms.get(nu, nv);
                if !edges.get(nu, nv) && m > 0.0 && m >= low {
                    edges.set(nu, nv, true);
                    queue.push_back((nu, nv));
                }
            }
        }
    }
    edges
}
