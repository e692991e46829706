//! Bounding volume hierarchy over mesh faces.
//!
//! Median split on the longest centroid axis, leaves of at most
//! [`LEAF_SIZE`] faces. Used for nearest-hit ray queries and closest
//! surface point queries.

use crate::Vec3;

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Aabb {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    fn merge(&mut self, other: &Aabb) {
        self.min = self.min.inf(&other.min);
        self.max = self.max.sup(&other.max);
    }

    /// Entry distance of a ray into the box, if it enters before `t_max`.
    fn ray_entry(&self, origin: &Vec3, inv_dir: &Vec3, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for axis in 0..3 {
            let a = (self.min[axis] - origin[axis]) * inv_dir[axis];
            let b = (self.max[axis] - origin[axis]) * inv_dir[axis];
            // NaN arises for a zero direction component with the origin on a slab plane.
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            if !lo.is_nan() {
                t0 = t0.max(lo);
            }
            if !hi.is_nan() {
                t1 = t1.min(hi);
            }
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }

    fn distance_sq(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for axis in 0..3 {
            let v = p[axis];
            if v < self.min[axis] {
                d += (self.min[axis] - v).powi(2);
            } else if v > self.max[axis] {
                d += (v - self.max[axis]).powi(2);
            }
        }
        d
    }
}

#[derive(Debug, Clone)]
enum NodeKind {
    Leaf { start: usize, len: usize },
    Inner { left: usize, right: usize },
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    kind: NodeKind,
}

#[derive(Debug, Clone)]
pub(crate) struct Bvh {
    nodes: Vec<Node>,
    order: Vec<usize>,
}

/// Nearest ray hit: distance along the ray and face index.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RawHit {
    pub t: f64,
    pub face: usize,
}

impl Bvh {
    pub fn build(vertices: &[Vec3], faces: &[[usize; 3]]) -> Self {
        let mut order: Vec<usize> = (0..faces.len()).collect();
        let mut boxes = Vec::with_capacity(faces.len());
        let mut centroids = Vec::with_capacity(faces.len());
        for f in faces {
            let mut b = Aabb::empty();
            for &i in f {
                b.grow(&vertices[i]);
            }
            boxes.push(b);
            centroids.push((vertices[f[0]] + vertices[f[1]] + vertices[f[2]]) / 3.0);
        }
        let mut nodes = Vec::with_capacity(2 * faces.len() / LEAF_SIZE + 1);
        if !faces.is_empty() {
            Self::build_node(&mut nodes, &mut order, &boxes, &centroids, 0, faces.len());
        }
        Bvh { nodes, order }
    }

    fn build_node(
        nodes: &mut Vec<Node>,
        order: &mut [usize],
        boxes: &[Aabb],
        centroids: &[Vec3],
        start: usize,
        end: usize,
    ) -> usize {
        let mut bounds = Aabb::empty();
        let mut cbounds = Aabb::empty();
        for &f in &order[start..end] {
            bounds.merge(&boxes[f]);
            cbounds.grow(&centroids[f]);
        }
        let idx = nodes.len();
        nodes.push(Node {
            bounds,
            kind: NodeKind::Leaf {
                start,
                len: end - start,
            },
        });
        if end - start <= LEAF_SIZE {
            return idx;
        }
        let extent = cbounds.max - cbounds.min;
        let axis = extent.imax();
        if extent[axis] <= 0.0 {
            return idx;
        }
        let mid = (start + end) / 2;
        order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            centroids[a][axis].total_cmp(&centroids[b][axis])
        });
        let left = Self::build_node(nodes, order, boxes, centroids, start, mid);
        let right = Self::build_node(nodes, order, boxes, centroids, mid, end);
        nodes[idx].kind = NodeKind::Inner { left, right };
        idx
    }

    /// Nearest intersection with `t > t_min`. Equal distances resolve to the
    /// lower face index so results do not depend on traversal order.
    pub fn ray_nearest(
        &self,
        vertices: &[Vec3],
        faces: &[[usize; 3]],
        origin: &Vec3,
        dir: &Vec3,
        t_min: f64,
    ) -> Option<RawHit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv_dir = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best: Option<RawHit> = None;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            let limit = best.map_or(f64::INFINITY, |h| h.t);
            if node.bounds.ray_entry(origin, &inv_dir, limit).is_none() {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, len } => {
                    for &f in &self.order[start..start + len] {
                        let [a, b, c] = faces[f];
                        if let Some(t) = moller_trumbore(
                            origin,
                            dir,
                            &vertices[a],
                            &vertices[b],
                            &vertices[c],
                        ) {
                            if t > t_min {
                                let better = match best {
                                    None => true,
                                    Some(h) => t < h.t || (t == h.t && f < h.face),
                                };
                                if better {
                                    best = Some(RawHit { t, face: f });
                                }
                            }
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    stack.push(left);
                    stack.push(right);
                }
            }
        }
        best
    }

    /// Closest point on the surface: (point, face, squared distance).
    pub fn closest_point(
        &self,
        vertices: &[Vec3],
        faces: &[[usize; 3]],
        p: &Vec3,
    ) -> Option<(Vec3, usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<(Vec3, usize, f64)> = None;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            let bound = best.map_or(f64::INFINITY, |b| b.2);
            if node.bounds.distance_sq(p) > bound {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, len } => {
                    for &f in &self.order[start..start + len] {
                        let [a, b, c] = faces[f];
                        let q = closest_point_on_triangle(p, &vertices[a], &vertices[b], &vertices[c]);
                        let d = (q - p).norm_squared();
                        let better = match best {
                            None => true,
                            Some((_, bf, bd)) => d < bd || (d == bd && f < bf),
                        };
                        if better {
                            best = Some((q, f, d));
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    let dl = self.nodes[left].bounds.distance_sq(p);
                    let dr = self.nodes[right].bounds.distance_sq(p);
                    // Visit the nearer child first (pushed last).
                    if dl < dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        best
    }
}

/// Möller–Trumbore ray/triangle intersection, two-sided.
pub(crate) fn moller_trumbore(origin: &Vec3, dir: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Option<f64> {
    const EPS: f64 = 1e-14;
    let e1 = b - a;
    let e2 = c - a;
    let pvec = dir.cross(&e2);
    let det = e1.dot(&pvec);
    if det.abs() < EPS {
        return None;
    }
    let inv_det = 1.0 / det;
    let tvec = origin - a;
    let u = tvec.dot(&pvec) * inv_det;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = dir.dot(&qvec) * inv_det;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some(e2.dot(&qvec) * inv_det)
}

/// Closest point on triangle `abc` to `p` (Voronoi-region walk).
pub(crate) fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}
