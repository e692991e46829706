//! Triangle meshes: loading, surface sampling, ray queries and bounding balls.

mod bvh;
mod io;
pub mod primitives;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vec3;
use bvh::Bvh;

pub use io::{load_mesh, load_mesh_scaled, write_obj, write_off, MeshFormat};

/// Faces with area at or below this are dropped at construction.
pub const MIN_FACE_AREA: f64 = 1e-12;

/// Rays ignore intersections closer than this.
pub const RAY_EPSILON: f64 = 1e-9;

/// Immutable triangle mesh with outward face normals and an acceleration structure.
#[derive(Debug, Clone)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    normals: Vec<Vec3>,
    areas: Vec<f64>,
    bvh: Bvh,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBall {
    pub center: Vec3,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub point: Vec3,
    /// Outward unit normal of `face_id`.
    pub normal: Vec3,
    pub face_id: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub point: Vec3,
    pub face_id: usize,
    pub distance: f64,
}

impl TriangleMesh {
    /// Builds a mesh, recomputing normals from the winding order.
    ///
    /// Faces referencing missing vertices are rejected; degenerate faces are
    /// dropped with a warning.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid("mesh vertex with non-finite coordinate"));
        }
        let mut kept = Vec::with_capacity(faces.len());
        let mut normals = Vec::with_capacity(faces.len());
        let mut areas = Vec::with_capacity(faces.len());
        let mut dropped = 0usize;
        for f in faces {
            if let Some(&bad) = f.iter().find(|&&i| i >= vertices.len()) {
                return Err(Error::invalid(format!(
                    "face index {bad} out of range for {} vertices",
                    vertices.len()
                )));
            }
            let cross = (vertices[f[1]] - vertices[f[0]]).cross(&(vertices[f[2]] - vertices[f[0]]));
            let area = 0.5 * cross.norm();
            if area <= MIN_FACE_AREA {
                dropped += 1;
                continue;
            }
            kept.push(f);
            normals.push(cross / (2.0 * area));
            areas.push(area);
        }
        if dropped > 0 {
            log::warn!("dropped {dropped} degenerate face(s)");
        }
        if kept.is_empty() || vertices.is_empty() {
            return Err(Error::EmptyGeometry("mesh has no non-degenerate faces"));
        }
        let bvh = Bvh::build(&vertices, &kept);
        Ok(TriangleMesh {
            vertices,
            faces: kept,
            normals,
            areas,
            bvh,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn face_normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn face_areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn surface_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn face_vertices(&self, face: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[face];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Returns a copy with every vertex shifted by `offset`.
    pub fn translated(&self, offset: Vec3) -> TriangleMesh {
        let vertices = self.vertices.iter().map(|v| v + offset).collect();
        TriangleMesh::new(vertices, self.faces.clone()).expect("translation preserves validity")
    }

    /// Bounding ball by Ritter's two-pass construction followed by
    /// shrink-and-regrow refinement over the vertices.
    pub fn bounding_ball(&self) -> BoundingBall {
        bounding_ball_of(&self.vertices).expect("mesh has vertices")
    }

    /// Area-weighted uniform surface samples.
    pub fn sample_surface<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<SurfaceSample> {
        let dist = WeightedIndex::new(&self.areas).expect("positive face areas");
        (0..n)
            .map(|_| {
                let face = dist.sample(rng);
                let [a, b, c] = self.face_vertices(face);
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                let s = r1.sqrt();
                let point = a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2);
                SurfaceSample {
                    point,
                    normal: self.normals[face],
                    face_id: face,
                }
            })
            .collect()
    }

    /// Nearest intersection farther than [`RAY_EPSILON`] along a unit direction.
    pub fn ray_intersect(&self, origin: &Vec3, direction: &Vec3) -> Option<RayHit> {
        self.bvh
            .ray_nearest(&self.vertices, &self.faces, origin, direction, RAY_EPSILON)
            .map(|h| RayHit {
                point: origin + direction * h.t,
                face_id: h.face,
                distance: h.t,
            })
    }

    /// Closest surface point to `p` and the face it lies on.
    pub fn closest_point(&self, p: &Vec3) -> SurfaceSample {
        let (point, face, _) = self
            .bvh
            .closest_point(&self.vertices, &self.faces, p)
            .expect("mesh has faces");
        SurfaceSample {
            point,
            normal: self.normals[face],
            face_id: face,
        }
    }

    /// Unsigned distance from `p` to the surface.
    pub fn distance_to_surface(&self, p: &Vec3) -> f64 {
        (self.closest_point(p).point - p).norm()
    }
}

/// Ritter bounding ball over an arbitrary point set.
pub fn bounding_ball_of(points: &[Vec3]) -> Result<BoundingBall> {
    let first = *points
        .first()
        .ok_or(Error::EmptyGeometry("bounding ball of an empty point set"))?;
    let farthest = |from: &Vec3| -> Vec3 {
        *points
            .iter()
            .max_by(|a, b| (*a - from).norm_squared().total_cmp(&(*b - from).norm_squared()))
            .unwrap()
    };
    let y = farthest(&first);
    let z = farthest(&y);
    let mut ball = BoundingBall {
        center: (y + z) * 0.5,
        radius: (y - z).norm() * 0.5,
    };
    ritter_grow(&mut ball, points, 0);

    // Shrink and regrow from rotated starting offsets; each regrown ball
    // contains every point, keep the tightest.
    let mut best = ball;
    let mut trial = ball;
    let passes = 16usize;
    for pass in 0..passes {
        trial.radius *= 0.97;
        let offset = (pass * points.len()) / passes;
        ritter_grow(&mut trial, points, offset);
        if trial.radius < best.radius {
            best = trial;
        } else {
            trial = best;
        }
    }
    best.radius = points
        .iter()
        .map(|p| (p - best.center).norm())
        .fold(0.0, f64::max);
    Ok(best)
}

fn ritter_grow(ball: &mut BoundingBall, points: &[Vec3], offset: usize) {
    let n = points.len();
    for k in 0..n {
        let p = points[(k + offset) % n];
        let d = (p - ball.center).norm();
        if d > ball.radius {
            let new_r = 0.5 * (ball.radius + d);
            ball.center += (p - ball.center) * ((new_r - ball.radius) / d);
            ball.radius = new_r;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cube_normals_are_axis_aligned() {
        let cube = primitives::cuboid(Vec3::new(1.0, 1.0, 1.0));
        assert_eq!(cube.faces().len(), 12);
        for n in cube.face_normals() {
            assert!((n.norm() - 1.0).abs() < 1e-9);
            let axis_aligned = n.iter().filter(|c| c.abs() > 1e-12).count() == 1;
            assert!(axis_aligned, "{n:?}");
        }
    }

    #[test]
    fn degenerate_faces_are_dropped() {
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(2.0, 0.0, 0.0),
        ];
        let mesh = TriangleMesh::new(v, vec![[0, 1, 2], [0, 1, 3]]).unwrap();
        assert_eq!(mesh.faces().len(), 1);
    }

    #[test]
    fn all_degenerate_is_empty_geometry() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0];
        assert!(matches!(
            TriangleMesh::new(v, vec![[0, 1, 2]]),
            Err(Error::EmptyGeometry(_))
        ));
    }

    #[test]
    fn face_index_out_of_range_is_rejected() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::y()];
        assert!(TriangleMesh::new(v, vec![[0, 1, 3]]).is_err());
    }

    #[test]
    fn single_triangle_ball_contains_vertices() {
        let v = vec![Vec3::zeros(), Vec3::new(3.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        let mesh = TriangleMesh::new(v.clone(), vec![[0, 1, 2]]).unwrap();
        let ball = mesh.bounding_ball();
        for p in &v {
            assert!((p - ball.center).norm() <= ball.radius + 1e-9);
        }
    }

    #[test]
    fn cube_ball_is_circumscribed_sphere() {
        let cube = primitives::cuboid(Vec3::new(1.0, 1.0, 1.0));
        let ball = cube.bounding_ball();
        let exact = 3f64.sqrt() / 2.0;
        assert!(ball.radius >= exact - 1e-12 && ball.radius <= 1.05 * exact);
    }

    #[test]
    fn sphere_ball() {
        let sphere = primitives::uv_sphere(1.0, 24, 48);
        let ball = sphere.bounding_ball();
        assert!(ball.center.norm() < 0.05);
        assert!(ball.radius >= 1.0 - 1e-9 && ball.radius <= 1.05);
    }

    #[test]
    fn sampling_is_deterministic_and_on_faces() {
        let cube = primitives::cuboid(Vec3::new(1.0, 1.0, 1.0));
        let a = cube.sample_surface(200, &mut ChaCha8Rng::seed_from_u64(3));
        let b = cube.sample_surface(200, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        for s in &a {
            let [p0, _, _] = cube.face_vertices(s.face_id);
            // On the face plane.
            assert!((s.point - p0).dot(&s.normal).abs() < 1e-9);
            assert_eq!(s.normal, cube.face_normals()[s.face_id]);
        }
        assert_eq!(cube.sample_surface(1, &mut ChaCha8Rng::seed_from_u64(0)).len(), 1);
    }

    #[test]
    fn axis_ray_hits_near_face() {
        let cube = primitives::cuboid(Vec3::new(1.0, 1.0, 1.0));
        let hit = cube
            .ray_intersect(&Vec3::new(0.0, 0.0, -2.0), &Vec3::z())
            .unwrap();
        assert!((hit.point.z + 0.5).abs() < 1e-12);
        assert!((hit.distance - 1.5).abs() < 1e-12);
        assert!(cube
            .ray_intersect(&Vec3::new(5.0, 0.0, -2.0), &Vec3::z())
            .is_none());
    }

    #[test]
    fn closest_point_on_cube() {
        let cube = primitives::cuboid(Vec3::new(1.0, 1.0, 1.0));
        let s = cube.closest_point(&Vec3::new(0.1, 0.2, 0.9));
        assert!((s.point - Vec3::new(0.1, 0.2, 0.5)).norm() < 1e-12);
        assert!((s.normal - Vec3::z()).norm() < 1e-12);
    }
}
