//! Closed primitive meshes centered at the origin.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::mesh::TriangleMesh;
use crate::Vec3;

/// Flips faces so the normal points away from `reference(centroid)`.
fn orient(vertices: &[Vec3], faces: &mut [[usize; 3]], reference: impl Fn(&Vec3) -> Vec3) {
    for f in faces.iter_mut() {
        let [a, b, c] = [vertices[f[0]], vertices[f[1]], vertices[f[2]]];
        let n = (b - a).cross(&(c - a));
        let centroid = (a + b + c) / 3.0;
        if n.dot(&(centroid - reference(&centroid))) < 0.0 {
            f.swap(1, 2);
        }
    }
}

/// Axis-aligned box with the given edge lengths.
pub fn cuboid(size: Vec3) -> TriangleMesh {
    let h = size * 0.5;
    let vertices: Vec<Vec3> = (0..8)
        .map(|i| {
            let sx = if i == 1 || i == 2 || i == 5 || i == 6 { 1.0 } else { -1.0 };
            let sy = if i == 2 || i == 3 || i == 6 || i == 7 { 1.0 } else { -1.0 };
            let sz = if i >= 4 { 1.0 } else { -1.0 };
            Vec3::new(sx * h.x, sy * h.y, sz * h.z)
        })
        .collect();
    let faces = vec![
        [0, 3, 2],
        [0, 2, 1],
        [4, 5, 6],
        [4, 6, 7],
        [0, 1, 5],
        [0, 5, 4],
        [1, 2, 6],
        [1, 6, 5],
        [2, 3, 7],
        [2, 7, 6],
        [3, 0, 4],
        [3, 4, 7],
    ];
    TriangleMesh::new(vertices, faces).expect("valid cuboid")
}

/// Latitude/longitude ellipsoid with semi-axes `radii`.
pub fn uv_ellipsoid(radii: Vec3, stacks: usize, slices: usize) -> TriangleMesh {
    assert!(stacks >= 2 && slices >= 3);
    let mut vertices = vec![Vec3::new(0.0, 0.0, radii.z)];
    for i in 1..stacks {
        let polar = PI * i as f64 / stacks as f64;
        for j in 0..slices {
            let az = TAU * j as f64 / slices as f64;
            vertices.push(Vec3::new(
                radii.x * polar.sin() * az.cos(),
                radii.y * polar.sin() * az.sin(),
                radii.z * polar.cos(),
            ));
        }
    }
    vertices.push(Vec3::new(0.0, 0.0, -radii.z));
    let south = vertices.len() - 1;
    let ring = |i: usize, j: usize| 1 + (i - 1) * slices + (j % slices);
    let mut faces = Vec::new();
    for j in 0..slices {
        faces.push([0, ring(1, j), ring(1, j + 1)]);
        faces.push([south, ring(stacks - 1, j + 1), ring(stacks - 1, j)]);
    }
    for i in 1..stacks - 1 {
        for j in 0..slices {
            faces.push([ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)]);
            faces.push([ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)]);
        }
    }
    orient(&vertices, &mut faces, |_| Vec3::zeros());
    TriangleMesh::new(vertices, faces).expect("valid ellipsoid")
}

pub fn uv_sphere(radius: f64, stacks: usize, slices: usize) -> TriangleMesh {
    uv_ellipsoid(Vec3::repeat(radius), stacks, slices)
}

fn cylinder_parts(radius: f64, height: f64, segments: usize) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let hz = height * 0.5;
    let mut vertices = vec![Vec3::new(0.0, 0.0, -hz), Vec3::new(0.0, 0.0, hz)];
    for z in [-hz, hz] {
        for j in 0..segments {
            let a = TAU * j as f64 / segments as f64;
            vertices.push(Vec3::new(radius * a.cos(), radius * a.sin(), z));
        }
    }
    let bottom = |j: usize| 2 + j % segments;
    let top = |j: usize| 2 + segments + j % segments;
    let mut faces = Vec::new();
    for j in 0..segments {
        faces.push([0, bottom(j + 1), bottom(j)]);
        faces.push([1, top(j), top(j + 1)]);
        faces.push([bottom(j), bottom(j + 1), top(j + 1)]);
        faces.push([bottom(j), top(j + 1), top(j)]);
    }
    orient(&vertices, &mut faces, |_| Vec3::zeros());
    (vertices, faces)
}

/// Closed cylinder along z.
pub fn cylinder(radius: f64, height: f64, segments: usize) -> TriangleMesh {
    let (v, f) = cylinder_parts(radius, height, segments);
    TriangleMesh::new(v, f).expect("valid cylinder")
}

/// A closed cylindrical body with a separate C-shaped handle on the +x side.
///
/// The handle is a half torus in the x–z plane capped at both ends, kept a
/// millimetre clear of the body so the two shells never intersect.
pub fn mug(radius: f64, height: f64, segments: usize) -> TriangleMesh {
    let (mut vertices, mut faces) = cylinder_parts(radius, height, segments);
    let gap = 1e-3;
    let core_center = Vec3::new(radius + gap, 0.0, 0.0);
    let core_radius = 0.28 * height;
    let tube = 0.07 * height;
    let arc_steps = segments / 2;
    let tube_steps = 12usize;
    let base = vertices.len();
    let core_point = |phi: f64| core_center + Vec3::new(phi.cos(), 0.0, phi.sin()) * core_radius;
    for k in 0..=arc_steps {
        let phi = -FRAC_PI_2 + PI * k as f64 / arc_steps as f64;
        let er = Vec3::new(phi.cos(), 0.0, phi.sin());
        for m in 0..tube_steps {
            let psi = TAU * m as f64 / tube_steps as f64;
            vertices.push(core_point(phi) + (er * psi.cos() + Vec3::y() * psi.sin()) * tube);
        }
    }
    let idx = |k: usize, m: usize| base + k * tube_steps + m % tube_steps;
    let mut handle_faces = Vec::new();
    for k in 0..arc_steps {
        for m in 0..tube_steps {
            handle_faces.push([idx(k, m), idx(k + 1, m), idx(k + 1, m + 1)]);
            handle_faces.push([idx(k, m), idx(k + 1, m + 1), idx(k, m + 1)]);
        }
    }
    orient(&vertices, &mut handle_faces, |c| {
        let rel = c - core_center;
        let phi = rel.z.atan2(rel.x);
        core_point(phi)
    });
    // End caps lie in the plane x = radius + gap; outward is -x.
    let mut caps = Vec::new();
    for k in [0, arc_steps] {
        let center = vertices.len();
        vertices.push(core_point(-FRAC_PI_2 + PI * k as f64 / arc_steps as f64));
        for m in 0..tube_steps {
            caps.push([center, idx(k, m), idx(k, m + 1)]);
        }
    }
    orient(&vertices, &mut caps, |c| c + Vec3::x());
    faces.extend(handle_faces);
    faces.extend(caps);
    TriangleMesh::new(vertices, faces).expect("valid mug")
}
