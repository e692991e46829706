//! Antipodal contact sampling and force-closure quality for parallel-jaw grippers.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GripperModel {
    /// Maximum jaw opening (m).
    pub max_width: f64,
    /// Finger length from palm to fingertip (m).
    pub jaw_length: f64,
    /// Finger extent along the closing axis (m).
    pub finger_thickness: f64,
    /// Finger extent across the closing axis and the approach direction (m).
    pub finger_width: f64,
    pub friction_mu: f64,
}

impl Default for GripperModel {
    fn default() -> Self {
        GripperModel {
            max_width: 0.085,
            jaw_length: 0.04,
            finger_thickness: 0.01,
            finger_width: 0.02,
            friction_mu: 0.5,
        }
    }
}

impl GripperModel {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.max_width,
            self.jaw_length,
            self.finger_thickness,
            self.finger_width,
            self.friction_mu,
        ];
        if dims.iter().all(|d| d.is_finite() && *d > 0.0) {
            Ok(())
        } else {
            Err(Error::invalid("gripper dimensions and friction must be positive"))
        }
    }
}

/// Two contacts with inward unit surface normals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactPair {
    pub c1: Vec3,
    pub c2: Vec3,
    pub n1: Vec3,
    pub n2: Vec3,
}

impl ContactPair {
    pub fn width(&self) -> f64 {
        (self.c2 - self.c1).norm()
    }

    pub fn center(&self) -> Vec3 {
        (self.c1 + self.c2) * 0.5
    }

    pub fn swapped(&self) -> ContactPair {
        ContactPair {
            c1: self.c2,
            c2: self.c1,
            n1: self.n2,
            n2: self.n1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspQuality {
    /// Fraction of perturbed trials in force closure.
    pub score: f64,
    pub in_force_closure: bool,
}

/// Parameters of the Monte-Carlo robustness estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustnessParams {
    /// Contact position noise standard deviation (m).
    pub sigma_c: f64,
    pub trials: usize,
}

impl Default for RobustnessParams {
    fn default() -> Self {
        RobustnessParams {
            sigma_c: 0.0025,
            trials: 100,
        }
    }
}

/// Attempts per requested grasp before giving up.
pub const RETRY_FACTOR: usize = 50;

/// Samples up to `n` antipodal contact pairs.
///
/// Each attempt draws an area-weighted surface point, casts a ray into the
/// body along its inward normal (the axis of its friction cone) and takes the
/// first exit as the second contact. Pairs that fail the antipodal
/// test or exceed the gripper opening are discarded. At most
/// `RETRY_FACTOR * n` attempts are made; fewer pairs (possibly none) may be
/// returned.
pub fn sample_antipodal<R: Rng + ?Sized>(
    mesh: &TriangleMesh,
    gripper: &GripperModel,
    n: usize,
    rng: &mut R,
) -> Vec<ContactPair> {
    let mut pairs = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while pairs.len() < n && attempts < RETRY_FACTOR * n {
        attempts += 1;
        let first = mesh.sample_surface(1, rng)[0];
        let n1 = -first.normal;
        let Some(hit) = mesh.ray_intersect(&first.point, &n1) else {
            continue;
        };
        let outward2 = mesh.face_normals()[hit.face_id];
        // The ray has to leave the body through the second face.
        if outward2.dot(&n1) <= 0.0 {
            continue;
        }
        let pair = ContactPair {
            c1: first.point,
            c2: hit.point,
            n1,
            n2: -outward2,
        };
        if pair.width() > gripper.max_width {
            continue;
        }
        if matches!(force_closure(&pair, gripper.friction_mu), Ok(true)) {
            pairs.push(pair);
        }
    }
    pairs
}

/// Two-contact antipodal condition: the contact line lies inside both friction cones.
pub fn force_closure(pair: &ContactPair, mu: f64) -> Result<bool> {
    if !(mu > 0.0) {
        return Err(Error::invalid("friction coefficient must be positive"));
    }
    let axis = pair.c2 - pair.c1;
    let len = axis.norm();
    if len < 1e-9 {
        return Err(Error::DegenerateGrasp("coincident contacts"));
    }
    let axis = axis / len;
    let cone = mu.atan() + 1e-12;
    let angle = |v: Vec3, n: &Vec3| (v.dot(n) / n.norm()).clamp(-1.0, 1.0).acos();
    Ok(angle(axis, &pair.n1) <= cone && angle(-axis, &pair.n2) <= cone)
}

/// Monte-Carlo force-closure probability under isotropic contact noise.
///
/// Each trial perturbs both contacts by `N(0, sigma_c^2 I)`, snaps them to
/// the closest surface point (taking that face's inward normal) and runs the
/// deterministic test. Trials whose perturbed contacts coincide count as
/// failures.
pub fn robust_force_closure<R: Rng + ?Sized>(
    pair: &ContactPair,
    mesh: &TriangleMesh,
    mu: f64,
    sigma_c: f64,
    trials: usize,
    rng: &mut R,
) -> Result<GraspQuality> {
    if trials == 0 {
        return Err(Error::invalid("robustness needs at least one trial"));
    }
    if !(sigma_c >= 0.0) {
        return Err(Error::invalid("contact noise must be non-negative"));
    }
    let in_force_closure = force_closure(pair, mu)?;
    if sigma_c == 0.0 {
        return Ok(GraspQuality {
            score: if in_force_closure { 1.0 } else { 0.0 },
            in_force_closure,
        });
    }
    let noise = |rng: &mut R| {
        Vec3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        ) * sigma_c
    };
    let mut ok = 0usize;
    for _ in 0..trials {
        let s1 = mesh.closest_point(&(pair.c1 + noise(rng)));
        let s2 = mesh.closest_point(&(pair.c2 + noise(rng)));
        let trial = ContactPair {
            c1: s1.point,
            c2: s2.point,
            n1: -s1.normal,
            n2: -s2.normal,
        };
        if matches!(force_closure(&trial, mu), Ok(true)) {
            ok += 1;
        }
    }
    Ok(GraspQuality {
        score: ok as f64 / trials as f64,
        in_force_closure,
    })
}

/// Marks the best `ceil(fraction * n)` scores; ties go to the lower index.
pub fn label_top_fraction(scores: &[f64], fraction: f64) -> Result<Vec<bool>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid("top fraction must lie in (0, 1]"));
    }
    let n = scores.len();
    let k = top_count(n, fraction);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut labels = vec![false; n];
    for &i in &order[..k] {
        labels[i] = true;
    }
    Ok(labels)
}

/// `ceil(fraction * n)`, robust to the representation error of `fraction`.
pub fn top_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}
