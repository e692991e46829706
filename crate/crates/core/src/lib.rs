//! Synthetic 6-DoF grasp datasets from triangle meshes.
//!
//! The crate covers the whole data and geometry side of a single-view grasp
//! proposal pipeline:
//!
//! - [`mesh`]: OBJ/OFF loading, area-weighted surface sampling, BVH ray and
//!   closest-point queries, bounding balls.
//! - [`camera`]: pinhole model, icosahedron viewpoints, ray-cast depth
//!   rendering, deprojection and virtual-camera re-projection.
//! - [`grasp`]: antipodal contact sampling and robust force-closure scoring.
//! - [`projection`]: contact pairs to rotated-box image labels and back.
//! - [`augment`]: spatial augmentation with label co-transformation and
//!   sim-to-real depth corruption.
//! - [`rotated`]: skew IoU, anchors, top-k matching, box coding, NMS and
//!   rotated region pooling.
//! - [`contrastive`]: proposal, refinement and InfoNCE losses with analytic
//!   gradients, a toy momentum-encoder trainer.
//! - [`collision`]: projective signed distance scenes and the grasp-axis
//!   rotation search.
//! - [`dataset`]: run configuration, generation, manifest and validation.

pub mod augment;
pub mod camera;
pub mod collision;
pub mod contrastive;
pub mod dataset;
pub mod depth_io;
pub mod error;
pub mod grasp;
pub mod mesh;
pub mod projection;
pub mod rotated;

pub use error::{Error, Result};

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;
