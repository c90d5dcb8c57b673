//! Fitting articulated human meshes to LiDAR returns and fusing them with
//! static semantic maps into labeled occupancy grids.
//!
//! The crate is organized by pipeline stage:
//!
//! - [`geometry`]: rotations, rigid transforms, pinhole projection, nearest-neighbor
//!   search, ray casting and voxel traversal.
//! - [`body_model`]: the parametric body (shape blendshapes, joint regression,
//!   forward kinematics, linear blend skinning) and a synthetic toy model.
//! - [`visibility`]: backface culling and keypoint-driven body-part filtering.
//! - [`lidar_sim`]: spinning-LiDAR sweep simulation over triangle meshes.
//! - [`registration`]: rigid point-to-point ICP.
//! - [`fit`]: the multi-term fitting objective, its analytic gradient and the optimizer.
//! - [`pipeline`]: visibility, ICP and refinement chained for one person.
//! - [`occupancy`]: static label fusion, human rasterization, free/unknown completion.
//! - [`metrics`]: mesh and occupancy evaluation metrics.
//! - [`io`] and [`config`]: file formats and configuration.

// Validation is written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod body_model;
pub mod config;
pub mod error;
pub mod fit;
pub mod geometry;
pub mod io;
pub mod lidar_sim;
pub mod metrics;
pub mod occupancy;
pub mod pipeline;
pub mod registration;
pub mod scene;
pub mod visibility;

pub use error::{Error, Result};

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Vec2 = nalgebra::Vector2<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;
