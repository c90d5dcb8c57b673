//! Shared geometric primitives.
//!
//! Everything here is an immutable value or a pure function, so all of it can be
//! shared freely across threads.

mod align;
mod camera;
mod grid;
mod mesh;
mod nn;
mod ray;
mod rotation;

pub use align::{rigid_fit, similarity_fit, spread_singular_values, Similarity};
pub use camera::CameraModel;
pub use grid::{traverse_voxels, CellIndex, GridSpec};
pub use mesh::TriangleMesh;
pub use nn::NnIndex;
pub use ray::{ray_aabb, ray_triangle_hit, MeshBvh, RayHit, HIT_EPSILON};
pub use rotation::{skew, AxisAngle, RigidTransform, UnitQuaternion};
