//! Mesh accuracy (PVE, MPJPE, PA-MPJPE, MPERE) and occupancy quality
//! (IoU, panoptic quality, velocity error).
//!
//! Mesh errors are reported in millimeters for inputs in meters. Occupancy
//! metrics only look at cells observed in both grids.

mod grid;
mod mesh;
mod report;

pub use grid::{ave, occ_iou, panoptic_quality, AveMode, ClassPanoptic, IouReport, PanopticReport, AVE_D_RADIUS};
pub use mesh::{mpere, mpjpe, pa_mpjpe, procrustes, pve, Mpere};
pub use report::{AveReport, MeshPair, MeshReport, MetricsReport, OccupancyReport, Omitted};
