//! Visible-vertex selection: backface culling against the camera followed by
//! removal of body parts whose keypoints the detector could not see.

use std::collections::BTreeSet;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::geometry::{CameraModel, TriangleMesh};
use crate::{Error, Result};

/// One detected 2D keypoint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub joint_id: usize,
    pub x: f64,
    pub y: f64,
    pub conf: f64,
}

/// Detector output for one person. Joints without an entry have confidence 0.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Keypoints2D {
    pub points: Vec<Keypoint>,
}

impl Keypoints2D {
    pub fn new(points: Vec<Keypoint>) -> Result<Self> {
        let k = Keypoints2D { points };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for p in &self.points {
            if !(0.0..=1.0).contains(&p.conf) {
                return Err(Error::Domain(format!("keypoint {} confidence {} outside [0,1]", p.joint_id, p.conf)));
            }
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(Error::Domain(format!("keypoint {} has a non-finite position", p.joint_id)));
            }
            if !seen.insert(p.joint_id) {
                return Err(Error::Domain(format!("keypoint {} listed twice", p.joint_id)));
            }
        }
        Ok(())
    }

    pub fn get(&self, joint_id: usize) -> Option<&Keypoint> {
        self.points.iter().find(|p| p.joint_id == joint_id)
    }

    pub fn conf(&self, joint_id: usize) -> f64 {
        self.get(joint_id).map_or(0.0, |p| p.conf)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisibilityConfig {
    /// Faces with `n . p < w` are kept (`p` points from the camera to the face).
    pub backface_threshold: f64,
    /// A part is dropped when all its joints have confidence below this.
    pub joint_conf_threshold: f64,
}

impl VisibilityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.backface_threshold) {
            return Err(Error::Config(format!(
                "backface threshold {} outside [-1,1]",
                self.backface_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.joint_conf_threshold) {
            return Err(Error::Config(format!(
                "joint confidence threshold {} outside [0,1]",
                self.joint_conf_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaceFrame {
    /// Unit normal in winding order; `None` for zero-area faces.
    pub normal: Option<Vector3<f64>>,
    pub centroid: Vector3<f64>,
}

pub fn face_normals_centroids(mesh: &TriangleMesh) -> Vec<FaceFrame> {
    (0..mesh.faces.len())
        .map(|f| {
            let [a, b, c] = mesh.triangle(f);
            let n = (b - a).cross(&(c - a));
            let len = n.norm();
            FaceFrame {
                normal: (len > 0.0 && len.is_finite()).then(|| n / len),
                centroid: (a + b + c) / 3.0,
            }
        })
        .collect()
}

/// Sorted indices of vertices touching at least one front-facing face.
pub fn backface_cull(mesh: &TriangleMesh, camera: &CameraModel, w: f64) -> Vec<usize> {
    let o = camera.center();
    let mut keep = vec![false; mesh.vertices.len()];
    for (face, frame) in mesh.faces.iter().zip(face_normals_centroids(mesh)) {
        let Some(n) = frame.normal else { continue };
        let d = frame.centroid - o;
        let dist = d.norm();
        if dist == 0.0 {
            continue;
        }
        if n.dot(&(d / dist)) < w {
            for &v in face {
                keep[v] = true;
            }
        }
    }
    keep.iter().enumerate().filter_map(|(i, &k)| k.then_some(i)).collect()
}

/// Parts whose best associated joint confidence is strictly below `j_conf`.
pub fn occluded_parts(keypoints: &Keypoints2D, part_joint_sets: &[Vec<usize>], j_conf: f64) -> Result<BTreeSet<u32>> {
    let mut out = BTreeSet::new();
    for (part, joints) in part_joint_sets.iter().enumerate() {
        if joints.is_empty() {
            return Err(Error::Config(format!("body part {part} has no associated joints")));
        }
        let best = joints.iter().map(|&j| keypoints.conf(j)).fold(f64::NEG_INFINITY, f64::max);
        if best < j_conf {
            out.insert(part as u32);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Visibility {
    /// Sorted visible vertex indices.
    pub vertices: Vec<usize>,
    pub occluded_parts: BTreeSet<u32>,
}

pub fn visible_set(
    mesh: &TriangleMesh,
    camera: &CameraModel,
    keypoints: &Keypoints2D,
    part_joint_sets: &[Vec<usize>],
    config: &VisibilityConfig,
) -> Result<Visibility> {
    config.validate()?;
    let parts = mesh
        .part_of_vertex
        .as_ref()
        .ok_or_else(|| Error::Domain("visibility needs per-vertex part labels".into()))?;
    let occluded = occluded_parts(keypoints, part_joint_sets, config.joint_conf_threshold)?;
    let vertices: Vec<usize> = backface_cull(mesh, camera, config.backface_threshold)
        .into_iter()
        .filter(|&v| !occluded.contains(&parts[v]))
        .collect();
    if vertices.is_empty() {
        log::warn!(
            "visibility filter removed every vertex (w = {}, J_conf = {})",
            config.backface_threshold,
            config.joint_conf_threshold
        );
    }
    Ok(Visibility {
        vertices,
        occluded_parts: occluded,
    })
}
