//! Parametric articulated body: shape blendshapes, joint regression, forward
//! kinematics and linear blend skinning.
//!
//! The forward map takes `(beta, theta_global, theta_body, t_cam)` to a posed mesh.
//! Body joints are articulated about the root in the body frame; the global
//! rotation and translation are applied last, about the origin:
//!
//! ```text
//! x_world = R(theta_global) * LBS(shaped(beta), theta_body) + t_cam
//! ```
//!
//! Pose-corrective blendshapes are not modeled.

mod params;
mod skinning;
mod toy;

use std::collections::BTreeSet;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub use params::{BodyParams, ParamLayout, MAX_ABS_BETA};
pub use skinning::PosedBody;
pub use toy::{toy_model, ToyModelConfig, TOY_JOINT_NAMES, TOY_PART_NAMES};

use crate::geometry::TriangleMesh;
use crate::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-6;

/// Links a model joint to a joint id of the 2D keypoint detector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeypointLink {
    pub joint: usize,
    pub detector: usize,
}

/// One signed flexion coordinate of an elbow or knee.
///
/// The penalized value is `sign * theta_body[joint][axis]`; positive values mean
/// bending against the natural direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HingeJoint {
    pub joint: usize,
    pub axis: usize,
    pub sign: f64,
}

/// Raw model arrays, as stored in an archive.
#[derive(Clone, Debug, PartialEq)]
pub struct BodyModelData {
    pub template_vertices: Vec<Vector3<f64>>,
    pub faces: Vec<[usize; 3]>,
    /// `V * B` offsets, indexed `v * B + k`.
    pub shape_dirs: Vec<Vector3<f64>>,
    pub num_betas: usize,
    /// Dense `J x V`, row-major.
    pub joint_regressor: Vec<f64>,
    pub parents: Vec<Option<usize>>,
    /// Dense `V x J`, row-major.
    pub skinning_weights: Vec<f64>,
    pub part_of_vertex: Vec<u32>,
    pub part_of_joint: Vec<u32>,
    pub keypoint_map: Vec<KeypointLink>,
    /// Detector joint ids informative for each body part, indexed by part id.
    pub part_joint_sets: Vec<Vec<usize>>,
    pub hinges: Vec<HingeJoint>,
}

/// Validated body model with sparse views of the regressor and skinning weights.
#[derive(Clone, Debug)]
pub struct BodyModel {
    data: BodyModelData,
    regressor_rows: Vec<Vec<(usize, f64)>>,
    skin_rows: Vec<Vec<(usize, f64)>>,
}

impl BodyModel {
    pub fn new(data: BodyModelData) -> Result<Self> {
        validate(&data)?;
        let v = data.template_vertices.len();
        let j = data.parents.len();
        let regressor_rows = (0..j)
            .map(|r| {
                (0..v)
                    .filter_map(|c| {
                        let w = data.joint_regressor[r * v + c];
                        (w != 0.0).then_some((c, w))
                    })
                    .collect()
            })
            .collect();
        let skin_rows = (0..v)
            .map(|r| {
                (0..j)
                    .filter_map(|c| {
                        let w = data.skinning_weights[r * j + c];
                        (w != 0.0).then_some((c, w))
                    })
                    .collect()
            })
            .collect();
        Ok(BodyModel {
            data,
            regressor_rows,
            skin_rows,
        })
    }

    pub fn data(&self) -> &BodyModelData {
        &self.data
    }

    pub fn num_vertices(&self) -> usize {
        self.data.template_vertices.len()
    }

    pub fn num_joints(&self) -> usize {
        self.data.parents.len()
    }

    pub fn num_betas(&self) -> usize {
        self.data.num_betas
    }

    pub fn num_parts(&self) -> usize {
        self.data.part_joint_sets.len()
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.data.faces
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.data.parents[joint]
    }

    pub fn hinges(&self) -> &[HingeJoint] {
        &self.data.hinges
    }

    pub fn keypoint_map(&self) -> &[KeypointLink] {
        &self.data.keypoint_map
    }

    pub fn part_joint_sets(&self) -> &[Vec<usize>] {
        &self.data.part_joint_sets
    }

    pub fn part_of_vertex(&self) -> &[u32] {
        &self.data.part_of_vertex
    }

    pub fn part_of_joint(&self) -> &[u32] {
        &self.data.part_of_joint
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(self.num_betas(), self.num_joints())
    }

    pub(crate) fn regressor_rows(&self) -> &[Vec<(usize, f64)>] {
        &self.regressor_rows
    }

    pub(crate) fn skin_rows(&self) -> &[Vec<(usize, f64)>] {
        &self.skin_rows
    }

    /// Rest-pose parameters (zero shape, zero pose, zero translation).
    pub fn rest_params(&self) -> BodyParams {
        BodyParams::zeros(self.num_betas(), self.num_joints())
    }

    /// `template + sum_k beta_k * shape_dirs[:, :, k]`.
    pub fn shaped_template(&self, beta: &[f64]) -> Result<Vec<Vector3<f64>>> {
        let b = self.num_betas();
        if beta.len() != b {
            return Err(Error::Dimension {
                what: "beta",
                expected: b,
                got: beta.len(),
            });
        }
        Ok(self
            .data
            .template_vertices
            .iter()
            .enumerate()
            .map(|(v, t)| {
                let dirs = &self.data.shape_dirs[v * b..(v + 1) * b];
                dirs.iter().zip(beta).fold(*t, |acc, (d, &k)| acc + d * k)
            })
            .collect())
    }

    /// `joint_regressor * vertices`.
    pub fn regress_joints(&self, vertices: &[Vector3<f64>]) -> Result<Vec<Vector3<f64>>> {
        if vertices.len() != self.num_vertices() {
            return Err(Error::Dimension {
                what: "vertices",
                expected: self.num_vertices(),
                got: vertices.len(),
            });
        }
        Ok(self
            .regressor_rows
            .iter()
            .map(|row| row.iter().fold(Vector3::zeros(), |acc, &(v, w)| acc + vertices[v] * w))
            .collect())
    }

    /// Posed vertices and joints in the world frame.
    #[allow(clippy::type_complexity)]
    pub fn pose_mesh(&self, params: &BodyParams) -> Result<(Vec<Vector3<f64>>, Vec<Vector3<f64>>)> {
        let posed = PosedBody::forward(self, params)?;
        Ok((posed.vertices, posed.joints))
    }

    pub fn posed_mesh(&self, params: &BodyParams) -> Result<TriangleMesh> {
        let (vertices, _) = self.pose_mesh(params)?;
        Ok(TriangleMesh {
            vertices,
            faces: self.data.faces.clone(),
            part_of_vertex: Some(self.data.part_of_vertex.clone()),
        })
    }

    /// Unique undirected edges of the face list.
    pub fn mesh_edges(&self) -> Vec<(usize, usize)> {
        mesh_edges(&self.data.faces)
    }

    /// Body joints (never the root) whose part is in `parts`.
    pub fn joints_of_parts(&self, parts: &BTreeSet<u32>) -> Vec<usize> {
        (1..self.num_joints())
            .filter(|&j| parts.contains(&self.data.part_of_joint[j]))
            .collect()
    }
}

/// Unique undirected edges `(min, max)` of a face list, sorted.
pub fn mesh_edges(faces: &[[usize; 3]]) -> Vec<(usize, usize)> {
    let set: BTreeSet<(usize, usize)> = faces
        .iter()
        .flat_map(|f| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
        .filter(|(a, b)| a != b)
        .map(|(a, b)| (a.min(b), a.max(b)))
        .collect();
    set.into_iter().collect()
}

fn validate(d: &BodyModelData) -> Result<()> {
    let v = d.template_vertices.len();
    let j = d.parents.len();
    let b = d.num_betas;
    let bad = |msg: String| Err(Error::Model(msg));
    if v == 0 || j == 0 {
        return bad("model needs at least one vertex and one joint".into());
    }
    let check_len = |what: &'static str, expected: usize, got: usize| {
        if expected != got {
            Err(Error::Dimension { what, expected, got })
        } else {
            Ok(())
        }
    };
    check_len("shape_dirs", v * b, d.shape_dirs.len())?;
    check_len("joint_regressor", j * v, d.joint_regressor.len())?;
    check_len("skinning_weights", v * j, d.skinning_weights.len())?;
    check_len("part_of_vertex", v, d.part_of_vertex.len())?;
    check_len("part_of_joint", j, d.part_of_joint.len())?;

    if d.template_vertices.iter().chain(&d.shape_dirs).any(|p| p.iter().any(|x| !x.is_finite())) {
        return bad("non-finite vertex data".into());
    }
    for (fi, f) in d.faces.iter().enumerate() {
        if f.iter().any(|&i| i >= v) {
            return bad(format!("face {fi} index out of range"));
        }
        if f[0] == f[1] && f[1] == f[2] {
            return bad(format!("face {fi} is degenerate"));
        }
    }

    if d.parents[0].is_some() {
        return bad("joint 0 must be the kinematic root".into());
    }
    for (jj, p) in d.parents.iter().enumerate().skip(1) {
        match p {
            Some(p) if *p < jj => {}
            Some(p) => return bad(format!("joint {jj} has parent {p}; parents must precede children")),
            None => return bad(format!("joint {jj} is a second root")),
        }
    }

    for r in 0..j {
        let row = &d.joint_regressor[r * v..(r + 1) * v];
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > SUM_TOLERANCE || row.iter().any(|x| !x.is_finite()) {
            return bad(format!("joint regressor row {r} sums to {s}"));
        }
    }
    for r in 0..v {
        let row = &d.skinning_weights[r * j..(r + 1) * j];
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > SUM_TOLERANCE || row.iter().any(|&x| !(x >= 0.0)) {
            return bad(format!("skinning row {r} is not a convex combination (sum {s})"));
        }
    }

    let parts = d.part_joint_sets.len();
    if let Some(p) = d.part_of_vertex.iter().chain(&d.part_of_joint).find(|&&p| p as usize >= parts) {
        return bad(format!("part id {p} has no joint set (have {parts} parts)"));
    }
    if let Some(l) = d.keypoint_map.iter().find(|l| l.joint >= j) {
        return bad(format!("keypoint link references joint {}", l.joint));
    }
    for h in &d.hinges {
        if h.joint == 0 || h.joint >= j || h.axis > 2 || h.sign.abs() != 1.0 {
            return bad(format!("invalid hinge joint {h:?}"));
        }
    }
    Ok(())
}
