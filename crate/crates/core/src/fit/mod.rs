//! The fitting objective and its minimization.
//!
//! ```text
//! L = L_J + l_3d L_3D + l_theta L_theta + l_a L_a + l_beta L_beta + l_occ L_occ
//! ```
//!
//! - `L_J`: confidence-weighted Geman–McClure reprojection error of the posed joints.
//! - `L_3D`: symmetric, size-normalized Chamfer distance between visible vertices and LiDAR.
//! - `L_theta`: Gaussian-mixture negative log-likelihood of the body pose.
//! - `L_a`: exponential penalty on elbow/knee hyperextension.
//! - `L_beta`: quadratic shape prior.
//! - `L_occ`: keeps occluded joints near their initial rotation.

mod optimize;
mod prior;
mod terms;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

pub use optimize::{optimize, OptimizeResult, OptimizerConfig, StopReason, TraceEntry};
pub use prior::{GaussianComponent, PosePriorFile, PosePriorMoG, ShapePrior};
pub use terms::{chamfer, chamfer_matches, chamfer_with_matches, geman_mcclure, loss_hyperext, loss_joints_2d, loss_occ, ChamferMatches, ChamferTerm, JointsTerm, OccludedJoint};

use crate::body_model::{BodyModel, BodyParams, PosedBody};
use crate::geometry::{CameraModel, NnIndex};
use crate::visibility::Keypoints2D;
use crate::{Error, Result};

/// Scalar weights of the objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitWeights {
    /// Geman–McClure scale (pixels).
    pub rho: f64,
    pub lambda_3d: f64,
    pub lambda_theta: f64,
    pub lambda_a: f64,
    pub lambda_beta: f64,
    pub lambda_occ: f64,
}

impl FitWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::Config(format!("rho must be positive, got {}", self.rho)));
        }
        for (name, v) in [
            ("lambda_3d", self.lambda_3d),
            ("lambda_theta", self.lambda_theta),
            ("lambda_a", self.lambda_a),
            ("lambda_beta", self.lambda_beta),
            ("lambda_occ", self.lambda_occ),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    pub fn weight(&self, term: Term) -> f64 {
        match term {
            Term::Joints2d => 1.0,
            Term::Chamfer => self.lambda_3d,
            Term::PosePrior => self.lambda_theta,
            Term::Hyperext => self.lambda_a,
            Term::Shape => self.lambda_beta,
            Term::Occlusion => self.lambda_occ,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    Joints2d,
    Chamfer,
    PosePrior,
    Hyperext,
    Shape,
    Occlusion,
}

impl Term {
    pub const ALL: [Term; 6] = [
        Term::Joints2d,
        Term::Chamfer,
        Term::PosePrior,
        Term::Hyperext,
        Term::Shape,
        Term::Occlusion,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Term::Joints2d => "joints_2d",
            Term::Chamfer => "chamfer_3d",
            Term::PosePrior => "pose_prior",
            Term::Hyperext => "hyperextension",
            Term::Shape => "shape_prior",
            Term::Occlusion => "occlusion",
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Unweighted term values and the weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub joints_2d: f64,
    pub chamfer_3d: f64,
    pub pose_prior: f64,
    pub hyperextension: f64,
    pub shape_prior: f64,
    pub occlusion: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn get(&self, term: Term) -> f64 {
        match term {
            Term::Joints2d => self.joints_2d,
            Term::Chamfer => self.chamfer_3d,
            Term::PosePrior => self.pose_prior,
            Term::Hyperext => self.hyperextension,
            Term::Shape => self.shape_prior,
            Term::Occlusion => self.occlusion,
        }
    }

    fn set(&mut self, term: Term, v: f64) {
        match term {
            Term::Joints2d => self.joints_2d = v,
            Term::Chamfer => self.chamfer_3d = v,
            Term::PosePrior => self.pose_prior = v,
            Term::Hyperext => self.hyperextension = v,
            Term::Shape => self.shape_prior = v,
            Term::Occlusion => self.occlusion = v,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub breakdown: LossBreakdown,
    /// Gradient of `breakdown.total` over the flat parameter layout.
    pub gradient: DVector<f64>,
    pub behind_camera: usize,
}

/// Everything the objective needs for one person.
#[derive(Clone, Debug)]
pub struct FitProblem {
    pub model: Arc<BodyModel>,
    pub init: BodyParams,
    pub keypoints: Keypoints2D,
    pub camera: CameraModel,
    pub weights: FitWeights,
    pub pose_prior: PosePriorMoG,
    pub shape_prior: ShapePrior,
    lidar: Vec<Vector3<f64>>,
    lidar_index: Option<NnIndex>,
    visible: Vec<usize>,
    occluded: Vec<OccludedJoint>,
}

impl FitProblem {
    /// Problem with the fallback priors, no LiDAR and no occluded joints.
    pub fn new(
        model: Arc<BodyModel>,
        init: BodyParams,
        keypoints: Keypoints2D,
        camera: CameraModel,
        weights: FitWeights,
    ) -> Result<Self> {
        init.validate(model.num_betas(), model.num_joints())?;
        keypoints.validate()?;
        camera.validate()?;
        weights.validate()?;
        let pose_prior = PosePriorMoG::standard(3 * (model.num_joints() - 1));
        let shape_prior = ShapePrior::identity(model.num_betas());
        Ok(FitProblem {
            model,
            init,
            keypoints,
            camera,
            weights,
            pose_prior,
            shape_prior,
            lidar: Vec::new(),
            lidar_index: None,
            visible: Vec::new(),
            occluded: Vec::new(),
        })
    }

    pub fn with_lidar(mut self, points: Vec<Vector3<f64>>, visible: Vec<usize>) -> Result<Self> {
        if points.iter().any(|p| p.iter().any(|x| !x.is_finite())) {
            return Err(Error::Domain("LiDAR cloud has non-finite points".into()));
        }
        if let Some(&v) = visible.iter().find(|&&v| v >= self.model.num_vertices()) {
            return Err(Error::Domain(format!("visible vertex {v} out of range")));
        }
        self.lidar_index = if points.is_empty() { None } else { Some(NnIndex::build(&points)?) };
        self.lidar = points;
        self.visible = visible;
        Ok(self)
    }

    pub fn with_occluded(mut self, occluded: Vec<OccludedJoint>) -> Result<Self> {
        if let Some(o) = occluded.iter().find(|o| o.joint == 0 || o.joint >= self.model.num_joints()) {
            return Err(Error::Domain(format!("occluded joint {} is not a body joint", o.joint)));
        }
        self.occluded = occluded;
        Ok(self)
    }

    pub fn with_priors(mut self, pose_prior: PosePriorMoG, shape_prior: ShapePrior) -> Result<Self> {
        let pose_dim = 3 * (self.model.num_joints() - 1);
        if pose_prior.dim() != pose_dim {
            return Err(Error::Dimension {
                what: "pose prior",
                expected: pose_dim,
                got: pose_prior.dim(),
            });
        }
        if shape_prior.precision().nrows() != self.model.num_betas() {
            return Err(Error::Dimension {
                what: "shape prior",
                expected: self.model.num_betas(),
                got: shape_prior.precision().nrows(),
            });
        }
        self.pose_prior = pose_prior;
        self.shape_prior = shape_prior;
        Ok(self)
    }

    pub fn with_weights(mut self, weights: FitWeights) -> Result<Self> {
        weights.validate()?;
        self.weights = weights;
        Ok(self)
    }

    pub fn lidar(&self) -> &[Vector3<f64>] {
        &self.lidar
    }

    pub fn visible(&self) -> &[usize] {
        &self.visible
    }

    pub fn occluded(&self) -> &[OccludedJoint] {
        &self.occluded
    }

    fn visible_vertices(&self, params: &BodyParams) -> Result<Vec<Vector3<f64>>> {
        let (verts, _) = self.model.pose_mesh(params)?;
        Ok(self.visible.iter().map(|&i| verts[i]).collect())
    }

    /// Chamfer correspondences at `params`.
    pub fn chamfer_matches(&self, params: &BodyParams) -> Result<Option<ChamferMatches>> {
        Ok(chamfer_matches(&self.visible_vertices(params)?, &self.lidar, self.lidar_index.as_ref()))
    }

    /// Chamfer value at `params` with correspondences held fixed.
    pub fn chamfer_frozen(&self, params: &BodyParams, matches: &ChamferMatches) -> Result<f64> {
        Ok(chamfer_with_matches(&self.visible_vertices(params)?, &self.lidar, matches).value)
    }

    /// Value and gradient of the full weighted objective.
    pub fn evaluate(&self, params: &BodyParams) -> Result<Evaluation> {
        let scales = Term::ALL.map(|t| (t, self.weights.weight(t)));
        self.evaluate_scaled(params, &scales)
    }

    /// Unweighted value and gradient of a single term.
    pub fn term_value_grad(&self, params: &BodyParams, term: Term) -> Result<(f64, DVector<f64>)> {
        let e = self.evaluate_scaled(params, &[(term, 1.0)])?;
        Ok((e.breakdown.get(term), e.gradient))
    }

    pub fn loss_total(&self, params: &BodyParams) -> Result<LossBreakdown> {
        Ok(self.evaluate(params)?.breakdown)
    }

    /// Evaluates the listed terms; the total and gradient use the given scales.
    pub fn evaluate_scaled(&self, params: &BodyParams, scales: &[(Term, f64)]) -> Result<Evaluation> {
        let model = &*self.model;
        let layout = model.layout();
        let posed = PosedBody::forward(model, params)?;
        let mut grad = DVector::zeros(layout.len());
        let mut grad_vertices = vec![Vector3::zeros(); model.num_vertices()];
        let mut grad_joints = vec![Vector3::zeros(); model.num_joints()];
        let mut needs_backward = false;
        let mut breakdown = LossBreakdown::default();
        let mut behind_camera = 0;

        for &(term, scale) in scales {
            let value = match term {
                Term::Joints2d => {
                    let t = loss_joints_2d(&self.camera, &posed.joints, &self.keypoints, model.keypoint_map(), self.weights.rho);
                    behind_camera = t.behind_camera;
                    if scale != 0.0 {
                        for (g, d) in grad_joints.iter_mut().zip(&t.grad_joints) {
                            *g += d * scale;
                        }
                        needs_backward = true;
                    }
                    t.value
                }
                Term::Chamfer => {
                    let verts: Vec<Vector3<f64>> = self.visible.iter().map(|&i| posed.vertices[i]).collect();
                    let t = chamfer(&verts, &self.lidar, self.lidar_index.as_ref());
                    if scale != 0.0 {
                        for (&i, d) in self.visible.iter().zip(&t.grad) {
                            grad_vertices[i] += d * scale;
                        }
                        needs_backward = true;
                    }
                    t.value
                }
                Term::PosePrior => {
                    let theta = layout.to_vector(params).rows(layout.theta_body().start, layout.theta_body().len()).into_owned();
                    let (v, g) = self.pose_prior.value_grad(&theta);
                    grad.rows_mut(layout.theta_body().start, g.len()).axpy(scale, &g, 1.0);
                    v
                }
                Term::Hyperext => {
                    terms::hyperext_grad(&params.theta_body, model.hinges(), &layout, scale, &mut grad);
                    loss_hyperext(&params.theta_body, model.hinges())
                }
                Term::Shape => {
                    let beta = DVector::from_column_slice(&params.beta);
                    let (v, g) = self.shape_prior.value_grad(&beta);
                    grad.rows_mut(0, g.len()).axpy(scale, &g, 1.0);
                    v
                }
                Term::Occlusion => terms::occ_value_grad(&params.theta_body, &self.occluded, &layout, scale, &mut grad),
            };
            if !value.is_finite() {
                return Err(Error::Numeric(format!("{term} evaluated to {value}")));
            }
            breakdown.set(term, value);
            breakdown.total += scale * value;
        }
        if needs_backward {
            grad += posed.backward(model, params, &grad_vertices, &grad_joints);
        }
        if grad.iter().any(|g| !g.is_finite()) {
            let culprit = scales
                .iter()
                .find(|(t, s)| {
                    self.evaluate_scaled(params, &[(*t, *s)])
                        .map_or(true, |e| e.gradient.iter().any(|g| !g.is_finite()))
                })
                .map_or("unknown", |(t, _)| t.name());
            return Err(Error::Numeric(format!("non-finite gradient from {culprit}")));
        }
        Ok(Evaluation {
            breakdown,
            gradient: grad,
            behind_camera,
        })
    }
}

/// Per-block outcome of a finite-difference gradient check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckRow {
    pub term: Term,
    pub block: &'static str,
    /// Max absolute difference over the block, relative to the term's largest
    /// gradient component.
    pub rel_error: f64,
    pub passed: bool,
}

/// Central-difference check of per-term gradients.
///
/// `analytic` supplies the gradient under test, which lets callers check a
/// substitute implementation. Chamfer is differenced with its correspondences
/// held at those of `params`, matching how its gradient is defined. Errors are
/// measured per parameter block and normalized by the largest component of the
/// term's gradient.
pub fn gradcheck<F>(problem: &FitProblem, params: &BodyParams, h: f64, tolerance: f64, analytic: F) -> Result<Vec<GradcheckRow>>
where
    F: Fn(&FitProblem, &BodyParams, Term) -> Result<DVector<f64>>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {h}")));
    }
    if !(tolerance > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {tolerance}")));
    }
    let layout = problem.model.layout();
    let x0 = layout.to_vector(params);
    let blocks = [
        ("beta", layout.beta()),
        ("theta_global", layout.theta_global()),
        ("theta_body", layout.theta_body()),
        ("t_cam", layout.t_cam()),
    ];
    let mut rows = Vec::new();
    for term in Term::ALL {
        let a = analytic(problem, params, term)?;
        let frozen = if term == Term::Chamfer { problem.chamfer_matches(params)? } else { None };
        let value = |x: &DVector<f64>| -> Result<f64> {
            let p = layout.from_vector(x);
            match &frozen {
                Some(m) => problem.chamfer_frozen(&p, m),
                None => Ok(problem.term_value_grad(&p, term)?.0),
            }
        };
        let mut fd = DVector::zeros(layout.len());
        for i in 0..layout.len() {
            let mut xp = x0.clone();
            xp[i] += h;
            let mut xm = x0.clone();
            xm[i] -= h;
            fd[i] = (value(&xp)? - value(&xm)?) / (2.0 * h);
        }
        let scale = a.amax().max(fd.amax());
        for (name, range) in &blocks {
            let diff = (a.rows(range.start, range.len()) - fd.rows(range.start, range.len())).amax();
            let rel_error = if scale > 0.0 { diff / scale } else { 0.0 };
            rows.push(GradcheckRow {
                term,
                block: name,
                rel_error,
                passed: rel_error <= tolerance,
            });
        }
    }
    Ok(rows)
}

/// The gradient implementation used by [`FitProblem`], for [`gradcheck`].
pub fn analytic_term_gradient(problem: &FitProblem, params: &BodyParams, term: Term) -> Result<DVector<f64>> {
    Ok(problem.term_value_grad(params, term)?.1)
}
