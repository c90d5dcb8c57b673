//! Single-person refinement: visibility filtering, rigid ICP alignment, then
//! optimization of the full objective.

use std::sync::Arc;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::body_model::{BodyModel, BodyParams};
use crate::fit::{optimize, FitProblem, FitWeights, LossBreakdown, OccludedJoint, OptimizeResult, OptimizerConfig, PosePriorMoG, ShapePrior};
use crate::geometry::{CameraModel, RigidTransform, TriangleMesh};
use crate::registration::{apply_global_update, icp_align, IcpConfig, IcpResult};
use crate::visibility::{visible_set, Keypoints2D, Visibility, VisibilityConfig};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub weights: FitWeights,
    pub visibility: VisibilityConfig,
    pub icp: IcpConfig,
    pub optimizer: OptimizerConfig,
    /// Run the rigid ICP stage before refinement.
    pub use_icp: bool,
}

/// Observations and starting point for one person. `lidar` is in the world frame.
#[derive(Clone, Debug)]
pub struct PersonInputs {
    pub model: Arc<BodyModel>,
    pub init: BodyParams,
    pub keypoints: Keypoints2D,
    pub camera: CameraModel,
    pub lidar: Vec<Vector3<f64>>,
    pub pose_prior: Option<PosePriorMoG>,
    pub shape_prior: Option<ShapePrior>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageLoss {
    pub stage: String,
    pub loss: LossBreakdown,
}

#[derive(Clone, Debug)]
pub struct PipelineResult {
    pub params: BodyParams,
    pub visibility: Visibility,
    pub occluded_joints: Vec<OccludedJoint>,
    pub icp: Option<IcpResult>,
    /// Chamfer and ICP were skipped because nothing was visible or there was no LiDAR.
    pub image_only: bool,
    pub stages: Vec<StageLoss>,
    pub optimization: OptimizeResult,
}

/// The objective for one person, with the visibility analysis it was built from.
#[derive(Clone, Debug)]
pub struct PreparedProblem {
    pub problem: FitProblem,
    pub visibility: Visibility,
    pub occluded_joints: Vec<OccludedJoint>,
    pub image_only: bool,
    /// Body posed at the initial parameters.
    pub init_mesh: TriangleMesh,
}

pub fn prepare_problem(inputs: &PersonInputs, config: &PipelineConfig) -> Result<PreparedProblem> {
    let model = &inputs.model;
    inputs.init.validate(model.num_betas(), model.num_joints())?;
    let mesh = model.posed_mesh(&inputs.init)?;
    let visibility = visible_set(&mesh, &inputs.camera, &inputs.keypoints, model.part_joint_sets(), &config.visibility)?;
    let occluded_joints: Vec<OccludedJoint> = model
        .joints_of_parts(&visibility.occluded_parts)
        .into_iter()
        .map(|joint| OccludedJoint {
            joint,
            initial: inputs.init.theta_body[joint - 1].to_quaternion(),
        })
        .collect();

    let image_only = visibility.vertices.is_empty() || inputs.lidar.is_empty();
    if image_only {
        log::warn!(
            "no usable 3D evidence ({} visible vertices, {} LiDAR points); fitting to keypoints only",
            visibility.vertices.len(),
            inputs.lidar.len()
        );
    }
    let (visible, lidar) = if image_only {
        (Vec::new(), Vec::new())
    } else {
        (visibility.vertices.clone(), inputs.lidar.clone())
    };

    let mut problem = FitProblem::new(model.clone(), inputs.init.clone(), inputs.keypoints.clone(), inputs.camera.clone(), config.weights)?
        .with_lidar(lidar, visible)?
        .with_occluded(occluded_joints.clone())?;
    if inputs.pose_prior.is_some() || inputs.shape_prior.is_some() {
        let pose = inputs.pose_prior.clone().unwrap_or_else(|| problem.pose_prior.clone());
        let shape = inputs.shape_prior.clone().unwrap_or_else(|| problem.shape_prior.clone());
        problem = problem.with_priors(pose, shape)?;
    }
    Ok(PreparedProblem {
        problem,
        visibility,
        occluded_joints,
        image_only,
        init_mesh: mesh,
    })
}

pub fn fit_person(inputs: &PersonInputs, config: &PipelineConfig) -> Result<PipelineResult> {
    let PreparedProblem {
        problem,
        visibility,
        occluded_joints,
        image_only,
        init_mesh: mesh,
    } = prepare_problem(inputs, config)?;

    let mut stages = vec![StageLoss {
        stage: "init".into(),
        loss: problem.loss_total(&inputs.init)?,
    }];
    let mut start = inputs.init.clone();
    let mut icp = None;
    if config.use_icp && !image_only {
        let source: Vec<Vector3<f64>> = visibility.vertices.iter().map(|&i| mesh.vertices[i]).collect();
        match icp_align(&source, &inputs.lidar, &RigidTransform::identity(), &config.icp) {
            Ok(r) => {
                start = apply_global_update(&start, &r.transform);
                stages.push(StageLoss {
                    stage: "icp".into(),
                    loss: problem.loss_total(&start)?,
                });
                icp = Some(r);
            }
            Err(Error::Degenerate(msg)) => log::warn!("skipping ICP: {msg}"),
            Err(e) => return Err(e),
        }
    }

    let optimization = optimize(&problem, &start, &config.optimizer)?;
    stages.push(StageLoss {
        stage: "refine".into(),
        loss: optimization.fin,
    });
    Ok(PipelineResult {
        params: optimization.params.clone(),
        visibility,
        occluded_joints,
        icp,
        image_only,
        stages,
        optimization,
    })
}

impl PipelineConfig {
    /// Default ICP and optimizer settings with the given weights and thresholds.
    pub fn new(weights: FitWeights, visibility: VisibilityConfig) -> Self {
        PipelineConfig {
            weights,
            visibility,
            icp: IcpConfig::default(),
            optimizer: OptimizerConfig::default(),
            use_icp: true,
        }
    }
}
