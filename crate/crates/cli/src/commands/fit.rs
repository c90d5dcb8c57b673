use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context as _;
use clap::Args;
use meshfuse::body_model::{BodyModel, BodyParams};
use meshfuse::fit::{FitWeights, StopReason, TraceEntry};
use meshfuse::geometry::{CameraModel, TriangleMesh};
use meshfuse::io::{read_json, read_point_cloud, write_atomic, write_json};
use meshfuse::metrics::pve;
use meshfuse::pipeline::{fit_person, PersonInputs, PipelineConfig, StageLoss};
use meshfuse::registration::apply_global_update;
use meshfuse::visibility::{Keypoints2D, VisibilityConfig};
use serde::{Deserialize, Serialize};

use crate::manifest::{resolve, SceneManifest, SCENE_MANIFEST};
use crate::{Context, NumericFailure};

#[derive(Debug, Clone, Default, Args)]
pub struct FitArgs {
    /// Directory written by `simulate`; supplies every input not given explicitly.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Body-model archive; the toy model when omitted.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Initial parameters (JSON).
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// 2D keypoints: JSON array of {joint_id, x, y, conf}.
    #[arg(long)]
    pub keypoints: Option<PathBuf>,
    /// World-frame LiDAR points (.swp binary or x,y,z,row,col CSV).
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// Camera JSON.
    #[arg(long)]
    pub camera: Option<PathBuf>,
    /// Skip the rigid ICP stage.
    #[arg(long)]
    pub no_icp: bool,
    /// Write the mesh after every stage as OBJ.
    #[arg(long)]
    pub dump_meshes: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcpSummary {
    pub iterations: usize,
    pub rmse: f64,
    pub rotation_rad: f64,
    pub translation_m: f64,
}

/// Contents of `fit_report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub weights_section: String,
    pub weights: FitWeights,
    pub visibility: VisibilityConfig,
    pub visible_vertices: usize,
    pub occluded_parts: Vec<u32>,
    /// No 3D evidence was usable; only keypoints and priors were fitted.
    pub image_only: bool,
    pub icp: Option<IcpSummary>,
    pub stages: Vec<StageLoss>,
    pub iterations: usize,
    pub stop: StopReason,
    /// Present when the scene manifest carries ground truth.
    pub pve_vs_truth_mm: Option<f64>,
    pub trace: Vec<TraceEntry>,
}

struct Inputs {
    model: Option<PathBuf>,
    init: PathBuf,
    keypoints: PathBuf,
    points: PathBuf,
    camera: PathBuf,
    truth: Option<BodyParams>,
}

fn gather(args: &FitArgs) -> anyhow::Result<Inputs> {
    let scene = match &args.scene {
        Some(dir) => {
            let m: SceneManifest = read_json(&dir.join(SCENE_MANIFEST))?;
            Some((dir.clone(), m))
        }
        None => None,
    };
    let pick = |given: &Option<PathBuf>, flag: &str, from_scene: fn(&SceneManifest) -> &Path| -> anyhow::Result<PathBuf> {
        match (given, &scene) {
            (Some(p), _) => Ok(p.clone()),
            (None, Some((dir, m))) => Ok(resolve(dir, from_scene(m))),
            (None, None) => anyhow::bail!("missing --{flag} (or --scene)"),
        }
    };
    Ok(Inputs {
        init: pick(&args.init, "init", |m| &m.files.init)?,
        keypoints: pick(&args.keypoints, "keypoints", |m| &m.files.keypoints)?,
        points: pick(&args.points, "points", |m| &m.files.sweep)?,
        camera: pick(&args.camera, "camera", |m| &m.files.camera)?,
        model: args.model.clone().or_else(|| scene.as_ref().and_then(|(_, m)| m.model.clone())),
        truth: scene.map(|(_, m)| m.truth),
    })
}

pub(crate) fn pipeline_config(ctx: &Context, no_icp: bool) -> anyhow::Result<PipelineConfig> {
    let mut config = ctx.config.preset(&ctx.weights_section)?.pipeline();
    config.optimizer = ctx.config.optimizer;
    if let Some(n) = ctx.max_iters {
        config.optimizer.max_iters = n;
    }
    // A zero budget means no refinement of any kind.
    config.use_icp = !no_icp && config.optimizer.max_iters > 0;
    Ok(config)
}

pub(crate) fn load_person(model: Arc<BodyModel>, init: &Path, keypoints: &Path, points: &Path, camera: &Path) -> anyhow::Result<PersonInputs> {
    Ok(PersonInputs {
        init: read_json::<BodyParams>(init)?,
        keypoints: {
            let k: Keypoints2D = read_json(keypoints)?;
            k.validate().with_context(|| format!("invalid keypoints in {}", keypoints.display()))?;
            k
        },
        camera: read_json::<CameraModel>(camera)?,
        lidar: read_point_cloud(points)?.points,
        model,
        pose_prior: None,
        shape_prior: None,
    })
}

fn obj(mesh: &TriangleMesh) -> String {
    let mut s = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in &mesh.faces {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

pub fn run(ctx: &Context, args: &FitArgs) -> anyhow::Result<FitReport> {
    let inputs = gather(args)?;
    let model = Arc::new(ctx.load_model(inputs.model.as_deref())?);
    let person = load_person(model.clone(), &inputs.init, &inputs.keypoints, &inputs.points, &inputs.camera)?;
    let config = pipeline_config(ctx, args.no_icp)?;
    if let Some(t) = &inputs.truth {
        t.check_dims(model.num_betas(), model.num_joints())?;
    }

    let result = fit_person(&person, &config)?;
    if result.image_only {
        log::warn!("fit used keypoints only (2D-only mode)");
    }
    let pve_vs_truth_mm = match &inputs.truth {
        Some(t) => Some(pve(&model.pose_mesh(&result.params)?.0, &model.pose_mesh(t)?.0)?),
        None => None,
    };
    let report = FitReport {
        weights_section: ctx.weights_section.clone(),
        weights: config.weights,
        visibility: config.visibility,
        visible_vertices: result.visibility.vertices.len(),
        occluded_parts: result.visibility.occluded_parts.iter().copied().collect(),
        image_only: result.image_only,
        icp: result.icp.as_ref().map(|r| IcpSummary {
            iterations: r.iterations,
            rmse: r.rmse,
            rotation_rad: r.transform.rotation_angle(),
            translation_m: r.transform.translation.norm(),
        }),
        stages: result.stages.clone(),
        iterations: result.optimization.iterations,
        stop: result.optimization.stop.clone(),
        pve_vs_truth_mm,
        trace: result.optimization.trace.clone(),
    };

    write_json(&ctx.out("fit_params.json"), &result.params)?;
    write_json(&ctx.out("fit_report.json"), &report)?;
    if args.dump_meshes {
        write_atomic(&ctx.out("mesh_init.obj"), obj(&model.posed_mesh(&person.init)?).as_bytes())?;
        if let Some(icp) = &result.icp {
            let p = apply_global_update(&person.init, &icp.transform);
            write_atomic(&ctx.out("mesh_icp.obj"), obj(&model.posed_mesh(&p)?).as_bytes())?;
        }
        write_atomic(&ctx.out("mesh_refine.obj"), obj(&model.posed_mesh(&result.params)?).as_bytes())?;
    }
    if let Some(v) = report.pve_vs_truth_mm {
        log::info!("PVE against truth: {v:.3} mm");
    }
    if let StopReason::NumericFailure(msg) = &report.stop {
        return Err(NumericFailure(msg.clone()).into());
    }
    Ok(report)
}
