use std::path::PathBuf;

use anyhow::Context as _;
use clap::{Args, ValueEnum};
use meshfuse::body_model::BodyParams;
use meshfuse::io::{read_json, read_voxel_grid, write_atomic, write_json};
use meshfuse::metrics::{MeshPair, MetricsReport};

use crate::Context;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricSet {
    Mesh,
    Occupancy,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Body-model archive for the parameter files; the toy model when omitted.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, requires = "gt_params")]
    pub pred_params: Option<PathBuf>,
    #[arg(long, requires = "pred_params")]
    pub gt_params: Option<PathBuf>,
    #[arg(long, requires = "gt_grid")]
    pub pred_grid: Option<PathBuf>,
    #[arg(long, requires = "pred_grid")]
    pub gt_grid: Option<PathBuf>,
    /// Metric groups to compute.
    #[arg(long, value_delimiter = ',', default_values = ["mesh", "occupancy"])]
    pub metrics: Vec<MetricSet>,
}

pub fn evaluate(ctx: &Context, args: &EvaluateArgs) -> anyhow::Result<MetricsReport> {
    let mut report = MetricsReport::default();
    if args.metrics.contains(&MetricSet::Mesh) {
        match (&args.pred_params, &args.gt_params) {
            (Some(p), Some(g)) => {
                let model = ctx.load_model(args.model.as_deref())?;
                let pose = |path: &PathBuf| -> anyhow::Result<_> {
                    let params: BodyParams = read_json(path)?;
                    params.check_dims(model.num_betas(), model.num_joints()).with_context(|| format!("{}", path.display()))?;
                    let mesh = model.posed_mesh(&params)?;
                    let joints = model.pose_mesh(&params)?.1;
                    Ok((mesh, joints))
                };
                let (pm, pj) = pose(p)?;
                let (gm, gj) = pose(g)?;
                report.add_mesh(&MeshPair {
                    pred: &pm,
                    gt: &gm,
                    pred_joints: &pj,
                    gt_joints: &gj,
                })?;
            }
            _ => report.omit_mesh("no parameter files given"),
        }
    }
    if args.metrics.contains(&MetricSet::Occupancy) {
        match (&args.pred_grid, &args.gt_grid) {
            (Some(p), Some(g)) => report.add_occupancy(&read_voxel_grid(p)?, &read_voxel_grid(g)?)?,
            _ => report.omit_occupancy("no grid files given"),
        }
    }
    Ok(report)
}

pub fn run(ctx: &Context, args: &EvaluateArgs) -> anyhow::Result<()> {
    let report = evaluate(ctx, args)?;
    let table = report.to_table();
    write_json(&ctx.out("metrics.json"), &report)?;
    write_atomic(&ctx.out("metrics.txt"), table.as_bytes())?;
    print!("{table}");
    Ok(())
}
