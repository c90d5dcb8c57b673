use clap::Args;
use meshfuse::body_model::{toy_model, ToyModelConfig};
use meshfuse::io::write_body_model;

use crate::Context;

#[derive(Debug, Clone, Args)]
pub struct ToyArgs {
    /// Output file name inside --out-dir.
    #[arg(long, default_value = "toy_model.bma")]
    pub output: String,
    /// A few hundred vertices instead of a few thousand.
    #[arg(long)]
    pub coarse: bool,
    /// Maximum spacing between vertex rings (m).
    #[arg(long)]
    pub ring_spacing: Option<f64>,
    #[arg(long)]
    pub ring_vertices: Option<usize>,
    #[arg(long)]
    pub num_betas: Option<usize>,
    /// Seed of the shape directions. Defaults to the built-in model's, so the
    /// written archive matches what commands use when --model is omitted.
    #[arg(long)]
    pub shape_seed: Option<u64>,
}

pub fn run(ctx: &Context, args: &ToyArgs) -> anyhow::Result<()> {
    let mut config = if args.coarse { ToyModelConfig::coarse() } else { ToyModelConfig::default() };
    if let Some(v) = args.shape_seed {
        config.seed = v;
    }
    if let Some(v) = args.ring_spacing {
        config.ring_spacing = v;
    }
    if let Some(v) = args.ring_vertices {
        config.ring_vertices = v;
    }
    if let Some(v) = args.num_betas {
        config.num_betas = v;
    }
    let model = toy_model(&config)?;
    write_body_model(&ctx.out(&args.output), &model)?;
    log::info!("toy model: {} vertices, {} joints, {} shape coefficients", model.num_vertices(), model.num_joints(), model.num_betas());
    Ok(())
}
