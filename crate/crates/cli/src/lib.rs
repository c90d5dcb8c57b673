//! The `meshfuse` command line: simulate synthetic scenes, fit body meshes to
//! them, fuse occupancy grids, evaluate results and check gradients.
//!
//! Exit codes: 0 on success, 1 on a numeric failure, 2 on bad input or configuration.

mod commands;
pub mod manifest;

use std::path::{Path, PathBuf};

use anyhow::Context as _;
use clap::{Args, Parser, Subcommand};
use meshfuse::body_model::{toy_model, BodyModel, ToyModelConfig};
use meshfuse::config::Config;

pub use commands::evaluate::EvaluateArgs;
pub use commands::fit::{FitArgs, FitReport};
pub use commands::fuse::FuseArgs;
pub use commands::gradcheck::{GradcheckArgs, GradcheckReport};
pub use commands::simulate::SimulateArgs;
pub use commands::toy::ToyArgs;

#[derive(Debug, Parser)]
#[command(name = "meshfuse", version, about = "Fit body meshes to LiDAR and fuse semantic occupancy grids")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// INI file with weight, sensor, grid and optimizer sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Optimizer iteration budget; 0 leaves the initial parameters untouched.
    #[arg(long, global = true)]
    pub max_iters: Option<usize>,
    #[arg(long, global = true, default_value = "3dpw")]
    pub weights_section: String,
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads; outputs do not depend on this.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Refine body parameters against keypoints and a LiDAR sweep.
    Fit(FitArgs),
    /// Generate a synthetic scene: truth, perturbed start, keypoints and a sweep.
    Simulate(SimulateArgs),
    /// Build labeled occupancy grids from a frame manifest.
    Fuse(FuseArgs),
    /// Compare predictions with ground truth.
    Evaluate(EvaluateArgs),
    /// Compare analytic and finite-difference gradients of every loss term.
    Gradcheck(GradcheckArgs),
    /// Write the built-in toy body model as an archive.
    MakeToyModel(ToyArgs),
}

/// Marks an error as a numeric failure (exit code 1).
#[derive(Debug)]
pub struct NumericFailure(pub String);

impl std::fmt::Display for NumericFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "numeric failure: {}", self.0)
    }
}

impl std::error::Error for NumericFailure {}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    let numeric = e.chain().any(|c| c.is::<NumericFailure>() || matches!(c.downcast_ref::<meshfuse::Error>(), Some(meshfuse::Error::Numeric(_))));
    if numeric {
        1
    } else {
        2
    }
}

/// Settings shared by all commands.
pub(crate) struct Context {
    pub config: Config,
    pub seed: u64,
    pub max_iters: Option<usize>,
    pub weights_section: String,
    pub out_dir: PathBuf,
}

impl Context {
    fn new(g: &GlobalArgs) -> anyhow::Result<Self> {
        let config = match &g.config {
            Some(p) => Config::load(p).with_context(|| format!("loading config {}", p.display()))?,
            None => Config::default(),
        };
        std::fs::create_dir_all(&g.out_dir).with_context(|| format!("creating {}", g.out_dir.display()))?;
        Ok(Context {
            config,
            seed: g.seed,
            max_iters: g.max_iters,
            weights_section: g.weights_section.clone(),
            out_dir: g.out_dir.clone(),
        })
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn load_model(&self, path: Option<&Path>) -> anyhow::Result<BodyModel> {
        match path {
            Some(p) => meshfuse::io::read_body_model(p).with_context(|| format!("reading body model {}", p.display())),
            None => Ok(toy_model(&ToyModelConfig::default())?),
        }
    }
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    if cli.global.threads == 0 {
        anyhow::bail!("--threads must be at least 1");
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.global.threads).build()?;
    pool.install(|| {
        let ctx = Context::new(&cli.global)?;
        match &cli.command {
            Command::Fit(a) => commands::fit::run(&ctx, a).map(|_| ()),
            Command::Simulate(a) => commands::simulate::run(&ctx, a).map(|_| ()),
            Command::Fuse(a) => commands::fuse::run(&ctx, a),
            Command::Evaluate(a) => commands::evaluate::run(&ctx, a),
            Command::Gradcheck(a) => commands::gradcheck::run(&ctx, a).map(|_| ()),
            Command::MakeToyModel(a) => commands::toy::run(&ctx, a),
        }
    })
}
