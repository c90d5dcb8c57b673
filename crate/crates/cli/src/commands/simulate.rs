use std::path::{Path, PathBuf};

use anyhow::Context as _;
use clap::Args;
use meshfuse::body_model::BodyParams;
use meshfuse::config::Config;
use meshfuse::geometry::CameraModel;
use meshfuse::io::{read_json, write_json, write_sweep, write_sweep_csv};
use meshfuse::lidar_sim::{SensorSpec, Sweep};
use meshfuse::scene::{synthesize, synthesize_with_truth, SceneConfig, SyntheticScene};

use crate::manifest::{SceneFiles, SceneManifest, SCENE_MANIFEST};
use crate::Context;

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Sensor name (built in or from --config), or an INI file with one sensor section.
    #[arg(long, default_value = "Ouster-128")]
    pub sensor: String,
    /// Disable range noise, angular noise and dropout.
    #[arg(long)]
    pub noiseless: bool,
    /// Body-model archive; the toy model when omitted.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Ground-truth parameters; sampled from the seed when omitted.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Camera JSON; a 640x480 camera at the origin when omitted.
    #[arg(long)]
    pub camera: Option<PathBuf>,
    /// Also write the sweep as CSV.
    #[arg(long)]
    pub csv: bool,
}

fn resolve_sensor(ctx: &Context, name: &str) -> anyhow::Result<SensorSpec> {
    let path = Path::new(name);
    if path.is_file() {
        let file = Config::load(path)?;
        let defaults = Config::default();
        let own: Vec<&SensorSpec> = file.sensors.iter().filter(|(k, s)| defaults.sensors.get(*k) != Some(*s)).map(|(_, s)| s).collect();
        return match own.as_slice() {
            [one] => Ok((*one).clone()),
            _ => anyhow::bail!("{} must define exactly one [sensor.NAME] section", path.display()),
        };
    }
    Ok(ctx.config.sensor(name)?.clone())
}

pub fn run(ctx: &Context, args: &SimulateArgs) -> anyhow::Result<SceneManifest> {
    let mut sensor = resolve_sensor(ctx, &args.sensor)?;
    if args.noiseless {
        sensor = sensor.noiseless();
    }
    sensor.validate()?;
    let model = ctx.load_model(args.model.as_deref())?;
    let mut config = SceneConfig::standard(sensor.clone());
    if let Some(p) = &args.camera {
        config.camera = read_json::<CameraModel>(p)?;
    }
    let scene: SyntheticScene = match &args.params {
        Some(p) => synthesize_with_truth(&model, &config, read_json::<BodyParams>(p)?, ctx.seed)?,
        None => synthesize(&model, &config, ctx.seed)?,
    };
    log::info!("simulated {} returns with {} (seed {})", scene.lidar.len(), sensor.name, ctx.seed);

    let files = SceneFiles {
        truth: "truth.json".into(),
        init: "init.json".into(),
        keypoints: "keypoints.json".into(),
        camera: "camera.json".into(),
        sweep: "sweep.swp".into(),
    };
    write_json(&ctx.out_dir.join(&files.truth), &scene.truth)?;
    write_json(&ctx.out_dir.join(&files.init), &scene.init)?;
    write_json(&ctx.out_dir.join(&files.keypoints), &scene.keypoints)?;
    write_json(&ctx.out_dir.join(&files.camera), &scene.camera)?;
    let sweep = Sweep {
        points: scene.lidar.clone(),
        beam_ids: scene.beam_ids.clone(),
    };
    write_sweep(&ctx.out_dir.join(&files.sweep), &sweep)?;
    if args.csv {
        write_sweep_csv(&ctx.out("sweep.csv"), &sweep)?;
    }
    let manifest = SceneManifest {
        seed: ctx.seed,
        sensor,
        model: args.model.clone(),
        truth: scene.truth,
        files,
    };
    write_json(&ctx.out(SCENE_MANIFEST), &manifest).context("writing scene manifest")?;
    Ok(manifest)
}
