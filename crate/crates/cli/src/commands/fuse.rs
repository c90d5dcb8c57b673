use std::collections::BTreeSet;
use std::path::PathBuf;

use anyhow::Context as _;
use clap::Args;
use meshfuse::body_model::BodyParams;
use meshfuse::geometry::RigidTransform;
use meshfuse::io::{read_json, read_labeled_points, write_atomic, write_json, write_voxel_grid, voxel_grid_csv};
use meshfuse::occupancy::{
    accumulate_static, assemble_frame, class, complete_free_unknown, mask_dynamic_points, LabeledPoint, rasterize_human, vote_static, AccumulationReport, Frame, HumanCells,
    SensorRay, StateCounts, StaticConfig,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::manifest::{resolve, FuseManifest};
use crate::Context;

#[derive(Debug, Clone, Args)]
pub struct FuseArgs {
    /// Frame manifest (JSON).
    pub manifest: PathBuf,
    /// Body-model archive for the human parameters; the toy model when omitted.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Also write a CSV dump of every grid.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Serialize)]
struct FrameSummary {
    name: String,
    file: String,
    counts: StateCounts,
    humans: usize,
}

#[derive(Serialize)]
struct FuseReport {
    dims: [usize; 3],
    static_cells: usize,
    accumulation: AccumulationReport,
    frames: Vec<FrameSummary>,
}

pub fn run(ctx: &Context, args: &FuseArgs) -> anyhow::Result<()> {
    let manifest: FuseManifest = read_json(&args.manifest)?;
    if manifest.frames.is_empty() {
        anyhow::bail!("{}: the manifest lists no frames", args.manifest.display());
    }
    let mut names = BTreeSet::new();
    for f in &manifest.frames {
        if f.name.is_empty() || f.name.contains(['/', '\\']) || !names.insert(f.name.as_str()) {
            anyhow::bail!("{}: frame name {:?} is empty, contains a path separator or repeats", args.manifest.display(), f.name);
        }
    }
    let base = args.manifest.parent().map(PathBuf::from).unwrap_or_default();
    let spec = manifest.grid.clone().unwrap_or_else(|| ctx.config.grid.clone());
    let model = ctx.load_model(args.model.as_deref())?;

    let mut frames = Vec::with_capacity(manifest.frames.len());
    for f in &manifest.frames {
        let pose = RigidTransform::new(f.pose.rotation, f.pose.translation).with_context(|| format!("frame {}: pose", f.name))?;
        let points = read_labeled_points(&resolve(&base, &f.points))?;
        // Masks are in the world frame; test the posed points, keep them in the sensor frame.
        let world: Vec<_> = points.iter().map(|p| LabeledPoint { position: pose.apply(&p.position), class: p.class }).collect();
        // Pedestrians come from the fitted meshes, never from the static map.
        let still: Vec<_> = world.into_iter().filter(|p| p.class != class::PEDESTRIAN).collect();
        let kept = mask_dynamic_points(&still, &manifest.masks);
        let inv = pose.inverse();
        let local = kept.iter().map(|p| LabeledPoint { position: inv.apply(&p.position), class: p.class }).collect();
        log::info!("[frame {}] {} points, {} after masking", f.name, points.len(), kept.len());
        frames.push((pose, points, Frame { pose, points: local }));
    }
    let static_frames: Vec<Frame> = frames.iter().map(|(_, _, f)| f.clone()).collect();
    let (counts, accumulation) = accumulate_static(&static_frames, &spec, &StaticConfig { ground_tolerance: manifest.ground_tolerance })?;
    let static_map = vote_static(&counts);
    let static_cells: BTreeSet<usize> = static_map.labels.keys().copied().collect();

    let summaries = manifest
        .frames
        .par_iter()
        .zip(&frames)
        .map(|(f, (pose, points, _))| -> anyhow::Result<FrameSummary> {
            let mut humans = Vec::with_capacity(f.humans.len());
            for h in &f.humans {
                let params: BodyParams = read_json(&resolve(&base, &h.params))?;
                let mesh = model.posed_mesh(&params).with_context(|| format!("frame {}: human {}", f.name, h.instance))?;
                let mut cells = rasterize_human(&mesh, h.instance, &spec, manifest.fill_humans)?;
                if let Some(v) = h.velocity {
                    cells = cells.with_velocity(v);
                }
                humans.push(cells);
            }
            let mut occupied = static_cells.clone();
            occupied.extend(humans.iter().flat_map(|h: &HumanCells| h.cells.iter().copied()));
            let rays: Vec<SensorRay> = points
                .iter()
                .map(|p| SensorRay {
                    origin: pose.translation,
                    end: pose.apply(&p.position),
                    returned: true,
                })
                .collect();
            let free = complete_free_unknown(&occupied, &rays, &spec, false);
            let grid = assemble_frame(&static_map, &humans, &free, &spec).with_context(|| format!("frame {}", f.name))?;
            let file = format!("{}.vox", f.name);
            write_voxel_grid(&ctx.out(&file), &grid)?;
            if args.csv {
                write_atomic(&ctx.out(&format!("{}.csv", f.name)), voxel_grid_csv(&grid).as_bytes())?;
            }
            let counts = grid.state_counts();
            log::info!("[frame {}] {} occupied, {} free, {} unknown", f.name, counts.occupied, counts.free, counts.unknown);
            Ok(FrameSummary {
                name: f.name.clone(),
                file,
                counts,
                humans: humans.len(),
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    write_json(
        &ctx.out("fuse_report.json"),
        &FuseReport {
            dims: spec.dims(),
            static_cells: static_cells.len(),
            accumulation,
            frames: summaries,
        },
    )?;
    Ok(())
}
