use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Arc;

use clap::Args;
use meshfuse::body_model::BodyParams;
use meshfuse::fit::{analytic_term_gradient, gradcheck, FitProblem, GradcheckRow, Term};
use meshfuse::io::{read_json, write_atomic, write_json};
use meshfuse::lidar_sim::builtin_spec;
use meshfuse::pipeline::{prepare_problem, PersonInputs};
use meshfuse::scene::{inject_occlusion, synthesize, SceneConfig};
use meshfuse::Result;
use nalgebra::{DVector, Vector3};
use rand::{Rng, SeedableRng};
use serde::Serialize;

use super::fit::{load_person, pipeline_config};
use crate::manifest::{resolve, SceneManifest, SCENE_MANIFEST};
use crate::{Context, NumericFailure};

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    /// Scene written by `simulate`; a synthetic toy scene with one occluded forearm when omitted.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub h: f64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradcheckReport {
    pub h: f64,
    pub tolerance: f64,
    pub rows: Vec<GradcheckRow>,
    pub passed: bool,
}

impl GradcheckReport {
    pub fn to_table(&self) -> String {
        let mut s = format!("{:<16} {:<14} {:>12}  result\n", "term", "block", "rel_error");
        for r in &self.rows {
            let _ = writeln!(s, "{:<16} {:<14} {:>12.3e}  {}", r.term.name(), r.block, r.rel_error, if r.passed { "PASS" } else { "FAIL" });
        }
        s
    }
}

fn default_inputs(ctx: &Context) -> anyhow::Result<PersonInputs> {
    let model = Arc::new(ctx.load_model(None)?);
    let sensor = builtin_spec("Ouster-128").expect("built-in sensor");
    let mut scene = synthesize(&model, &SceneConfig::standard(sensor), ctx.seed)?;
    // Low-confidence forearm keypoints put one joint under the occlusion term.
    inject_occlusion(&mut scene, &model, &[4], 0.2, 20.0, &mut rand_chacha::ChaCha8Rng::seed_from_u64(ctx.seed))?;
    Ok(PersonInputs {
        model,
        init: scene.init,
        keypoints: scene.keypoints,
        camera: scene.camera,
        lidar: scene.lidar,
        pose_prior: None,
        shape_prior: None,
    })
}

/// Moves every body joint by up to 0.1 rad so that no term sits at its own
/// stationary point, where the check would only compare round-off.
pub fn check_point(init: &BodyParams, seed: u64) -> BodyParams {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x6772_6164);
    let mut p = init.clone();
    for t in &mut p.theta_body {
        t.0 += Vector3::from_fn(|_, _| rng.random_range(-0.1..0.1));
    }
    p
}

/// Runs the check with a replaceable gradient implementation.
pub fn check_with<F>(problem: &FitProblem, params: &BodyParams, h: f64, tolerance: f64, analytic: F) -> anyhow::Result<GradcheckReport>
where
    F: Fn(&FitProblem, &BodyParams, Term) -> Result<DVector<f64>>,
{
    let rows = gradcheck(problem, params, h, tolerance, analytic)?;
    let passed = rows.iter().all(|r| r.passed);
    Ok(GradcheckReport { h, tolerance, rows, passed })
}

pub fn run(ctx: &Context, args: &GradcheckArgs) -> anyhow::Result<GradcheckReport> {
    if !(args.h > 0.0 && args.h.is_finite()) {
        return Err(meshfuse::Error::Config(format!("--h must be positive, got {}", args.h)).into());
    }
    let person = match &args.scene {
        Some(dir) => {
            let m: SceneManifest = read_json(&dir.join(SCENE_MANIFEST))?;
            let model = Arc::new(ctx.load_model(m.model.as_deref())?);
            let f = &m.files;
            load_person(model, &resolve(dir, &f.init), &resolve(dir, &f.keypoints), &resolve(dir, &f.sweep), &resolve(dir, &f.camera))?
        }
        None => default_inputs(ctx)?,
    };
    let prepared = prepare_problem(&person, &pipeline_config(ctx, false)?)?;
    let report = check_with(&prepared.problem, &check_point(&person.init, ctx.seed), args.h, args.tolerance, analytic_term_gradient)?;
    let table = report.to_table();
    write_json(&ctx.out("gradcheck.json"), &report)?;
    write_atomic(&ctx.out("gradcheck.txt"), table.as_bytes())?;
    print!("{table}");
    if !report.passed {
        return Err(NumericFailure("analytic and finite-difference gradients disagree".into()).into());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> Context {
        Context {
            config: Default::default(),
            seed: 3,
            max_iters: None,
            weights_section: "3dpw".into(),
            out_dir: std::env::temp_dir(),
        }
    }

    #[test]
    fn corrupted_gradient_produces_fail_rows() {
        let c = ctx();
        let person = default_inputs(&c).unwrap();
        let prepared = prepare_problem(&person, &pipeline_config(&c, false).unwrap()).unwrap();
        let x = check_point(&person.init, c.seed);
        let good = check_with(&prepared.problem, &x, 1e-5, 1e-4, analytic_term_gradient).unwrap();
        assert!(good.passed, "{}", good.to_table());
        let corrupt = |p: &FitProblem, x: &BodyParams, t: Term| {
            let mut g = analytic_term_gradient(p, x, t)?;
            if t == Term::Joints2d {
                let n = g.len();
                g[n - 1] += 0.5 * g.amax().max(1.0);
            }
            Ok(g)
        };
        let bad = check_with(&prepared.problem, &x, 1e-5, 1e-4, corrupt).unwrap();
        assert!(!bad.passed);
        let failed: Vec<_> = bad.rows.iter().filter(|r| !r.passed).collect();
        assert_eq!(failed.len(), 1);
        assert_eq!((failed[0].term, failed[0].block), (Term::Joints2d, "t_cam"));
        assert!(bad.to_table().contains("FAIL"));
    }

    #[test]
    fn rejects_zero_step() {
        let args = GradcheckArgs {
            scene: None,
            h: 0.0,
            tolerance: 1e-4,
        };
        let e = run(&ctx(), &args).unwrap_err();
        assert_eq!(crate::exit_code(&e), 2);
    }
}
