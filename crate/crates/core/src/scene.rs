//! Synthetic single-person scenes: a ground-truth body in front of a camera,
//! its exact keypoints, a simulated sweep, and a perturbed starting point.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::body_model::{BodyModel, BodyParams};
use crate::geometry::{AxisAngle, CameraModel, NnIndex, RigidTransform};
use crate::lidar_sim::{simulate_sweep, SensorSpec};
use crate::visibility::{Keypoint, Keypoints2D};
use crate::{Error, Result};

/// Offset between the scene seed and the seed handed to the sweep simulator,
/// so the two random streams never coincide.
const SWEEP_SEED_OFFSET: u64 = 0x005E_ED0F_5EE9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub sensor: SensorSpec,
    pub camera: CameraModel,
    /// Distance of the body root along the optical axis (m).
    pub distance: f64,
    /// Maximum absolute yaw of the body about the vertical (rad).
    pub max_yaw: f64,
    /// Standard deviation of non-hinge joint rotation coordinates (rad).
    pub pose_std: f64,
    /// Signed flexion range `[lo, hi]` of each hinge, in model hinge order.
    /// Shorter lists are cycled.
    pub hinge_flexion: Vec<[f64; 2]>,
    /// Shape coefficients are drawn uniformly from `[-beta_range, beta_range]`.
    pub beta_range: f64,
    pub perturb_translation: f64,
    /// Standard deviation of Gaussian pixel noise added to each keypoint coordinate.
    pub keypoint_noise: f64,
    /// Rotation offset applied to every joint including the root (rad).
    pub perturb_rotation: f64,
}

impl SceneConfig {
    /// 640x480 camera at the origin with a 500 px focal length.
    pub fn standard(sensor: SensorSpec) -> Self {
        SceneConfig {
            sensor,
            camera: CameraModel::new(500.0, 500.0, 320.0, 240.0, 640, 480, RigidTransform::identity()).expect("valid intrinsics"),
            distance: 4.0,
            max_yaw: 0.5,
            pose_std: 0.05,
            // Around the flexion where the pose and hyperextension priors balance.
            hinge_flexion: vec![[-1.43, -1.23]],
            beta_range: 0.1,
            perturb_translation: 0.05,
            keypoint_noise: 0.0,
            perturb_rotation: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub seed: u64,
    pub truth: BodyParams,
    pub init: BodyParams,
    pub camera: CameraModel,
    pub keypoints: Keypoints2D,
    /// Sweep returns in the world frame.
    pub lidar: Vec<Vector3<f64>>,
    /// `(row, col)` of the beam behind each LiDAR point.
    pub beam_ids: Vec<(u32, u32)>,
    /// Parts whose evidence was corrupted by [`inject_occlusion`].
    pub occluded_parts: BTreeSet<u32>,
}

pub fn sample_truth<R: Rng>(model: &BodyModel, config: &SceneConfig, rng: &mut R) -> Result<BodyParams> {
    let mut p = model.rest_params();
    for b in &mut p.beta {
        *b = rng.random_range(-config.beta_range..=config.beta_range);
    }
    let normal = Normal::new(0.0, config.pose_std).map_err(|e| Error::Config(format!("pose_std: {e}")))?;
    for t in &mut p.theta_body {
        *t = AxisAngle::new(normal.sample(rng), normal.sample(rng), normal.sample(rng));
    }
    if !config.hinge_flexion.is_empty() {
        for (h, range) in model.hinges().iter().zip(config.hinge_flexion.iter().cycle()) {
            p.theta_body[h.joint - 1].0[h.axis] = h.sign * rng.random_range(range[0]..=range[1]);
        }
    }
    // Model y-up, facing +z; camera y-down, looking along +z.
    let yaw = rng.random_range(-config.max_yaw..=config.max_yaw);
    let r = AxisAngle::new(PI, 0.0, 0.0).to_matrix() * AxisAngle::new(0.0, yaw, 0.0).to_matrix();
    p.theta_global = AxisAngle::from_matrix(&r)?;
    let pelvis = model.regress_joints(&model.shaped_template(&p.beta)?)?[0];
    // Put the pelvis on the optical axis at the requested depth.
    p.t_cam = Vector3::new(0.0, 0.0, config.distance) - r * pelvis;
    Ok(p)
}

/// Rotates every joint (root included) by `rotation` radians about a random
/// axis and moves the body `translation` meters in a random direction.
pub fn perturb<R: Rng>(params: &BodyParams, rotation: f64, translation: f64, rng: &mut R) -> Result<BodyParams> {
    let mut axis = || Vector3::from(UnitSphere.sample(rng));
    let mut out = params.clone();
    let kick = |aa: &AxisAngle, dir: Vector3<f64>| AxisAngle::from_matrix(&(AxisAngle(dir * rotation).to_matrix() * aa.to_matrix()));
    out.theta_global = kick(&params.theta_global, axis())?;
    for t in &mut out.theta_body {
        *t = kick(t, axis())?;
    }
    out.t_cam += axis() * translation;
    Ok(out)
}

/// Exact projections of the posed joints, one per keypoint link.
pub fn project_keypoints(model: &BodyModel, params: &BodyParams, camera: &CameraModel, conf: f64) -> Result<Keypoints2D> {
    let (_, joints) = model.pose_mesh(params)?;
    let mut points = Vec::with_capacity(model.keypoint_map().len());
    for link in model.keypoint_map() {
        let uv = camera.project_world(&joints[link.joint])?;
        points.push(Keypoint {
            joint_id: link.detector,
            x: uv.x,
            y: uv.y,
            conf,
        });
    }
    Keypoints2D::new(points)
}

pub fn synthesize(model: &BodyModel, config: &SceneConfig, seed: u64) -> Result<SyntheticScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = sample_truth(model, config, &mut rng)?;
    observe(model, config, truth, seed, &mut rng)
}

/// Like [`synthesize`], with given ground-truth parameters.
pub fn synthesize_with_truth(model: &BodyModel, config: &SceneConfig, truth: BodyParams, seed: u64) -> Result<SyntheticScene> {
    truth.validate(model.num_betas(), model.num_joints())?;
    observe(model, config, truth, seed, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn observe(model: &BodyModel, config: &SceneConfig, truth: BodyParams, seed: u64, rng: &mut ChaCha8Rng) -> Result<SyntheticScene> {
    let init = perturb(&truth, config.perturb_rotation, config.perturb_translation, rng)?;
    let mut keypoints = project_keypoints(model, &truth, &config.camera, 1.0)?;
    let noise = Normal::new(0.0, config.keypoint_noise).map_err(|e| Error::Config(format!("keypoint_noise: {e}")))?;
    for kp in &mut keypoints.points {
        kp.x += noise.sample(rng);
        kp.y += noise.sample(rng);
    }
    let mesh = model.posed_mesh(&truth)?;
    let sweep = simulate_sweep(&config.sensor, &mesh, &config.camera, seed.wrapping_add(SWEEP_SEED_OFFSET))?;
    let to_world = config.camera.pose.inverse();
    Ok(SyntheticScene {
        seed,
        truth,
        init,
        camera: config.camera.clone(),
        keypoints,
        lidar: sweep.points.iter().map(|p| to_world.apply(p)).collect(),
        beam_ids: sweep.beam_ids,
        occluded_parts: BTreeSet::new(),
    })
}

/// Simulates an occluder in front of `parts`: keypoints of their joints become
/// low-confidence and move by `[max_shift / 2, max_shift]` pixels in a random
/// direction, and their LiDAR returns disappear.
pub fn inject_occlusion<R: Rng>(scene: &mut SyntheticScene, model: &BodyModel, parts: &[u32], conf: f64, max_shift: f64, rng: &mut R) -> Result<()> {
    let sets = model.part_joint_sets();
    let mut joints = BTreeSet::new();
    for &part in parts {
        let set = sets.get(part as usize).ok_or_else(|| Error::Domain(format!("part {part} out of range")))?;
        joints.extend(set.iter().copied());
    }
    let detectors: BTreeSet<usize> = model.keypoint_map().iter().filter(|l| joints.contains(&l.joint)).map(|l| l.detector).collect();
    for kp in &mut scene.keypoints.points {
        if detectors.contains(&kp.joint_id) {
            let angle = rng.random_range(0.0..2.0 * PI);
            let shift = rng.random_range(0.5 * max_shift..=max_shift);
            kp.x += shift * angle.cos();
            kp.y += shift * angle.sin();
            kp.conf = conf;
        }
    }
    let (vertices, _) = model.pose_mesh(&scene.truth)?;
    let index = NnIndex::build(&vertices)?;
    let of_vertex = model.part_of_vertex();
    let keep: Vec<bool> = scene.lidar.iter().map(|p| !parts.contains(&of_vertex[index.nearest(p).0])).collect();
    let mut k = keep.iter();
    scene.lidar.retain(|_| *k.next().unwrap());
    let mut k = keep.iter();
    scene.beam_ids.retain(|_| *k.next().unwrap());
    scene.occluded_parts.extend(parts.iter().copied());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body_model::{toy_model, ToyModelConfig};
    use crate::lidar_sim::builtin_spec;

    fn scene(seed: u64) -> (BodyModel, SceneConfig, SyntheticScene) {
        let model = toy_model(&ToyModelConfig::default()).unwrap();
        let config = SceneConfig::standard(builtin_spec("Ouster-64").unwrap().noiseless());
        let s = synthesize(&model, &config, seed).unwrap();
        (model, config, s)
    }

    #[test]
    fn body_is_in_view_and_upright() {
        let (model, config, s) = scene(3);
        let (verts, joints) = model.pose_mesh(&s.truth).unwrap();
        for v in &verts {
            let uv = config.camera.project_world(v).unwrap();
            assert!(config.camera.contains_pixel(&uv));
        }
        // head above pelvis means smaller image y
        assert!(joints[3].y < joints[0].y - 0.5);
        assert!((joints[0] - Vector3::new(0.0, 0.0, 4.0)).norm() < 1e-9);
        assert!(s.lidar.len() > 300);
    }

    #[test]
    fn hinges_are_flexed() {
        let (model, _, s) = scene(4);
        for h in model.hinges() {
            let flex = h.sign * s.truth.theta_body[h.joint - 1].0[h.axis];
            assert!((-1.43..=-1.23).contains(&flex), "{flex}");
        }
    }

    #[test]
    fn perturbation_has_requested_size() {
        let (_, _, s) = scene(5);
        assert!(((s.init.t_cam - s.truth.t_cam).norm() - 0.05).abs() < 1e-12);
        let rel = |a: &AxisAngle, b: &AxisAngle| RigidTransform::new(a.to_matrix() * b.to_matrix().transpose(), Vector3::zeros()).unwrap().rotation_angle();
        assert!((rel(&s.init.theta_global, &s.truth.theta_global) - 0.1).abs() < 1e-9);
        for (a, b) in s.init.theta_body.iter().zip(&s.truth.theta_body) {
            assert!((rel(a, b) - 0.1).abs() < 1e-9);
        }
        assert_eq!(s.init.beta, s.truth.beta);
    }

    #[test]
    fn keypoints_are_exact_projections() {
        let (model, config, s) = scene(6);
        let (_, joints) = model.pose_mesh(&s.truth).unwrap();
        for kp in &s.keypoints.points {
            let uv = config.camera.project_world(&joints[kp.joint_id]).unwrap();
            assert!((uv.x - kp.x).abs() < 1e-9 && (uv.y - kp.y).abs() < 1e-9);
        }
    }

    #[test]
    fn same_seed_same_scene() {
        let (_, _, a) = scene(9);
        let (_, _, b) = scene(9);
        let (_, _, c) = scene(10);
        assert_eq!(a, b);
        assert_ne!(a.truth, c.truth);
    }

    #[test]
    fn given_truth_is_observed_like_a_sampled_one() {
        let (model, config, a) = scene(9);
        let b = synthesize_with_truth(&model, &config, a.truth.clone(), 9).unwrap();
        assert_eq!(b.truth, a.truth);
        assert_eq!(b.lidar, a.lidar);
        assert_eq!(b.keypoints, a.keypoints);
        assert_eq!(b, synthesize_with_truth(&model, &config, a.truth.clone(), 9).unwrap());
    }

    #[test]
    fn occlusion_hides_part() {
        let (model, _, mut s) = scene(7);
        let before = s.lidar.len();
        assert_eq!(s.beam_ids.len(), before);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        inject_occlusion(&mut s, &model, &[4], 0.2, 40.0, &mut rng).unwrap();
        assert!(s.lidar.len() < before);
        assert_eq!(s.beam_ids.len(), s.lidar.len());
        for j in &model.part_joint_sets()[4] {
            assert_eq!(s.keypoints.conf(*j), 0.2);
        }
        assert_eq!(s.keypoints.conf(0), 1.0);
        assert!(inject_occlusion(&mut s, &model, &[99], 0.2, 40.0, &mut rng).is_err());
    }
}
