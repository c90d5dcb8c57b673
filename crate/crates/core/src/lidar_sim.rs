//! Spinning-LiDAR simulation on triangle meshes.
//!
//! Rays are emitted from the camera center on a `rows x cols` lattice and kept
//! only when they project inside the image. Each return gets angular jitter
//! (before intersection), a signed range bias plus Gaussian range noise, and
//! independent dropout. Every ray owns a counter-based random stream keyed by
//! `(seed, row, col)`, so results do not depend on scheduling.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{CameraModel, MeshBvh, TriangleMesh};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub name: String,
    pub vertical_channels: usize,
    pub horizontal_channels: usize,
    /// Magnitude of the signed per-point range bias (mm).
    pub range_noise_bias: f64,
    /// Gaussian range noise std (mm).
    pub range_noise_std: f64,
    /// Angular pointing noise (degrees).
    pub angular_noise_mean: f64,
    pub angular_noise_std: f64,
    /// Valid return range (m).
    pub range_min: f64,
    pub range_max: f64,
    pub dropout_prob: f64,
    /// Elevation span of the beam fan (degrees, lower then upper).
    pub vertical_fov_deg: [f64; 2],
}

/// Elevation span of an Ouster OS1 (degrees).
pub const OUSTER_VERTICAL_FOV_DEG: [f64; 2] = [-22.5, 22.5];

impl SensorSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("sensor {}: {m}", self.name)));
        if self.vertical_channels == 0 || self.horizontal_channels == 0 {
            return bad("channel counts must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return bad(format!("dropout probability {} outside [0,1)", self.dropout_prob));
        }
        if !(self.range_min > 0.0 && self.range_min < self.range_max && self.range_max.is_finite()) {
            return bad(format!("invalid range [{}, {}]", self.range_min, self.range_max));
        }
        if !(self.range_noise_std >= 0.0 && self.angular_noise_std >= 0.0)
            || !self.range_noise_bias.is_finite()
            || !self.angular_noise_mean.is_finite()
        {
            return bad("noise parameters must be finite with non-negative std".into());
        }
        let [lo, hi] = self.vertical_fov_deg;
        if !(-90.0..=90.0).contains(&lo) || !(-90.0..=90.0).contains(&hi) || lo >= hi {
            return bad(format!("vertical field of view [{lo}, {hi}] is invalid"));
        }
        Ok(())
    }

    /// Same lattice with every noise source and dropout disabled.
    pub fn noiseless(&self) -> SensorSpec {
        SensorSpec {
            range_noise_bias: 0.0,
            range_noise_std: 0.0,
            angular_noise_mean: 0.0,
            angular_noise_std: 0.0,
            dropout_prob: 0.0,
            ..self.clone()
        }
    }

    fn ouster(name: &str, rows: usize, cols: usize) -> SensorSpec {
        SensorSpec {
            name: name.into(),
            vertical_channels: rows,
            horizontal_channels: cols,
            range_noise_bias: 25.0,
            range_noise_std: 10.0,
            angular_noise_mean: 0.0,
            angular_noise_std: 0.01,
            range_min: 0.5,
            range_max: 90.0,
            dropout_prob: 0.10,
            vertical_fov_deg: OUSTER_VERTICAL_FOV_DEG,
        }
    }
}

pub fn builtin_specs() -> Vec<SensorSpec> {
    vec![
        SensorSpec::ouster("Ouster-32", 32, 512),
        SensorSpec::ouster("Ouster-64", 64, 1024),
        SensorSpec::ouster("Ouster-128", 128, 2048),
    ]
}

/// Looks up a builtin sensor by name, ignoring case.
pub fn builtin_spec(name: &str) -> Option<SensorSpec> {
    builtin_specs().into_iter().find(|s| s.name.eq_ignore_ascii_case(name))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    /// World frame.
    pub origin: Vector3<f64>,
    /// Unit direction in the camera frame.
    pub dir_cam: Vector3<f64>,
    pub row: u32,
    pub col: u32,
    elevation: f64,
    azimuth: f64,
}

fn direction(elevation: f64, azimuth: f64) -> Vector3<f64> {
    let (se, ce) = elevation.sin_cos();
    let (sa, ca) = azimuth.sin_cos();
    Vector3::new(ce * sa, -se, ce * ca)
}

/// Lattice rays that fall inside the camera image, in `(row, col)` order.
///
/// Row 0 is the top beam. Rows are evenly spaced in `sin(elevation)` so every
/// lattice cell covers the same solid angle; columns are evenly spaced in azimuth
/// around the optical axis.
pub fn generate_rays(spec: &SensorSpec, camera: &CameraModel) -> Vec<Ray> {
    let rows = spec.vertical_channels;
    let cols = spec.horizontal_channels;
    let [lo, hi] = spec.vertical_fov_deg;
    let (s_lo, s_hi) = (lo.to_radians().sin(), hi.to_radians().sin());
    let origin = camera.center();
    let mut out = Vec::new();
    for r in 0..rows {
        let s = s_hi - (r as f64 + 0.5) * (s_hi - s_lo) / rows as f64;
        let elevation = s.clamp(-1.0, 1.0).asin();
        for c in 0..cols {
            let azimuth = -std::f64::consts::PI + (c as f64 + 0.5) * std::f64::consts::TAU / cols as f64;
            let dir_cam = direction(elevation, azimuth);
            if camera.sees_direction(&dir_cam) {
                out.push(Ray {
                    origin,
                    dir_cam,
                    row: r as u32,
                    col: c as u32,
                    elevation,
                    azimuth,
                });
            }
        }
    }
    out
}

/// Simulated returns in the camera (sensor) frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Sweep {
    pub points: Vec<Vector3<f64>>,
    /// `(row, col)` of the beam that produced each point.
    pub beam_ids: Vec<(u32, u32)>,
}

impl Sweep {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Random stream owned by one lattice ray.
pub(crate) fn ray_rng(seed: u64, spec: &SensorSpec, row: u32, col: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64 * spec.horizontal_channels as u64 + col as u64);
    rng
}

type BeamReturn = (Vector3<f64>, (u32, u32));

pub fn simulate_sweep(spec: &SensorSpec, mesh: &TriangleMesh, camera: &CameraModel, seed: u64) -> Result<Sweep> {
    spec.validate()?;
    if mesh.is_empty() {
        return Err(Error::Domain("cannot simulate a sweep on an empty mesh".into()));
    }
    let bvh = MeshBvh::build(mesh);
    let rays = generate_rays(spec, camera);
    let to_world = camera.pose.inverse();
    let angular = Normal::new(spec.angular_noise_mean, spec.angular_noise_std)
        .map_err(|e| Error::Config(format!("angular noise: {e}")))?;
    let range = Normal::new(0.0, spec.range_noise_std).map_err(|e| Error::Config(format!("range noise: {e}")))?;

    let returns: Vec<Option<BeamReturn>> = rays
        .par_iter()
        .map(|ray| {
            let mut rng = ray_rng(seed, spec, ray.row, ray.col);
            let d_el = angular.sample(&mut rng).to_radians();
            let d_az = angular.sample(&mut rng).to_radians();
            let dir_cam = direction(ray.elevation + d_el, ray.azimuth + d_az);
            if !camera.sees_direction(&dir_cam) {
                return None;
            }
            let dir_world = to_world.apply_vector(&dir_cam);
            let hit = bvh.first_hit(&ray.origin, &dir_world)?;
            if hit.distance < spec.range_min || hit.distance > spec.range_max {
                return None;
            }
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let noise_mm = sign * spec.range_noise_bias + range.sample(&mut rng);
            let r = hit.distance + noise_mm * 1e-3;
            let dropped = rng.random::<f64>() < spec.dropout_prob;
            if dropped || r < spec.range_min || r > spec.range_max {
                return None;
            }
            Some((dir_cam * r, (ray.row, ray.col)))
        })
        .collect();

    let mut sweep = Sweep::default();
    for (p, id) in returns.into_iter().flatten() {
        sweep.points.push(p);
        sweep.beam_ids.push(id);
    }
    Ok(sweep)
}
