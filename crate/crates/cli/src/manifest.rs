//! JSON manifests read and written by the commands. Relative paths inside a
//! manifest are resolved against the manifest's directory.

use std::path::{Path, PathBuf};

use meshfuse::body_model::BodyParams;
use meshfuse::geometry::{GridSpec, RigidTransform};
use meshfuse::lidar_sim::SensorSpec;
use meshfuse::occupancy::DynamicMask;
use serde::{Deserialize, Serialize};

pub const SCENE_MANIFEST: &str = "scene.json";

/// Written by `simulate`, read by `fit` and `gradcheck`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub seed: u64,
    pub sensor: SensorSpec,
    /// Body-model archive the scene was generated with; the toy model when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    pub truth: BodyParams,
    pub files: SceneFiles,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneFiles {
    pub truth: PathBuf,
    pub init: PathBuf,
    pub keypoints: PathBuf,
    pub camera: PathBuf,
    /// World-frame points.
    pub sweep: PathBuf,
}

/// Input of `fuse`.
///
/// ```json
/// {
///   "grid": {"min": [0.4, -4.8, -1.0], "max": [10.0, 4.8, 3.8], "resolution": 0.2},
///   "ground_tolerance": 0.3,
///   "masks": [{"kind": "box", "center": [5, 0, 0], "half_extents": [1, 1, 1],
///              "rotation": [1, 0, 0, 0, 1, 0, 0, 0, 1]}],
///   "frames": [{
///     "name": "000",
///     "pose": {"rotation": [1, 0, 0, 0, 1, 0, 0, 0, 1], "translation": [0, 0, 0]},
///     "points": "000_labeled.csv",
///     "humans": [{"instance": 1, "params": "000_person1.json", "velocity": [0.8, 0.0]}]
///   }]
/// }
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuseManifest {
    /// Falls back to the configuration's grid.
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub ground_tolerance: Option<f64>,
    /// Also mark cells inside each body, not only those its surface crosses.
    #[serde(default)]
    pub fill_humans: bool,
    /// World-frame regions whose points are excluded from the static map.
    #[serde(default)]
    pub masks: Vec<DynamicMask>,
    pub frames: Vec<FuseFrame>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuseFrame {
    pub name: String,
    /// Sensor to world.
    pub pose: RigidTransform,
    /// Sensor-frame `x,y,z,class` CSV.
    pub points: PathBuf,
    #[serde(default)]
    pub humans: Vec<FuseHuman>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuseHuman {
    pub instance: u16,
    /// World-frame body parameters.
    pub params: PathBuf,
    #[serde(default)]
    pub velocity: Option<[f32; 2]>,
}

pub(crate) fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
