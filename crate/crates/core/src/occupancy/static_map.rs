use std::collections::{BTreeMap, HashMap};

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_spec, class};
use crate::geometry::{CameraModel, GridSpec, RigidTransform};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub position: Vector3<f64>,
    pub class: u8,
}

/// Box with axes given by the columns of `rotation`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center: Vector3<f64>,
    pub half_extents: Vector3<f64>,
    pub rotation: Matrix3<f64>,
}

impl OrientedBox {
    pub fn axis_aligned(min: Vector3<f64>, max: Vector3<f64>) -> Self {
        OrientedBox {
            center: (min + max) * 0.5,
            half_extents: (max - min) * 0.5,
            rotation: Matrix3::identity(),
        }
    }

    /// Closed box containment.
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let local = self.rotation.transpose() * (p - self.center);
        (0..3).all(|a| local[a].abs() <= self.half_extents[a])
    }
}

/// Per-pixel detection mask in the image of `camera`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMask {
    pub camera: CameraModel,
    /// Row-major, `width * height` entries.
    pub pixels: Vec<bool>,
}

impl ImageMask {
    pub fn new(camera: CameraModel, pixels: Vec<bool>) -> Result<Self> {
        let n = camera.width as usize * camera.height as usize;
        if pixels.len() != n {
            return Err(Error::Dimension {
                what: "image mask pixels",
                expected: n,
                got: pixels.len(),
            });
        }
        Ok(ImageMask { camera, pixels })
    }

    /// Points in front of the camera whose projection lands on a set pixel.
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let Ok(uv) = self.camera.project_world(p) else {
            return false;
        };
        if !self.camera.contains_pixel(&uv) {
            return false;
        }
        let (u, v) = (uv.x.floor() as usize, uv.y.floor() as usize);
        self.pixels[v * self.camera.width as usize + u]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DynamicMask {
    Box(OrientedBox),
    Image(ImageMask),
}

impl DynamicMask {
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        match self {
            DynamicMask::Box(b) => b.contains(p),
            DynamicMask::Image(m) => m.contains(p),
        }
    }
}

/// Drops every point inside any mask.
pub fn mask_dynamic_points(cloud: &[LabeledPoint], masks: &[DynamicMask]) -> Vec<LabeledPoint> {
    cloud.iter().filter(|p| !masks.iter().any(|m| m.contains(&p.position))).copied().collect()
}

/// One sweep: labeled points in the sensor frame and the sensor-to-world pose.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub pose: RigidTransform,
    pub points: Vec<LabeledPoint>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StaticConfig {
    /// Reject points more than this far (m) below the lowest road or terrain
    /// point of their grid column. `None` disables the check.
    pub ground_tolerance: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccumulationReport {
    pub inserted: usize,
    pub out_of_bounds: usize,
    pub below_ground: usize,
    pub unlabeled: usize,
}

impl AccumulationReport {
    fn merge(mut self, o: AccumulationReport) -> Self {
        self.inserted += o.inserted;
        self.out_of_bounds += o.out_of_bounds;
        self.below_ground += o.below_ground;
        self.unlabeled += o.unlabeled;
        self
    }
}

/// Per-cell class histograms.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelCounts {
    spec: GridSpec,
    cells: HashMap<usize, BTreeMap<u8, u32>>,
}

impl LabelCounts {
    pub fn new(spec: GridSpec) -> Self {
        LabelCounts {
            spec,
            cells: HashMap::new(),
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn add(&mut self, cell: usize, class: u8) {
        *self.cells.entry(cell).or_default().entry(class).or_insert(0) += 1;
    }

    pub fn get(&self, cell: usize) -> Option<&BTreeMap<u8, u32>> {
        self.cells.get(&cell)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Adds `other`'s counts into `self`. Merging is commutative and associative.
    pub fn merge(&mut self, other: &LabelCounts) -> Result<()> {
        check_spec("label count merge", &self.spec, &other.spec)?;
        for (cell, hist) in &other.cells {
            let mine = self.cells.entry(*cell).or_default();
            for (c, n) in hist {
                *mine.entry(*c).or_insert(0) += n;
            }
        }
        Ok(())
    }

    /// Histograms by increasing cell index.
    pub fn sorted(&self) -> Vec<(usize, &BTreeMap<u8, u32>)> {
        let mut out: Vec<_> = self.cells.iter().map(|(k, v)| (*k, v)).collect();
        out.sort_unstable_by_key(|(k, _)| *k);
        out
    }
}

fn column_of(spec: &GridSpec, p: &Vector3<f64>) -> Option<(usize, usize)> {
    let probe = Vector3::new(p.x, p.y, spec.min().z);
    spec.cell_of(&probe).map(|c| (c[0], c[1]))
}

/// Moves every frame into the world frame and counts labels per cell.
///
/// Frames are processed in parallel and merged; the result does not depend on
/// frame order or thread count.
pub fn accumulate_static(frames: &[Frame], spec: &GridSpec, config: &StaticConfig) -> Result<(LabelCounts, AccumulationReport)> {
    if let Some(t) = config.ground_tolerance {
        if !(t >= 0.0) {
            return Err(Error::Config(format!("ground tolerance must be non-negative, got {t}")));
        }
    }
    let world: Vec<Vec<LabeledPoint>> = frames
        .par_iter()
        .map(|f| {
            f.points
                .iter()
                .map(|p| LabeledPoint {
                    position: f.pose.apply(&p.position),
                    class: p.class,
                })
                .collect()
        })
        .collect();

    let ground = config.ground_tolerance.map(|_| {
        let mut ground: HashMap<(usize, usize), f64> = HashMap::new();
        for p in world.iter().flatten().filter(|p| class::is_ground(p.class)) {
            if let Some(col) = column_of(spec, &p.position) {
                let z = ground.entry(col).or_insert(f64::INFINITY);
                *z = z.min(p.position.z);
            }
        }
        ground
    });

    let partials: Vec<(LabelCounts, AccumulationReport)> = world
        .par_iter()
        .map(|points| {
            let mut counts = LabelCounts::new(spec.clone());
            let mut report = AccumulationReport::default();
            for p in points {
                if p.class == class::NONE || class::name(p.class).is_none() {
                    report.unlabeled += 1;
                    continue;
                }
                let Some(cell) = spec.cell_of(&p.position) else {
                    report.out_of_bounds += 1;
                    continue;
                };
                if let (Some(ground), Some(tol)) = (&ground, config.ground_tolerance) {
                    if let Some(z) = ground.get(&(cell[0], cell[1])) {
                        if p.position.z < z - tol {
                            report.below_ground += 1;
                            continue;
                        }
                    }
                }
                counts.add(spec.linear(cell), p.class);
                report.inserted += 1;
            }
            (counts, report)
        })
        .collect();

    let mut counts = LabelCounts::new(spec.clone());
    let mut report = AccumulationReport::default();
    for (c, r) in &partials {
        counts.merge(c)?;
        report = report.merge(*r);
    }
    if report.out_of_bounds > 0 {
        log::debug!("{} points fell outside the grid", report.out_of_bounds);
    }
    Ok((counts, report))
}

/// Winning class per cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaticMap {
    pub spec: GridSpec,
    pub labels: BTreeMap<usize, u8>,
}

/// Majority class per cell; ties go to the lowest class id.
pub fn vote_static(counts: &LabelCounts) -> StaticMap {
    let labels = counts
        .cells
        .iter()
        .filter_map(|(cell, hist)| {
            let mut best: Option<(u8, u32)> = None;
            for (&c, &n) in hist {
                if n > 0 && best.is_none_or(|(_, m)| n > m) {
                    best = Some((c, n));
                }
            }
            best.map(|(c, _)| (*cell, c))
        })
        .collect();
    StaticMap {
        spec: counts.spec.clone(),
        labels,
    }
}
