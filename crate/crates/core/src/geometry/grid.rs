use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::ray::ray_aabb;
use crate::{Error, Result};

pub type CellIndex = [usize; 3];

/// Relative slack allowed when checking that bounds are a whole number of cells.
const COMMENSURATE_TOLERANCE: f64 = 1e-6;

/// Axis-aligned voxel grid geometry.
///
/// Cell `i` along an axis covers `[min + i*res, min + (i+1)*res)`; a point lying
/// exactly on the max bound belongs to the last cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpecRaw", into = "GridSpecRaw")]
pub struct GridSpec {
    min: [f64; 3],
    max: [f64; 3],
    resolution: f64,
    dims: [usize; 3],
}

#[derive(Serialize, Deserialize)]
struct GridSpecRaw {
    min: [f64; 3],
    max: [f64; 3],
    resolution: f64,
}

impl TryFrom<GridSpecRaw> for GridSpec {
    type Error = Error;

    fn try_from(raw: GridSpecRaw) -> Result<Self> {
        GridSpec::new(raw.min, raw.max, raw.resolution)
    }
}

impl From<GridSpec> for GridSpecRaw {
    fn from(g: GridSpec) -> Self {
        GridSpecRaw {
            min: g.min,
            max: g.max,
            resolution: g.resolution,
        }
    }
}

impl GridSpec {
    pub fn new(min: [f64; 3], max: [f64; 3], resolution: f64) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::Config(format!("grid resolution must be positive, got {resolution}")));
        }
        let mut dims = [0usize; 3];
        for a in 0..3 {
            if !(max[a] > min[a]) || !min[a].is_finite() || !max[a].is_finite() {
                return Err(Error::Config(format!(
                    "grid axis {a}: max ({}) must exceed min ({})",
                    max[a], min[a]
                )));
            }
            let cells = (max[a] - min[a]) / resolution;
            let rounded = cells.round();
            if (cells - rounded).abs() > COMMENSURATE_TOLERANCE * rounded.max(1.0) || rounded < 1.0 {
                return Err(Error::Config(format!(
                    "grid axis {a}: extent {} is not a whole number of {resolution} m cells",
                    max[a] - min[a]
                )));
            }
            dims[a] = rounded as usize;
        }
        Ok(GridSpec {
            min,
            max,
            resolution,
            dims,
        })
    }

    /// Evaluation grid: 0.2 m cells over x in [0.4, 10], y in [-4.8, 4.8], z in [-1, 3.8].
    pub fn benchmark() -> Self {
        GridSpec::new([0.4, -4.8, -1.0], [10.0, 4.8, 3.8], 0.2).expect("benchmark grid is commensurate")
    }

    pub fn min(&self) -> Vector3<f64> {
        Vector3::from(self.min)
    }

    pub fn max(&self) -> Vector3<f64> {
        Vector3::from(self.max)
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn num_cells(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    /// Cell holding `p`, or `None` outside the bounds.
    pub fn cell_of(&self, p: &Vector3<f64>) -> Option<CellIndex> {
        if !self.contains(p) {
            return None;
        }
        Some(self.clamped_cell(p))
    }

    fn clamped_cell(&self, p: &Vector3<f64>) -> CellIndex {
        let mut c = [0usize; 3];
        for a in 0..3 {
            let i = ((p[a] - self.min[a]) / self.resolution).floor();
            c[a] = (i.max(0.0) as usize).min(self.dims[a] - 1);
        }
        c
    }

    pub fn linear(&self, c: CellIndex) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    pub fn unlinear(&self, i: usize) -> CellIndex {
        let x = i % self.dims[0];
        let y = (i / self.dims[0]) % self.dims[1];
        let z = i / (self.dims[0] * self.dims[1]);
        [x, y, z]
    }

    pub fn cell_bounds(&self, c: CellIndex) -> (Vector3<f64>, Vector3<f64>) {
        let lo = Vector3::new(
            self.min[0] + c[0] as f64 * self.resolution,
            self.min[1] + c[1] as f64 * self.resolution,
            self.min[2] + c[2] as f64 * self.resolution,
        );
        (lo, lo + Vector3::repeat(self.resolution))
    }

    pub fn cell_center(&self, c: CellIndex) -> Vector3<f64> {
        let (lo, hi) = self.cell_bounds(c);
        (lo + hi) * 0.5
    }

    pub fn in_range(&self, c: [i64; 3]) -> bool {
        (0..3).all(|a| c[a] >= 0 && (c[a] as usize) < self.dims[a])
    }
}

/// Cells crossed by the segment `origin -> end`, in order from `origin`, each once.
///
/// Consecutive cells share a face. Portions of the segment outside the grid are
/// clipped away; a segment that misses the grid yields an empty list.
pub fn traverse_voxels(origin: &Vector3<f64>, end: &Vector3<f64>, grid: &GridSpec) -> Vec<CellIndex> {
    let d = end - origin;
    if d.norm_squared() == 0.0 {
        return grid.cell_of(origin).into_iter().collect();
    }
    let Some((enter, exit)) = ray_aabb(origin, &d, &grid.min(), &grid.max()) else {
        return Vec::new();
    };
    let (t0, t1) = (enter.max(0.0), exit.min(1.0));
    if t0 > t1 {
        return Vec::new();
    }
    let mut cell = grid.clamped_cell(&(origin + d * t0));
    let last = grid.clamped_cell(&(origin + d * t1));

    let res = grid.resolution;
    let mut step = [0i64; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for a in 0..3 {
        if d[a] > 0.0 {
            step[a] = 1;
            let boundary = grid.min[a] + (cell[a] + 1) as f64 * res;
            t_max[a] = (boundary - origin[a]) / d[a];
            t_delta[a] = res / d[a];
        } else if d[a] < 0.0 {
            step[a] = -1;
            let boundary = grid.min[a] + cell[a] as f64 * res;
            t_max[a] = (boundary - origin[a]) / d[a];
            t_delta[a] = -res / d[a];
        }
    }

    let max_steps = grid.dims.iter().sum::<usize>() + 3;
    let mut out = Vec::with_capacity(max_steps.min(1024));
    for _ in 0..max_steps {
        out.push(cell);
        if cell == last {
            break;
        }
        let mut axis = 0;
        for a in 1..3 {
            if t_max[a] < t_max[axis] {
                axis = a;
            }
        }
        if t_max[axis] > t1 {
            break;
        }
        let next = cell[axis] as i64 + step[axis];
        if next < 0 || next as usize >= grid.dims[axis] {
            break;
        }
        cell[axis] = next as usize;
        t_max[axis] += t_delta[axis];
    }
    out
}
