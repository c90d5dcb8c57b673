use std::collections::BTreeSet;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::CellState;
use crate::geometry::{traverse_voxels, GridSpec};

/// A LiDAR beam from the sensor origin to its return, or to the maximum range
/// when nothing came back.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorRay {
    pub origin: Vector3<f64>,
    pub end: Vector3<f64>,
    pub returned: bool,
}

/// Occupied/free/unknown partition of a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreeSpace {
    pub spec: GridSpec,
    pub occupied: BTreeSet<usize>,
    pub free: BTreeSet<usize>,
}

impl FreeSpace {
    pub fn state(&self, cell: usize) -> CellState {
        if self.occupied.contains(&cell) {
            CellState::Occupied
        } else if self.free.contains(&cell) {
            CellState::Free
        } else {
            CellState::Unknown
        }
    }
}

/// Carves free space along every ray. Cells before a return are free; the
/// return's own cell is not. Rays without a return carve their whole length
/// only when `carve_misses` is set. Occupied cells are never freed.
pub fn complete_free_unknown(occupied: &BTreeSet<usize>, rays: &[SensorRay], spec: &GridSpec, carve_misses: bool) -> FreeSpace {
    let free = rays
        .par_iter()
        .filter(|r| r.returned || carve_misses)
        .map(|r| {
            let mut cells = traverse_voxels(&r.origin, &r.end, spec);
            if r.returned {
                if let Some(hit) = spec.cell_of(&r.end) {
                    if cells.last() == Some(&hit) {
                        cells.pop();
                    }
                }
            }
            cells
                .into_iter()
                .map(|c| spec.linear(c))
                .filter(|i| !occupied.contains(i))
                .collect::<BTreeSet<usize>>()
        })
        .reduce(BTreeSet::new, |mut a, mut b| {
            if a.len() < b.len() {
                std::mem::swap(&mut a, &mut b);
            }
            a.extend(b);
            a
        });
    FreeSpace {
        spec: spec.clone(),
        occupied: occupied.clone(),
        free,
    }
}
