use std::collections::BTreeSet;

use super::{check_spec, class, Cell, FreeSpace, HumanCells, StaticMap, VoxelGrid};
use crate::geometry::GridSpec;
use crate::{Error, Result};

/// Combines one frame's evidence into a labeled grid.
///
/// Each cell takes the first of: pedestrian (lowest instance id when humans
/// overlap), static class, free, unknown. The result does not depend on the
/// order of `humans`.
pub fn assemble_frame(static_map: &StaticMap, humans: &[HumanCells], free: &FreeSpace, spec: &GridSpec) -> Result<VoxelGrid> {
    check_spec("static map", &static_map.spec, spec)?;
    check_spec("free space", &free.spec, spec)?;
    let n = spec.num_cells();
    let mut ids = BTreeSet::new();
    for h in humans {
        if h.instance == 0 || !ids.insert(h.instance) {
            return Err(Error::Domain(format!("human instance ids must be unique and non-zero (got {})", h.instance)));
        }
        if let Some(&c) = h.cells.iter().next_back().filter(|&&c| c >= n) {
            return Err(Error::Domain(format!("human {} covers cell {c} outside the grid", h.instance)));
        }
    }

    let mut grid = VoxelGrid::new(spec.clone());
    for &c in &free.free {
        grid.set(c, Cell::FREE)?;
    }
    for (&c, &label) in &static_map.labels {
        grid.set(c, Cell::occupied(label, 0, None))?;
    }
    let mut ordered: Vec<&HumanCells> = humans.iter().collect();
    // Highest id first so the lowest id is written last and wins.
    ordered.sort_by_key(|h| std::cmp::Reverse(h.instance));
    for h in ordered {
        for &c in &h.cells {
            grid.set(c, Cell::occupied(class::PEDESTRIAN, h.instance, h.velocity))?;
        }
    }
    Ok(grid)
}
