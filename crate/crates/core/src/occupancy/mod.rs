//! Semantic occupancy: static label fusion over many frames, rasterized humans
//! with instance ids, ray-carved free space, and per-frame assembly into a
//! [`VoxelGrid`].

mod assemble;
mod free_space;
mod human;
mod static_map;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::geometry::GridSpec;
use crate::{Error, Result};

pub use assemble::assemble_frame;
pub use free_space::{complete_free_unknown, FreeSpace, SensorRay};
pub use human::{rasterize_human, triangle_box_overlap, HumanCells};
pub use static_map::{
    accumulate_static, mask_dynamic_points, vote_static, AccumulationReport, DynamicMask, Frame, ImageMask, LabelCounts, LabeledPoint,
    OrientedBox, StaticConfig, StaticMap,
};

/// Semantic class ids. Id 0 means "no class".
pub mod class {
    pub const NONE: u8 = 0;
    pub const PEDESTRIAN: u8 = 1;
    pub const CAR: u8 = 2;
    pub const OTHER_STRUCTURE: u8 = 3;
    pub const POLE: u8 = 4;
    pub const ROAD: u8 = 5;
    pub const TERRAIN: u8 = 6;
    pub const TRUCK: u8 = 7;
    pub const TWO_WHEELER: u8 = 8;
    pub const VEGETATION: u8 = 9;

    pub const NAMES: [&str; 10] = [
        "none",
        "pedestrian",
        "car",
        "other_structure",
        "pole",
        "road",
        "terrain",
        "truck",
        "two_wheeler",
        "vegetation",
    ];

    /// Every labeled class, in id order.
    pub const ALL: [u8; 9] = [1, 2, 3, 4, 5, 6, 7, 8, 9];

    /// Classes segmented per instance in panoptic evaluation.
    pub fn is_thing(c: u8) -> bool {
        c == PEDESTRIAN
    }

    /// Classes that estimate the local ground height.
    pub fn is_ground(c: u8) -> bool {
        c == ROAD || c == TERRAIN
    }

    pub fn name(c: u8) -> Option<&'static str> {
        NAMES.get(c as usize).copied()
    }

    pub fn from_name(name: &str) -> Option<u8> {
        NAMES.iter().position(|n| *n == name).map(|i| i as u8)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum CellState {
    Unknown = 0,
    Free = 1,
    Occupied = 2,
}

impl CellState {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(CellState::Unknown),
            1 => Some(CellState::Free),
            2 => Some(CellState::Occupied),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub state: CellState,
    pub class: u8,
    /// 0 when the cell belongs to no instance.
    pub instance: u16,
    /// Planar velocity `(v_x, v_y)` in m/s.
    pub velocity: Option<[f32; 2]>,
}

impl Cell {
    pub const UNKNOWN: Cell = Cell {
        state: CellState::Unknown,
        class: class::NONE,
        instance: 0,
        velocity: None,
    };

    pub const FREE: Cell = Cell {
        state: CellState::Free,
        class: class::NONE,
        instance: 0,
        velocity: None,
    };

    pub fn occupied(class: u8, instance: u16, velocity: Option<[f32; 2]>) -> Cell {
        Cell {
            state: CellState::Occupied,
            class,
            instance,
            velocity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let occupied = self.state == CellState::Occupied;
        if occupied != (self.class != class::NONE) {
            return Err(Error::Domain(format!("cell {self:?}: a class is required exactly on occupied cells")));
        }
        if self.class as usize >= class::NAMES.len() {
            return Err(Error::Domain(format!("unknown class id {}", self.class)));
        }
        if self.instance != 0 && !class::is_thing(self.class) {
            return Err(Error::Domain(format!("instance id on non-thing class {}", self.class)));
        }
        if !occupied && self.velocity.is_some() {
            return Err(Error::Domain("velocity on a cell that is not occupied".into()));
        }
        Ok(())
    }
}

/// Grids above this many cells store only their known cells.
pub const DENSE_CELL_LIMIT: usize = 10_000_000;

#[derive(Clone, Debug)]
enum Storage {
    Dense(Vec<Cell>),
    Sparse(HashMap<usize, Cell>),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateCounts {
    pub unknown: usize,
    pub free: usize,
    pub occupied: usize,
}

/// Labeled occupancy over a [`GridSpec`]; every cell starts unknown.
#[derive(Clone, Debug)]
pub struct VoxelGrid {
    spec: GridSpec,
    storage: Storage,
}

impl PartialEq for VoxelGrid {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.known_cells() == other.known_cells()
    }
}

impl VoxelGrid {
    pub fn new(spec: GridSpec) -> Self {
        let sparse = spec.num_cells() > DENSE_CELL_LIMIT;
        Self::with_storage(spec, sparse)
    }

    /// Forces dense or sparse storage regardless of size.
    pub fn with_storage(spec: GridSpec, sparse: bool) -> Self {
        let storage = if sparse {
            Storage::Sparse(HashMap::new())
        } else {
            Storage::Dense(vec![Cell::UNKNOWN; spec.num_cells()])
        };
        VoxelGrid { spec, storage }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.storage, Storage::Sparse(_))
    }

    pub fn get(&self, index: usize) -> Cell {
        match &self.storage {
            Storage::Dense(v) => v[index],
            Storage::Sparse(m) => m.get(&index).copied().unwrap_or(Cell::UNKNOWN),
        }
    }

    pub fn set(&mut self, index: usize, cell: Cell) -> Result<()> {
        if index >= self.spec.num_cells() {
            return Err(Error::Domain(format!("cell {index} outside a grid of {} cells", self.spec.num_cells())));
        }
        cell.validate()?;
        match &mut self.storage {
            Storage::Dense(v) => v[index] = cell,
            Storage::Sparse(m) => {
                if cell == Cell::UNKNOWN {
                    m.remove(&index);
                } else {
                    m.insert(index, cell);
                }
            }
        }
        Ok(())
    }

    /// Cells that are not unknown, by increasing index.
    pub fn known_cells(&self) -> Vec<(usize, Cell)> {
        match &self.storage {
            Storage::Dense(v) => v.iter().enumerate().filter(|(_, c)| c.state != CellState::Unknown).map(|(i, c)| (i, *c)).collect(),
            Storage::Sparse(m) => {
                let mut out: Vec<(usize, Cell)> = m.iter().filter(|(_, c)| c.state != CellState::Unknown).map(|(i, c)| (*i, *c)).collect();
                out.sort_unstable_by_key(|(i, _)| *i);
                out
            }
        }
    }

    pub fn state_counts(&self) -> StateCounts {
        let mut counts = StateCounts::default();
        for (_, c) in self.known_cells() {
            match c.state {
                CellState::Free => counts.free += 1,
                CellState::Occupied => counts.occupied += 1,
                CellState::Unknown => {}
            }
        }
        counts.unknown = self.spec.num_cells() - counts.free - counts.occupied;
        counts
    }

    pub fn has_velocity(&self) -> bool {
        self.known_cells().iter().any(|(_, c)| c.velocity.is_some())
    }

    pub fn validate(&self) -> Result<()> {
        for (i, c) in self.known_cells() {
            c.validate().map_err(|e| Error::Domain(format!("cell {i}: {e}")))?;
        }
        Ok(())
    }
}

pub(crate) fn check_spec(what: &str, a: &GridSpec, b: &GridSpec) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::Config(format!("{what}: grid specs differ ({:?} vs {:?})", a, b)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> GridSpec {
        GridSpec::new([0.0; 3], [1.0, 1.0, 0.5], 0.25).unwrap()
    }

    #[test]
    fn class_table() {
        assert_eq!(class::name(class::TWO_WHEELER), Some("two_wheeler"));
        assert_eq!(class::from_name("vegetation"), Some(9));
        assert_eq!(class::from_name("sky"), None);
        assert!(class::is_thing(class::PEDESTRIAN) && !class::is_thing(class::CAR));
    }

    #[test]
    fn cell_invariants() {
        assert!(Cell::occupied(class::ROAD, 0, None).validate().is_ok());
        assert!(Cell::occupied(class::PEDESTRIAN, 3, Some([1.0, 0.0])).validate().is_ok());
        assert!(Cell::occupied(class::ROAD, 3, None).validate().is_err());
        assert!(Cell::occupied(class::NONE, 0, None).validate().is_err());
        assert!(Cell::occupied(42, 0, None).validate().is_err());
        let free_with_class = Cell { class: class::ROAD, ..Cell::FREE };
        assert!(free_with_class.validate().is_err());
    }

    #[test]
    fn dense_and_sparse_agree() {
        let mut a = VoxelGrid::with_storage(spec(), false);
        let mut b = VoxelGrid::with_storage(spec(), true);
        for g in [&mut a, &mut b] {
            g.set(3, Cell::FREE).unwrap();
            g.set(7, Cell::occupied(class::POLE, 0, None)).unwrap();
            g.set(9, Cell::FREE).unwrap();
            g.set(9, Cell::UNKNOWN).unwrap();
        }
        assert!(!a.is_sparse() && b.is_sparse());
        assert_eq!(a, b);
        assert_eq!(a.get(7).class, class::POLE);
        assert_eq!(b.get(9), Cell::UNKNOWN);
        let counts = a.state_counts();
        assert_eq!(counts, StateCounts { unknown: 30, free: 1, occupied: 1 });
        assert_eq!(counts, b.state_counts());
    }

    #[test]
    fn large_grids_are_sparse() {
        let big = GridSpec::new([0.0; 3], [100.0, 100.0, 10.0], 0.02).unwrap();
        assert!(VoxelGrid::new(big).is_sparse());
        assert!(!VoxelGrid::new(GridSpec::benchmark()).is_sparse());
    }

    #[test]
    fn set_rejects_bad_cells() {
        let mut g = VoxelGrid::new(spec());
        assert!(g.set(1000, Cell::FREE).is_err());
        assert!(g.set(0, Cell::occupied(class::CAR, 5, None)).is_err());
    }
}
