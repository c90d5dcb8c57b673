//! Voxel grids.
//!
//! ```text
//! magic "VOX1", u32 version = 1
//! 3 f64 min, 3 f64 max, f64 resolution (m)
//! 3 u32 dims
//! u8 flags: bit 0 = velocity present, bit 1 = sparse
//! u64 record count (all cells when dense, known cells when sparse)
//! records, in increasing cell order:
//!   [u64 linear index, sparse only]
//!   u8 state (0 unknown, 1 free, 2 occupied), u8 class, u16 instance
//!   [2 f32 v_x, v_y (m/s), with the velocity flag; NaN when absent]
//! ```
//!
//! Linear index is `x + dims_x * (y + dims_y * z)`.

use std::fmt::Write as _;
use std::path::Path;

use super::binary::{Reader, Writer};
use super::{read_bytes, write_atomic};
use crate::geometry::GridSpec;
use crate::occupancy::{Cell, CellState, VoxelGrid};
use crate::{Error, Result};

pub const VOX_MAGIC: &[u8; 4] = b"VOX1";
const VERSION: u32 = 1;
const FORMAT: &str = "voxel grid";
const FLAG_VELOCITY: u8 = 1;
const FLAG_SPARSE: u8 = 2;

pub fn encode_voxel_grid(grid: &VoxelGrid) -> Vec<u8> {
    let spec = grid.spec();
    let mut w = Writer::new(VOX_MAGIC, VERSION);
    for v in spec.min().iter().chain(spec.max().iter()) {
        w.f64(*v);
    }
    w.f64(spec.resolution());
    for d in spec.dims() {
        w.u32(d as u32);
    }
    let velocity = grid.has_velocity();
    let sparse = grid.is_sparse();
    w.u8(if velocity { FLAG_VELOCITY } else { 0 } | if sparse { FLAG_SPARSE } else { 0 });

    let record = |w: &mut Writer, c: &Cell| {
        w.u8(c.state as u8);
        w.u8(c.class);
        w.u16(c.instance);
        if velocity {
            let [vx, vy] = c.velocity.unwrap_or([f32::NAN; 2]);
            w.f32(vx);
            w.f32(vy);
        }
    };
    if sparse {
        let known = grid.known_cells();
        w.u64(known.len() as u64);
        for (i, c) in &known {
            w.u64(*i as u64);
            record(&mut w, c);
        }
    } else {
        w.u64(spec.num_cells() as u64);
        for i in 0..spec.num_cells() {
            record(&mut w, &grid.get(i));
        }
    }
    w.buf
}

pub fn decode_voxel_grid(bytes: &[u8]) -> Result<VoxelGrid> {
    let (mut r, version) = Reader::open(bytes, VOX_MAGIC, FORMAT)?;
    if version != VERSION {
        return Err(r.error(format!("unsupported version {version}")));
    }
    let min = [r.f64()?, r.f64()?, r.f64()?];
    let max = [r.f64()?, r.f64()?, r.f64()?];
    let spec = GridSpec::new(min, max, r.f64()?)?;
    let dims = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
    if dims != spec.dims() {
        return Err(r.error(format!("header dims {dims:?} disagree with the bounds ({:?})", spec.dims())));
    }
    let flags = r.u8()?;
    if flags & !(FLAG_VELOCITY | FLAG_SPARSE) != 0 {
        return Err(r.error(format!("unknown flags {flags:#04x}")));
    }
    let velocity = flags & FLAG_VELOCITY != 0;
    let sparse = flags & FLAG_SPARSE != 0;
    let count = usize::try_from(r.u64()?).map_err(|_| r.error("record count overflows"))?;
    let record_size = 4 + if velocity { 8 } else { 0 } + if sparse { 8 } else { 0 };
    if !sparse && count != spec.num_cells() {
        return Err(r.error(format!("dense grid with {count} records for {} cells", spec.num_cells())));
    }
    r.expect(count, record_size)?;

    let mut grid = VoxelGrid::with_storage(spec, sparse);
    let mut last = None;
    for k in 0..count {
        let i = if sparse {
            let i = usize::try_from(r.u64()?).map_err(|_| r.error("cell index overflows"))?;
            if last.is_some_and(|l| i <= l) {
                return Err(r.error(format!("sparse record {k}: indices must increase")));
            }
            last = Some(i);
            i
        } else {
            k
        };
        let state = r.u8()?;
        let state = CellState::from_u8(state).ok_or_else(|| r.error(format!("cell {i}: invalid state {state}")))?;
        let mut cell = Cell {
            state,
            class: r.u8()?,
            instance: r.u16()?,
            velocity: None,
        };
        if velocity {
            let v = [r.f32()?, r.f32()?];
            if !v[0].is_nan() || !v[1].is_nan() {
                cell.velocity = Some(v);
            }
        }
        grid.set(i, cell).map_err(|e| r.error(format!("cell {i}: {e}")))?;
    }
    r.finish()?;
    Ok(grid)
}

pub fn write_voxel_grid(path: &Path, grid: &VoxelGrid) -> Result<()> {
    write_atomic(path, &encode_voxel_grid(grid))
}

pub fn read_voxel_grid(path: &Path) -> Result<VoxelGrid> {
    decode_voxel_grid(&read_bytes(path)?).map_err(|e| match e {
        Error::Format { format, message } => Error::Format {
            format,
            message: format!("{}: {message}", path.display()),
        },
        e => e,
    })
}

/// Known cells as CSV with header `x,y,z,state,class,instance,vx,vy`, where
/// `x,y,z` are cell indices. Velocity columns are empty when absent.
pub fn voxel_grid_csv(grid: &VoxelGrid) -> String {
    let mut out = String::from("x,y,z,state,class,instance,vx,vy\n");
    for (i, c) in grid.known_cells() {
        let [x, y, z] = grid.spec().unlinear(i);
        let (vx, vy) = c.velocity.map_or((String::new(), String::new()), |v| (v[0].to_string(), v[1].to_string()));
        let _ = writeln!(out, "{x},{y},{z},{},{},{},{vx},{vy}", c.state as u8, c.class, c.instance);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::occupancy::class;

    fn sample(sparse: bool) -> VoxelGrid {
        let spec = GridSpec::new([0.0; 3], [2.0, 1.0, 1.0], 0.5).unwrap();
        let mut g = VoxelGrid::with_storage(spec, sparse);
        g.set(0, Cell::FREE).unwrap();
        g.set(3, Cell::occupied(class::ROAD, 0, None)).unwrap();
        g.set(5, Cell::occupied(class::PEDESTRIAN, 7, Some([0.5, -1.25]))).unwrap();
        g
    }

    #[test]
    fn round_trips_dense_and_sparse() {
        for sparse in [false, true] {
            let g = sample(sparse);
            let bytes = encode_voxel_grid(&g);
            assert_eq!(&bytes[..4], b"VOX1");
            let back = decode_voxel_grid(&bytes).unwrap();
            assert_eq!(back, g);
            assert_eq!(back.is_sparse(), sparse);
            assert_eq!(back.get(5).velocity, Some([0.5, -1.25]));
        }
    }

    #[test]
    fn header_layout() {
        let bytes = encode_voxel_grid(&VoxelGrid::new(GridSpec::benchmark()));
        let dims: Vec<u32> = (0..3).map(|a| u32::from_le_bytes(bytes[64 + 4 * a..68 + 4 * a].try_into().unwrap())).collect();
        assert_eq!(dims, [48, 48, 24]);
        assert_eq!(bytes[76], 0);
        assert_eq!(u64::from_le_bytes(bytes[77..85].try_into().unwrap()), 48 * 48 * 24);
        assert_eq!(bytes.len(), 85 + 4 * 48 * 48 * 24);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode_voxel_grid(&sample(false));
        assert!(decode_voxel_grid(&bytes[..bytes.len() - 1]).is_err());
        let mut bad_state = bytes.clone();
        bad_state[85] = 9;
        assert!(decode_voxel_grid(&bad_state).is_err());
        let mut bad_dims = bytes.clone();
        bad_dims[64] = 5;
        assert!(decode_voxel_grid(&bad_dims).is_err());
        // free cell carrying a class
        let mut bad_cell = bytes;
        bad_cell[86] = class::CAR;
        assert!(decode_voxel_grid(&bad_cell).is_err());
    }

    #[test]
    fn csv_dump_lists_known_cells() {
        let text = voxel_grid_csv(&sample(false));
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1], "0,0,0,1,0,0,,");
        assert_eq!(lines[3], "1,1,0,2,1,7,0.5,-1.25");
    }
}
