use std::collections::BTreeSet;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::geometry::{CellIndex, GridSpec, MeshBvh, TriangleMesh};
use crate::{Error, Result};

/// Grid cells covered by one person.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HumanCells {
    pub instance: u16,
    pub cells: BTreeSet<usize>,
    pub velocity: Option<[f32; 2]>,
}

impl HumanCells {
    pub fn with_velocity(mut self, v: [f32; 2]) -> Self {
        self.velocity = Some(v);
        self
    }
}

/// Separating-axis test between a triangle and the closed box `[lo, hi]`.
pub fn triangle_box_overlap(tri: &[Vector3<f64>; 3], lo: &Vector3<f64>, hi: &Vector3<f64>) -> bool {
    let c = (lo + hi) * 0.5;
    let h = (hi - lo) * 0.5;
    let v = [tri[0] - c, tri[1] - c, tri[2] - c];

    for a in 0..3 {
        let mn = v[0][a].min(v[1][a]).min(v[2][a]);
        let mx = v[0][a].max(v[1][a]).max(v[2][a]);
        if mn > h[a] || mx < -h[a] {
            return false;
        }
    }

    let separated = |axis: &Vector3<f64>| {
        let p = [axis.dot(&v[0]), axis.dot(&v[1]), axis.dot(&v[2])];
        let r = h.x * axis.x.abs() + h.y * axis.y.abs() + h.z * axis.z.abs();
        p[0].min(p[1]).min(p[2]) > r || p[0].max(p[1]).max(p[2]) < -r
    };

    let edges = [v[1] - v[0], v[2] - v[1], v[0] - v[2]];
    if separated(&edges[0].cross(&edges[1])) {
        return false;
    }
    for e in &edges {
        for u in [Vector3::x(), Vector3::y(), Vector3::z()] {
            if separated(&e.cross(&u)) {
                return false;
            }
        }
    }
    true
}

/// Cell range overlapping `[lo, hi]`, clamped to the grid; `None` when disjoint.
fn cell_range(spec: &GridSpec, lo: &Vector3<f64>, hi: &Vector3<f64>) -> Option<[std::ops::RangeInclusive<usize>; 3]> {
    let (gmin, gmax) = (spec.min(), spec.max());
    let dims = spec.dims();
    let res = spec.resolution();
    let mut r: [std::ops::RangeInclusive<usize>; 3] = [0..=0, 0..=0, 0..=0];
    for a in 0..3 {
        if hi[a] < gmin[a] || lo[a] > gmax[a] {
            return None;
        }
        let i0 = ((lo[a] - gmin[a]) / res).floor().max(0.0) as usize;
        let i1 = ((hi[a] - gmin[a]) / res).floor().max(0.0) as usize;
        r[a] = i0.min(dims[a] - 1)..=i1.min(dims[a] - 1);
    }
    Some(r)
}

/// Bounds of `c` with the max faces pulled in slightly, so that a surface lying
/// exactly on a cell boundary is assigned the way [`GridSpec::cell_of`] would.
fn half_open_bounds(spec: &GridSpec, c: CellIndex) -> (Vector3<f64>, Vector3<f64>) {
    let (lo, mut hi) = spec.cell_bounds(c);
    let eps = spec.resolution() * 1e-9;
    for a in 0..3 {
        if c[a] + 1 < spec.dims()[a] {
            hi[a] -= eps;
        }
    }
    (lo, hi)
}

/// Cells intersected by the mesh surface, tagged with `instance`.
///
/// With `fill_interior`, cells whose centers lie inside the (closed) mesh are
/// added as well.
pub fn rasterize_human(mesh: &TriangleMesh, instance: u16, spec: &GridSpec, fill_interior: bool) -> Result<HumanCells> {
    if instance == 0 {
        return Err(Error::Domain("instance id 0 is reserved for \"no instance\"".into()));
    }
    mesh.validate()?;
    let mut cells = BTreeSet::new();
    for f in 0..mesh.faces.len() {
        let tri = mesh.triangle(f);
        let lo = tri[0].inf(&tri[1]).inf(&tri[2]);
        let hi = tri[0].sup(&tri[1]).sup(&tri[2]);
        let Some([rx, ry, rz]) = cell_range(spec, &lo, &hi) else {
            continue;
        };
        for z in rz {
            for y in ry.clone() {
                for x in rx.clone() {
                    let c = [x, y, z];
                    let (blo, bhi) = half_open_bounds(spec, c);
                    if triangle_box_overlap(&tri, &blo, &bhi) {
                        cells.insert(spec.linear(c));
                    }
                }
            }
        }
    }

    if fill_interior && !mesh.vertices.is_empty() {
        let lo = mesh.vertices.iter().fold(Vector3::repeat(f64::INFINITY), |a, v| a.inf(v));
        let hi = mesh.vertices.iter().fold(Vector3::repeat(f64::NEG_INFINITY), |a, v| a.sup(v));
        if let Some([rx, ry, rz]) = cell_range(spec, &lo, &hi) {
            let bvh = MeshBvh::build(mesh);
            // Skewed so the parity ray avoids running along edges of axis-aligned meshes.
            let dir = Vector3::new(1.0, 0.001_414, 0.001_732).normalize();
            for z in rz {
                for y in ry.clone() {
                    for x in rx.clone() {
                        let c = [x, y, z];
                        let i = spec.linear(c);
                        if !cells.contains(&i) && bvh.count_hits(&spec.cell_center(c), &dir) % 2 == 1 {
                            cells.insert(i);
                        }
                    }
                }
            }
        }
    }

    Ok(HumanCells {
        instance,
        cells,
        velocity: None,
    })
}
