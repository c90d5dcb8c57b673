use std::collections::HashMap;

use nalgebra::Vector3;

use super::RigidTransform;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<[usize; 3]>,
    /// Optional body-part id per vertex.
    pub part_of_vertex: Option<Vec<u32>>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vector3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = TriangleMesh {
            vertices,
            faces,
            part_of_vertex: None,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn with_parts(mut self, parts: Vec<u32>) -> Result<Self> {
        if parts.len() != self.vertices.len() {
            return Err(Error::Dimension {
                what: "part_of_vertex",
                expected: self.vertices.len(),
                got: parts.len(),
            });
        }
        self.part_of_vertex = Some(parts);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (fi, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&i| i >= n) {
                return Err(Error::Domain(format!(
                    "face {fi} references vertex out of range (have {n})"
                )));
            }
            if f[0] == f[1] && f[1] == f[2] {
                return Err(Error::Domain(format!("face {fi} is degenerate: {f:?}")));
            }
        }
        if self.vertices.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::Domain("mesh has non-finite vertices".into()));
        }
        Ok(())
    }

    pub fn triangle(&self, face: usize) -> [Vector3<f64>; 3] {
        let [a, b, c] = self.faces[face];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn transformed(&self, t: &RigidTransform) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| t.apply(v)).collect(),
            faces: self.faces.clone(),
            part_of_vertex: self.part_of_vertex.clone(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    /// Axis-aligned box with outward (counter-clockwise) winding.
    pub fn axis_aligned_box(min: Vector3<f64>, max: Vector3<f64>) -> TriangleMesh {
        let corner = |i: usize| {
            Vector3::new(
                if i & 1 == 0 { min.x } else { max.x },
                if i & 2 == 0 { min.y } else { max.y },
                if i & 4 == 0 { min.z } else { max.z },
            )
        };
        let vertices = (0..8).map(corner).collect();
        let faces = vec![
            [0, 2, 1],
            [1, 2, 3], // z = min
            [4, 5, 6],
            [5, 7, 6], // z = max
            [0, 1, 4],
            [1, 5, 4], // y = min
            [2, 6, 3],
            [3, 6, 7], // y = max
            [0, 4, 2],
            [2, 4, 6], // x = min
            [1, 3, 5],
            [3, 7, 5], // x = max
        ];
        TriangleMesh {
            vertices,
            faces,
            part_of_vertex: None,
        }
    }

    /// Unit icosphere (radius 1, centered at the origin), outward winding.
    pub fn icosphere(subdivisions: u32) -> TriangleMesh {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut vertices: Vec<Vector3<f64>> = [
            [-1.0, t, 0.0],
            [1.0, t, 0.0],
            [-1.0, -t, 0.0],
            [1.0, -t, 0.0],
            [0.0, -1.0, t],
            [0.0, 1.0, t],
            [0.0, -1.0, -t],
            [0.0, 1.0, -t],
            [t, 0.0, -1.0],
            [t, 0.0, 1.0],
            [-t, 0.0, -1.0],
            [-t, 0.0, 1.0],
        ]
        .iter()
        .map(|p| Vector3::new(p[0], p[1], p[2]).normalize())
        .collect();
        let mut faces: Vec<[usize; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
            let mut next = Vec::with_capacity(faces.len() * 4);
            let mut mid = |a: usize, b: usize, verts: &mut Vec<Vector3<f64>>| {
                let key = (a.min(b), a.max(b));
                *midpoint.entry(key).or_insert_with(|| {
                    verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                    verts.len() - 1
                })
            };
            for [a, b, c] in faces {
                let ab = mid(a, b, &mut vertices);
                let bc = mid(b, c, &mut vertices);
                let ca = mid(c, a, &mut vertices);
                next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            faces = next;
        }
        TriangleMesh {
            vertices,
            faces,
            part_of_vertex: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outward(mesh: &TriangleMesh, centre: Vector3<f64>) -> bool {
        mesh.faces.iter().enumerate().all(|(fi, _)| {
            let [a, b, c] = mesh.triangle(fi);
            let n = (b - a).cross(&(c - a));
            n.dot(&((a + b + c) / 3.0 - centre)) > 0.0
        })
    }

    #[test]
    fn icosphere_counts_and_winding() {
        let m = TriangleMesh::icosphere(2);
        assert_eq!(m.vertices.len(), 162);
        assert_eq!(m.faces.len(), 320);
        assert!(outward(&m, Vector3::zeros()));
        m.validate().unwrap();
    }

    #[test]
    fn box_winding_is_outward() {
        let m = TriangleMesh::axis_aligned_box(Vector3::zeros(), Vector3::new(1.0, 2.0, 3.0));
        assert!(outward(&m, Vector3::new(0.5, 1.0, 1.5)));
    }

    #[test]
    fn rejects_bad_faces() {
        let v = vec![Vector3::zeros(), Vector3::x(), Vector3::y()];
        assert!(TriangleMesh::new(v.clone(), vec![[0, 1, 3]]).is_err());
        assert!(TriangleMesh::new(v.clone(), vec![[1, 1, 1]]).is_err());
        assert!(TriangleMesh::new(v, vec![[0, 1, 2]]).is_ok());
    }
}
