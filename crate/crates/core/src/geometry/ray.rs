use nalgebra::Vector3;

use super::TriangleMesh;

/// Minimum accepted hit distance (meters).
pub const HIT_EPSILON: f64 = 1e-9;

/// Determinant threshold under which a ray counts as parallel to the triangle.
const PARALLEL_EPSILON: f64 = 1e-14;

const BVH_LEAF_SIZE: usize = 4;

/// Möller–Trumbore intersection with inclusive edges.
///
/// Returns the distance `t > HIT_EPSILON` along `dir` (unit length) or `None`.
pub fn ray_triangle_hit(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    tri: &[Vector3<f64>; 3],
) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    let scale = e1.norm() * e2.norm();
    if det.abs() <= PARALLEL_EPSILON * scale.max(1.0) {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - tri[0];
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > HIT_EPSILON).then_some(t)
}

/// Slab test: parametric interval `[t_enter, t_exit]` of the line
/// `origin + t * dir` inside the box, if any.
pub fn ray_aabb(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    lo: &Vector3<f64>,
    hi: &Vector3<f64>,
) -> Option<(f64, f64)> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        if dir[a] == 0.0 {
            if origin[a] < lo[a] || origin[a] > hi[a] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[a];
        let (mut near, mut far) = ((lo[a] - origin[a]) * inv, (hi[a] - origin[a]) * inv);
        if near > far {
            std::mem::swap(&mut near, &mut far);
        }
        t0 = t0.max(near);
        t1 = t1.min(far);
        if t0 > t1 {
            return None;
        }
    }
    Some((t0, t1))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayHit {
    pub distance: f64,
    pub face: usize,
}

#[derive(Clone, Debug)]
struct BvhNode {
    lo: Vector3<f64>,
    hi: Vector3<f64>,
    /// Leaf: range into `faces`; inner: child node ids.
    start: usize,
    end: usize,
    leaf: bool,
}

/// Bounding-volume hierarchy over the faces of one mesh.
#[derive(Clone, Debug)]
pub struct MeshBvh {
    triangles: Vec<[Vector3<f64>; 3]>,
    faces: Vec<usize>,
    nodes: Vec<BvhNode>,
}

impl MeshBvh {
    pub fn build(mesh: &TriangleMesh) -> Self {
        let triangles: Vec<_> = (0..mesh.faces.len()).map(|f| mesh.triangle(f)).collect();
        let mut bvh = MeshBvh {
            faces: (0..triangles.len()).collect(),
            triangles,
            nodes: Vec::new(),
        };
        if !bvh.triangles.is_empty() {
            bvh.build_node(0, bvh.faces.len());
        }
        bvh
    }

    fn bounds(&self, start: usize, end: usize) -> (Vector3<f64>, Vector3<f64>) {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for &f in &self.faces[start..end] {
            for v in &self.triangles[f] {
                lo = lo.inf(v);
                hi = hi.sup(v);
            }
        }
        (lo, hi)
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let (lo, hi) = self.bounds(start, end);
        let id = self.nodes.len();
        self.nodes.push(BvhNode {
            lo,
            hi,
            start,
            end,
            leaf: true,
        });
        if end - start <= BVH_LEAF_SIZE {
            return id;
        }
        let axis = (hi - lo).imax();
        let mid = start + (end - start) / 2;
        let tris = &self.triangles;
        let centroid = |f: usize| tris[f][0][axis] + tris[f][1][axis] + tris[f][2][axis];
        self.faces[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            centroid(a).total_cmp(&centroid(b)).then(a.cmp(&b))
        });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        let node = &mut self.nodes[id];
        node.start = left;
        node.end = right;
        node.leaf = false;
        id
    }

    /// Nearest hit along a unit direction; ties resolve to the lowest face index.
    pub fn first_hit(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<RayHit> {
        let mut best: Option<RayHit> = None;
        if self.nodes.is_empty() {
            return None;
        }
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            let Some((t0, t1)) = ray_aabb(origin, dir, &node.lo, &node.hi) else {
                continue;
            };
            if t1 < 0.0 || best.is_some_and(|b| t0 > b.distance) {
                continue;
            }
            if node.leaf {
                for &f in &self.faces[node.start..node.end] {
                    if let Some(t) = ray_triangle_hit(origin, dir, &self.triangles[f]) {
                        let better = match best {
                            None => true,
                            Some(b) => t < b.distance || (t == b.distance && f < b.face),
                        };
                        if better {
                            best = Some(RayHit { distance: t, face: f });
                        }
                    }
                }
            } else {
                stack.push(node.start);
                stack.push(node.end);
            }
        }
        best
    }

    /// Number of distinct faces hit along the ray (used for inside/outside parity).
    pub fn count_hits(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> usize {
        if self.nodes.is_empty() {
            return 0;
        }
        let mut count = 0;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            match ray_aabb(origin, dir, &node.lo, &node.hi) {
                Some((_, t1)) if t1 >= 0.0 => {}
                _ => continue,
            }
            if node.leaf {
                count += self.faces[node.start..node.end]
                    .iter()
                    .filter(|&&f| ray_triangle_hit(origin, dir, &self.triangles[f]).is_some())
                    .count();
            } else {
                stack.push(node.start);
                stack.push(node.end);
            }
        }
        count
    }
}
