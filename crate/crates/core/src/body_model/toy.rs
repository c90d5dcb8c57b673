//! Procedural humanoid built from tapered tubes, used for tests, the CLI and
//! synthetic scenes when no real body model is available.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{BodyModel, BodyModelData, HingeJoint, KeypointLink};
use crate::Result;

pub const TOY_JOINT_NAMES: [&str; 16] = [
    "pelvis",
    "spine",
    "neck",
    "head_top",
    "l_shoulder",
    "l_elbow",
    "l_wrist",
    "r_shoulder",
    "r_elbow",
    "r_wrist",
    "l_hip",
    "l_knee",
    "l_ankle",
    "r_hip",
    "r_knee",
    "r_ankle",
];

pub const TOY_PART_NAMES: [&str; 11] = [
    "pelvis",
    "torso",
    "head",
    "l_upper_arm",
    "l_forearm",
    "r_upper_arm",
    "r_forearm",
    "l_thigh",
    "l_shin",
    "r_thigh",
    "r_shin",
];

const PARENTS: [Option<usize>; 16] = [
    None,
    Some(0),
    Some(1),
    Some(2),
    Some(1),
    Some(4),
    Some(5),
    Some(1),
    Some(7),
    Some(8),
    Some(0),
    Some(10),
    Some(11),
    Some(0),
    Some(13),
    Some(14),
];

const PART_OF_JOINT: [u32; 16] = [0, 1, 2, 2, 3, 4, 4, 5, 6, 6, 7, 8, 8, 9, 10, 10];

/// Length over which a segment's skinning blends into its parent joint.
const BLEND_LENGTH: f64 = 0.06;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyModelConfig {
    /// Maximum spacing between vertex rings along a segment (meters).
    pub ring_spacing: f64,
    pub ring_vertices: usize,
    pub num_betas: usize,
    /// Seed for the random shape directions.
    pub seed: u64,
}

impl Default for ToyModelConfig {
    fn default() -> Self {
        ToyModelConfig {
            ring_spacing: 0.02,
            ring_vertices: 20,
            num_betas: 10,
            seed: 7,
        }
    }
}

impl ToyModelConfig {
    /// A few hundred vertices; enough for fast unit tests.
    pub fn coarse() -> Self {
        ToyModelConfig {
            ring_spacing: 0.1,
            ring_vertices: 6,
            ..Self::default()
        }
    }
}

struct Segment {
    joint: usize,
    start: Vector3<f64>,
    end: Vector3<f64>,
    r0: f64,
    r1: f64,
    /// Cross-section semi-axes as multiples of the radius, along the ring's
    /// first and second basis vectors. Unequal values keep twist observable.
    shape: [f64; 2],
}

/// Segments indexed by part id.
fn segments() -> Vec<Segment> {
    let seg = |joint, start: [f64; 3], end: [f64; 3], r0, r1, shape| Segment {
        joint,
        start: Vector3::from(start),
        end: Vector3::from(end),
        r0,
        r1,
        shape,
    };
    // Vertical segments: first axis x, second z. Arms: first z, second y.
    let trunk = [1.0, 0.65];
    let arm = [0.8, 1.0];
    let leg = [1.0, 0.8];
    vec![
        seg(0, [0.0, 0.85, 0.0], [0.0, 1.15, 0.0], 0.15, 0.10, trunk),
        seg(1, [0.0, 1.15, 0.0], [0.0, 1.50, 0.0], 0.17, 0.11, trunk),
        seg(2, [0.0, 1.50, 0.0], [0.0, 1.75, 0.0], 0.08, 0.09, [0.85, 1.0]),
        seg(4, [0.20, 1.44, 0.0], [0.48, 1.44, 0.0], 0.045, 0.045, arm),
        seg(5, [0.48, 1.44, 0.0], [0.74, 1.44, 0.0], 0.038, 0.038, arm),
        seg(7, [-0.20, 1.44, 0.0], [-0.48, 1.44, 0.0], 0.045, 0.045, arm),
        seg(8, [-0.48, 1.44, 0.0], [-0.74, 1.44, 0.0], 0.038, 0.038, arm),
        seg(10, [0.10, 0.90, 0.0], [0.10, 0.50, 0.0], 0.07, 0.07, leg),
        seg(11, [0.10, 0.50, 0.0], [0.10, 0.08, 0.0], 0.05, 0.05, leg),
        seg(13, [-0.10, 0.90, 0.0], [-0.10, 0.50, 0.0], 0.07, 0.07, leg),
        seg(14, [-0.10, 0.50, 0.0], [-0.10, 0.08, 0.0], 0.05, 0.05, leg),
    ]
}

/// Where each joint sits: a segment and a point on its axis.
fn joint_sites(segs: &[Segment]) -> Vec<(usize, Vector3<f64>)> {
    let start = |s: usize| (s, segs[s].start);
    let end = |s: usize| (s, segs[s].end);
    vec![
        (0, Vector3::new(0.0, 0.95, 0.0)),
        start(1),
        start(2),
        end(2),
        start(3),
        start(4),
        end(4),
        start(5),
        start(6),
        end(6),
        start(7),
        start(8),
        end(8),
        start(9),
        start(10),
        end(10),
    ]
}

struct VertexInfo {
    part: usize,
    /// Distance from the segment start along its axis.
    along: f64,
    axis: Vector3<f64>,
    /// Offset from the ring center (zero for cap centers).
    offset: Vector3<f64>,
}

struct Ring {
    center: Vector3<f64>,
    vertices: Vec<usize>,
}

pub fn toy_model(config: &ToyModelConfig) -> Result<BodyModel> {
    if !(config.ring_spacing > 0.0) || config.ring_vertices < 3 {
        return Err(crate::Error::Config(
            "toy model needs positive ring spacing and at least 3 vertices per ring".into(),
        ));
    }
    let segs = segments();
    let k = config.ring_vertices;
    let mut vertices = Vec::new();
    let mut info = Vec::new();
    let mut faces = Vec::new();
    let mut rings: Vec<Vec<Ring>> = Vec::new();

    for (part, s) in segs.iter().enumerate() {
        let len = (s.end - s.start).norm();
        let u = (s.end - s.start) / len;
        let reference = if u.x.abs() < 0.9 { Vector3::x() } else { Vector3::z() };
        let e1 = (reference - u * u.dot(&reference)).normalize();
        let e2 = u.cross(&e1);
        let n_rings = (len / config.ring_spacing).ceil() as usize + 1;

        let mut seg_rings = Vec::with_capacity(n_rings);
        for i in 0..n_rings {
            let t = i as f64 / (n_rings - 1) as f64;
            let center = s.start + (s.end - s.start) * t;
            let radius = s.r0 + (s.r1 - s.r0) * t;
            let mut ids = Vec::with_capacity(k);
            for c in 0..k {
                let phi = std::f64::consts::TAU * c as f64 / k as f64;
                let offset = (e1 * (s.shape[0] * phi.cos()) + e2 * (s.shape[1] * phi.sin())) * radius;
                ids.push(vertices.len());
                vertices.push(center + offset);
                info.push(VertexInfo {
                    part,
                    along: t * len,
                    axis: u,
                    offset,
                });
            }
            seg_rings.push(Ring { center, vertices: ids });
        }
        for i in 0..n_rings - 1 {
            let (a, b) = (&seg_rings[i].vertices, &seg_rings[i + 1].vertices);
            for c in 0..k {
                let n = (c + 1) % k;
                faces.push([a[c], a[n], b[n]]);
                faces.push([a[c], b[n], b[c]]);
            }
        }
        for (at_start, ring) in [(true, &seg_rings[0]), (false, &seg_rings[n_rings - 1])] {
            let center = vertices.len();
            vertices.push(ring.center);
            info.push(VertexInfo {
                part,
                along: if at_start { 0.0 } else { len },
                axis: u,
                offset: Vector3::zeros(),
            });
            for c in 0..k {
                let (p, q) = (ring.vertices[c], ring.vertices[(c + 1) % k]);
                faces.push(if at_start { [center, q, p] } else { [center, p, q] });
            }
        }
        rings.push(seg_rings);
    }

    let nv = vertices.len();
    let nj = PARENTS.len();

    let mut skinning_weights = vec![0.0; nv * nj];
    for (v, vi) in info.iter().enumerate() {
        let joint = segs[vi.part].joint;
        match PARENTS[joint] {
            Some(p) if vi.along < BLEND_LENGTH => {
                let wp = 0.5 * (1.0 - vi.along / BLEND_LENGTH);
                skinning_weights[v * nj + p] = wp;
                skinning_weights[v * nj + joint] = 1.0 - wp;
            }
            _ => skinning_weights[v * nj + joint] = 1.0,
        }
    }

    let mut joint_regressor = vec![0.0; nj * nv];
    for (j, (seg, site)) in joint_sites(&segs).into_iter().enumerate() {
        let ring = rings[seg]
            .iter()
            .min_by(|a, b| (a.center - site).norm().total_cmp(&(b.center - site).norm()))
            .expect("segments have rings");
        for &v in &ring.vertices {
            joint_regressor[j * nv + v] = 1.0 / k as f64;
        }
    }

    let shape_dirs = shape_directions(config, &vertices, &info, &segs);

    let keypoint_map = (0..nj).map(|j| KeypointLink { joint: j, detector: j }).collect();
    let part_joint_sets = vec![
        vec![0, 10, 13],
        vec![1, 4, 7],
        vec![2, 3],
        vec![4, 5],
        vec![5, 6],
        vec![7, 8],
        vec![8, 9],
        vec![10, 11],
        vec![11, 12],
        vec![13, 14],
        vec![14, 15],
    ];
    let hinges = vec![
        HingeJoint { joint: 5, axis: 1, sign: 1.0 },
        HingeJoint { joint: 8, axis: 1, sign: -1.0 },
        HingeJoint { joint: 11, axis: 0, sign: -1.0 },
        HingeJoint { joint: 14, axis: 0, sign: -1.0 },
    ];

    BodyModel::new(BodyModelData {
        template_vertices: vertices,
        faces,
        shape_dirs,
        num_betas: config.num_betas,
        joint_regressor,
        parents: PARENTS.to_vec(),
        skinning_weights,
        part_of_vertex: info.iter().map(|i| i.part as u32).collect(),
        part_of_joint: PART_OF_JOINT.to_vec(),
        keypoint_map,
        part_joint_sets,
        hinges,
    })
}

fn shape_directions(
    config: &ToyModelConfig,
    vertices: &[Vector3<f64>],
    info: &[VertexInfo],
    segs: &[Segment],
) -> Vec<Vector3<f64>> {
    let nb = config.num_betas;
    let is_arm = |p: usize| (3..=6).contains(&p);
    let is_leg = |p: usize| p >= 7;
    let mut dirs = vec![Vector3::zeros(); vertices.len() * nb];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let offset = Normal::new(0.0, 0.01).expect("valid normal");
    let scale = Normal::new(0.0, 0.05).expect("valid normal");

    for k in 0..nb {
        let random: Vec<(Vector3<f64>, f64)> = (0..segs.len())
            .map(|_| {
                let t = Vector3::from_fn(|_, _| offset.sample(&mut rng));
                (t, scale.sample(&mut rng))
            })
            .collect();
        for (v, (p, vi)) in vertices.iter().zip(info).enumerate() {
            let d = match k {
                // overall height
                0 => Vector3::new(0.0, 0.04 * p.y, 0.0),
                // girth
                1 => vi.offset * 0.1,
                // arm length
                2 if is_arm(vi.part) => vi.axis * (0.08 * (p.x.abs() - 0.20)),
                // leg length
                3 if is_leg(vi.part) => Vector3::new(0.0, -0.06 * (0.90 - p.y), 0.0),
                // shoulder width
                4 if is_arm(vi.part) => Vector3::new(0.03 * p.x.signum(), 0.0, 0.0),
                // belly
                5 if vi.part <= 1 => {
                    let radial = vi.offset.try_normalize(0.0).unwrap_or_default();
                    radial * (0.03 * radial.z.max(0.0))
                }
                k if k >= 6 => {
                    let (t, s) = random[vi.part];
                    t + vi.offset * s
                }
                _ => Vector3::zeros(),
            };
            dirs[v * nb + k] = d;
        }
    }
    dirs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TriangleMesh;

    #[test]
    fn counts() {
        let m = toy_model(&ToyModelConfig::default()).unwrap();
        assert_eq!(m.num_joints(), 16);
        assert_eq!(m.num_parts(), 11);
        assert_eq!(m.num_betas(), 10);
        assert!(m.num_vertices() > 900, "{}", m.num_vertices());
    }

    #[test]
    fn joints_at_nominal_sites() {
        let m = toy_model(&ToyModelConfig::default()).unwrap();
        let joints = m.regress_joints(&m.data().template_vertices).unwrap();
        assert!((joints[5] - Vector3::new(0.48, 1.44, 0.0)).norm() < 1e-12);
        assert!((joints[14] - Vector3::new(-0.10, 0.50, 0.0)).norm() < 1e-12);
        assert!((joints[3] - Vector3::new(0.0, 1.75, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn tubes_are_closed_and_outward() {
        // Each closed tube contributes 6 * volume via the divergence theorem.
        let m = toy_model(&ToyModelConfig::default()).unwrap();
        let mesh = TriangleMesh::new(m.data().template_vertices.clone(), m.faces().to_vec()).unwrap();
        let mut signed = vec![0.0; m.num_parts()];
        for (f, face) in mesh.faces.iter().enumerate() {
            let [a, b, c] = mesh.triangle(f);
            signed[m.part_of_vertex()[face[0]] as usize] += a.dot(&b.cross(&c)) / 6.0;
        }
        for (p, s) in segments().iter().enumerate() {
            let len = (s.end - s.start).norm();
            let cone = std::f64::consts::PI * len * (s.r0 * s.r0 + s.r0 * s.r1 + s.r1 * s.r1) / 3.0 * s.shape[0] * s.shape[1];
            assert!(signed[p] > 0.8 * cone && signed[p] < cone, "part {p}: {} vs {cone}", signed[p]);
        }
        let edges = m.mesh_edges();
        let mut uses = std::collections::HashMap::new();
        for f in m.faces() {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                *uses.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        assert!(edges.iter().all(|e| uses[e] == 2));
    }

    #[test]
    fn deterministic() {
        let a = toy_model(&ToyModelConfig::default()).unwrap();
        let b = toy_model(&ToyModelConfig::default()).unwrap();
        assert_eq!(a.data(), b.data());
    }
}
