//! Individual objective terms with their gradients.

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::body_model::{HingeJoint, KeypointLink, ParamLayout};
use crate::geometry::{AxisAngle, CameraModel, NnIndex, UnitQuaternion};
use crate::visibility::Keypoints2D;

/// Geman–McClure penalty `s2 * r2 / (s2 + r2)` of a squared residual and its
/// derivative with respect to `r2`.
pub fn geman_mcclure(r2: f64, sigma: f64) -> (f64, f64) {
    let s2 = sigma * sigma;
    let denom = s2 + r2;
    (s2 * r2 / denom, s2 * s2 / (denom * denom))
}

/// Smallest camera-frame depth at which a joint is still projected.
pub const MIN_DEPTH: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct JointsTerm {
    pub value: f64,
    /// Gradient with respect to every posed joint (world frame).
    pub grad_joints: Vec<Vector3<f64>>,
    /// Joints skipped because they are at or behind the camera plane.
    pub behind_camera: usize,
}

/// Confidence-weighted robust 2D reprojection error of the posed joints.
pub fn loss_joints_2d(
    camera: &CameraModel,
    joints: &[Vector3<f64>],
    keypoints: &Keypoints2D,
    links: &[KeypointLink],
    sigma: f64,
) -> JointsTerm {
    let mut term = JointsTerm {
        value: 0.0,
        grad_joints: vec![Vector3::zeros(); joints.len()],
        behind_camera: 0,
    };
    let r_cam = camera.pose.rotation;
    for link in links {
        let Some(kp) = keypoints.get(link.detector) else { continue };
        if kp.conf == 0.0 {
            continue;
        }
        let pc = camera.pose.apply(&joints[link.joint]);
        if pc.z <= MIN_DEPTH {
            term.behind_camera += 1;
            continue;
        }
        let uv = camera.project(&pc).expect("depth checked");
        let r = uv - nalgebra::Vector2::new(kp.x, kp.y);
        let (rho, drho) = geman_mcclure(r.norm_squared(), sigma);
        term.value += kp.conf * rho;
        let g_uv = r * (2.0 * kp.conf * drho);
        term.grad_joints[link.joint] += r_cam.transpose() * (camera.projection_jacobian(&pc).transpose() * g_uv);
    }
    term
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChamferTerm {
    pub value: f64,
    /// Gradient with respect to each visible vertex, in input order.
    pub grad: Vec<Vector3<f64>>,
}

/// Nearest-neighbor pairs of a Chamfer evaluation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChamferMatches {
    /// Nearest LiDAR point of each vertex.
    pub vertex_to_lidar: Vec<usize>,
    /// Nearest vertex of each LiDAR point.
    pub lidar_to_vertex: Vec<usize>,
}

/// Matches both directions; `None` when either side is empty.
pub fn chamfer_matches(
    vertices: &[Vector3<f64>],
    lidar: &[Vector3<f64>],
    lidar_index: Option<&NnIndex>,
) -> Option<ChamferMatches> {
    if vertices.is_empty() || lidar.is_empty() {
        return None;
    }
    let owned;
    let lidar_index = match lidar_index {
        Some(i) => i,
        None => {
            owned = NnIndex::build(lidar).expect("non-empty");
            &owned
        }
    };
    let vertex_index = NnIndex::build(vertices).expect("non-empty");
    Some(ChamferMatches {
        vertex_to_lidar: vertices.iter().map(|v| lidar_index.nearest(v).0).collect(),
        lidar_to_vertex: lidar.iter().map(|p| vertex_index.nearest(p).0).collect(),
    })
}

/// Chamfer value and gradient for fixed pairs.
pub fn chamfer_with_matches(vertices: &[Vector3<f64>], lidar: &[Vector3<f64>], matches: &ChamferMatches) -> ChamferTerm {
    let mut term = ChamferTerm {
        value: 0.0,
        grad: vec![Vector3::zeros(); vertices.len()],
    };
    let nv = vertices.len() as f64;
    let np = lidar.len() as f64;
    for ((v, g), &j) in vertices.iter().zip(term.grad.iter_mut()).zip(&matches.vertex_to_lidar) {
        let r = v - lidar[j];
        term.value += r.norm_squared() / nv;
        *g += r * (2.0 / nv);
    }
    for (p, &i) in lidar.iter().zip(&matches.lidar_to_vertex) {
        let r = vertices[i] - p;
        term.value += r.norm_squared() / np;
        term.grad[i] += r * (2.0 / np);
    }
    term
}

/// Symmetric size-normalized Chamfer distance between visible vertices and
/// LiDAR points. Correspondences are frozen for the gradient. Returns zero when
/// either side is empty.
pub fn chamfer(vertices: &[Vector3<f64>], lidar: &[Vector3<f64>], lidar_index: Option<&NnIndex>) -> ChamferTerm {
    match chamfer_matches(vertices, lidar, lidar_index) {
        Some(m) => chamfer_with_matches(vertices, lidar, &m),
        None => ChamferTerm {
            value: 0.0,
            grad: vec![Vector3::zeros(); vertices.len()],
        },
    }
}

/// `sum exp(sign * theta_body[joint][axis])` over the hinge joints.
pub fn loss_hyperext(theta_body: &[AxisAngle], hinges: &[HingeJoint]) -> f64 {
    hinges.iter().map(|h| (h.sign * theta_body[h.joint - 1].0[h.axis]).exp()).sum()
}

pub(crate) fn hyperext_grad(theta_body: &[AxisAngle], hinges: &[HingeJoint], layout: &ParamLayout, scale: f64, out: &mut DVector<f64>) {
    for h in hinges {
        let e = (h.sign * theta_body[h.joint - 1].0[h.axis]).exp();
        out[layout.joint_offset(h.joint) + h.axis] += scale * h.sign * e;
    }
}

/// Joint flagged as occluded, with the rotation it started from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccludedJoint {
    pub joint: usize,
    pub initial: UnitQuaternion,
}

/// `sum (1 - <q0_i, q_i>^2)`; insensitive to the sign of either quaternion.
pub fn loss_occ(current: &[UnitQuaternion], initial: &[UnitQuaternion]) -> f64 {
    current.iter().zip(initial).map(|(q, q0)| 1.0 - q.dot(q0).powi(2)).sum()
}

pub(crate) fn occ_value_grad(
    theta_body: &[AxisAngle],
    occluded: &[OccludedJoint],
    layout: &ParamLayout,
    scale: f64,
    out: &mut DVector<f64>,
) -> f64 {
    let mut value = 0.0;
    for o in occluded {
        let aa = theta_body[o.joint - 1];
        let q = aa.to_quaternion();
        let d = q.dot(&o.initial);
        value += 1.0 - d * d;
        let q0 = nalgebra::Vector4::from(o.initial.as_array());
        let g = aa.quaternion_jacobian().transpose() * q0 * (-2.0 * d * scale);
        let off = layout.joint_offset(o.joint);
        for a in 0..3 {
            out[off + a] += g[a];
        }
    }
    value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RigidTransform;
    use crate::visibility::Keypoint;

    #[test]
    fn geman_mcclure_examples() {
        assert_eq!(geman_mcclure(0.0, 100.0).0, 0.0);
        assert_eq!(geman_mcclure(100.0 * 100.0, 100.0).0, 5000.0);
        let (far, _) = geman_mcclure(1e20, 100.0);
        assert!((far - 1e4).abs() < 1e-6);
    }

    #[test]
    fn single_joint_residual_of_hundred_pixels() {
        let cam = CameraModel::new(100.0, 100.0, 0.0, 0.0, 640, 480, RigidTransform::identity()).unwrap();
        // projects to (100, 0); keypoint at (0, 0)
        let joints = vec![Vector3::new(1.0, 0.0, 1.0)];
        let kp = Keypoints2D::new(vec![Keypoint { joint_id: 0, x: 0.0, y: 0.0, conf: 1.0 }]).unwrap();
        let links = [KeypointLink { joint: 0, detector: 0 }];
        let t = loss_joints_2d(&cam, &joints, &kp, &links, 100.0);
        assert!((t.value - 5000.0).abs() < 1e-9);

        let behind = vec![Vector3::new(1.0, 0.0, -1.0)];
        let t = loss_joints_2d(&cam, &behind, &kp, &links, 100.0);
        assert_eq!((t.value, t.behind_camera), (0.0, 1));
    }

    #[test]
    fn chamfer_examples() {
        let o = Vector3::zeros();
        let x = Vector3::x();
        assert_eq!(chamfer(&[o], &[x], None).value, 2.0);
        assert_eq!(chamfer(&[o, 2.0 * x], &[o], None).value, 2.0);
        let same = [o, x, Vector3::y()];
        assert_eq!(chamfer(&same, &same, None).value, 0.0);
        assert_eq!(chamfer(&[], &same, None).value, 0.0);
    }

    #[test]
    fn chamfer_translation_gradient_is_mean_residual() {
        // With frozen matches, d/dt of the Chamfer of (V + t) is the sum of its residual terms.
        let v = [Vector3::new(0.1, 0.0, 0.0), Vector3::new(1.0, 0.2, 0.0)];
        let p = [Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.1), Vector3::new(1.1, 0.1, 0.0)];
        let t = chamfer(&v, &p, None);
        let g: Vector3<f64> = t.grad.iter().sum();
        let expected = (2.0 / 2.0) * ((v[0] - p[0]) + (v[1] - p[2])) + (2.0 / 3.0) * ((v[0] - p[0]) + (v[1] - p[1]) + (v[1] - p[2]));
        assert!((g - expected).norm() < 1e-12);
    }

    #[test]
    fn hyperext_examples() {
        let hinges: Vec<HingeJoint> = (1..=4).map(|j| HingeJoint { joint: j, axis: 0, sign: 1.0 }).collect();
        let mut theta = vec![AxisAngle::zero(); 4];
        assert_eq!(loss_hyperext(&theta, &hinges), 4.0);
        theta[2] = AxisAngle::new(2f64.ln(), 0.0, 0.0);
        assert!((loss_hyperext(&theta, &hinges) - 5.0).abs() < 1e-12);
        theta[2] = AxisAngle::new(-800.0, 0.0, 0.0);
        assert!((loss_hyperext(&theta, &hinges) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn occ_examples() {
        let q0 = UnitQuaternion::identity();
        let q = UnitQuaternion::new(0.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(loss_occ(&[q0], &[q0]), 0.0);
        assert_eq!(loss_occ(&[q0.neg()], &[q0]), 0.0);
        assert_eq!(loss_occ(&[q], &[q0]), 1.0);
    }
}
