//! Rigid point-to-point ICP and the global-pose update it produces.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::body_model::BodyParams;
use crate::geometry::{rigid_fit, spread_singular_values, AxisAngle, NnIndex, RigidTransform};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcpConfig {
    pub max_iters: usize,
    /// Stop when the mean squared correspondence error improves by less (m^2).
    pub tolerance: f64,
    /// Pairs farther than this multiple of the median distance are dropped.
    pub rejection_factor: f64,
    /// Source is degenerate when its second spread singular value is below
    /// this fraction of the first.
    pub degeneracy_ratio: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        IcpConfig {
            max_iters: 50,
            tolerance: 1e-8,
            rejection_factor: 3.0,
            degeneracy_ratio: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IcpResult {
    /// Maps source points onto the target.
    pub transform: RigidTransform,
    pub rmse: f64,
    pub iterations: usize,
    /// Mean squared error of the accepted pose at each iteration; non-increasing.
    pub mse_trace: Vec<f64>,
}

struct Matches {
    src: Vec<Vector3<f64>>,
    dst: Vec<Vector3<f64>>,
    mse: f64,
}

fn correspond(source: &[Vector3<f64>], index: &NnIndex, t: &RigidTransform, factor: f64) -> Matches {
    let pairs: Vec<(usize, usize, f64)> = source
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (j, d2) = index.nearest(&t.apply(p));
            (i, j, d2)
        })
        .collect();
    let mut dists: Vec<f64> = pairs.iter().map(|p| p.2.sqrt()).collect();
    let mid = dists.len() / 2;
    let median = *dists.select_nth_unstable_by(mid, f64::total_cmp).1;
    let cutoff = factor * median;
    let mut m = Matches {
        src: Vec::new(),
        dst: Vec::new(),
        mse: 0.0,
    };
    for (i, j, d2) in pairs {
        if d2.sqrt() <= cutoff {
            m.src.push(source[i]);
            m.dst.push(*index.point(j));
            m.mse += d2;
        }
    }
    m.mse /= m.src.len() as f64;
    m
}

/// Aligns `source` to `target` starting from `init`.
pub fn icp_align(
    source: &[Vector3<f64>],
    target: &[Vector3<f64>],
    init: &RigidTransform,
    config: &IcpConfig,
) -> Result<IcpResult> {
    if source.len() < 3 || target.len() < 3 {
        return Err(Error::Degenerate(format!(
            "ICP needs at least 3 points on each side (source {}, target {})",
            source.len(),
            target.len()
        )));
    }
    let sv = spread_singular_values(source);
    if !(sv[1] > config.degeneracy_ratio * sv[0]) {
        return Err(Error::Degenerate("ICP source points are (nearly) collinear".into()));
    }
    let index = NnIndex::build(target)?;

    let mut current = *init;
    let mut matches = correspond(source, &index, &current, config.rejection_factor);
    let mut trace = vec![matches.mse];
    let mut iterations = 0;
    while iterations < config.max_iters {
        iterations += 1;
        let candidate = rigid_fit(&matches.src, &matches.dst)?;
        let next = correspond(source, &index, &candidate, config.rejection_factor);
        if !(next.mse <= matches.mse) {
            break;
        }
        let improvement = matches.mse - next.mse;
        current = candidate;
        matches = next;
        trace.push(matches.mse);
        if improvement < config.tolerance {
            break;
        }
    }
    Ok(IcpResult {
        transform: current,
        rmse: matches.mse.sqrt(),
        iterations,
        mse_trace: trace,
    })
}

/// Applies a rigid correction to the global placement of a body.
pub fn apply_global_update(params: &BodyParams, t: &RigidTransform) -> BodyParams {
    let r = t.rotation * params.theta_global.to_matrix();
    BodyParams {
        theta_global: AxisAngle::from_matrix(&r).expect("product of rotations is a rotation"),
        t_cam: t.rotation * params.t_cam + t.translation,
        ..params.clone()
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::body_model::{toy_model, ToyModelConfig};

    fn blob(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| Vector3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.9..0.9), rng.random_range(-0.15..0.15)))
            .collect()
    }

    fn random_motion(rng: &mut ChaCha8Rng, max_t: f64, max_r: f64) -> RigidTransform {
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalize();
        let dir = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalize();
        RigidTransform::from_axis_angle(AxisAngle(axis * rng.random_range(0.0..max_r)), dir * rng.random_range(0.0..max_t))
    }

    #[test]
    fn identical_clouds_give_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let src = blob(&mut rng, 200);
        let r = icp_align(&src, &src, &RigidTransform::identity(), &IcpConfig::default()).unwrap();
        assert!((r.transform.rotation - nalgebra::Matrix3::identity()).amax() < 1e-12);
        assert!(r.transform.translation.norm() < 1e-12);
        assert_eq!(r.rmse, 0.0);
    }

    #[test]
    fn recovers_small_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let src = blob(&mut rng, 400);
            let g = random_motion(&mut rng, 0.05, 0.1);
            let dst: Vec<_> = src.iter().map(|p| g.apply(p)).collect();
            let r = icp_align(&src, &dst, &RigidTransform::identity(), &IcpConfig::default()).unwrap();
            let err = r.transform.compose(&g.inverse());
            assert!(err.translation.norm() < 1e-4 && err.rotation_angle() < 1e-4, "{err:?}");
            assert!(r.mse_trace.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn equivariant_under_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let src = blob(&mut rng, 300);
        let g = random_motion(&mut rng, 0.05, 0.1);
        let dst: Vec<_> = src.iter().map(|p| g.apply(p)).collect();
        let q = random_motion(&mut rng, 1.0, 3.0);
        let a = icp_align(&src, &dst, &RigidTransform::identity(), &IcpConfig::default()).unwrap();
        let src_q: Vec<_> = src.iter().map(|p| q.apply(p)).collect();
        let dst_q: Vec<_> = dst.iter().map(|p| q.apply(p)).collect();
        let b = icp_align(&src_q, &dst_q, &RigidTransform::identity(), &IcpConfig::default()).unwrap();
        let conj = q.compose(&a.transform).compose(&q.inverse());
        let diff = conj.compose(&b.transform.inverse());
        assert!(diff.translation.norm() < 1e-6 && diff.rotation_angle() < 1e-6);
    }

    #[test]
    fn collinear_source_is_degenerate() {
        let src: Vec<_> = (0..3).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        let dst = vec![Vector3::zeros(), Vector3::x(), Vector3::y()];
        assert!(matches!(
            icp_align(&src, &dst, &RigidTransform::identity(), &IcpConfig::default()),
            Err(Error::Degenerate(_))
        ));
        assert!(icp_align(&[], &dst, &RigidTransform::identity(), &IcpConfig::default()).is_err());
    }

    #[test]
    fn global_update_examples() {
        let model = toy_model(&ToyModelConfig::coarse()).unwrap();
        let mut p = model.rest_params();
        p.theta_global = AxisAngle::new(0.3, 2.5, -0.4);
        p.theta_body[4] = AxisAngle::new(0.2, 0.1, 0.0);
        p.t_cam = Vector3::new(0.1, 0.2, 4.0);

        assert_eq!(apply_global_update(&p, &RigidTransform::identity()).t_cam, p.t_cam);
        let d = Vector3::new(0.5, -0.1, 0.2);
        let moved = apply_global_update(&p, &RigidTransform::from_translation(d));
        assert!((moved.t_cam - (p.t_cam + d)).norm() < 1e-15);
        assert!((moved.theta_global.0 - p.theta_global.0).norm() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_motion(&mut rng, 1.0, 3.0);
        let (before, joints_before) = model.pose_mesh(&p).unwrap();
        let (after, joints_after) = model.pose_mesh(&apply_global_update(&p, &t)).unwrap();
        for (a, b) in after.iter().zip(&before).chain(joints_after.iter().zip(&joints_before)) {
            assert!((a - t.apply(b)).norm() < 1e-7);
        }
    }
}
