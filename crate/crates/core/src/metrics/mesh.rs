use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::body_model::mesh_edges;
use crate::geometry::{similarity_fit, spread_singular_values, Similarity, TriangleMesh};
use crate::{Error, Result};

fn check_counts(what: &'static str, pred: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::Dimension {
            what,
            expected: gt.len(),
            got: pred.len(),
        });
    }
    if gt.is_empty() {
        return Err(Error::Domain(format!("{what}: nothing to compare")));
    }
    Ok(())
}

fn mean_distance_mm(pred: &[Vector3<f64>], gt: &[Vector3<f64>]) -> f64 {
    pred.iter().zip(gt).map(|(a, b)| (a - b).norm()).sum::<f64>() / gt.len() as f64 * 1000.0
}

/// Mean per-vertex error in millimeters (inputs in meters).
pub fn pve(pred: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Result<f64> {
    check_counts("vertices", pred, gt)?;
    Ok(mean_distance_mm(pred, gt))
}

/// Mean per-joint position error in millimeters.
pub fn mpjpe(pred: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Result<f64> {
    check_counts("joints", pred, gt)?;
    Ok(mean_distance_mm(pred, gt))
}

/// Similarity (rotation, uniform scale, translation) taking `pred` closest to `gt`.
pub fn procrustes(pred: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Result<Similarity> {
    check_counts("joints", pred, gt)?;
    for (name, pts) in [("predicted", pred), ("ground-truth", gt)] {
        let sv = spread_singular_values(pts);
        if pts.len() < 3 || sv[1] <= 1e-9 * sv[0].max(f64::MIN_POSITIVE) {
            return Err(Error::Degenerate(format!("{name} joints are collinear or coincident")));
        }
    }
    similarity_fit(pred, gt)
}

/// MPJPE after Procrustes alignment of `pred` onto `gt`.
pub fn pa_mpjpe(pred: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Result<f64> {
    let s = procrustes(pred, gt)?;
    let aligned: Vec<Vector3<f64>> = pred.iter().map(|p| s.apply(p)).collect();
    Ok(mean_distance_mm(&aligned, gt))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mpere {
    pub value: f64,
    pub edges: usize,
    /// Edges skipped because their ground-truth length is zero.
    pub zero_length: usize,
}

/// Mean relative edge-length error over the shared topology.
pub fn mpere(pred: &TriangleMesh, gt: &TriangleMesh) -> Result<Mpere> {
    if pred.faces != gt.faces || pred.vertices.len() != gt.vertices.len() {
        return Err(Error::Domain("meshes do not share a topology".into()));
    }
    let mut sum = 0.0;
    let mut edges = 0;
    let mut zero_length = 0;
    for (a, b) in mesh_edges(&gt.faces) {
        let lg = (gt.vertices[a] - gt.vertices[b]).norm();
        if lg == 0.0 {
            zero_length += 1;
            continue;
        }
        let lp = (pred.vertices[a] - pred.vertices[b]).norm();
        sum += (lp - lg).abs() / lg;
        edges += 1;
    }
    if zero_length > 0 {
        log::warn!("MPERE skipped {zero_length} zero-length ground-truth edges");
    }
    if edges == 0 {
        return Err(Error::Domain("no edges with positive ground-truth length".into()));
    }
    Ok(Mpere {
        value: sum / edges as f64,
        edges,
        zero_length,
    })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::geometry::{AxisAngle, RigidTransform};

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
        (0..n).map(|_| Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
    }

    #[test]
    fn pve_examples() {
        let gt = vec![Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0)];
        assert_eq!(pve(&gt, &gt).unwrap(), 0.0);
        let shifted: Vec<_> = gt.iter().map(|p| p + Vector3::new(0.0, 0.005, 0.0)).collect();
        assert!((pve(&shifted, &gt).unwrap() - 5.0).abs() < 1e-9);
        let pred = vec![Vector3::zeros(), Vector3::new(1.0, 0.01, 0.0)];
        assert!((pve(&pred, &gt).unwrap() - 5.0).abs() < 1e-9);
        assert!(matches!(pve(&pred[..1], &gt), Err(Error::Dimension { .. })));
    }

    #[test]
    fn mpjpe_examples() {
        let gt = vec![Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0)];
        let shifted: Vec<_> = gt.iter().map(|p| p + Vector3::new(0.007, 0.0, 0.0)).collect();
        assert!((mpjpe(&shifted, &gt).unwrap() - 7.0).abs() < 1e-9);
        // errors of 3, 4 and 5 mm
        let pred = vec![Vector3::new(0.003, 0.0, 0.0), Vector3::new(1.0, 0.004, 0.0), Vector3::new(0.0, 1.0, 0.005)];
        assert!((mpjpe(&pred, &gt).unwrap() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn pa_mpjpe_removes_similarities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let gt = random_points(&mut rng, 12);
            let r = AxisAngle::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)).to_matrix();
            let s = rng.random_range(0.2..5.0);
            let t = Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let pred: Vec<_> = gt.iter().map(|p| s * (r * p) + t).collect();
            assert!(pa_mpjpe(&pred, &gt).unwrap() < 1e-9);
        }
    }

    #[test]
    fn alignment_never_increases_squared_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let gt = random_points(&mut rng, 10);
            let pred = random_points(&mut rng, 10);
            let s = procrustes(&pred, &gt).unwrap();
            let aligned: f64 = pred.iter().zip(&gt).map(|(p, g)| (s.apply(p) - g).norm_squared()).sum();
            let raw: f64 = pred.iter().zip(&gt).map(|(p, g)| (p - g).norm_squared()).sum();
            assert!(aligned <= raw + 1e-12);
        }
    }

    #[test]
    fn closed_form_beats_sampled_rotations() {
        // oracle: random rotations, each with its optimal scale and translation
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gt = random_points(&mut rng, 10);
        let pred: Vec<_> = random_points(&mut rng, 10).iter().zip(&gt).map(|(n, g)| g * 0.8 + n * 0.2).collect();
        let closed = {
            let s = procrustes(&pred, &gt).unwrap();
            pred.iter().zip(&gt).map(|(p, g)| (s.apply(p) - g).norm_squared()).sum::<f64>()
        };
        let cp = pred.iter().sum::<Vector3<f64>>() / 10.0;
        let cg = gt.iter().sum::<Vector3<f64>>() / 10.0;
        let mut best = f64::INFINITY;
        for _ in 0..20000 {
            let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let r = AxisAngle(axis.normalize() * rng.random_range(0.0..0.6)).to_matrix();
            let rp: Vec<_> = pred.iter().map(|p| r * (p - cp)).collect();
            let num: f64 = rp.iter().zip(&gt).map(|(a, g)| a.dot(&(g - cg))).sum();
            let den: f64 = rp.iter().map(|a| a.norm_squared()).sum();
            let s = num / den;
            let err: f64 = rp.iter().zip(&gt).map(|(a, g)| (s * a + cg - g).norm_squared()).sum();
            best = best.min(err);
        }
        assert!(closed <= best + 1e-6, "{closed} vs {best}");
    }

    #[test]
    fn pa_mpjpe_rejects_collinear_joints() {
        let line: Vec<_> = (0..5).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        assert!(matches!(pa_mpjpe(&line, &line), Err(Error::Degenerate(_))));
        assert!(pa_mpjpe(&line[..2], &line[..2]).is_err());
    }

    #[test]
    fn mpere_examples() {
        let gt = TriangleMesh::icosphere(1);
        assert_eq!(mpere(&gt, &gt).unwrap().value, 0.0);
        let scaled = TriangleMesh::new(gt.vertices.iter().map(|v| v * 1.1).collect(), gt.faces.clone()).unwrap();
        assert!((mpere(&scaled, &gt).unwrap().value - 0.1).abs() < 1e-9);
        let t = RigidTransform::from_axis_angle(AxisAngle::new(0.3, -1.0, 2.0), Vector3::new(1.0, 2.0, 3.0));
        assert!(mpere(&gt.transformed(&t), &gt).unwrap().value < 1e-12);
    }

    #[test]
    fn mpere_skips_zero_length_edges() {
        let v = vec![Vector3::zeros(), Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0)];
        let gt = TriangleMesh::new(v.clone(), vec![[0, 1, 2]]).unwrap();
        let mut pv = v;
        pv[2] = Vector3::new(2.0, 0.0, 0.0);
        let pred = TriangleMesh::new(pv, vec![[0, 1, 2]]).unwrap();
        let m = mpere(&pred, &gt).unwrap();
        assert_eq!(m.zero_length, 1);
        assert_eq!(m.edges, 2);
        assert!((m.value - 1.0).abs() < 1e-12);
        let other = TriangleMesh::new(gt.vertices.clone(), vec![[0, 2, 1]]).unwrap();
        assert!(mpere(&other, &gt).is_err());
    }
}
