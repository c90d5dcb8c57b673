use nalgebra::{Matrix3, Vector3};

use super::RigidTransform;
use crate::{Error, Result};

/// Similarity transform `x -> scale * R x + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Similarity {
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * p) + self.translation
    }
}

fn centroid(points: &[Vector3<f64>]) -> Vector3<f64> {
    points.iter().sum::<Vector3<f64>>() / points.len() as f64
}

/// Closed-form least-squares alignment of `src` onto `dst` (Umeyama), with a
/// reflection guard. `with_scale = false` gives the Kabsch rigid solution.
fn umeyama(src: &[Vector3<f64>], dst: &[Vector3<f64>], with_scale: bool) -> Result<Similarity> {
    if src.len() != dst.len() {
        return Err(Error::Dimension {
            what: "correspondences",
            expected: src.len(),
            got: dst.len(),
        });
    }
    if src.is_empty() {
        return Err(Error::Degenerate("alignment needs at least one correspondence".into()));
    }
    let (ca, cb) = (centroid(src), centroid(dst));
    let mut h = Matrix3::zeros();
    let mut var_src = 0.0;
    for (a, b) in src.iter().zip(dst) {
        let (da, db) = (a - ca, b - cb);
        h += db * da.transpose();
        var_src += da.norm_squared();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested U"), svd.v_t.expect("requested V^T"));
    let d = if (u * v_t).determinant() < 0.0 { -1.0 } else { 1.0 };
    let s = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    let rotation = u * s * v_t;
    let scale = if with_scale {
        if var_src <= 0.0 {
            return Err(Error::Degenerate("source points coincide; scale is undefined".into()));
        }
        let sv = svd.singular_values;
        (sv[0] + sv[1] + d * sv[2]) / var_src
    } else {
        1.0
    };
    Ok(Similarity {
        scale,
        rotation,
        translation: cb - scale * (rotation * ca),
    })
}

/// Rigid transform minimizing `sum |T a_i - b_i|^2`.
pub fn rigid_fit(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Result<RigidTransform> {
    let s = umeyama(src, dst, false)?;
    Ok(RigidTransform {
        rotation: s.rotation,
        translation: s.translation,
    })
}

/// Similarity transform minimizing `sum |s R a_i + t - b_i|^2`.
pub fn similarity_fit(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Result<Similarity> {
    umeyama(src, dst, true)
}

/// Singular values of the centered point spread, descending.
pub fn spread_singular_values(points: &[Vector3<f64>]) -> Vector3<f64> {
    if points.is_empty() {
        return Vector3::zeros();
    }
    let c = centroid(points);
    let mut m = Matrix3::zeros();
    for p in points {
        let d = p - c;
        m += d * d.transpose();
    }
    let mut sv = m.symmetric_eigenvalues().map(|x| x.max(0.0).sqrt());
    sv.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    sv
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::geometry::AxisAngle;

    fn cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-0.5..0.5), rng.random_range(-0.2..0.2)))
            .collect()
    }

    #[test]
    fn recovers_exact_rigid_and_similarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let src = cloud(&mut rng, 30);
            let r = AxisAngle::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)).to_matrix();
            let t = Vector3::new(1.0, -2.0, 0.5);
            let s = rng.random_range(0.5..2.0);
            let dst: Vec<_> = src.iter().map(|p| r * p + t).collect();
            let fit = rigid_fit(&src, &dst).unwrap();
            assert!((fit.rotation - r).amax() < 1e-10);
            assert!((fit.translation - t).amax() < 1e-10);
            let scaled: Vec<_> = src.iter().map(|p| s * (r * p) + t).collect();
            let sim = similarity_fit(&src, &scaled).unwrap();
            assert!((sim.scale - s).abs() < 1e-10);
            assert!((sim.rotation - r).amax() < 1e-10);
        }
    }

    #[test]
    fn never_returns_a_reflection() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let src = cloud(&mut rng, 20);
        let mirrored: Vec<_> = src.iter().map(|p| Vector3::new(-p.x, p.y, p.z)).collect();
        let fit = rigid_fit(&src, &mirrored).unwrap();
        assert!((fit.rotation.determinant() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn spread_of_collinear_points() {
        let pts: Vec<_> = (0..5).map(|i| Vector3::new(i as f64, 2.0 * i as f64, 0.0)).collect();
        let sv = spread_singular_values(&pts);
        assert!(sv[0] > 1.0 && sv[1] < 1e-9 && sv[2] < 1e-9);
    }
}
