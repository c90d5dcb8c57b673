use nalgebra::{Matrix3, Matrix4x3, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Below this angle the closed forms switch to their Taylor expansions.
const SMALL_ANGLE: f64 = 1e-6;

/// Tolerance used when validating that a matrix is a proper rotation.
const ROTATION_TOLERANCE: f64 = 1e-6;

/// Cross-product matrix `[v]x`, so that `skew(v) * w == v.cross(&w)`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation encoded as `angle * axis`.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AxisAngle(pub Vector3<f64>);

impl AxisAngle {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        AxisAngle(Vector3::new(x, y, z))
    }

    pub fn zero() -> Self {
        AxisAngle(Vector3::zeros())
    }

    pub fn angle(&self) -> f64 {
        self.0.norm()
    }

    /// Rodrigues' formula.
    pub fn to_matrix(&self) -> Matrix3<f64> {
        let v = &self.0;
        let theta2 = v.norm_squared();
        let k = skew(v);
        if theta2.sqrt() < SMALL_ANGLE {
            return Matrix3::identity() + k + 0.5 * k * k;
        }
        let theta = theta2.sqrt();
        let a = theta.sin() / theta;
        let b = (1.0 - theta.cos()) / theta2;
        Matrix3::identity() + a * k + b * k * k
    }

    /// Partial derivatives `dR/dv_i` of [`AxisAngle::to_matrix`].
    pub fn matrix_jacobian(&self) -> [Matrix3<f64>; 3] {
        let v = &self.0;
        let theta2 = v.norm_squared();
        let basis = [Vector3::x(), Vector3::y(), Vector3::z()];
        if theta2.sqrt() < SMALL_ANGLE {
            let k = skew(v);
            return basis.map(|e| {
                let ei = skew(&e);
                ei + 0.5 * (ei * k + k * ei)
            });
        }
        let r = self.to_matrix();
        let k = skew(v);
        let i_minus_r = Matrix3::identity() - r;
        let mut out = [Matrix3::zeros(); 3];
        for (i, e) in basis.iter().enumerate() {
            let w = v.cross(&(i_minus_r * e));
            out[i] = (v[i] * k + skew(&w)) * r / theta2;
        }
        out
    }

    /// Logarithm map of a rotation matrix; the result has angle in `[0, pi]`.
    pub fn from_matrix(m: &Matrix3<f64>) -> Result<Self> {
        check_rotation(m)?;
        Ok(UnitQuaternion::from_rotation_unchecked(m).to_axis_angle())
    }

    pub fn to_quaternion(&self) -> UnitQuaternion {
        let v = &self.0;
        let theta = v.norm();
        let half = 0.5 * theta;
        let s = if theta < SMALL_ANGLE {
            0.5 - theta * theta / 48.0
        } else {
            half.sin() / theta
        };
        UnitQuaternion {
            w: half.cos(),
            x: s * v.x,
            y: s * v.y,
            z: s * v.z,
        }
    }

    /// Jacobian of [`AxisAngle::to_quaternion`], rows ordered `(w, x, y, z)`.
    pub fn quaternion_jacobian(&self) -> Matrix4x3<f64> {
        let v = &self.0;
        let theta = v.norm();
        let (s, k) = if theta < SMALL_ANGLE {
            (0.5 - theta * theta / 48.0, -1.0 / 24.0 + theta * theta / 960.0)
        } else {
            let half = 0.5 * theta;
            let s = half.sin() / theta;
            let k = (half * half.cos() - half.sin()) / (theta * theta * theta);
            (s, k)
        };
        let mut jac = Matrix4x3::zeros();
        let dw = -0.5 * s * v;
        jac.fixed_view_mut::<1, 3>(0, 0).copy_from(&dw.transpose());
        let dxyz = Matrix3::identity() * s + k * v * v.transpose();
        jac.fixed_view_mut::<3, 3>(1, 0).copy_from(&dxyz);
        jac
    }
}

/// Unit quaternion `(w, x, y, z)`; `q` and `-q` are the same rotation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitQuaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl UnitQuaternion {
    pub fn identity() -> Self {
        UnitQuaternion {
            w: 1.0,
            x: 0.0,
            y: 0.0,
            z: 0.0,
        }
    }

    /// Normalizes the four components; fails on a (near) zero vector.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !(n.is_finite() && n > 1e-12) {
            return Err(Error::Domain("quaternion with zero norm".into()));
        }
        Ok(UnitQuaternion {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn dot(&self, other: &UnitQuaternion) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn neg(&self) -> Self {
        UnitQuaternion {
            w: -self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    pub fn from_matrix(m: &Matrix3<f64>) -> Result<Self> {
        check_rotation(m)?;
        Ok(Self::from_rotation_unchecked(m))
    }

    /// Shepperd's method, picking the numerically largest pivot.
    fn from_rotation_unchecked(m: &Matrix3<f64>) -> Self {
        let trace = m.trace();
        let (w, x, y, z);
        if trace > m[(0, 0)] && trace > m[(1, 1)] && trace > m[(2, 2)] {
            let s = 2.0 * (1.0 + trace).sqrt();
            w = 0.25 * s;
            x = (m[(2, 1)] - m[(1, 2)]) / s;
            y = (m[(0, 2)] - m[(2, 0)]) / s;
            z = (m[(1, 0)] - m[(0, 1)]) / s;
        } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
            let s = 2.0 * (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt();
            w = (m[(2, 1)] - m[(1, 2)]) / s;
            x = 0.25 * s;
            y = (m[(0, 1)] + m[(1, 0)]) / s;
            z = (m[(0, 2)] + m[(2, 0)]) / s;
        } else if m[(1, 1)] > m[(2, 2)] {
            let s = 2.0 * (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt();
            w = (m[(0, 2)] - m[(2, 0)]) / s;
            x = (m[(0, 1)] + m[(1, 0)]) / s;
            y = 0.25 * s;
            z = (m[(1, 2)] + m[(2, 1)]) / s;
        } else {
            let s = 2.0 * (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt();
            w = (m[(1, 0)] - m[(0, 1)]) / s;
            x = (m[(0, 2)] + m[(2, 0)]) / s;
            y = (m[(1, 2)] + m[(2, 1)]) / s;
            z = 0.25 * s;
        }
        let n = (w * w + x * x + y * y + z * z).sqrt();
        let sign = if w < 0.0 { -1.0 } else { 1.0 };
        UnitQuaternion {
            w: sign * w / n,
            x: sign * x / n,
            y: sign * y / n,
            z: sign * z / n,
        }
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    pub fn to_axis_angle(&self) -> AxisAngle {
        let q = if self.w < 0.0 { self.neg() } else { *self };
        let v = Vector3::new(q.x, q.y, q.z);
        let s = v.norm();
        if s < 1e-12 {
            // sin(theta/2) ~ theta/2 near the identity
            return AxisAngle(2.0 * v);
        }
        let theta = 2.0 * s.atan2(q.w);
        AxisAngle(v * (theta / s))
    }
}

/// Validates orthonormality and a positive determinant.
pub(crate) fn check_rotation(m: &Matrix3<f64>) -> Result<()> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("rotation matrix has non-finite entries".into()));
    }
    let err = (m.transpose() * m - Matrix3::identity()).abs().max();
    if err > ROTATION_TOLERANCE {
        return Err(Error::Domain(format!(
            "matrix is not orthonormal (max |R^T R - I| = {err:.3e})"
        )));
    }
    if m.determinant() <= 0.0 {
        return Err(Error::Domain("matrix has negative determinant".into()));
    }
    Ok(())
}

/// `x -> rotation * x + translation`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        check_rotation(&rotation)?;
        if translation.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("translation has non-finite entries".into()));
        }
        Ok(RigidTransform {
            rotation,
            translation,
        })
    }

    pub fn from_axis_angle(rotation: AxisAngle, translation: Vector3<f64>) -> Self {
        RigidTransform {
            rotation: rotation.to_matrix(),
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn rotation_angle(&self) -> f64 {
        let c = ((self.rotation.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        c.acos()
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use proptest::prelude::*;

    use super::*;

    fn approx_vec(a: &Vector3<f64>, b: &Vector3<f64>, tol: f64) -> bool {
        (a - b).amax() <= tol
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = AxisAngle::new(0.0, 0.0, FRAC_PI_2).to_matrix();
        let p = r * Vector3::x();
        assert!(approx_vec(&p, &Vector3::y(), 1e-12));
    }

    #[test]
    fn zero_axis_angle_is_identity() {
        assert_eq!(AxisAngle::zero().to_matrix(), Matrix3::identity());
        assert_eq!(AxisAngle::zero().to_quaternion(), UnitQuaternion::identity());
    }

    #[test]
    fn identity_quaternion_gives_identity_matrix() {
        assert_eq!(UnitQuaternion::identity().to_matrix(), Matrix3::identity());
    }

    #[test]
    fn transform_then_inverse_is_identity() {
        let t = RigidTransform::from_axis_angle(
            AxisAngle::new(0.3, -1.1, 0.4),
            Vector3::new(1.0, -2.0, 0.5),
        );
        let p = Vector3::new(0.7, 0.1, -3.0);
        let q = t.compose(&t.inverse()).apply(&p);
        assert!(approx_vec(&p, &q, 1e-9));
        let q = t.inverse().apply(&t.apply(&p));
        assert!(approx_vec(&p, &q, 1e-9));
    }

    #[test]
    fn rejects_non_orthonormal() {
        let mut m = Matrix3::identity();
        m[(0, 1)] = 1e-3;
        assert!(matches!(AxisAngle::from_matrix(&m), Err(Error::Domain(_))));
        assert!(RigidTransform::new(m, Vector3::zeros()).is_err());
        let reflection = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(UnitQuaternion::from_matrix(&reflection).is_err());
    }

    #[test]
    fn log_map_near_pi() {
        let aa = AxisAngle::new(0.0, std::f64::consts::PI - 1e-9, 0.0);
        let back = AxisAngle::from_matrix(&aa.to_matrix()).unwrap();
        assert!((back.to_matrix() - aa.to_matrix()).amax() < 1e-9);
    }

    fn central_difference<F: Fn(&AxisAngle) -> nalgebra::DVector<f64>>(
        f: F,
        v: &AxisAngle,
        i: usize,
    ) -> nalgebra::DVector<f64> {
        let h = 1e-6;
        let mut plus = *v;
        plus.0[i] += h;
        let mut minus = *v;
        minus.0[i] -= h;
        (f(&plus) - f(&minus)) / (2.0 * h)
    }

    #[test]
    fn matrix_jacobian_matches_finite_differences() {
        for v in [
            AxisAngle::new(0.3, -0.7, 1.2),
            AxisAngle::new(1e-8, 0.0, -2e-8),
            AxisAngle::zero(),
            AxisAngle::new(0.0, 3.0, 0.0),
        ] {
            let jac = v.matrix_jacobian();
            for (i, analytic) in jac.iter().enumerate() {
                let fd = central_difference(
                    |a| nalgebra::DVector::from_column_slice(a.to_matrix().as_slice()),
                    &v,
                    i,
                );
                let an = nalgebra::DVector::from_column_slice(analytic.as_slice());
                assert!((fd - an).amax() < 1e-7, "axis {i} at {v:?}");
            }
        }
    }

    #[test]
    fn quaternion_jacobian_matches_finite_differences() {
        for v in [
            AxisAngle::new(0.3, -0.7, 1.2),
            AxisAngle::new(1e-9, 0.0, 0.0),
            AxisAngle::new(2.5, 0.5, -0.1),
        ] {
            let jac = v.quaternion_jacobian();
            for i in 0..3 {
                let fd = central_difference(
                    |a| nalgebra::DVector::from_column_slice(&a.to_quaternion().as_array()),
                    &v,
                    i,
                );
                let an = jac.column(i).into_owned();
                for r in 0..4 {
                    assert!((fd[r] - an[r]).abs() < 1e-7);
                }
            }
        }
    }

    fn axis_angle_strategy() -> impl Strategy<Value = AxisAngle> {
        (-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0).prop_map(|(x, y, z)| AxisAngle::new(x, y, z))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn quaternion_round_trip_reproduces_matrix(v in axis_angle_strategy()) {
            let m = v.to_matrix();
            let back = UnitQuaternion::from_matrix(&m).unwrap().to_matrix();
            prop_assert!((m - back).amax() <= 1e-9);
        }

        #[test]
        fn axis_angle_round_trip_preserves_action(v in axis_angle_strategy()) {
            let m = v.to_matrix();
            let back = AxisAngle::from_matrix(&m).unwrap().to_matrix();
            prop_assert!((m - back).amax() <= 1e-9);
            prop_assert!((m.determinant() - 1.0).abs() <= 1e-9);
        }

        #[test]
        fn quaternion_routes_agree(v in axis_angle_strategy()) {
            let q = v.to_quaternion();
            prop_assert!((q.dot(&q) - 1.0).abs() <= 1e-9);
            prop_assert!((q.to_matrix() - v.to_matrix()).amax() <= 1e-9);
            prop_assert!((q.neg().to_matrix() - v.to_matrix()).amax() <= 1e-9);
        }

        #[test]
        fn composition_is_associative(
            a in axis_angle_strategy(), b in axis_angle_strategy(), c in axis_angle_strategy(),
            t in (-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0),
        ) {
            let ta = RigidTransform::from_axis_angle(a, Vector3::new(t.0, t.1, t.2));
            let tb = RigidTransform::from_axis_angle(b, Vector3::new(t.2, t.0, t.1));
            let tc = RigidTransform::from_axis_angle(c, Vector3::new(t.1, t.2, t.0));
            let left = ta.compose(&tb).compose(&tc);
            let right = ta.compose(&tb.compose(&tc));
            prop_assert!((left.rotation - right.rotation).amax() <= 1e-9);
            prop_assert!((left.translation - right.translation).amax() <= 1e-9);
        }
    }
}
