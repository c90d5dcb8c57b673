use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::AxisAngle;
use crate::{Error, Result};

/// Sanity bound on shape coefficients accepted from files.
pub const MAX_ABS_BETA: f64 = 10.0;

/// Shape, pose and placement of one body.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyParams {
    pub beta: Vec<f64>,
    pub theta_global: AxisAngle,
    /// One rotation per non-root joint, in joint order.
    pub theta_body: Vec<AxisAngle>,
    pub t_cam: Vector3<f64>,
}

impl BodyParams {
    pub fn zeros(num_betas: usize, num_joints: usize) -> Self {
        BodyParams {
            beta: vec![0.0; num_betas],
            theta_global: AxisAngle::zero(),
            theta_body: vec![AxisAngle::zero(); num_joints.saturating_sub(1)],
            t_cam: Vector3::zeros(),
        }
    }

    /// Rotation of joint `j` (joint 0 is the root, which is posed globally).
    pub fn joint_rotation(&self, j: usize) -> AxisAngle {
        if j == 0 {
            AxisAngle::zero()
        } else {
            self.theta_body[j - 1]
        }
    }

    pub fn is_finite(&self) -> bool {
        self.beta.iter().all(|x| x.is_finite())
            && self.theta_global.0.iter().all(|x| x.is_finite())
            && self.theta_body.iter().all(|a| a.0.iter().all(|x| x.is_finite()))
            && self.t_cam.iter().all(|x| x.is_finite())
    }

    pub fn check_dims(&self, num_betas: usize, num_joints: usize) -> Result<()> {
        if self.beta.len() != num_betas {
            return Err(Error::Dimension {
                what: "beta",
                expected: num_betas,
                got: self.beta.len(),
            });
        }
        if self.theta_body.len() + 1 != num_joints {
            return Err(Error::Dimension {
                what: "theta_body",
                expected: num_joints - 1,
                got: self.theta_body.len(),
            });
        }
        Ok(())
    }

    /// Full check used on externally supplied parameters.
    pub fn validate(&self, num_betas: usize, num_joints: usize) -> Result<()> {
        self.check_dims(num_betas, num_joints)?;
        if !self.is_finite() {
            return Err(Error::Domain("body parameters contain non-finite values".into()));
        }
        if let Some(b) = self.beta.iter().find(|b| b.abs() > MAX_ABS_BETA) {
            return Err(Error::Domain(format!("shape coefficient {b} exceeds +/-{MAX_ABS_BETA}")));
        }
        Ok(())
    }
}

/// Flat parameter vector layout: `[beta | theta_global | theta_body | t_cam]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    pub num_betas: usize,
    pub num_joints: usize,
}

impl ParamLayout {
    pub fn new(num_betas: usize, num_joints: usize) -> Self {
        ParamLayout { num_betas, num_joints }
    }

    pub fn len(&self) -> usize {
        self.num_betas + 3 * self.num_joints + 3
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn beta(&self) -> std::ops::Range<usize> {
        0..self.num_betas
    }

    pub fn theta_global(&self) -> std::ops::Range<usize> {
        self.num_betas..self.num_betas + 3
    }

    pub fn theta_body(&self) -> std::ops::Range<usize> {
        let s = self.num_betas + 3;
        s..s + 3 * (self.num_joints - 1)
    }

    /// Offset of the rotation of non-root joint `j`.
    pub fn joint_offset(&self, j: usize) -> usize {
        debug_assert!(j >= 1);
        self.num_betas + 3 * j
    }

    pub fn t_cam(&self) -> std::ops::Range<usize> {
        let s = self.num_betas + 3 * self.num_joints;
        s..s + 3
    }

    pub fn to_vector(&self, p: &BodyParams) -> DVector<f64> {
        let mut x = DVector::zeros(self.len());
        x.rows_mut(0, self.num_betas).copy_from_slice(&p.beta);
        x.fixed_rows_mut::<3>(self.theta_global().start).copy_from(&p.theta_global.0);
        for (i, a) in p.theta_body.iter().enumerate() {
            x.fixed_rows_mut::<3>(self.joint_offset(i + 1)).copy_from(&a.0);
        }
        x.fixed_rows_mut::<3>(self.t_cam().start).copy_from(&p.t_cam);
        x
    }

    pub fn from_vector(&self, x: &DVector<f64>) -> BodyParams {
        let v3 = |s: usize| Vector3::new(x[s], x[s + 1], x[s + 2]);
        BodyParams {
            beta: x.rows(0, self.num_betas).iter().copied().collect(),
            theta_global: AxisAngle(v3(self.theta_global().start)),
            theta_body: (1..self.num_joints).map(|j| AxisAngle(v3(self.joint_offset(j)))).collect(),
            t_cam: v3(self.t_cam().start),
        }
    }

    /// Human-readable name of a flat parameter index.
    pub fn describe(&self, i: usize) -> String {
        const AXES: [&str; 3] = ["x", "y", "z"];
        if self.beta().contains(&i) {
            format!("beta[{i}]")
        } else if self.theta_global().contains(&i) {
            format!("theta_global.{}", AXES[i - self.theta_global().start])
        } else if self.theta_body().contains(&i) {
            let k = i - self.theta_body().start;
            format!("theta_body[{}].{}", k / 3 + 1, AXES[k % 3])
        } else {
            format!("t_cam.{}", AXES[i - self.t_cam().start])
        }
    }
}
