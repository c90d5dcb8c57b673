use nalgebra::{DVector, Matrix3, Vector3};

use super::{BodyModel, BodyParams};
use crate::{Error, Result};

/// Forward pass of the body model with the intermediates needed for
/// reverse-mode differentiation.
#[derive(Clone, Debug)]
pub struct PosedBody {
    /// Posed vertices, world frame.
    pub vertices: Vec<Vector3<f64>>,
    /// Posed joints, world frame.
    pub joints: Vec<Vector3<f64>>,
    shaped: Vec<Vector3<f64>>,
    rest_joints: Vec<Vector3<f64>>,
    local_rot: Vec<Matrix3<f64>>,
    /// Accumulated chain rotation per joint, body frame.
    chain_rot: Vec<Matrix3<f64>>,
    /// Posed joint location per joint, body frame.
    chain_pos: Vec<Vector3<f64>>,
    body_vertices: Vec<Vector3<f64>>,
    global_rot: Matrix3<f64>,
}

impl PosedBody {
    pub fn forward(model: &BodyModel, params: &BodyParams) -> Result<Self> {
        params.check_dims(model.num_betas(), model.num_joints())?;
        if !params.is_finite() {
            return Err(Error::Domain("body parameters contain non-finite values".into()));
        }
        let shaped = model.shaped_template(&params.beta)?;
        let rest_joints = model.regress_joints(&shaped)?;
        let nj = model.num_joints();

        let local_rot: Vec<Matrix3<f64>> =
            (0..nj).map(|j| params.joint_rotation(j).to_matrix()).collect();
        let mut chain_rot = vec![Matrix3::identity(); nj];
        let mut chain_pos = vec![rest_joints[0]; nj];
        for j in 1..nj {
            let p = model.parent(j).expect("validated: non-root joints have parents");
            chain_rot[j] = chain_rot[p] * local_rot[j];
            chain_pos[j] = chain_rot[p] * (rest_joints[j] - rest_joints[p]) + chain_pos[p];
        }

        let body_vertices: Vec<Vector3<f64>> = shaped
            .iter()
            .zip(model.skin_rows())
            .map(|(v, row)| {
                row.iter().fold(Vector3::zeros(), |acc, &(j, w)| {
                    acc + w * (chain_rot[j] * (v - rest_joints[j]) + chain_pos[j])
                })
            })
            .collect();

        let global_rot = params.theta_global.to_matrix();
        let vertices = body_vertices.iter().map(|v| global_rot * v + params.t_cam).collect();
        let joints = chain_pos.iter().map(|j| global_rot * j + params.t_cam).collect();

        Ok(PosedBody {
            vertices,
            joints,
            shaped,
            rest_joints,
            local_rot,
            chain_rot,
            chain_pos,
            body_vertices,
            global_rot,
        })
    }

    /// Pulls gradients with respect to the posed vertices and joints back onto the
    /// flat parameter vector (see [`super::ParamLayout`]).
    ///
    /// `grad_vertices` and `grad_joints` must be full length (zeros where unused).
    pub fn backward(
        &self,
        model: &BodyModel,
        params: &BodyParams,
        grad_vertices: &[Vector3<f64>],
        grad_joints: &[Vector3<f64>],
    ) -> DVector<f64> {
        let layout = model.layout();
        let nj = model.num_joints();
        let mut out = DVector::zeros(layout.len());

        // world = R_g * body + t
        let mut g_t = Vector3::zeros();
        let mut g_global = Matrix3::zeros();
        let rgt = self.global_rot.transpose();
        let mut g_body_vertices = Vec::with_capacity(grad_vertices.len());
        for (g, b) in grad_vertices.iter().zip(&self.body_vertices) {
            g_t += g;
            g_global += g * b.transpose();
            g_body_vertices.push(rgt * g);
        }
        let mut g_chain_pos: Vec<Vector3<f64>> = Vec::with_capacity(nj);
        for (g, p) in grad_joints.iter().zip(&self.chain_pos) {
            g_t += g;
            g_global += g * p.transpose();
            g_chain_pos.push(rgt * g);
        }

        // linear blend skinning
        let mut g_chain_rot = vec![Matrix3::zeros(); nj];
        let mut g_rest_joints = vec![Vector3::zeros(); nj];
        let mut g_shaped = vec![Vector3::zeros(); self.shaped.len()];
        for (v, row) in model.skin_rows().iter().enumerate() {
            let g = g_body_vertices[v];
            if g == Vector3::zeros() {
                continue;
            }
            for &(j, w) in row {
                let local = self.shaped[v] - self.rest_joints[j];
                g_chain_rot[j] += (w * g) * local.transpose();
                g_chain_pos[j] += w * g;
                let back = w * (self.chain_rot[j].transpose() * g);
                g_shaped[v] += back;
                g_rest_joints[j] -= back;
            }
        }

        // kinematic chain, children before parents
        for j in (1..nj).rev() {
            let p = model.parent(j).expect("validated: non-root joints have parents");
            let rp = self.chain_rot[p];
            let offset = self.rest_joints[j] - self.rest_joints[p];
            let g_local = rp.transpose() * g_chain_rot[j];
            let g_rp = g_chain_rot[j] * self.local_rot[j].transpose() + g_chain_pos[j] * offset.transpose();
            g_chain_rot[p] += g_rp;
            let gp = g_chain_pos[j];
            g_chain_pos[p] += gp;
            let back = rp.transpose() * gp;
            g_rest_joints[j] += back;
            g_rest_joints[p] -= back;

            let dr = params.theta_body[j - 1].matrix_jacobian();
            let off = layout.joint_offset(j);
            for (i, d) in dr.iter().enumerate() {
                out[off + i] = g_local.component_mul(d).sum();
            }
        }
        // root: chain_pos[0] = rest_joints[0], chain_rot[0] = I
        g_rest_joints[0] += g_chain_pos[0];

        // joint regression
        for (j, row) in model.regressor_rows().iter().enumerate() {
            let g = g_rest_joints[j];
            for &(v, w) in row {
                g_shaped[v] += w * g;
            }
        }

        // shape blendshapes
        let nb = model.num_betas();
        let dirs = &model.data().shape_dirs;
        for (v, g) in g_shaped.iter().enumerate() {
            for k in 0..nb {
                out[k] += dirs[v * nb + k].dot(g);
            }
        }

        let dg = params.theta_global.matrix_jacobian();
        let og = layout.theta_global().start;
        for (i, d) in dg.iter().enumerate() {
            out[og + i] = g_global.component_mul(d).sum();
        }
        out.fixed_rows_mut::<3>(layout.t_cam().start).copy_from(&g_t);
        out
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::body_model::{toy_model, ToyModelConfig};
    use crate::geometry::{AxisAngle, RigidTransform};

    fn random_params(model: &BodyModel, rng: &mut ChaCha8Rng) -> BodyParams {
        let mut p = model.rest_params();
        for b in &mut p.beta {
            *b = rng.random_range(-1.0..1.0);
        }
        let mut aa = || AxisAngle::new(rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6));
        p.theta_global = aa();
        for t in &mut p.theta_body {
            *t = aa();
        }
        p.t_cam = Vector3::new(0.2, -0.1, 3.0);
        p
    }

    fn small_model() -> BodyModel {
        toy_model(&ToyModelConfig::coarse()).unwrap()
    }

    /// Weighted sum of all outputs; its gradient has a simple closed form.
    fn probe(model: &BodyModel, params: &BodyParams, wv: &[Vector3<f64>], wj: &[Vector3<f64>]) -> f64 {
        let (v, j) = model.pose_mesh(params).unwrap();
        v.iter().zip(wv).map(|(a, b)| a.dot(b)).sum::<f64>() + j.iter().zip(wj).map(|(a, b)| a.dot(b)).sum::<f64>()
    }

    #[test]
    fn backward_matches_central_differences() {
        let model = small_model();
        let layout = model.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..3 {
            let params = random_params(&model, &mut rng);
            let wv: Vec<_> = (0..model.num_vertices())
                .map(|_| Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let wj: Vec<_> = (0..model.num_joints())
                .map(|_| Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let posed = PosedBody::forward(&model, &params).unwrap();
            let analytic = posed.backward(&model, &params, &wv, &wj);
            let x0 = layout.to_vector(&params);
            let h = 1e-6;
            for i in 0..layout.len() {
                let mut xp = x0.clone();
                xp[i] += h;
                let mut xm = x0.clone();
                xm[i] -= h;
                let fd = (probe(&model, &layout.from_vector(&xp), &wv, &wj)
                    - probe(&model, &layout.from_vector(&xm), &wv, &wj))
                    / (2.0 * h);
                let scale = fd.abs().max(analytic[i].abs()).max(1.0);
                assert!(
                    (fd - analytic[i]).abs() / scale < 1e-6,
                    "{}: fd {fd} vs analytic {}",
                    layout.describe(i),
                    analytic[i]
                );
            }
        }
    }

    #[test]
    fn rigid_equivariance_with_random_body_pose() {
        let model = small_model();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let mut p = random_params(&model, &mut rng);
            let r = p.theta_global;
            let t = Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(1.0..6.0));
            p.theta_global = AxisAngle::zero();
            p.t_cam = Vector3::zeros();
            let (base, base_j) = model.pose_mesh(&p).unwrap();
            p.theta_global = r;
            p.t_cam = t;
            let (posed, posed_j) = model.pose_mesh(&p).unwrap();
            let tf = RigidTransform::from_axis_angle(r, t);
            for (a, b) in posed.iter().zip(&base).chain(posed_j.iter().zip(&base_j)) {
                assert!((a - tf.apply(b)).amax() < 1e-7);
            }
        }
    }

    #[test]
    fn vertices_linear_in_beta() {
        let model = small_model();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = random_params(&model, &mut rng);
        let (_, _) = model.pose_mesh(&p).unwrap();
        // at zero body pose the shape map is exactly linear
        let mut q = p.clone();
        for t in &mut q.theta_body {
            *t = AxisAngle::zero();
        }
        q.theta_global = AxisAngle::zero();
        q.t_cam = Vector3::zeros();
        let nb = model.num_betas();
        for k in 0..nb {
            let h = 1e-3;
            let mut a = q.clone();
            a.beta[k] += h;
            let mut b = q.clone();
            b.beta[k] -= h;
            let (va, _) = model.pose_mesh(&a).unwrap();
            let (vb, _) = model.pose_mesh(&b).unwrap();
            for (v, (x, y)) in va.iter().zip(&vb).enumerate() {
                let slope = (x - y) / (2.0 * h);
                assert!((slope - model.data().shape_dirs[v * nb + k]).amax() < 1e-7);
            }
        }
    }

    #[test]
    fn joints_are_convex_combinations() {
        let model = small_model();
        let shaped = model.shaped_template(&vec![0.3; model.num_betas()]).unwrap();
        let joints = model.regress_joints(&shaped).unwrap();
        for (j, row) in model.regressor_rows().iter().enumerate() {
            assert!(row.iter().all(|&(_, w)| w >= 0.0));
            let mut lo = Vector3::repeat(f64::INFINITY);
            let mut hi = Vector3::repeat(f64::NEG_INFINITY);
            for &(v, _) in row {
                lo = lo.inf(&shaped[v]);
                hi = hi.sup(&shaped[v]);
            }
            let p = joints[j];
            assert!((0..3).all(|a| p[a] >= lo[a] - 1e-12 && p[a] <= hi[a] + 1e-12));
        }
    }

    #[test]
    fn non_finite_params_rejected() {
        let model = small_model();
        let mut p = model.rest_params();
        p.t_cam.x = f64::NAN;
        assert!(matches!(PosedBody::forward(&model, &p), Err(Error::Domain(_))));
    }
}
