use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;
const SYMMETRY_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug)]
struct Component {
    mean: DVector<f64>,
    precision: DMatrix<f64>,
    /// `log g - (d log 2pi + log det Sigma) / 2`.
    log_scale: f64,
}

/// Gaussian mixture prior over the flattened body pose.
#[derive(Clone, Debug)]
pub struct PosePriorMoG {
    dim: usize,
    components: Vec<Component>,
    raw: PosePriorFile,
}

/// Serialized form of [`PosePriorMoG`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosePriorFile {
    pub components: Vec<GaussianComponent>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Row-major `d x d`.
    pub covariance: Vec<Vec<f64>>,
}

impl PosePriorMoG {
    pub fn new(file: PosePriorFile) -> Result<Self> {
        let bad = |m: String| Err(Error::Config(format!("pose prior: {m}")));
        if file.components.is_empty() {
            return bad("needs at least one component".into());
        }
        let dim = file.components[0].mean.len();
        let total: f64 = file.components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return bad(format!("component weights sum to {total}, expected 1"));
        }
        let mut components = Vec::with_capacity(file.components.len());
        for (i, c) in file.components.iter().enumerate() {
            if !(c.weight > 0.0) {
                return bad(format!("component {i} has non-positive weight {}", c.weight));
            }
            if c.mean.len() != dim || c.covariance.len() != dim || c.covariance.iter().any(|r| r.len() != dim) {
                return bad(format!("component {i} does not match dimension {dim}"));
            }
            let cov = DMatrix::from_fn(dim, dim, |r, k| c.covariance[r][k]);
            if (&cov - cov.transpose()).amax() > SYMMETRY_TOLERANCE {
                return bad(format!("component {i} covariance is not symmetric"));
            }
            let Some(chol) = cov.clone().cholesky() else {
                return bad(format!("component {i} covariance is not positive definite"));
            };
            let log_det: f64 = chol.l().diagonal().iter().map(|x| 2.0 * x.ln()).sum();
            components.push(Component {
                mean: DVector::from_vec(c.mean.clone()),
                precision: chol.inverse(),
                log_scale: c.weight.ln() - 0.5 * (dim as f64 * (2.0 * std::f64::consts::PI).ln() + log_det),
            });
        }
        Ok(PosePriorMoG {
            dim,
            components,
            raw: file,
        })
    }

    /// Single zero-mean, unit-covariance Gaussian.
    pub fn standard(dim: usize) -> Self {
        let covariance = (0..dim).map(|r| (0..dim).map(|c| f64::from(u8::from(r == c))).collect()).collect();
        Self::new(PosePriorFile {
            components: vec![GaussianComponent {
                weight: 1.0,
                mean: vec![0.0; dim],
                covariance,
            }],
        })
        .expect("identity covariance is valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn to_file(&self) -> &PosePriorFile {
        &self.raw
    }

    /// Negative log-density and its gradient.
    pub fn value_grad(&self, theta: &DVector<f64>) -> (f64, DVector<f64>) {
        let residuals: Vec<DVector<f64>> = self.components.iter().map(|c| theta - &c.mean).collect();
        let pr: Vec<DVector<f64>> = self
            .components
            .iter()
            .zip(&residuals)
            .map(|(c, r)| &c.precision * r)
            .collect();
        let logs: Vec<f64> = self
            .components
            .iter()
            .zip(&residuals)
            .zip(&pr)
            .map(|((c, r), p)| c.log_scale - 0.5 * r.dot(p))
            .collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logs.iter().map(|a| (a - max).exp()).sum();
        let lse = max + sum.ln();
        let mut grad = DVector::zeros(self.dim);
        for (a, p) in logs.iter().zip(&pr) {
            grad.axpy((a - lse).exp(), p, 1.0);
        }
        (-lse, grad)
    }
}

/// Quadratic shape prior `beta^T P beta`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapePrior {
    precision: DMatrix<f64>,
}

impl ShapePrior {
    pub fn new(precision: DMatrix<f64>) -> Result<Self> {
        if !precision.is_square() {
            return Err(Error::Config("shape prior precision must be square".into()));
        }
        if (&precision - precision.transpose()).amax() > SYMMETRY_TOLERANCE {
            return Err(Error::Config("shape prior precision must be symmetric".into()));
        }
        let min_eig = precision.clone().symmetric_eigenvalues().min();
        if precision.nrows() > 0 && min_eig < -SYMMETRY_TOLERANCE {
            return Err(Error::Config(format!(
                "shape prior precision has negative eigenvalue {min_eig}"
            )));
        }
        Ok(ShapePrior { precision })
    }

    pub fn identity(num_betas: usize) -> Self {
        ShapePrior {
            precision: DMatrix::identity(num_betas, num_betas),
        }
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn value_grad(&self, beta: &DVector<f64>) -> (f64, DVector<f64>) {
        let pb = &self.precision * beta;
        (beta.dot(&pb), 2.0 * pb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_component(weight: f64, mean: Vec<f64>, var: f64) -> GaussianComponent {
        let d = mean.len();
        GaussianComponent {
            weight,
            covariance: (0..d).map(|r| (0..d).map(|c| if r == c { var } else { 0.0 }).collect()).collect(),
            mean,
        }
    }

    #[test]
    fn standard_normal_at_mean() {
        let d = 45;
        let (v, g) = PosePriorMoG::standard(d).value_grad(&DVector::zeros(d));
        let expected = 0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln();
        assert!((v - expected).abs() < 1e-12);
        assert_eq!(g.amax(), 0.0);
    }

    #[test]
    fn dominant_component_gives_its_normalizer() {
        let prior = PosePriorMoG::new(PosePriorFile {
            components: vec![
                diag_component(1.0 - 1e-12, vec![1.0, 2.0], 0.5),
                diag_component(1e-12, vec![-5.0, 5.0], 0.5),
            ],
        })
        .unwrap();
        let (v, _) = prior.value_grad(&DVector::from_vec(vec![1.0, 2.0]));
        // -log N(mu; mu, 0.5 I) in 2D = log(2 pi * 0.5)
        let expected = (2.0 * std::f64::consts::PI * 0.5).ln();
        assert!((v - expected).abs() < 1e-9);
    }

    #[test]
    fn split_duplicate_component_is_unchanged() {
        let one = PosePriorMoG::new(PosePriorFile {
            components: vec![diag_component(1.0, vec![0.3, -0.1, 0.2], 0.7)],
        })
        .unwrap();
        let two = PosePriorMoG::new(PosePriorFile {
            components: vec![
                diag_component(0.25, vec![0.3, -0.1, 0.2], 0.7),
                diag_component(0.75, vec![0.3, -0.1, 0.2], 0.7),
            ],
        })
        .unwrap();
        let x = DVector::from_vec(vec![1.0, 0.5, -2.0]);
        let (a, ga) = one.value_grad(&x);
        let (b, gb) = two.value_grad(&x);
        assert!((a - b).abs() < 1e-12);
        assert!((ga - gb).amax() < 1e-12);
    }

    #[test]
    fn far_from_all_components_stays_finite() {
        let prior = PosePriorMoG::new(PosePriorFile {
            components: vec![diag_component(0.5, vec![0.0], 1e-4), diag_component(0.5, vec![1.0], 1e-4)],
        })
        .unwrap();
        let (v, g) = prior.value_grad(&DVector::from_vec(vec![100.0]));
        assert!(v.is_finite() && g[0].is_finite() && v > 1e6);
    }

    #[test]
    fn mixture_gradient_matches_finite_differences() {
        let prior = PosePriorMoG::new(PosePriorFile {
            components: vec![
                diag_component(0.3, vec![0.2, -0.4], 0.3),
                GaussianComponent {
                    weight: 0.7,
                    mean: vec![-0.5, 0.1],
                    covariance: vec![vec![0.5, 0.1], vec![0.1, 0.2]],
                },
            ],
        })
        .unwrap();
        let x = DVector::from_vec(vec![0.05, 0.3]);
        let (_, g) = prior.value_grad(&x);
        for i in 0..2 {
            let h = 1e-6;
            let mut a = x.clone();
            a[i] += h;
            let mut b = x.clone();
            b[i] -= h;
            let fd = (prior.value_grad(&a).0 - prior.value_grad(&b).0) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn invalid_priors_rejected() {
        let mut c = diag_component(1.0, vec![0.0, 0.0], 1.0);
        c.covariance[0][1] = 2.0;
        c.covariance[1][0] = 2.0;
        assert!(PosePriorMoG::new(PosePriorFile { components: vec![c] }).is_err());
        assert!(PosePriorMoG::new(PosePriorFile {
            components: vec![diag_component(0.6, vec![0.0], 1.0)]
        })
        .is_err());
        assert!(ShapePrior::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0])).is_err());
        assert!(ShapePrior::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])).is_err());
    }

    #[test]
    fn shape_prior_examples() {
        let p = ShapePrior::identity(2);
        assert_eq!(p.value_grad(&DVector::zeros(2)).0, 0.0);
        let b = DVector::from_vec(vec![3.0, 4.0]);
        let (v, g) = p.value_grad(&b);
        assert_eq!(v, 25.0);
        assert_eq!(g, DVector::from_vec(vec![6.0, 8.0]));
        assert_eq!(p.value_grad(&-b).0, 25.0);
    }
}
