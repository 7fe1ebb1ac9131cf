//! Linear value-function parameterizations `v = Phi * param`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::mrp::ValueVector;

/// Parameter vectors share the dense vector type with value vectors.
pub type ParamVector = DVector<f64>;

/// An `n x d` feature matrix; row `s` is the feature vector of state `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    phi: DMatrix<f64>,
}

impl FeatureMap {
    pub fn new(phi: DMatrix<f64>) -> Result<Self> {
        if phi.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteEntry("features"));
        }
        Ok(Self { phi })
    }

    /// Tabular features: `Phi = I`.
    pub fn identity(n: usize) -> Self {
        Self {
            phi: DMatrix::identity(n, n),
        }
    }

    pub fn n_states(&self) -> usize {
        self.phi.nrows()
    }

    pub fn dim(&self) -> usize {
        self.phi.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn evaluate(&self, param: &ParamVector) -> Result<ValueVector> {
        check_len("parameter", self.dim(), param.len())?;
        Ok(&self.phi * param)
    }

    /// `Phi^T`, constant for a linear map.
    pub fn jacobian(&self) -> DMatrix<f64> {
        self.phi.transpose()
    }

    /// Spectral norm of `Phi`: the tightest Euclidean Lipschitz constant.
    pub fn lipschitz_bound(&self) -> f64 {
        spectral_norm(&self.phi)
    }
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// The pair `(theta, w)`; the two halves may live in spaces of different
/// dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamPair {
    pub theta: ParamVector,
    pub w: ParamVector,
}

impl ParamPair {
    pub fn new(theta: ParamVector, w: ParamVector) -> Self {
        Self { theta, w }
    }

    /// `[theta; w]`.
    pub fn stacked(&self) -> DVector<f64> {
        let mut z = DVector::zeros(self.theta.len() + self.w.len());
        z.rows_mut(0, self.theta.len()).copy_from(&self.theta);
        z.rows_mut(self.theta.len(), self.w.len()).copy_from(&self.w);
        z
    }

    pub fn from_stacked(z: &DVector<f64>, theta_dim: usize) -> Self {
        Self {
            theta: z.rows(0, theta_dim).into_owned(),
            w: z.rows(theta_dim, z.len() - theta_dim).into_owned(),
        }
    }

    /// Stacked Euclidean distance.
    pub fn distance(&self, other: &ParamPair) -> f64 {
        ((&self.theta - &other.theta).norm_squared() + (&self.w - &other.w).norm_squared()).sqrt()
    }
}
