//! The Lookahead loss `H` and the Replicate loss `G`.
//!
//! ```text
//! H(theta, w) = || v_w - T v_theta ||_D^2
//! G(theta, w) = || v_theta - v_w ||_D^2
//! ```
//!
//! Gradients carry the full factor 2:
//! `grad_w H = 2 Phi_w^T D (Phi_w w - r - gamma P Phi_theta theta)` and
//! `grad_theta G = 2 Phi_theta^T D (Phi_theta theta - Phi_w w)`.
//! Update rules subtract `step * gradient` directly, so a step size `beta`
//! here corresponds to the `2 beta` factor that appears when the update is
//! written in terms of the Jacobian.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{check_len, Error, Result};
use crate::linear::{FeatureMap, ParamVector};
use crate::mrp::{weighted_norm, MarkovRewardProcess, ValueVector};

/// A process together with the two feature maps. `D = diag(rho)`.
#[derive(Debug, Clone)]
pub struct LossContext {
    mrp: MarkovRewardProcess,
    fm_theta: FeatureMap,
    fm_w: FeatureMap,
    state_sampler: WeightedIndex<f64>,
    next_samplers: Vec<WeightedIndex<f64>>,
    /// `2 Phi_w^T D Phi_w`
    hessian_w: DMatrix<f64>,
    /// `2 Phi_w^T D`
    weighted_w: DMatrix<f64>,
}

/// Monte-Carlo gradient: sample mean and per-component standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub mean: ParamVector,
    pub std_err: ParamVector,
}

impl LossContext {
    pub fn new(mrp: MarkovRewardProcess, fm_theta: FeatureMap, fm_w: FeatureMap) -> Result<Self> {
        check_len("theta feature rows", mrp.n_states(), fm_theta.n_states())?;
        check_len("w feature rows", mrp.n_states(), fm_w.n_states())?;
        let bad = |e: rand::distr::weighted::Error| Error::BadWeights(e.to_string());
        let state_sampler = WeightedIndex::new(mrp.weights().iter().copied()).map_err(bad)?;
        let next_samplers = mrp
            .transition()
            .row_iter()
            .map(|row| WeightedIndex::new(row.iter().copied()).map_err(bad))
            .collect::<Result<Vec<_>>>()?;
        let weighted_w = fm_w.matrix().transpose() * DMatrix::from_diagonal(mrp.weights()) * 2.0;
        let hessian_w = &weighted_w * fm_w.matrix();
        Ok(Self {
            mrp,
            fm_theta,
            fm_w,
            state_sampler,
            next_samplers,
            hessian_w,
            weighted_w,
        })
    }

    /// Both sides use the same features.
    pub fn shared(mrp: MarkovRewardProcess, fm: FeatureMap) -> Result<Self> {
        Self::new(mrp, fm.clone(), fm)
    }

    pub fn mrp(&self) -> &MarkovRewardProcess {
        &self.mrp
    }

    pub fn fm_theta(&self) -> &FeatureMap {
        &self.fm_theta
    }

    pub fn fm_w(&self) -> &FeatureMap {
        &self.fm_w
    }

    pub fn theta_dim(&self) -> usize {
        self.fm_theta.dim()
    }

    pub fn w_dim(&self) -> usize {
        self.fm_w.dim()
    }

    pub fn weights(&self) -> &DVector<f64> {
        self.mrp.weights()
    }

    /// The diagonal weight matrix `D`.
    pub fn d_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(self.mrp.weights())
    }

    /// Whether both sides have identical feature matrices.
    pub fn is_shared(&self) -> bool {
        self.fm_theta == self.fm_w
    }

    pub fn value_theta(&self, theta: &ParamVector) -> Result<ValueVector> {
        self.fm_theta.evaluate(theta)
    }

    pub fn value_w(&self, w: &ParamVector) -> Result<ValueVector> {
        self.fm_w.evaluate(w)
    }

    /// `v_w - T v_theta`.
    pub fn bellman_error(&self, theta: &ParamVector, w: &ParamVector) -> Result<ValueVector> {
        let target = self.mrp.bellman_apply(&self.value_theta(theta)?)?;
        Ok(self.value_w(w)? - target)
    }

    /// `v_theta - v_w`.
    pub fn value_difference(&self, theta: &ParamVector, w: &ParamVector) -> Result<ValueVector> {
        Ok(self.value_theta(theta)? - self.value_w(w)?)
    }

    pub fn loss_h(&self, theta: &ParamVector, w: &ParamVector) -> Result<f64> {
        let e = self.bellman_error(theta, w)?;
        Ok(weighted_sq(&e, self.weights()))
    }

    pub fn grad_h_w(&self, theta: &ParamVector, w: &ParamVector) -> Result<ParamVector> {
        let e = self.bellman_error(theta, w)?;
        Ok(self.fm_w.matrix().tr_mul(&e.component_mul(self.weights())) * 2.0)
    }

    /// `2 Phi_w^T D Phi_w`, the constant Hessian of `H` in `w`.
    pub fn hessian_w(&self) -> &DMatrix<f64> {
        &self.hessian_w
    }

    /// `2 Phi_w^T D T v_theta`, so that `grad_h_w = hessian_w * w - target`.
    pub fn lookahead_target(&self, theta: &ParamVector) -> Result<ParamVector> {
        let target = self.mrp.bellman_apply(&self.value_theta(theta)?)?;
        Ok(&self.weighted_w * target)
    }

    pub fn loss_g(&self, theta: &ParamVector, w: &ParamVector) -> Result<f64> {
        let e = self.value_difference(theta, w)?;
        Ok(weighted_sq(&e, self.weights()))
    }

    pub fn grad_g_theta(&self, theta: &ParamVector, w: &ParamVector) -> Result<ParamVector> {
        let e = self.value_difference(theta, w)?;
        Ok(self.fm_theta.matrix().tr_mul(&e.component_mul(self.weights())) * 2.0)
    }

    /// `||v_w - T v_theta||_D`.
    pub fn bellman_residual(&self, theta: &ParamVector, w: &ParamVector) -> Result<f64> {
        weighted_norm(&self.bellman_error(theta, w)?, self.weights())
    }

    /// `||v_theta - v_w||_D`.
    pub fn value_gap(&self, theta: &ParamVector, w: &ParamVector) -> Result<f64> {
        weighted_norm(&self.value_difference(theta, w)?, self.weights())
    }

    /// Averages `2 phi_w(s) (v_w(s) - r(s) - gamma v_theta(s'))` over
    /// `batch_size` draws `s ~ rho`, `s' ~ P(s, .)`.
    pub fn sampled_grad_h_w<R: Rng + ?Sized>(
        &self,
        theta: &ParamVector,
        w: &ParamVector,
        rng: &mut R,
        batch_size: usize,
    ) -> Result<ParamVector> {
        Ok(self.sampled_grad_h_w_stats(theta, w, rng, batch_size)?.mean)
    }

    pub fn sampled_grad_h_w_stats<R: Rng + ?Sized>(
        &self,
        theta: &ParamVector,
        w: &ParamVector,
        rng: &mut R,
        batch_size: usize,
    ) -> Result<GradientEstimate> {
        check_batch(batch_size)?;
        let v_theta = self.value_theta(theta)?;
        let v_w = self.value_w(w)?;
        let r = self.mrp.reward();
        let gamma = self.mrp.discount();
        let phi = self.fm_w.matrix();
        let mut acc = MomentAccumulator::new(self.w_dim());
        for _ in 0..batch_size {
            let s = self.state_sampler.sample(rng);
            let next = self.next_samplers[s].sample(rng);
            let scale = 2.0 * (v_w[s] - r[s] - gamma * v_theta[next]);
            acc.push(phi.row(s).iter().map(|f| scale * f));
        }
        Ok(acc.finish())
    }

    /// Averages `2 phi_theta(s) (v_theta(s) - v_w(s))` over `s ~ rho`.
    pub fn sampled_grad_g_theta<R: Rng + ?Sized>(
        &self,
        theta: &ParamVector,
        w: &ParamVector,
        rng: &mut R,
        batch_size: usize,
    ) -> Result<ParamVector> {
        Ok(self.sampled_grad_g_theta_stats(theta, w, rng, batch_size)?.mean)
    }

    pub fn sampled_grad_g_theta_stats<R: Rng + ?Sized>(
        &self,
        theta: &ParamVector,
        w: &ParamVector,
        rng: &mut R,
        batch_size: usize,
    ) -> Result<GradientEstimate> {
        check_batch(batch_size)?;
        let diff = self.value_difference(theta, w)?;
        let phi = self.fm_theta.matrix();
        let mut acc = MomentAccumulator::new(self.theta_dim());
        for _ in 0..batch_size {
            let s = self.state_sampler.sample(rng);
            let scale = 2.0 * diff[s];
            acc.push(phi.row(s).iter().map(|f| scale * f));
        }
        Ok(acc.finish())
    }
}

fn weighted_sq(e: &DVector<f64>, rho: &DVector<f64>) -> f64 {
    e.iter().zip(rho.iter()).map(|(x, w)| w * x * x).sum()
}

fn check_batch(batch_size: usize) -> Result<()> {
    if batch_size == 0 {
        return Err(Error::InvalidHyperparams("batch_size must be at least 1".into()));
    }
    Ok(())
}

/// Welford running mean and variance per component.
struct MomentAccumulator {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl MomentAccumulator {
    fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    fn push(&mut self, sample: impl Iterator<Item = f64>) {
        self.count += 1;
        let n = self.count as f64;
        for ((m, m2), x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(sample) {
            let delta = x - *m;
            *m += delta / n;
            *m2 += delta * (x - *m);
        }
    }

    fn finish(self) -> GradientEstimate {
        let n = self.count as f64;
        let std_err = self
            .m2
            .iter()
            .map(|m2| {
                if self.count > 1 {
                    (m2 / (n - 1.0) / n).sqrt()
                } else {
                    0.0
                }
            })
            .collect::<Vec<_>>();
        GradientEstimate {
            mean: DVector::from_vec(self.mean),
            std_err: DVector::from_vec(std_err),
        }
    }
}
