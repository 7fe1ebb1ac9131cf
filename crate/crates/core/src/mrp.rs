//! Markov reward processes and the action-free Bellman operator.
//!
//! A process is a row-stochastic transition matrix `P`, a reward vector `r`,
//! a discount `gamma < 1` and a state-weight distribution `rho`. The Bellman
//! operator is the affine map `v -> r + gamma * P v`; its unique fixed point
//! is the exact value `(I - gamma P)^{-1} r`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};

/// Row sums (and weight sums) may deviate from 1 by at most this much.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// Default tolerance of the stationary-distribution residual.
pub const STATIONARY_TOL: f64 = 1e-12;

/// Iteration cap of the power-iteration fallback.
pub const POWER_ITERATION_CAP: usize = 1_000_000;

/// Value vectors are plain dense vectors indexed by state.
pub type ValueVector = DVector<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovRewardProcess {
    transition: DMatrix<f64>,
    reward: DVector<f64>,
    discount: f64,
    weights: DVector<f64>,
}

impl MarkovRewardProcess {
    /// Validates the process. When `weights` is `None` the stationary
    /// distribution of `transition` is used.
    pub fn new(
        transition: DMatrix<f64>,
        reward: DVector<f64>,
        discount: f64,
        weights: Option<DVector<f64>>,
    ) -> Result<Self> {
        let n = transition.nrows();
        check_len("transition columns", n, transition.ncols())?;
        check_len("reward", n, reward.len())?;
        if n == 0 {
            return Err(Error::DimensionMismatch {
                context: "state count",
                expected: 1,
                found: 0,
            });
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::BadDiscount(discount));
        }
        if reward.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteEntry("reward"));
        }
        check_stochastic(&transition)?;

        let weights = match weights {
            Some(w) => {
                check_len("state weights", n, w.len())?;
                check_probability(&w)?;
                w
            }
            None => stationary_distribution(&transition, STATIONARY_TOL)?,
        };

        Ok(Self {
            transition,
            reward,
            discount,
            weights,
        })
    }

    pub fn n_states(&self) -> usize {
        self.reward.len()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn reward(&self) -> &DVector<f64> {
        &self.reward
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// The state-weight distribution (the diagonal of `D`).
    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    /// `r + gamma * P v`.
    pub fn bellman_apply(&self, v: &DVector<f64>) -> Result<ValueVector> {
        check_len("value vector", self.n_states(), v.len())?;
        Ok(&self.reward + (&self.transition * v) * self.discount)
    }

    /// Solves `(I - gamma P) v = r` by LU with partial pivoting.
    pub fn exact_value(&self) -> Result<ValueVector> {
        let n = self.n_states();
        let system = DMatrix::identity(n, n) - &self.transition * self.discount;
        let v = system
            .lu()
            .solve(&self.reward)
            .ok_or(Error::SingularSystem)?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::SingularSystem);
        }
        Ok(v)
    }
}

fn check_stochastic(p: &DMatrix<f64>) -> Result<()> {
    for (i, row) in p.row_iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::NonFiniteEntry("transition"));
            }
            if x < 0.0 {
                return Err(Error::NegativeProbability {
                    row: i,
                    col: j,
                    value: x,
                });
            }
        }
        let sum = row.sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::NonStochasticRow { row: i, sum });
        }
    }
    Ok(())
}

fn check_probability(w: &DVector<f64>) -> Result<()> {
    if let Some((i, x)) = w.iter().enumerate().find(|(_, x)| !x.is_finite() || **x < 0.0) {
        return Err(Error::BadWeights(format!("entry {i} is {x}")));
    }
    let sum = w.sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::BadWeights(format!("entries sum to {sum}")));
    }
    Ok(())
}

/// Stationary distribution `rho` with `rho^T P = rho^T`.
///
/// The eigenvalue-1 left eigenspace is read off the SVD of `I - P^T`. A chain
/// whose eigenspace has dimension above one is rejected. When the eigenvector
/// is numerically unusable (mixed signs, residual above `tol`) a
/// deterministic power iteration takes over.
pub fn stationary_distribution(p: &DMatrix<f64>, tol: f64) -> Result<DVector<f64>> {
    let n = p.nrows();
    check_len("transition columns", n, p.ncols())?;
    check_stochastic(p)?;

    let system = DMatrix::identity(n, n) - p.transpose();
    let svd = system.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let s_max = svd.singular_values.max();
    let cutoff = 1e-10 * s_max.max(1.0);
    let null: Vec<usize> = (0..n)
        .filter(|&i| svd.singular_values[i] <= cutoff)
        .collect();
    if null.len() > 1 {
        return Err(Error::NonUniqueStationary { dim: null.len() });
    }

    if let Some(&idx) = null.first() {
        let v: DVector<f64> = v_t.row(idx).transpose();
        let sum = v.sum();
        if sum.abs() > f64::EPSILON {
            let mut rho = v / sum;
            let scale = rho.amax();
            if rho.iter().all(|&x| x >= -1e-12 * scale) {
                rho.apply(|x| *x = x.max(0.0));
                let total = rho.sum();
                rho /= total;
                if stationary_residual(p, &rho) <= tol {
                    return Ok(rho);
                }
                return power_iteration(p, rho, tol);
            }
        }
    }
    power_iteration(p, DVector::from_element(n, 1.0 / n as f64), tol)
}

/// `max_s |(rho^T P)(s) - rho(s)|`.
pub fn stationary_residual(p: &DMatrix<f64>, rho: &DVector<f64>) -> f64 {
    (p.tr_mul(rho) - rho).amax()
}

fn power_iteration(p: &DMatrix<f64>, start: DVector<f64>, tol: f64) -> Result<DVector<f64>> {
    let mut rho = start;
    for _ in 0..POWER_ITERATION_CAP {
        let mut next = p.tr_mul(&rho);
        let total = next.sum();
        next /= total;
        let delta = (&next - &rho).amax();
        rho = next;
        if delta <= tol && stationary_residual(p, &rho) <= tol {
            return Ok(rho);
        }
    }
    Err(Error::NoConvergence {
        iterations: POWER_ITERATION_CAP,
    })
}

/// `sqrt(sum_s rho(s) v(s)^2)`.
pub fn weighted_norm(v: &DVector<f64>, rho: &DVector<f64>) -> Result<f64> {
    check_len("weights", v.len(), rho.len())?;
    Ok(v.iter()
        .zip(rho.iter())
        .map(|(x, w)| w * x * x)
        .sum::<f64>()
        .sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn toy() -> MarkovRewardProcess {
        MarkovRewardProcess::new(
            DMatrix::from_row_slice(2, 2, &[0.6, 0.4, 0.2, 0.8]),
            DVector::from_vec(vec![1.0, 1.0]),
            0.5,
            None,
        )
        .unwrap()
    }

    #[test]
    fn toy_chain_is_valid() {
        let mrp = toy();
        assert_abs_diff_eq!(mrp.weights()[0], 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mrp.weights()[1], 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn identity_chain_with_explicit_weights() {
        let mrp = MarkovRewardProcess::new(
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            0.0,
            Some(DVector::from_vec(vec![0.5, 0.5])),
        );
        assert!(mrp.is_ok());
    }

    #[test]
    fn rejects_bad_inputs() {
        let err = MarkovRewardProcess::new(
            DMatrix::from_row_slice(2, 2, &[0.5, 0.6, 0.2, 0.8]),
            DVector::from_vec(vec![1.0, 1.0]),
            0.5,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonStochasticRow { row: 0, .. }));

        let err = MarkovRewardProcess::new(
            DMatrix::from_row_slice(2, 2, &[1.2, -0.2, 0.2, 0.8]),
            DVector::from_vec(vec![1.0, 1.0]),
            0.5,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NegativeProbability { row: 0, col: 1, .. }));

        let err = MarkovRewardProcess::new(
            DMatrix::from_row_slice(2, 2, &[0.6, 0.4, 0.2, 0.8]),
            DVector::from_vec(vec![1.0, 1.0]),
            1.0,
            None,
        )
        .unwrap_err();
        assert_eq!(err, Error::BadDiscount(1.0));

        let err = MarkovRewardProcess::new(
            DMatrix::from_row_slice(2, 2, &[0.6, 0.4, 0.2, 0.8]),
            DVector::from_vec(vec![1.0, 1.0, 1.0]),
            0.5,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn stationary_cases() {
        let p = DMatrix::from_row_slice(2, 2, &[0.6, 0.4, 0.2, 0.8]);
        let rho = stationary_distribution(&p, STATIONARY_TOL).unwrap();
        assert_abs_diff_eq!(rho, DVector::from_vec(vec![1.0 / 3.0, 2.0 / 3.0]), epsilon = 1e-12);

        let n = 5;
        let uniform = DMatrix::from_element(n, n, 1.0 / n as f64);
        let rho = stationary_distribution(&uniform, STATIONARY_TOL).unwrap();
        assert_abs_diff_eq!(rho, DVector::from_element(n, 0.2), epsilon = 1e-12);

        let err = stationary_distribution(&DMatrix::identity(2, 2), STATIONARY_TOL).unwrap_err();
        assert_eq!(err, Error::NonUniqueStationary { dim: 2 });
    }

    #[test]
    fn bellman_and_exact_value_on_toy() {
        let mrp = toy();
        let v = DVector::from_vec(vec![2.0, 2.0]);
        assert_abs_diff_eq!(mrp.bellman_apply(&v).unwrap(), v, epsilon = 1e-15);
        assert_eq!(mrp.bellman_apply(&DVector::zeros(2)).unwrap(), *mrp.reward());
        assert_abs_diff_eq!(mrp.exact_value().unwrap(), v, epsilon = 1e-12);
        assert!(mrp.bellman_apply(&DVector::zeros(3)).is_err());
    }

    #[test]
    fn exact_value_degenerate_cases() {
        let p = DMatrix::from_row_slice(2, 2, &[0.6, 0.4, 0.2, 0.8]);
        let zero = MarkovRewardProcess::new(p.clone(), DVector::zeros(2), 0.9, None).unwrap();
        assert_eq!(zero.exact_value().unwrap(), DVector::zeros(2));

        let r = DVector::from_vec(vec![3.0, -1.5]);
        let myopic = MarkovRewardProcess::new(p, r.clone(), 0.0, None).unwrap();
        assert_abs_diff_eq!(myopic.exact_value().unwrap(), r, epsilon = 1e-15);
    }

    #[test]
    fn weighted_norm_basics() {
        let rho = DVector::from_vec(vec![0.1, 0.3, 0.6]);
        assert_eq!(weighted_norm(&DVector::zeros(3), &rho).unwrap(), 0.0);
        assert_abs_diff_eq!(
            weighted_norm(&DVector::from_element(3, -2.5), &rho).unwrap(),
            2.5,
            epsilon = 1e-15
        );
        assert!(weighted_norm(&DVector::zeros(2), &rho).is_err());
    }

    fn arb_chain(n: usize) -> impl Strategy<Value = (DMatrix<f64>, DVector<f64>, f64)> {
        (
            prop::collection::vec(0.01f64..1.0, n * n),
            prop::collection::vec(-5.0f64..5.0, n),
            0.0f64..0.99,
        )
            .prop_map(move |(raw, r, gamma)| {
                let mut p = DMatrix::from_row_slice(n, n, &raw);
                for mut row in p.row_iter_mut() {
                    let s = row.sum();
                    row /= s;
                }
                (p, DVector::from_vec(r), gamma)
            })
    }

    proptest! {
        #[test]
        fn bellman_matches_scalar_loop((p, r, gamma) in arb_chain(4),
                                       v in prop::collection::vec(-10.0f64..10.0, 4)) {
            let mrp = MarkovRewardProcess::new(p.clone(), r.clone(), gamma, None).unwrap();
            let v = DVector::from_vec(v);
            let got = mrp.bellman_apply(&v).unwrap();
            for s in 0..4 {
                let mut acc = 0.0;
                for t in 0..4 {
                    acc += p[(s, t)] * v[t];
                }
                let want = r[s] + gamma * acc;
                prop_assert!((got[s] - want).abs() <= 1e-14 * want.abs().max(1.0));
            }
        }

        #[test]
        fn bellman_is_sup_norm_contraction((p, r, gamma) in arb_chain(5),
                                           u in prop::collection::vec(-10.0f64..10.0, 5),
                                           v in prop::collection::vec(-10.0f64..10.0, 5)) {
            let mrp = MarkovRewardProcess::new(p, r, gamma, None).unwrap();
            let u = DVector::from_vec(u);
            let v = DVector::from_vec(v);
            let lhs = (mrp.bellman_apply(&u).unwrap() - mrp.bellman_apply(&v).unwrap()).amax();
            prop_assert!(lhs <= gamma * (&u - &v).amax() + 1e-12);
        }

        #[test]
        fn exact_value_is_fixed_point((p, r, gamma) in arb_chain(5)) {
            let mrp = MarkovRewardProcess::new(p, r, gamma, None).unwrap();
            let v = mrp.exact_value().unwrap();
            let tv = mrp.bellman_apply(&v).unwrap();
            prop_assert!((&tv - &v).amax() <= 1e-10);
        }

        #[test]
        fn stationary_residual_is_small((p, _r, _g) in arb_chain(6)) {
            let rho = stationary_distribution(&p, STATIONARY_TOL).unwrap();
            prop_assert!(stationary_residual(&p, &rho) <= STATIONARY_TOL);
            prop_assert!(rho.iter().all(|&x| x >= 0.0));
            prop_assert!((rho.sum() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn weighted_norm_matches_loop_and_sup_bound(v in prop::collection::vec(-10.0f64..10.0, 6),
                                                    raw in prop::collection::vec(0.0f64..1.0, 6)) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 1e-6);
            let rho = DVector::from_iterator(6, raw.iter().map(|x| x / total));
            let v = DVector::from_vec(v);
            let got = weighted_norm(&v, &rho).unwrap();
            let mut acc = 0.0;
            for s in 0..6 {
                acc += rho[s] * v[s] * v[s];
            }
            prop_assert!((got - acc.sqrt()).abs() <= 1e-14 * got.max(1.0));
            prop_assert!(got <= v.amax() * (1.0 + 1e-15));
        }
    }
}
