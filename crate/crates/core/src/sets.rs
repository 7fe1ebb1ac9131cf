//! Affine solution sets of the linear Bellman constraints.
//!
//! For linear features every solution set is `{x : A x = b}` for some
//! constraint matrix `A`. Each set is stored as its minimum-norm member plus
//! an orthonormal basis of the null space of `A`. Singular values at or below
//! `RANK_CUTOFF * sigma_max` count as zero.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::linear::ParamPair;
use crate::losses::LossContext;

pub const RANK_CUTOFF: f64 = 1e-10;

/// A system is declared unsolvable when its least-squares residual exceeds
/// this (scaled by `max(1, ||b||)`).
pub const EMPTY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct AffineSet {
    pub dim_ambient: usize,
    pub particular: DVector<f64>,
    /// Orthonormal columns spanning the direction space.
    pub basis: DMatrix<f64>,
    pub empty: bool,
    /// `||A x_particular - b||_2`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Membership {
    pub is_member: bool,
    pub residual: f64,
    pub projection: DVector<f64>,
}

impl AffineSet {
    /// Solves `A x = b` through the SVD of `A`.
    pub fn from_system(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Self> {
        check_len("constraint rows", a.nrows(), b.len())?;
        let (m, n) = a.shape();
        // Pad with zero rows so V^T is square and the full null space is visible.
        let rows = m.max(n);
        let mut padded = DMatrix::zeros(rows, n);
        padded.rows_mut(0, m).copy_from(a);
        let svd = padded.svd(true, true);
        let u = svd.u.as_ref().expect("requested U");
        let v_t = svd.v_t.as_ref().expect("requested V^T");
        let sv = &svd.singular_values;
        let s_max = if sv.is_empty() { 0.0 } else { sv.max() };
        let cutoff = RANK_CUTOFF * s_max;

        let mut b_padded = DVector::zeros(rows);
        b_padded.rows_mut(0, m).copy_from(b);

        let mut particular = DVector::zeros(n);
        let mut null_cols = Vec::new();
        for i in 0..sv.len() {
            if sv[i] > cutoff && sv[i] > 0.0 {
                let coeff = u.column(i).dot(&b_padded) / sv[i];
                particular += v_t.row(i).transpose() * coeff;
            } else {
                null_cols.push(v_t.row(i).transpose());
            }
        }
        let basis = if null_cols.is_empty() {
            DMatrix::zeros(n, 0)
        } else {
            DMatrix::from_columns(&null_cols)
        };
        let residual = (a * &particular - b).norm();
        let empty = residual > EMPTY_TOL * b.norm().max(1.0);
        Ok(Self {
            dim_ambient: n,
            particular,
            basis,
            empty,
            residual,
        })
    }

    /// Dimension of the direction space.
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Orthogonal projection onto the set; membership tolerance defaults to
    /// `1e-8 * max(1, ||point||)`.
    pub fn membership(&self, point: &DVector<f64>, tol: Option<f64>) -> Result<Membership> {
        if self.empty {
            return Err(Error::EmptySet);
        }
        check_len("point", self.dim_ambient, point.len())?;
        let offset = point - &self.particular;
        let projection = &self.particular + &self.basis * self.basis.tr_mul(&offset);
        let residual = (point - &projection).norm();
        let tol = tol.unwrap_or(1e-8 * point.norm().max(1.0));
        Ok(Membership {
            is_member: residual <= tol,
            residual,
            projection,
        })
    }

    pub fn distance(&self, point: &DVector<f64>) -> Result<f64> {
        Ok(self.membership(point, None)?.residual)
    }

    /// `particular + basis * coeffs`.
    pub fn point(&self, coeffs: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("coefficients", self.dim(), coeffs.len())?;
        Ok(&self.particular + &self.basis * coeffs)
    }

    /// A member with standard-normal coordinates in the direction basis.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let coeffs = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        &self.particular + &self.basis * coeffs
    }
}

/// `{theta : v_theta = T v_theta}`, i.e. `(I - gamma P) Phi_theta theta = r`.
pub fn solve_f_single(ctx: &LossContext) -> Result<AffineSet> {
    let mrp = ctx.mrp();
    let n = mrp.n_states();
    let lhs = (DMatrix::identity(n, n) - mrp.transition() * mrp.discount()) * ctx.fm_theta().matrix();
    AffineSet::from_system(&lhs, mrp.reward())
}

/// `{theta : (theta, theta) solves v_w = T v_theta}` for shared features.
pub fn solve_f_pair(ctx: &LossContext) -> Result<AffineSet> {
    require_shared(ctx)?;
    let mrp = ctx.mrp();
    let lhs = ctx.fm_w().matrix() - mrp.transition() * ctx.fm_theta().matrix() * mrp.discount();
    AffineSet::from_system(&lhs, mrp.reward())
}

/// `{(theta, w) : v_w = T v_theta, v_theta = v_w}` over the stacked vector.
pub fn solve_f_value(ctx: &LossContext) -> Result<AffineSet> {
    let (lhs, rhs) = f_value_system(ctx);
    AffineSet::from_system(&lhs, &rhs)
}

/// The stacked constraint system of the value-equivalent solution set.
pub fn f_value_system(ctx: &LossContext) -> (DMatrix<f64>, DVector<f64>) {
    let mrp = ctx.mrp();
    let n = mrp.n_states();
    let (dt, dw) = (ctx.theta_dim(), ctx.w_dim());
    let phi_t = ctx.fm_theta().matrix();
    let phi_w = ctx.fm_w().matrix();
    let mut lhs = DMatrix::zeros(2 * n, dt + dw);
    lhs.view_mut((0, 0), (n, dt))
        .copy_from(&(mrp.transition() * phi_t * -mrp.discount()));
    lhs.view_mut((0, dt), (n, dw)).copy_from(phi_w);
    lhs.view_mut((n, 0), (n, dt)).copy_from(phi_t);
    lhs.view_mut((n, dt), (n, dw)).copy_from(&(-phi_w));
    let mut rhs = DVector::zeros(2 * n);
    rhs.rows_mut(0, n).copy_from(mrp.reward());
    (lhs, rhs)
}

/// Residual of a pair against the stacked system, in the Euclidean norm.
pub fn f_value_residual(ctx: &LossContext, pair: &ParamPair) -> Result<f64> {
    let (lhs, rhs) = f_value_system(ctx);
    let z = pair.stacked();
    check_len("stacked pair", lhs.ncols(), z.len())?;
    Ok((lhs * z - rhs).norm())
}

fn require_shared(ctx: &LossContext) -> Result<()> {
    if ctx.is_shared() {
        Ok(())
    } else {
        Err(Error::SpaceMismatch(
            "theta and w must use identical features".into(),
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClaimsReport {
    pub samples: usize,
    /// Set when any of the sets is empty; every claim then holds vacuously.
    pub vacuous: bool,
    pub claim1_forward_max_residual: f64,
    pub claim1_backward_max_residual: f64,
    pub claim1_pass: bool,
    pub claim2_max_residual: f64,
    pub claim2_pass: bool,
    pub dim_f_single: Option<usize>,
    pub dim_f_pair: Option<usize>,
    pub dim_f_value: Option<usize>,
    /// `dim F_pair <= dim F_value <= 2 dim F_single`.
    pub claim3_dims_pass: bool,
    pub tolerance: f64,
}

impl ClaimsReport {
    pub fn pass(&self) -> bool {
        self.claim1_pass && self.claim2_pass && self.claim3_dims_pass
    }
}

/// Sampled check of the three set relations for shared features.
///
/// The third relation is checked on affine dimensions, the linear-case analogue of the
/// cardinality bound.
pub fn check_claims<R: Rng + ?Sized>(
    ctx: &LossContext,
    sample_count: usize,
    rng: &mut R,
) -> Result<ClaimsReport> {
    const TOL: f64 = 1e-8;
    let single = solve_f_single(ctx)?;
    let pair = solve_f_pair(ctx)?;
    let value = solve_f_value(ctx)?;

    let mut report = ClaimsReport {
        samples: sample_count,
        vacuous: false,
        claim1_forward_max_residual: 0.0,
        claim1_backward_max_residual: 0.0,
        claim1_pass: true,
        claim2_max_residual: 0.0,
        claim2_pass: true,
        dim_f_single: (!single.empty).then(|| single.dim()),
        dim_f_pair: (!pair.empty).then(|| pair.dim()),
        dim_f_value: (!value.empty).then(|| value.dim()),
        claim3_dims_pass: true,
        tolerance: TOL,
    };
    if single.empty || pair.empty || value.empty {
        report.vacuous = true;
        return Ok(report);
    }

    let d = ctx.theta_dim();
    for _ in 0..sample_count {
        // F_single member -> diagonal pair lies in F_pair
        let theta = single.sample(rng);
        let r = pair.membership(&theta, None)?.residual;
        report.claim1_forward_max_residual = report.claim1_forward_max_residual.max(r);

        // F_pair member -> F_single member
        let theta_pair = pair.sample(rng);
        let r = single.membership(&theta_pair, None)?.residual;
        report.claim1_backward_max_residual = report.claim1_backward_max_residual.max(r);

        // diagonal pair -> F_value
        let diag = ParamPair::new(theta_pair.clone(), theta_pair);
        let r = value.membership(&diag.stacked(), None)?.residual;
        report.claim2_max_residual = report.claim2_max_residual.max(r);
        debug_assert_eq!(diag.theta.len(), d);
    }
    report.claim1_pass =
        report.claim1_forward_max_residual <= TOL && report.claim1_backward_max_residual <= TOL;
    report.claim2_pass = report.claim2_max_residual <= TOL;
    report.claim3_dims_pass = pair.dim() <= value.dim() && value.dim() <= 2 * single.dim();
    Ok(report)
}
