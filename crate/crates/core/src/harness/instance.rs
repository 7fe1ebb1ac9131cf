//! Random instances with a representable value function, and the lemma
//! suite run over them.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::algo::{run_lr, Hyperparams, RunOptions};
use crate::error::{Error, Result};
use crate::linear::{FeatureMap, ParamPair};
use crate::losses::LossContext;
use crate::mrp::MarkovRewardProcess;
use crate::rng::split;
use crate::sets::solve_f_value;
use crate::theory::{linear_constants, schedule_constants, verify_lemmas, LEMMA_TOL};

/// Feature matrices are redrawn until their smallest singular value exceeds this.
pub const MIN_SINGULAR_VALUE: f64 = 1e-3;
pub const MAX_ATTEMPTS: usize = 100;

#[derive(Debug, Clone)]
pub struct GeneratedInstance {
    pub ctx: LossContext,
    pub theta_bar: DVector<f64>,
    /// `Phi theta_bar`, the exact value function by construction.
    pub v_star: DVector<f64>,
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Row-stochastic matrix with flat-Dirichlet rows (normalized exponentials).
fn dirichlet_rows<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let mut p = DMatrix::from_fn(n, n, |_, _| -> f64 { Exp1.sample(rng) });
    for mut row in p.row_iter_mut() {
        let sum = row.sum();
        row /= sum;
    }
    p
}

fn well_conditioned<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    for _ in 0..MAX_ATTEMPTS {
        let phi = DMatrix::from_fn(n, d, |_, _| normal(rng));
        if phi.singular_values().min() > MIN_SINGULAR_VALUE {
            return Ok(phi);
        }
    }
    Err(Error::RankFailure { attempts: MAX_ATTEMPTS })
}

fn assemble<R: Rng + ?Sized>(phi: DMatrix<f64>, gamma_range: Range<f64>, rng: &mut R) -> Result<GeneratedInstance> {
    let n = phi.nrows();
    let p = dirichlet_rows(n, rng);
    let gamma = if gamma_range.is_empty() {
        gamma_range.start
    } else {
        rng.random_range(gamma_range)
    };
    let theta_bar = DVector::from_fn(phi.ncols(), |_, _| normal(rng));
    let v_star = &phi * &theta_bar;
    let r = (DMatrix::identity(n, n) - &p * gamma) * &v_star;
    let mrp = MarkovRewardProcess::new(p, r, gamma, None)?;
    let ctx = LossContext::shared(mrp, FeatureMap::new(phi)?)?;
    Ok(GeneratedInstance { ctx, theta_bar, v_star })
}

fn check_gamma_range(range: &Range<f64>) -> Result<()> {
    if !(0.0..1.0).contains(&range.start) {
        return Err(Error::BadDiscount(range.start));
    }
    if range.end.is_nan() || range.end > 1.0 {
        return Err(Error::BadDiscount(range.end));
    }
    Ok(())
}

/// `n` states, `d` shared features and `r = (I - gamma P) Phi theta_bar`,
/// so F_value is non-empty and `F_w > 0`.
pub fn generate_instance(seed: u64, n: usize, d: usize, gamma_range: Range<f64>) -> Result<GeneratedInstance> {
    if d == 0 || d > n {
        return Err(Error::InvalidHyperparams(format!("need 1 <= d <= n, got d = {d}, n = {n}")));
    }
    check_gamma_range(&gamma_range)?;
    let mut rng = split(seed, 0);
    let phi = well_conditioned(n, d, &mut rng)?;
    assemble(phi, gamma_range, &mut rng)
}

/// Same construction with identity features.
pub fn generate_tabular_instance(seed: u64, n: usize, gamma_range: Range<f64>) -> Result<GeneratedInstance> {
    check_gamma_range(&gamma_range)?;
    let mut rng = split(seed, 0);
    assemble(DMatrix::identity(n, n), gamma_range, &mut rng)
}

/// Lemma-suite settings.
pub const SUITE_OUTER: usize = 20;
pub const SUITE_LOOKAHEAD: usize = 10;
pub const SUITE_GAMMA: Range<f64> = 0.5..0.95;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceResult {
    pub seed: u64,
    pub gamma: f64,
    #[serde(rename = "F_w")]
    pub f_w: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub kappa1: f64,
    pub fw_le_2_kappa1_sq: bool,
    pub fw_gt_7_kappa1_sq: bool,
    pub checks: usize,
    pub violations: usize,
    pub worst_relative_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub states: usize,
    pub dim: usize,
    #[serde(rename = "T")]
    pub outer_iters: usize,
    #[serde(rename = "K_L")]
    pub lookahead_steps: usize,
    pub tolerance: f64,
    pub instances: Vec<InstanceResult>,
    pub total_checks: usize,
    pub total_violations: usize,
    pub pass: bool,
}

fn check_instance(seed: u64, n: usize, d: usize) -> Result<InstanceResult> {
    let inst = generate_instance(seed, n, d, SUITE_GAMMA)?;
    let ctx = &inst.ctx;
    let set = solve_f_value(ctx)?;
    let reference = ParamPair::from_stacked(&set.particular, d);

    let mut rng = split(seed, 1);
    let init = ParamPair::new(
        DVector::from_fn(d, |_, _| normal(&mut rng)),
        DVector::from_fn(d, |_, _| normal(&mut rng)),
    );
    let hp = Hyperparams {
        outer_iters: SUITE_OUTER,
        lookahead_steps: SUITE_LOOKAHEAD,
        replicate_steps: 1,
        ..Hyperparams::default()
    };
    let opts = RunOptions {
        instrument: true,
        ..RunOptions::default()
    };
    let traj = run_lr(ctx, &init, &hp, &opts)?;
    let c = schedule_constants(&linear_constants(ctx), SUITE_LOOKAHEAD, 1);
    let report = verify_lemmas(ctx, &traj, &c, &reference, LEMMA_TOL)?;
    Ok(InstanceResult {
        seed,
        gamma: ctx.mrp().discount(),
        f_w: c.f_w,
        l: c.l,
        kappa1: c.kappa1,
        fw_le_2_kappa1_sq: c.fw_le_2_kappa1_sq,
        fw_gt_7_kappa1_sq: c.flags.fw_gt_7_kappa1_sq,
        checks: report.descent.len() + report.inner_contraction.len() + report.outer_bound.len(),
        violations: report.violations(),
        worst_relative_slack: report.worst_relative_slack(),
    })
}

/// Checks the three Lookahead inequalities on instances seeded `0..seeds`.
/// Instances run in parallel; results are in seed order.
pub fn verify_suite(seeds: u64, n: usize, d: usize) -> Result<SuiteReport> {
    let instances = (0..seeds)
        .into_par_iter()
        .map(|seed| check_instance(seed, n, d))
        .collect::<Result<Vec<_>>>()?;
    let total_checks = instances.iter().map(|i| i.checks).sum();
    let total_violations = instances.iter().map(|i| i.violations).sum();
    Ok(SuiteReport {
        states: n,
        dim: d,
        outer_iters: SUITE_OUTER,
        lookahead_steps: SUITE_LOOKAHEAD,
        tolerance: LEMMA_TOL,
        instances,
        total_checks,
        total_violations,
        pass: total_violations == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_identity() {
        for seed in 0..10 {
            let inst = generate_instance(seed, 5, 3, 0.5..0.95).unwrap();
            let v = inst.ctx.mrp().exact_value().unwrap();
            assert!((v - &inst.v_star).amax() < 1e-9);
            assert!(!solve_f_value(&inst.ctx).unwrap().empty);
            assert!(linear_constants(&inst.ctx).f_w > 0.0);
        }
    }

    #[test]
    fn tabular_reward() {
        let inst = generate_tabular_instance(4, 4, 0.9..0.9).unwrap();
        let mrp = inst.ctx.mrp();
        let expected = (DMatrix::identity(4, 4) - mrp.transition() * 0.9) * &inst.theta_bar;
        assert_eq!(mrp.reward(), &expected);
    }

    #[test]
    fn deterministic() {
        let a = generate_instance(11, 6, 2, 0.3..0.8).unwrap();
        let b = generate_instance(11, 6, 2, 0.3..0.8).unwrap();
        assert_eq!(a.ctx.mrp().transition(), b.ctx.mrp().transition());
        assert_eq!(a.ctx.fm_theta().matrix(), b.ctx.fm_theta().matrix());
        assert_eq!(a.theta_bar, b.theta_bar);
    }

    #[test]
    fn bad_shapes() {
        assert!(generate_instance(0, 2, 3, 0.5..0.9).is_err());
        assert!(generate_instance(0, 2, 0, 0.5..0.9).is_err());
    }

    #[test]
    fn small_suite_passes() {
        let report = verify_suite(4, 4, 2).unwrap();
        assert!(report.pass);
        assert_eq!(report.instances.iter().map(|i| i.seed).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        assert!(report.instances.iter().all(|i| i.fw_le_2_kappa1_sq && !i.fw_gt_7_kappa1_sq));
    }
}
