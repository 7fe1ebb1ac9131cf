//! Convergence constants for linear features, the theorem step sizes, and
//! per-step checks of the three Lookahead inequalities.
//!
//! Base constants, with `M = 2 Phi_w^T D Phi_w`:
//!
//! ```text
//! F_w     = lambda_min(M)               strong convexity of H in w
//! L       = lambda_max(M)               gradient Lipschitz modulus in w
//! F_theta = 2 gamma ||Phi_w^T D P Phi_theta||_2
//! kappa1  = max(||Phi_theta||_2, ||Phi_w||_2)
//! ```
//!
//! Derived constants follow the `K_R = 1` contraction argument; in
//! particular `A = 1 + eta^2 (1 - a)`.
//!
//! Because `M <= 2 Phi_w^T Phi_w`, every linear instance has
//! `F_w <= 2 kappa1^2`, so the premise `F_w > 7 kappa1^2` never holds and
//! the sigma-contraction check is reported as not applicable.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::algo::Trajectory;
use crate::error::{Error, Result};
use crate::linear::{spectral_norm, ParamPair};
use crate::losses::LossContext;
use crate::sets::f_value_residual;

/// Relative cutoff below which `lambda_min(M)` is treated as exactly zero.
pub const EIGEN_CUTOFF: f64 = 1e-12;

/// Lemma slack tolerance, scaled by `max(1, |lhs|, |rhs|)`.
pub const LEMMA_TOL: f64 = 1e-8;

/// Tolerance for the reference pair to count as a member of F_value.
pub const REFERENCE_TOL: f64 = 1e-9;

/// Ratios are not formed below this distance.
pub const CONVERGED_DIST: f64 = 1e-14;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PremiseFlags {
    /// `F_w > 0`
    pub fw_positive: bool,
    /// `F_w > F_theta`
    pub fw_gt_f_theta: bool,
    /// `F_w > 7 kappa1^2`
    pub fw_gt_7_kappa1_sq: bool,
    /// `F_w > 4 kappa1^2 / (1 - zeta)`
    pub fw_gt_4_kappa1_sq_over_1_minus_zeta: bool,
    /// `B^2 >= 8 A^2`
    pub b_sq_ge_8_a_sq: bool,
}

impl PremiseFlags {
    pub fn all(&self) -> bool {
        self.failing().is_empty()
    }

    pub fn failing(&self) -> Vec<&'static str> {
        [
            (self.fw_positive, "F_w > 0"),
            (self.fw_gt_f_theta, "F_w > F_theta"),
            (self.fw_gt_7_kappa1_sq, "F_w > 7 kappa1^2"),
            (self.fw_gt_4_kappa1_sq_over_1_minus_zeta, "F_w > 4 kappa1^2 / (1 - zeta)"),
            (self.b_sq_ge_8_a_sq, "B^2 >= 8 A^2"),
        ]
        .into_iter()
        .filter_map(|(ok, name)| (!ok).then_some(name))
        .collect()
    }
}

/// Every constant of the convergence analysis. Derived fields stay `None`
/// until [`schedule_constants`] fills them, and remain `None` (with a reason
/// in `undefined`) when their defining expression is not real or not
/// positive.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryConstants {
    #[serde(rename = "F_w")]
    pub f_w: f64,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "F_theta")]
    pub f_theta: f64,
    pub kappa1: f64,
    pub kappa1_theta: f64,
    pub kappa1_w: f64,
    #[serde(rename = "K_L")]
    pub k_l: Option<usize>,
    #[serde(rename = "K_R")]
    pub k_r: Option<usize>,
    pub kappa: Option<f64>,
    pub eta: Option<f64>,
    pub a: Option<f64>,
    pub zeta: Option<f64>,
    #[serde(rename = "A")]
    pub big_a: Option<f64>,
    #[serde(rename = "B")]
    pub big_b: Option<f64>,
    #[serde(rename = "J")]
    pub big_j: Option<f64>,
    pub beta0: Option<f64>,
    pub beta_k: Option<f64>,
    #[serde(rename = "E_factor")]
    pub e_factor: Option<f64>,
    #[serde(rename = "G_factor")]
    pub g_factor: Option<f64>,
    /// `1 - J x' + 8 x'^2` at `x' = beta_k kappa1^2` (only for `K_R > 1`).
    pub sigma_k: Option<f64>,
    pub sigma: Option<f64>,
    pub flags: PremiseFlags,
    /// `F_w <= 2 kappa1^2`, which holds for every linear instance.
    pub fw_le_2_kappa1_sq: bool,
    pub undefined: BTreeMap<String, String>,
    pub notes: Vec<String>,
}

const NOTE_A_DEFINITION: &str =
    "A = 1 + eta^2 (1 - a), the form used in the contraction argument";
const NOTE_SIGMA: &str =
    "sigma = sqrt(max(E_factor, G_factor)) (and sigma_k when K_R > 1): a bound on the unsquared stacked distance";
const NOTE_FW_BOUND: &str =
    "F_w <= 2 kappa1^2 for every linear parameterization with a probability weighting, so F_w > 7 kappa1^2 cannot hold and the sigma-contraction check is not applicable";

/// Base constants of a linear instance.
pub fn linear_constants(ctx: &LossContext) -> TheoryConstants {
    let phi_w = ctx.fm_w().matrix();
    let d = ctx.d_matrix();
    let m: DMatrix<f64> = phi_w.transpose() * &d * phi_w * 2.0;
    let (f_w, l) = if m.is_empty() {
        (0.0, 0.0)
    } else {
        let eig = m.symmetric_eigenvalues();
        let (lo, hi) = (eig.min(), eig.max());
        let lo = if lo <= EIGEN_CUTOFF * hi.max(0.0) { 0.0 } else { lo };
        (lo, hi.max(0.0))
    };
    let cross = phi_w.transpose() * &d * ctx.mrp().transition() * ctx.fm_theta().matrix();
    let f_theta = 2.0 * ctx.mrp().discount() * spectral_norm(&cross);
    let kappa1_theta = ctx.fm_theta().lipschitz_bound();
    let kappa1_w = ctx.fm_w().lipschitz_bound();
    let kappa1 = kappa1_theta.max(kappa1_w);

    TheoryConstants {
        f_w,
        l,
        f_theta,
        kappa1,
        kappa1_theta,
        kappa1_w,
        k_l: None,
        k_r: None,
        kappa: None,
        eta: None,
        a: None,
        zeta: None,
        big_a: None,
        big_b: None,
        big_j: None,
        beta0: None,
        beta_k: None,
        e_factor: None,
        g_factor: None,
        sigma_k: None,
        sigma: None,
        flags: PremiseFlags {
            fw_positive: f_w > 0.0,
            fw_gt_f_theta: f_w > f_theta,
            fw_gt_7_kappa1_sq: f_w > 7.0 * kappa1 * kappa1,
            ..PremiseFlags::default()
        },
        fw_le_2_kappa1_sq: f_w <= 2.0 * kappa1 * kappa1 * (1.0 + 1e-12),
        undefined: BTreeMap::new(),
        notes: vec![NOTE_A_DEFINITION.into(), NOTE_SIGMA.into(), NOTE_FW_BOUND.into()],
    }
}

/// Fills the derived constants for `K_L` Lookahead and `K_R` Replicate
/// steps. Never fails: an undefined quantity is recorded in `undefined`.
pub fn schedule_constants(base: &TheoryConstants, k_l: usize, k_r: usize) -> TheoryConstants {
    let mut c = base.clone();
    c.k_l = Some(k_l);
    c.k_r = Some(k_r);
    let mut undefined = BTreeMap::new();
    let mut why = |name: &str, reason: &str| {
        undefined.insert(name.to_string(), reason.to_string());
    };

    let (f_w, l, f_theta, k1) = (c.f_w, c.l, c.f_theta, c.kappa1);
    let k1_sq = k1 * k1;

    let kappa = if l > 0.0 {
        f_w / l
    } else {
        why("kappa", "L = 0");
        0.0
    };
    c.kappa = (l > 0.0).then_some(kappa);

    let a = (1.0 - kappa).max(0.0).powi(k_l as i32);
    c.a = Some(a);

    c.eta = if f_w > 0.0 {
        Some(f_theta / f_w)
    } else {
        why("eta", "F_w = 0");
        None
    };
    // eta^2 (1 - a); zero whenever a = 1, including F_w = 0
    let spill = match c.eta {
        Some(eta) if a < 1.0 => eta * eta * (1.0 - a),
        _ => 0.0,
    };
    let zeta = a.max(spill);
    c.zeta = Some(zeta);

    let big_a = 1.0 + spill;
    c.big_a = Some(big_a);
    c.big_b = if k1 > 0.0 {
        Some(f_w / k1_sq - big_a)
    } else {
        why("B", "kappa1 = 0");
        None
    };
    c.big_j = if zeta < 1.0 && k1 > 0.0 {
        Some(2.0 * f_w * (1.0 - zeta) / k1_sq - 2.0)
    } else {
        why("J", "zeta >= 1");
        None
    };

    c.beta0 = match c.big_b {
        Some(b) if b > 0.0 && b * b >= 8.0 * big_a * big_a => {
            Some((big_a - 1.0) / (b + (b * b - 8.0 * big_a * big_a).sqrt()) / k1_sq)
        }
        Some(_) => {
            why("beta0", "B^2 < 8 A^2 or B <= 0: sqrt(B^2 - 8 A^2) is not a positive real");
            None
        }
        None => None,
    };
    c.beta_k = match c.big_j {
        Some(j) if j > 0.0 && j * j >= 32.0 => Some((3.0 * j + (j * j - 32.0).sqrt()) / 32.0 / k1_sq),
        Some(_) => {
            why("beta_k", "J^2 < 32: sqrt(J^2 - 32) is imaginary");
            None
        }
        None => {
            why("beta_k", "J undefined");
            None
        }
    };

    if let (Some(b0), Some(b)) = (c.beta0, c.big_b) {
        let x = b0 * k1_sq;
        c.e_factor = Some(8.0 * big_a * x * x - 2.0 * b * x + big_a);
        c.g_factor = Some(8.0 * a * x * x + 2.0 * a * x + a);
    } else {
        why("E_factor", "beta0 undefined");
        why("G_factor", "beta0 undefined");
    }
    if k_r > 1 {
        if let (Some(bk), Some(j)) = (c.beta_k, c.big_j) {
            let x = bk * k1_sq;
            c.sigma_k = Some(1.0 - j * x + 8.0 * x * x);
        } else {
            why("sigma_k", "beta_k undefined");
        }
    }
    c.sigma = match (k_r, c.e_factor, c.g_factor, c.sigma_k) {
        (0, ..) => {
            why("sigma", "K_R = 0");
            None
        }
        (1, Some(e), Some(g), _) => Some(e.max(g).max(0.0).sqrt()),
        (_, Some(e), Some(g), Some(s)) => Some(e.max(g).max(s).max(0.0).sqrt()),
        _ => {
            why("sigma", "E_factor, G_factor or sigma_k undefined");
            None
        }
    };

    c.flags = PremiseFlags {
        fw_positive: f_w > 0.0,
        fw_gt_f_theta: f_w > f_theta,
        fw_gt_7_kappa1_sq: f_w > 7.0 * k1_sq,
        fw_gt_4_kappa1_sq_over_1_minus_zeta: zeta < 1.0 && f_w > 4.0 * k1_sq / (1.0 - zeta),
        b_sq_ge_8_a_sq: c.big_b.is_some_and(|b| b * b >= 8.0 * big_a * big_a),
    };
    c.undefined = undefined;
    c
}

/// `lhs <= rhs` evaluated at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub t: usize,
    /// Inner Lookahead index; `None` for the per-outer-step inequality.
    pub k: Option<usize>,
    pub lhs: f64,
    pub rhs: f64,
}

impl InequalityCheck {
    pub fn slack(&self) -> f64 {
        self.lhs - self.rhs
    }

    pub fn scale(&self) -> f64 {
        1f64.max(self.lhs.abs()).max(self.rhs.abs())
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.slack() <= tol * self.scale()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaReport {
    pub reference_theta: Vec<f64>,
    pub reference_w: Vec<f64>,
    pub tolerance: f64,
    /// Function-value inequality, every `(t, k)`.
    pub descent: Vec<InequalityCheck>,
    /// Inner-step distance recursion, every `(t, k)`.
    pub inner_contraction: Vec<InequalityCheck>,
    /// Outer-step bound on `||w^{t+1} - w*||^2`, every `t`.
    pub outer_bound: Vec<InequalityCheck>,
    pub pass: bool,
}

impl LemmaReport {
    fn all(&self) -> impl Iterator<Item = &InequalityCheck> {
        self.descent.iter().chain(&self.inner_contraction).chain(&self.outer_bound)
    }

    /// Largest `slack / scale` over all three inequalities.
    pub fn worst_relative_slack(&self) -> f64 {
        self.all().map(|c| c.slack() / c.scale()).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn violations(&self) -> usize {
        self.all().filter(|c| !c.holds(self.tolerance)).count()
    }
}

/// Evaluates the three Lookahead inequalities at every recorded step of an
/// instrumented trajectory, against a reference pair in F_value.
pub fn verify_lemmas(
    ctx: &LossContext,
    traj: &Trajectory,
    constants: &TheoryConstants,
    reference: &ParamPair,
    tol: f64,
) -> Result<LemmaReport> {
    let (f_w, l, f_theta) = (constants.f_w, constants.l, constants.f_theta);
    if f_w <= 0.0 {
        return Err(Error::PreconditionViolated("F_w = 0: H is not strongly convex in w".into()));
    }
    if (traj.alpha * l - 1.0).abs() > 1e-12 {
        return Err(Error::PreconditionViolated(format!(
            "lookahead step {} is not 1/L = {}",
            traj.alpha,
            1.0 / l
        )));
    }
    let scale = reference.stacked().norm().max(1.0);
    let ref_res = f_value_residual(ctx, reference)?;
    if ref_res > REFERENCE_TOL * scale {
        return Err(Error::PreconditionViolated(format!(
            "reference pair is not in F_value (residual {ref_res:e})"
        )));
    }

    let (theta_s, w_s) = (&reference.theta, &reference.w);
    let kappa = f_w / l;
    let eta = f_theta / f_w;
    let descent_coeff = 1.0 / traj.alpha - l / 2.0;

    let mut report = LemmaReport {
        reference_theta: theta_s.iter().copied().collect(),
        reference_w: w_s.iter().copied().collect(),
        tolerance: tol,
        descent: Vec::new(),
        inner_contraction: Vec::new(),
        outer_bound: Vec::new(),
        pass: false,
    };

    for pair in traj.records.windows(2) {
        let (prev, cur) = (&pair[0], &pair[1]);
        let t = prev.t;
        let inner = cur.inner.as_ref().ok_or_else(|| {
            Error::PreconditionViolated("trajectory was not instrumented".into())
        })?;
        let ws = &inner.lookahead;
        let k_l = ws.len().saturating_sub(1);
        if let Some(expected) = constants.k_l {
            if expected != k_l {
                return Err(Error::PreconditionViolated(format!(
                    "constants were computed for K_L = {expected}, trajectory has {k_l}"
                )));
            }
        }
        let theta_t = &prev.theta;
        let dtheta_sq = (theta_t - theta_s).norm_squared();
        let h_star = ctx.loss_h(theta_t, w_s)?;

        for k in 0..k_l {
            let (wk, wk1) = (&ws[k], &ws[k + 1]);
            report.descent.push(InequalityCheck {
                t,
                k: Some(k),
                lhs: h_star - ctx.loss_h(theta_t, wk)?,
                rhs: f_theta * f_theta / (2.0 * f_w) * dtheta_sq - descent_coeff * (wk1 - wk).norm_squared(),
            });
            report.inner_contraction.push(InequalityCheck {
                t,
                k: Some(k),
                lhs: (wk1 - w_s).norm_squared(),
                rhs: (1.0 - kappa) * (wk - w_s).norm_squared() + f_theta * f_theta / (l * f_w) * dtheta_sq,
            });
        }

        let a = (1.0 - kappa).max(0.0).powi(k_l as i32);
        report.outer_bound.push(InequalityCheck {
            t,
            k: None,
            lhs: (&cur.w - w_s).norm_squared(),
            rhs: a * (&prev.w - w_s).norm_squared() + eta * eta * (1.0 - a) * dtheta_sq,
        });
    }

    report.pass = report.violations() == 0;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionReport {
    /// Stacked Euclidean distance to the reference at every record.
    pub distances: Vec<f64>,
    /// `dist(t+1) / dist(t)`; `None` where `dist(t)` is below
    /// [`CONVERGED_DIST`].
    pub ratios: Vec<Option<f64>>,
    pub max_ratio: Option<f64>,
    /// `value_gap(t) <= sqrt(2) kappa1 max_ratio^(t-1) dist(0)` for every `t >= 1`.
    pub corollary_holds: bool,
}

impl ContractionReport {
    /// Largest ratio over the final `fraction` of steps.
    pub fn tail_max_ratio(&self, fraction: f64) -> Option<f64> {
        let n = self.ratios.len();
        let start = n - ((n as f64 * fraction).ceil() as usize).min(n);
        self.ratios[start..].iter().flatten().copied().reduce(f64::max)
    }
}

/// Per-step contraction ratios of a trajectory towards `reference`.
pub fn empirical_contraction(traj: &Trajectory, reference: &ParamPair, kappa1: f64) -> Result<ContractionReport> {
    for r in &traj.records {
        crate::error::check_len("reference theta", r.theta.len(), reference.theta.len())?;
        crate::error::check_len("reference w", r.w.len(), reference.w.len())?;
    }
    let distances: Vec<f64> = traj.records.iter().map(|r| r.pair().distance(reference)).collect();
    let ratios: Vec<Option<f64>> = distances
        .windows(2)
        .map(|d| (d[0] >= CONVERGED_DIST).then(|| d[1] / d[0]))
        .collect();
    let max_ratio = ratios.iter().flatten().copied().reduce(f64::max);
    let rate = max_ratio.unwrap_or(0.0);
    let d0 = distances.first().copied().unwrap_or(0.0);
    let corollary_holds = traj.records.iter().skip(1).all(|r| {
        let bound = 2f64.sqrt() * kappa1 * rate.powi(r.t as i32 - 1) * d0;
        r.value_gap <= bound * (1.0 + 1e-12) + 1e-15
    });
    Ok(ContractionReport {
        distances,
        ratios,
        max_ratio,
        corollary_holds,
    })
}

/// Outcome of comparing observed ratios with the theorem's sigma.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SigmaCheck {
    NotApplicable { reason: String },
    Pass { sigma: f64, max_ratio: f64 },
    Fail { sigma: f64, max_ratio: f64 },
}

/// Every ratio must be at most `sigma + 1e-8`, provided the premises hold
/// and the theorem step sizes were used.
pub fn sigma_check(report: &ContractionReport, constants: &TheoryConstants, theorem_steps_used: bool) -> SigmaCheck {
    let failing = constants.flags.failing();
    if !failing.is_empty() {
        return SigmaCheck::NotApplicable {
            reason: format!("premises fail: {}", failing.join(", ")),
        };
    }
    if !theorem_steps_used {
        return SigmaCheck::NotApplicable {
            reason: "theorem step sizes were not used".into(),
        };
    }
    let Some(sigma) = constants.sigma else {
        return SigmaCheck::NotApplicable {
            reason: "sigma undefined".into(),
        };
    };
    let max_ratio = report.max_ratio.unwrap_or(0.0);
    if max_ratio <= sigma + 1e-8 {
        SigmaCheck::Pass { sigma, max_ratio }
    } else {
        SigmaCheck::Fail { sigma, max_ratio }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algo::{run_lr, Hyperparams, RunOptions, StepSize};
    use crate::linear::FeatureMap;
    use crate::mrp::MarkovRewardProcess;
    use crate::sets::solve_f_value;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;
    use proptest::prelude::*;

    fn toy_mrp() -> MarkovRewardProcess {
        MarkovRewardProcess::new(
            DMatrix::from_row_slice(2, 2, &[0.6, 0.4, 0.2, 0.8]),
            DVector::from_vec(vec![1.0, 1.0]),
            0.5,
            None,
        )
        .unwrap()
    }

    fn phi_theta() -> FeatureMap {
        FeatureMap::new(DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 1.0, 1.0, 1.0, 2.0])).unwrap()
    }

    fn b2() -> LossContext {
        let fw = FeatureMap::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).unwrap();
        LossContext::new(toy_mrp(), phi_theta(), fw).unwrap()
    }

    #[test]
    fn split_space_constants() {
        // M = 2 [[3,2],[2,2]]; characteristic polynomial l^2 - 10 l + 8
        let c = linear_constants(&b2());
        assert_abs_diff_eq!(c.f_w, 5.0 - 17f64.sqrt(), epsilon = 1e-10);
        assert_abs_diff_eq!(c.l, 5.0 + 17f64.sqrt(), epsilon = 1e-10);
        assert!(c.flags.fw_positive);
        assert!(c.fw_le_2_kappa1_sq);
        assert!(!c.flags.fw_gt_7_kappa1_sq);
    }

    #[test]
    fn overparameterized_constants_are_degenerate() {
        let ctx = LossContext::shared(toy_mrp(), phi_theta()).unwrap();
        let base = linear_constants(&ctx);
        assert_eq!(base.f_w, 0.0);
        assert!(!base.flags.fw_positive);
        let c = schedule_constants(&base, 400, 1);
        assert_eq!(c.kappa, Some(0.0));
        assert_eq!(c.a, Some(1.0));
        assert_eq!(c.zeta, Some(1.0));
        assert_eq!(c.big_j, None);
        assert!(c.undefined.contains_key("J"));
        assert!(!c.flags.fw_positive && !c.flags.fw_gt_f_theta && !c.flags.fw_gt_7_kappa1_sq);
        assert!(!c.flags.fw_gt_4_kappa1_sq_over_1_minus_zeta && !c.flags.b_sq_ge_8_a_sq);
    }

    #[test]
    fn identity_features_uniform_weights() {
        let mrp = MarkovRewardProcess::new(
            DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]),
            DVector::from_vec(vec![1.0, 0.0]),
            0.9,
            None,
        )
        .unwrap();
        let c = linear_constants(&LossContext::shared(mrp, FeatureMap::identity(2)).unwrap());
        assert_abs_diff_eq!(c.f_w, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.l, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn long_lookahead_limit() {
        let base = linear_constants(&b2());
        let c = schedule_constants(&base, 100_000, 1);
        let eta = c.eta.unwrap();
        assert!(c.a.unwrap() < 1e-12);
        assert_abs_diff_eq!(c.big_a.unwrap(), 1.0 + eta * eta, epsilon = 1e-9);
        assert_abs_diff_eq!(c.zeta.unwrap(), eta * eta, epsilon = 1e-9);
    }

    #[test]
    fn a_is_one_iff_fw_zero() {
        let base = linear_constants(&b2());
        for k in 1..20 {
            let a = schedule_constants(&base, k, 1).a.unwrap();
            assert!((0.0..1.0).contains(&a));
        }
        let flat = LossContext::shared(toy_mrp(), phi_theta()).unwrap();
        assert_eq!(schedule_constants(&linear_constants(&flat), 7, 1).a, Some(1.0));
    }

    #[test]
    fn schedule_constants_is_pure() {
        let base = linear_constants(&b2());
        let a = schedule_constants(&base, 13, 3);
        let b = schedule_constants(&base, 13, 3);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn serialized_field_names() {
        let c = schedule_constants(&linear_constants(&b2()), 400, 1);
        let json = serde_json::to_value(&c).unwrap();
        for key in [
            "F_w", "L", "F_theta", "kappa1", "kappa", "eta", "a", "zeta", "A", "B", "J", "beta0", "beta_k",
            "E_factor", "G_factor", "sigma", "flags",
        ] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
    }

    fn synthetic_base(f_w: f64, l: f64, f_theta: f64, kappa1: f64) -> TheoryConstants {
        TheoryConstants {
            f_w,
            l,
            f_theta,
            kappa1,
            kappa1_theta: kappa1,
            kappa1_w: kappa1,
            ..linear_constants(&b2())
        }
    }

    proptest! {
        // Abstract constants satisfying every premise: the analysis claims
        // 1 < A < 2, B > 3A, E and G in (0, 1) and sigma < 1.
        #[test]
        fn premises_imply_contraction(kappa1 in 0.1f64..2.0,
                                      fw_mult in 7.5f64..60.0,
                                      l_mult in 1.0f64..5.0,
                                      ft_frac in 0.01f64..0.99,
                                      k_l in 1usize..50,
                                      k_r in 1usize..5) {
            let f_w = fw_mult * kappa1 * kappa1;
            let base = synthetic_base(f_w, f_w * l_mult, f_w * ft_frac, kappa1);
            let c = schedule_constants(&base, k_l, k_r);
            prop_assume!(c.flags.all());
            let (a_, b_) = (c.big_a.unwrap(), c.big_b.unwrap());
            prop_assert!(a_ > 1.0 - 1e-15 && a_ < 2.0);
            prop_assert!(b_ > 3.0 * a_);
            let (e, g) = (c.e_factor.unwrap(), c.g_factor.unwrap());
            prop_assert!(e > 0.0 && e < 1.0);
            prop_assert!((0.0..1.0).contains(&g));
            prop_assert!(c.sigma.unwrap() < 1.0);
        }
    }

    #[test]
    fn lemma_checks_on_split_toy() {
        let ctx = b2();
        let set = solve_f_value(&ctx).unwrap();
        let reference = ParamPair::from_stacked(&set.particular, 3);
        let hp = Hyperparams { outer_iters: 20, lookahead_steps: 10, ..Hyperparams::default() };
        let opts = RunOptions { instrument: true, ..RunOptions::default() };
        let init = ParamPair::new(DVector::from_vec(vec![1.2, 0.0, 0.3]), DVector::from_vec(vec![0.3, 0.6]));
        let traj = run_lr(&ctx, &init, &hp, &opts).unwrap();
        let c = schedule_constants(&linear_constants(&ctx), 10, 1);
        let report = verify_lemmas(&ctx, &traj, &c, &reference, LEMMA_TOL).unwrap();
        assert!(report.pass, "worst {}", report.worst_relative_slack());
        assert_eq!(report.descent.len(), 200);
        assert_eq!(report.outer_bound.len(), 20);

        // started at the reference: both sides vanish
        let still = run_lr(&ctx, &reference, &hp, &opts).unwrap();
        let report = verify_lemmas(&ctx, &still, &c, &reference, LEMMA_TOL).unwrap();
        assert!(report.pass);
        assert!(report.inner_contraction.iter().all(|c| c.lhs.abs() < 1e-20 && c.rhs.abs() < 1e-20));

        let contraction = empirical_contraction(&still, &reference, c.kappa1).unwrap();
        assert!(contraction.ratios.iter().all(Option::is_none));
    }

    #[test]
    fn lemma_preconditions() {
        let ctx = b2();
        let set = solve_f_value(&ctx).unwrap();
        let reference = ParamPair::from_stacked(&set.particular, 3);
        let c = schedule_constants(&linear_constants(&ctx), 10, 1);
        let init = ParamPair::new(DVector::from_vec(vec![1.2, 0.0, 0.3]), DVector::from_vec(vec![0.3, 0.6]));
        let hp = Hyperparams {
            outer_iters: 3,
            lookahead_steps: 10,
            alpha: StepSize::Fixed(2.0 / c.l),
            ..Hyperparams::default()
        };
        let opts = RunOptions { instrument: true, ..RunOptions::default() };
        let traj = run_lr(&ctx, &init, &hp, &opts).unwrap();
        assert!(matches!(
            verify_lemmas(&ctx, &traj, &c, &reference, LEMMA_TOL),
            Err(Error::PreconditionViolated(_))
        ));

        let hp = Hyperparams { alpha: StepSize::OneOverL, ..hp };
        let traj = run_lr(&ctx, &init, &hp, &opts).unwrap();
        let off = ParamPair::new(reference.theta.clone(), DVector::from_vec(vec![0.0, 0.0]));
        assert!(matches!(
            verify_lemmas(&ctx, &traj, &c, &off, LEMMA_TOL),
            Err(Error::PreconditionViolated(_))
        ));

        let uninstrumented = run_lr(&ctx, &init, &hp, &RunOptions::default()).unwrap();
        assert!(verify_lemmas(&ctx, &uninstrumented, &c, &reference, LEMMA_TOL).is_err());
    }

    #[test]
    fn sigma_check_not_applicable_on_linear_instances() {
        let ctx = b2();
        let c = schedule_constants(&linear_constants(&ctx), 400, 1);
        let set = solve_f_value(&ctx).unwrap();
        let reference = ParamPair::from_stacked(&set.particular, 3);
        let init = ParamPair::new(DVector::from_vec(vec![1.2, 0.0, 0.3]), DVector::from_vec(vec![0.3, 0.6]));
        let hp = Hyperparams { outer_iters: 50, lookahead_steps: 400, ..Hyperparams::default() };
        let traj = run_lr(&ctx, &init, &hp, &RunOptions::default()).unwrap();
        let report = empirical_contraction(&traj, &reference, c.kappa1).unwrap();
        assert!(matches!(sigma_check(&report, &c, false), SigmaCheck::NotApplicable { .. }));
    }
}
