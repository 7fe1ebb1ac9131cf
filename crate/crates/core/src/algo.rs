//! Lookahead, Replicate, the LR outer loop and the two target-update
//! baselines (hard copy and Polyak averaging).
//!
//! Every gradient includes the factor 2 of the squared losses, and every
//! update is `x <- x - step * gradient`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linear::{ParamPair, ParamVector};
use crate::losses::LossContext;
use crate::rng::{rng_from_seed, RunRng};
use crate::sets::AffineSet;
use crate::theory::{linear_constants, schedule_constants};

/// Lookahead step size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    Fixed(f64),
    /// `1 / L` with `L = lambda_max(2 Phi_w^T D Phi_w)`.
    OneOverL,
}

/// Replicate step size.
#[derive(Debug, Clone, PartialEq)]
pub enum ReplicateStep {
    Scalar(f64),
    /// One value per inner step.
    Schedule(Vec<f64>),
    /// `beta_0, beta_k, ...` from the convergence theorem; fails unless every
    /// premise holds.
    Theorem,
    /// `1 / (4 kappa1^2)`.
    CurvatureDefault,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub outer_iters: usize,
    pub lookahead_steps: usize,
    pub replicate_steps: usize,
    pub alpha: StepSize,
    pub beta: ReplicateStep,
    /// Polyak coefficient, used only by [`run_td_polyak`].
    pub tau: f64,
}

/// Polyak coefficient used when none is configured.
pub const DEFAULT_TAU: f64 = 0.005;

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            outer_iters: 100,
            lookahead_steps: 10,
            replicate_steps: 1,
            alpha: StepSize::OneOverL,
            beta: ReplicateStep::CurvatureDefault,
            tau: DEFAULT_TAU,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, x: f64| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidHyperparams(format!("{name} must be positive, got {x}")))
            }
        };
        if let StepSize::Fixed(a) = self.alpha {
            positive("alpha", a)?;
        }
        match &self.beta {
            ReplicateStep::Scalar(b) => positive("beta", *b)?,
            ReplicateStep::Schedule(s) => {
                if s.len() < self.replicate_steps {
                    return Err(Error::InvalidHyperparams(format!(
                        "beta schedule has {} entries, K_R is {}",
                        s.len(),
                        self.replicate_steps
                    )));
                }
                for b in s {
                    positive("beta", *b)?;
                }
            }
            ReplicateStep::Theorem | ReplicateStep::CurvatureDefault => {}
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::InvalidHyperparams(format!("tau must lie in [0, 1], got {}", self.tau)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GradientMode {
    Exact,
    /// Monte-Carlo gradients drawn from a ChaCha20 stream seeded with `seed`.
    Sampled { batch_size: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions<'a> {
    pub gradients: GradientMode,
    /// Keep every inner iterate.
    pub instrument: bool,
    /// When given, each record carries the distance to this set.
    pub f_value: Option<&'a AffineSet>,
}

impl Default for RunOptions<'_> {
    fn default() -> Self {
        Self {
            gradients: GradientMode::Exact,
            instrument: false,
            f_value: None,
        }
    }
}

/// Gradient source for one run.
pub struct Gradients {
    mode: GradientMode,
    rng: Option<RunRng>,
}

impl Gradients {
    pub fn new(mode: GradientMode) -> Self {
        let rng = match mode {
            GradientMode::Exact => None,
            GradientMode::Sampled { seed, .. } => Some(rng_from_seed(seed)),
        };
        Self { mode, rng }
    }

    pub fn exact() -> Self {
        Self::new(GradientMode::Exact)
    }

    fn h_w(&mut self, ctx: &LossContext, theta: &ParamVector, w: &ParamVector) -> Result<ParamVector> {
        match (self.mode, self.rng.as_mut()) {
            (GradientMode::Sampled { batch_size, .. }, Some(rng)) => ctx.sampled_grad_h_w(theta, w, rng, batch_size),
            _ => ctx.grad_h_w(theta, w),
        }
    }

    fn g_theta(&mut self, ctx: &LossContext, theta: &ParamVector, w: &ParamVector) -> Result<ParamVector> {
        match (self.mode, self.rng.as_mut()) {
            (GradientMode::Sampled { batch_size, .. }, Some(rng)) => {
                ctx.sampled_grad_g_theta(theta, w, rng, batch_size)
            }
            _ => ctx.grad_g_theta(theta, w),
        }
    }
}

/// Inner iterates of one outer step: `w^{t,0..=K_L}` and `theta^{t,0..=K_R}`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerTrace {
    pub lookahead: Vec<ParamVector>,
    pub replicate: Vec<ParamVector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub t: usize,
    pub theta: ParamVector,
    pub w: ParamVector,
    pub h_loss: f64,
    pub g_loss: f64,
    /// `||v_w - T v_theta||_D`
    pub bellman_residual: f64,
    /// `||v_theta - v_w||_D`
    pub value_gap: f64,
    pub dist_fvalue: Option<f64>,
    /// Inner iterates of the step that produced this record (`t - 1 -> t`),
    /// kept only when instrumented.
    pub inner: Option<InnerTrace>,
}

impl TrajectoryRecord {
    pub fn pair(&self) -> ParamPair {
        ParamPair::new(self.theta.clone(), self.w.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Lr,
    TdCopy,
    TdPolyak,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub algorithm: Algorithm,
    /// Resolved Lookahead step.
    pub alpha: f64,
    /// Resolved Replicate schedule (empty for the baselines).
    pub beta: Vec<f64>,
    pub records: Vec<TrajectoryRecord>,
}

impl Trajectory {
    pub fn last(&self) -> &TrajectoryRecord {
        self.records.last().expect("a trajectory holds at least the initial record")
    }
}

fn check_finite(x: &ParamVector, phase: &'static str, outer: usize, inner: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteIterate { phase, outer, inner })
    }
}

/// `steps` gradient steps on `w -> H(theta, w)` with exact gradients.
pub fn lookahead(ctx: &LossContext, theta: &ParamVector, w: &ParamVector, alpha: f64, steps: usize) -> Result<ParamVector> {
    lookahead_with(ctx, theta, w, alpha, steps, &mut Gradients::exact(), None, 0)
}

/// Lookahead with an explicit gradient source. When `trace` is given it
/// receives `w^0, ..., w^K`.
#[allow(clippy::too_many_arguments)]
pub fn lookahead_with(
    ctx: &LossContext,
    theta: &ParamVector,
    w: &ParamVector,
    alpha: f64,
    steps: usize,
    grads: &mut Gradients,
    mut trace: Option<&mut Vec<ParamVector>>,
    outer: usize,
) -> Result<ParamVector> {
    let mut w = w.clone();
    if let Some(tr) = trace.as_deref_mut() {
        tr.push(w.clone());
    }
    // exact gradients are affine in w with a target fixed for the whole loop
    let affine = match grads.mode {
        GradientMode::Exact if steps > 0 => {
            crate::error::check_len("w", ctx.w_dim(), w.len())?;
            Some((ctx.hessian_w(), ctx.lookahead_target(theta)?))
        }
        _ => None,
    };
    let mut g = ParamVector::zeros(w.len());
    for k in 0..steps {
        match &affine {
            Some((hess, target)) => {
                g.copy_from(target);
                g.gemv(1.0, hess, &w, -1.0);
            }
            None => g = grads.h_w(ctx, theta, &w)?,
        }
        w.axpy(-alpha, &g, 1.0);
        check_finite(&w, "lookahead", outer, k)?;
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(w.clone());
        }
    }
    Ok(w)
}

/// `steps` gradient steps on `theta -> G(theta, w)`; step `k` uses
/// `schedule[k]`, or `schedule[0]` when the schedule has one entry.
pub fn replicate(ctx: &LossContext, w: &ParamVector, theta: &ParamVector, schedule: &[f64], steps: usize) -> Result<ParamVector> {
    replicate_with(ctx, w, theta, schedule, steps, &mut Gradients::exact(), None, 0)
}

#[allow(clippy::too_many_arguments)]
pub fn replicate_with(
    ctx: &LossContext,
    w: &ParamVector,
    theta: &ParamVector,
    schedule: &[f64],
    steps: usize,
    grads: &mut Gradients,
    mut trace: Option<&mut Vec<ParamVector>>,
    outer: usize,
) -> Result<ParamVector> {
    if steps > 0 && schedule.len() != 1 && schedule.len() < steps {
        return Err(Error::InvalidHyperparams(format!(
            "beta schedule has {} entries for {steps} steps",
            schedule.len()
        )));
    }
    let mut theta = theta.clone();
    if let Some(tr) = trace.as_deref_mut() {
        tr.push(theta.clone());
    }
    for k in 0..steps {
        let beta = if schedule.len() == 1 { schedule[0] } else { schedule[k] };
        let g = grads.g_theta(ctx, &theta, w)?;
        theta.axpy(-beta, &g, 1.0);
        check_finite(&theta, "replicate", outer, k)?;
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(theta.clone());
        }
    }
    Ok(theta)
}

fn resolve_alpha(ctx: &LossContext, alpha: StepSize) -> Result<f64> {
    match alpha {
        StepSize::Fixed(a) => Ok(a),
        StepSize::OneOverL => {
            let l = linear_constants(ctx).l;
            if l > 0.0 {
                Ok(1.0 / l)
            } else {
                Err(Error::InvalidHyperparams("L = 0: w-side features vanish".into()))
            }
        }
    }
}

/// The concrete per-step Replicate schedule for `hp`.
pub fn resolve_beta(ctx: &LossContext, hp: &Hyperparams) -> Result<Vec<f64>> {
    let k = hp.replicate_steps;
    match &hp.beta {
        ReplicateStep::Scalar(b) => Ok(vec![*b; k]),
        ReplicateStep::Schedule(s) => Ok(s[..k].to_vec()),
        ReplicateStep::CurvatureDefault => {
            let kappa1 = linear_constants(ctx).kappa1;
            if kappa1 > 0.0 {
                Ok(vec![1.0 / (4.0 * kappa1 * kappa1); k])
            } else {
                Err(Error::InvalidHyperparams("kappa1 = 0: features vanish".into()))
            }
        }
        ReplicateStep::Theorem => {
            let c = schedule_constants(&linear_constants(ctx), hp.lookahead_steps, k);
            let failing = c.flags.failing();
            if !failing.is_empty() {
                return Err(Error::PremiseViolated(failing.join(", ")));
            }
            let (Some(b0), bk) = (c.beta0, c.beta_k) else {
                return Err(Error::PremiseViolated("beta0 undefined".into()));
            };
            let mut schedule = Vec::with_capacity(k);
            for i in 0..k {
                if i == 0 {
                    schedule.push(b0);
                } else {
                    schedule.push(bk.ok_or_else(|| Error::PremiseViolated("beta_k undefined".into()))?);
                }
            }
            Ok(schedule)
        }
    }
}

struct Recorder<'a> {
    ctx: &'a LossContext,
    f_value: Option<&'a AffineSet>,
    records: Vec<TrajectoryRecord>,
}

impl<'a> Recorder<'a> {
    fn new(ctx: &'a LossContext, f_value: Option<&'a AffineSet>, capacity: usize) -> Self {
        Self {
            ctx,
            f_value: f_value.filter(|s| !s.empty),
            records: Vec::with_capacity(capacity),
        }
    }

    fn push(&mut self, t: usize, theta: &ParamVector, w: &ParamVector, inner: Option<InnerTrace>) -> Result<()> {
        let h_loss = self.ctx.loss_h(theta, w)?;
        let g_loss = self.ctx.loss_g(theta, w)?;
        let dist_fvalue = match self.f_value {
            Some(set) => Some(set.distance(&ParamPair::new(theta.clone(), w.clone()).stacked())?),
            None => None,
        };
        self.records.push(TrajectoryRecord {
            t,
            theta: theta.clone(),
            w: w.clone(),
            h_loss,
            g_loss,
            bellman_residual: self.ctx.bellman_residual(theta, w)?,
            value_gap: self.ctx.value_gap(theta, w)?,
            dist_fvalue,
            inner,
        });
        Ok(())
    }
}

fn check_init(ctx: &LossContext, init: &ParamPair) -> Result<()> {
    crate::error::check_len("initial theta", ctx.theta_dim(), init.theta.len())?;
    crate::error::check_len("initial w", ctx.w_dim(), init.w.len())
}

/// Lookahead-Replicate: `w <- Lookahead(theta, w)`, then
/// `theta <- Replicate(w, theta)`, for `hp.outer_iters` rounds.
pub fn run_lr(ctx: &LossContext, init: &ParamPair, hp: &Hyperparams, opts: &RunOptions) -> Result<Trajectory> {
    hp.validate()?;
    check_init(ctx, init)?;
    let alpha = resolve_alpha(ctx, hp.alpha)?;
    let beta = resolve_beta(ctx, hp)?;
    let mut grads = Gradients::new(opts.gradients);
    let mut rec = Recorder::new(ctx, opts.f_value, hp.outer_iters + 1);
    let (mut theta, mut w) = (init.theta.clone(), init.w.clone());
    rec.push(0, &theta, &w, None)?;

    for t in 0..hp.outer_iters {
        let (mut tw, mut tt) = (Vec::new(), Vec::new());
        let (trace_w, trace_t) = if opts.instrument {
            (Some(&mut tw), Some(&mut tt))
        } else {
            (None, None)
        };
        w = lookahead_with(ctx, &theta, &w, alpha, hp.lookahead_steps, &mut grads, trace_w, t)?;
        theta = replicate_with(ctx, &w, &theta, &beta, hp.replicate_steps, &mut grads, trace_t, t)?;
        let inner = opts.instrument.then_some(InnerTrace {
            lookahead: tw,
            replicate: tt,
        });
        rec.push(t + 1, &theta, &w, inner)?;
    }

    Ok(Trajectory {
        algorithm: Algorithm::Lr,
        alpha,
        beta,
        records: rec.records,
    })
}

fn require_same_space(ctx: &LossContext) -> Result<()> {
    if ctx.theta_dim() == ctx.w_dim() {
        Ok(())
    } else {
        Err(Error::SpaceMismatch(format!(
            "parameter copying needs equal dimensions, got theta {} and w {}",
            ctx.theta_dim(),
            ctx.w_dim()
        )))
    }
}

/// Baseline with a hard target copy `theta <- w` after every Lookahead.
pub fn run_td_copy(ctx: &LossContext, init: &ParamPair, hp: &Hyperparams, opts: &RunOptions) -> Result<Trajectory> {
    run_td(ctx, init, hp, opts, Algorithm::TdCopy, 1.0)
}

/// Baseline with the soft update `theta <- (1 - tau) theta + tau w`.
pub fn run_td_polyak(ctx: &LossContext, init: &ParamPair, hp: &Hyperparams, opts: &RunOptions) -> Result<Trajectory> {
    run_td(ctx, init, hp, opts, Algorithm::TdPolyak, hp.tau)
}

fn run_td(
    ctx: &LossContext,
    init: &ParamPair,
    hp: &Hyperparams,
    opts: &RunOptions,
    algorithm: Algorithm,
    tau: f64,
) -> Result<Trajectory> {
    require_same_space(ctx)?;
    hp.validate()?;
    check_init(ctx, init)?;
    let alpha = resolve_alpha(ctx, hp.alpha)?;
    let mut grads = Gradients::new(opts.gradients);
    let mut rec = Recorder::new(ctx, opts.f_value, hp.outer_iters + 1);
    let (mut theta, mut w) = (init.theta.clone(), init.w.clone());
    rec.push(0, &theta, &w, None)?;

    for t in 0..hp.outer_iters {
        let mut tw = Vec::new();
        let trace_w = opts.instrument.then_some(&mut tw);
        w = lookahead_with(ctx, &theta, &w, alpha, hp.lookahead_steps, &mut grads, trace_w, t)?;
        theta = match algorithm {
            Algorithm::TdCopy => w.clone(),
            _ => &theta * (1.0 - tau) + &w * tau,
        };
        check_finite(&theta, "target update", t, 0)?;
        let inner = opts.instrument.then(|| InnerTrace {
            lookahead: tw,
            replicate: vec![theta.clone()],
        });
        rec.push(t + 1, &theta, &w, inner)?;
    }

    Ok(Trajectory {
        algorithm,
        alpha,
        beta: Vec::new(),
        records: rec.records,
    })
}
