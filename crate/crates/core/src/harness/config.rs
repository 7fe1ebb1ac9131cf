//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "mrp": { "P": [[0.6, 0.4], [0.2, 0.8]], "r": [1, 1], "gamma": 0.5, "rho": "stationary" },
//!   "features_theta": [[1, 2, 1], [1, 1, 2]],
//!   "init": { "theta": [1.2, 2, 0.5], "w": [0.1, 2, 0.5] },
//!   "algo": { "name": "lr", "T": 800, "K_L": 400, "K_R": 1, "alpha": "one_over_L" },
//!   "gradients": { "mode": "exact" },
//!   "output": "b1.csv"
//! }
//! ```
//!
//! `features_w` defaults to `features_theta`, `beta` to `1 / (4 kappa1^2)`
//! and `tau` to 0.005. Unknown fields are rejected.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::algo::{GradientMode, Hyperparams, ReplicateStep, StepSize, DEFAULT_TAU};
use crate::error::{Error, Result};
use crate::linear::{FeatureMap, ParamPair};
use crate::losses::LossContext;
use crate::mrp::MarkovRewardProcess;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mrp: MrpConfig,
    pub features_theta: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features_w: Option<Vec<Vec<f64>>>,
    pub init: InitConfig,
    pub algo: AlgoConfig,
    #[serde(default)]
    pub gradients: GradientsConfig,
    #[serde(default)]
    pub instrument: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MrpConfig {
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    pub r: Vec<f64>,
    pub gamma: f64,
    #[serde(default)]
    pub rho: RhoSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RhoSpec {
    Explicit(Vec<f64>),
    /// Must be `"stationary"`.
    Token(String),
}

impl Default for RhoSpec {
    fn default() -> Self {
        RhoSpec::Token(STATIONARY.into())
    }
}

const STATIONARY: &str = "stationary";
const ONE_OVER_L: &str = "one_over_L";
const THEOREM: &str = "theorem";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    pub theta: Vec<f64>,
    pub w: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgoName {
    Lr,
    TdCopy,
    TdPolyak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSpec {
    Value(f64),
    /// Must be `"one_over_L"`.
    Token(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaSpec {
    Value(f64),
    Schedule(Vec<f64>),
    /// Must be `"theorem"`.
    Token(String),
}

fn default_alpha() -> AlphaSpec {
    AlphaSpec::Token(ONE_OVER_L.into())
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgoConfig {
    pub name: AlgoName,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "K_L", default = "one")]
    pub k_l: usize,
    #[serde(rename = "K_R", default = "one")]
    pub k_r: usize,
    #[serde(default = "default_alpha")]
    pub alpha: AlphaSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<BetaSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    #[default]
    Exact,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradientsConfig {
    #[serde(default)]
    pub mode: ModeName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

/// A validated configuration turned into the objects the algorithms use.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub ctx: LossContext,
    pub init: ParamPair,
    pub hp: Hyperparams,
    pub algorithm: AlgoName,
    pub gradients: GradientMode,
    pub instrument: bool,
}

fn schema(path: &str, message: impl ToString) -> Error {
    Error::Schema {
        path: path.to_string(),
        message: message.to_string(),
    }
}

fn matrix(path: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return Err(schema(path, "matrix must be non-empty"));
    }
    if let Some(i) = rows.iter().position(|row| row.len() != m) {
        return Err(schema(
            &format!("{path}[{i}]"),
            format!("row has {} entries, expected {m}", rows[i].len()),
        ));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn vector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

impl ExperimentConfig {
    /// Parses JSON text. Syntax errors carry line and column; schema errors
    /// carry the path of the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if inner.is_data() {
                schema(&path, inner)
            } else {
                Error::Parse {
                    line: inner.line(),
                    column: inner.column(),
                    message: inner.to_string(),
                }
            }
        })?;
        config.build()?;
        Ok(config)
    }

    /// Checks every cross-dimension and converts to an [`Experiment`].
    pub fn build(&self) -> Result<Experiment> {
        let p = matrix("mrp.P", &self.mrp.p)?;
        let r = vector(&self.mrp.r);
        let rho = match &self.mrp.rho {
            RhoSpec::Explicit(v) => Some(vector(v)),
            RhoSpec::Token(s) if s == STATIONARY => None,
            RhoSpec::Token(s) => return Err(schema("mrp.rho", format!("expected an array or \"{STATIONARY}\", got \"{s}\""))),
        };
        let mrp = MarkovRewardProcess::new(p, r, self.mrp.gamma, rho).map_err(|e| {
            let path = match e {
                Error::BadDiscount(_) => "mrp.gamma",
                Error::BadWeights(_) | Error::NonUniqueStationary { .. } => "mrp.rho",
                Error::DimensionMismatch { context, .. } if context.contains("reward") => "mrp.r",
                Error::DimensionMismatch { context, .. } if context.contains("weight") => "mrp.rho",
                _ => "mrp.P",
            };
            schema(path, e)
        })?;

        let fm_theta = FeatureMap::new(matrix("features_theta", &self.features_theta)?)
            .map_err(|e| schema("features_theta", e))?;
        let fm_w = match &self.features_w {
            Some(rows) => FeatureMap::new(matrix("features_w", rows)?).map_err(|e| schema("features_w", e))?,
            None => fm_theta.clone(),
        };
        let n = mrp.n_states();
        if fm_theta.n_states() != n {
            return Err(schema("features_theta", format!("has {} rows, the MRP has {n} states", fm_theta.n_states())));
        }
        if fm_w.n_states() != n {
            return Err(schema("features_w", format!("has {} rows, the MRP has {n} states", fm_w.n_states())));
        }
        let ctx = LossContext::new(mrp, fm_theta, fm_w).map_err(|e| schema("features_w", e))?;

        if self.init.theta.len() != ctx.theta_dim() {
            return Err(schema(
                "init.theta",
                format!("has {} entries, features_theta has {} columns", self.init.theta.len(), ctx.theta_dim()),
            ));
        }
        if self.init.w.len() != ctx.w_dim() {
            return Err(schema(
                "init.w",
                format!("has {} entries, features_w has {} columns", self.init.w.len(), ctx.w_dim()),
            ));
        }
        if self.init.theta.iter().chain(&self.init.w).any(|x| !x.is_finite()) {
            return Err(schema("init", "entries must be finite"));
        }
        let init = ParamPair::new(vector(&self.init.theta), vector(&self.init.w));

        let a = &self.algo;
        let alpha = match &a.alpha {
            AlphaSpec::Value(x) => StepSize::Fixed(*x),
            AlphaSpec::Token(s) if s == ONE_OVER_L => StepSize::OneOverL,
            AlphaSpec::Token(s) => {
                return Err(schema("algo.alpha", format!("expected a number or \"{ONE_OVER_L}\", got \"{s}\"")))
            }
        };
        let beta = match &a.beta {
            None => ReplicateStep::CurvatureDefault,
            Some(BetaSpec::Value(x)) => ReplicateStep::Scalar(*x),
            Some(BetaSpec::Schedule(s)) => ReplicateStep::Schedule(s.clone()),
            Some(BetaSpec::Token(s)) if s == THEOREM => ReplicateStep::Theorem,
            Some(BetaSpec::Token(s)) => {
                return Err(schema(
                    "algo.beta",
                    format!("expected a number, an array or \"{THEOREM}\", got \"{s}\""),
                ))
            }
        };
        let hp = Hyperparams {
            outer_iters: a.t,
            lookahead_steps: a.k_l,
            replicate_steps: a.k_r,
            alpha,
            beta,
            tau: a.tau.unwrap_or(DEFAULT_TAU),
        };
        hp.validate().map_err(|e| {
            let field = match &e {
                Error::InvalidHyperparams(m) if m.starts_with("tau") => "algo.tau",
                Error::InvalidHyperparams(m) if m.starts_with("alpha") => "algo.alpha",
                _ => "algo.beta",
            };
            schema(field, e)
        })?;
        if matches!(a.name, AlgoName::TdCopy | AlgoName::TdPolyak) && ctx.theta_dim() != ctx.w_dim() {
            return Err(schema("algo.name", "parameter copying needs theta and w of equal dimension"));
        }

        let gradients = match self.gradients.mode {
            ModeName::Exact => GradientMode::Exact,
            ModeName::Sampled => {
                let batch_size = self.gradients.batch_size.unwrap_or(1);
                if batch_size == 0 {
                    return Err(schema("gradients.batch_size", "must be at least 1"));
                }
                GradientMode::Sampled {
                    batch_size,
                    seed: self.gradients.seed,
                }
            }
        };

        Ok(Experiment {
            ctx,
            init,
            hp,
            algorithm: self.algo.name,
            gradients,
            instrument: self.instrument,
        })
    }
}

/// Reads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    ExperimentConfig::from_json(&text)
}
