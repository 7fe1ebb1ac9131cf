//! The two bundled two-state experiments and their pass/fail thresholds.

use std::path::Path;
use std::str::FromStr;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::run::{run_experiment, RunSummary};
use crate::linear::ParamPair;
use crate::sets::solve_f_value;

const B1_JSON: &str = include_str!("../../configs/b1.json");
const B2_JSON: &str = include_str!("../../configs/b2.json");

/// Threshold for every reproduction check.
pub const REPRODUCE_TOL: f64 = 1e-3;
/// Known endpoints are given to three decimals.
pub const ENDPOINT_TOL: f64 = 3e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Bundled {
    B1,
    B2,
}

impl FromStr for Bundled {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "b1" => Ok(Bundled::B1),
            "b2" => Ok(Bundled::B2),
            other => Err(Error::Schema {
                path: "experiment".into(),
                message: format!("unknown bundled experiment `{other}`, expected b1 or b2"),
            }),
        }
    }
}

impl Bundled {
    pub fn name(self) -> &'static str {
        match self {
            Bundled::B1 => "b1",
            Bundled::B2 => "b2",
        }
    }

    pub fn json(self) -> &'static str {
        match self {
            Bundled::B1 => B1_JSON,
            Bundled::B2 => B2_JSON,
        }
    }

    pub fn config(self) -> ExperimentConfig {
        ExperimentConfig::from_json(self.json()).expect("bundled configs are valid")
    }

    /// Known endpoint `(theta^T, w^T)`, rounded to three decimals.
    pub fn rounded_endpoint(self) -> ParamPair {
        match self {
            Bundled::B1 => ParamPair::new(
                DVector::from_vec(vec![0.663, 0.445, 0.445]),
                DVector::from_vec(vec![-0.236, 0.745, 0.745]),
            ),
            Bundled::B2 => ParamPair::new(
                DVector::from_vec(vec![1.264, 0.245, 0.245]),
                DVector::from_vec(vec![2.0 / 3.0, 2.0 / 3.0]),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdCheck {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

fn below(name: &str, value: f64, threshold: f64) -> ThresholdCheck {
    ThresholdCheck {
        name: name.into(),
        value,
        threshold,
        pass: value < threshold,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EndpointDiagnostic {
    pub theta: Vec<f64>,
    pub w: Vec<f64>,
    /// Euclidean distance from the rounded endpoint to F_value.
    pub distance: f64,
    /// `||A z - b||_2` of the F_value system at the rounded endpoint.
    pub constraint_residual: f64,
    pub tolerance: f64,
    pub member: bool,
}

/// Distance of the rounded endpoint to the F_value set of `which`.
pub fn endpoint_diagnostic(which: Bundled) -> Result<EndpointDiagnostic> {
    let exp = which.config().build()?;
    let set = solve_f_value(&exp.ctx)?;
    let ep = which.rounded_endpoint();
    let distance = set.distance(&ep.stacked())?;
    let constraint_residual = crate::sets::f_value_residual(&exp.ctx, &ep)?;
    Ok(EndpointDiagnostic {
        theta: ep.theta.iter().copied().collect(),
        w: ep.w.iter().copied().collect(),
        distance,
        constraint_residual,
        tolerance: ENDPOINT_TOL,
        member: distance <= ENDPOINT_TOL,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReproduceReport {
    pub experiment: Bundled,
    pub checks: Vec<ThresholdCheck>,
    pub rounded_endpoint: EndpointDiagnostic,
    pub summary: RunSummary,
    pub pass: bool,
    #[serde(skip)]
    pub wall_time_secs: f64,
}

/// Runs a bundled experiment, writing `<dir>/<name>.csv` and its summary
/// when `out_dir` is given.
pub fn reproduce(which: Bundled, out_dir: Option<&Path>) -> Result<ReproduceReport> {
    let config = which.config();
    let csv = out_dir.map(|d| d.join(format!("{}.csv", which.name())));
    let started = std::time::Instant::now();
    let out = run_experiment(
        &ExperimentConfig {
            output: None,
            ..config
        },
        csv.as_deref(),
    )?;
    let wall_time_secs = started.elapsed().as_secs_f64();
    let s = &out.summary;

    let mut checks = vec![
        below("||v_theta - v*||_inf", s.value_error_theta, REPRODUCE_TOL),
        below("||v_w - v*||_inf", s.value_error_w, REPRODUCE_TOL),
    ];
    match which {
        Bundled::B1 => {
            checks.push(below("bellman_residual", s.bellman_residual, REPRODUCE_TOL));
            checks.push(below("dist_fvalue", s.dist_fvalue.unwrap_or(f64::INFINITY), REPRODUCE_TOL));
        }
        Bundled::B2 => {
            let w_err = s.w.iter().map(|x| (x - 2.0 / 3.0).abs()).fold(0.0, f64::max);
            checks.push(below("||w - [2/3, 2/3]||_inf", w_err, REPRODUCE_TOL));
        }
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(ReproduceReport {
        experiment: which,
        checks,
        rounded_endpoint: endpoint_diagnostic(which)?,
        summary: out.summary,
        pass,
        wall_time_secs,
    })
}
