//! Running a configured experiment and writing its CSV and summary.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::algo::{run_lr, run_td_copy, run_td_polyak, GradientMode, ReplicateStep, RunOptions, Trajectory};
use crate::error::{Error, Result};
use crate::harness::config::{AlgoName, Experiment, ExperimentConfig};
use crate::linear::ParamPair;
use crate::sets::solve_f_value;
use crate::theory::{
    empirical_contraction, linear_constants, schedule_constants, sigma_check, verify_lemmas, SigmaCheck,
    TheoryConstants, LEMMA_TOL,
};

/// Compact view of a lemma report.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum LemmaSummary {
    Checked {
        checks: usize,
        violations: usize,
        worst_relative_slack: f64,
        tolerance: f64,
    },
    Skipped {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub algorithm: AlgoName,
    #[serde(rename = "T")]
    pub outer_iters: usize,
    #[serde(rename = "K_L")]
    pub lookahead_steps: usize,
    #[serde(rename = "K_R")]
    pub replicate_steps: usize,
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub tau: Option<f64>,
    pub gradients: GradientMode,
    pub final_t: usize,
    pub theta: Vec<f64>,
    pub w: Vec<f64>,
    pub h_loss: f64,
    pub g_loss: f64,
    pub bellman_residual: f64,
    pub value_gap: f64,
    pub value_theta: Vec<f64>,
    pub value_w: Vec<f64>,
    pub true_value: Vec<f64>,
    /// `||v_theta - v*||_inf`
    pub value_error_theta: f64,
    /// `||v_w - v*||_inf`
    pub value_error_w: f64,
    pub dist_fvalue: Option<f64>,
    pub dim_fvalue: Option<usize>,
    pub constants: TheoryConstants,
    pub contraction_max_ratio: Option<f64>,
    pub sigma_check: SigmaCheck,
    pub lemmas: Option<LemmaSummary>,
    pub notes: Vec<String>,
    /// Excluded from the JSON so repeated runs write identical files.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub summary: RunSummary,
    pub csv_path: Option<PathBuf>,
    pub summary_path: Option<PathBuf>,
}

/// Summary file written next to the CSV: `run.csv` becomes `run.summary.json`.
pub fn summary_path_for(csv: &Path) -> PathBuf {
    csv.with_extension("summary.json")
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes one row per record: `t, theta_*, w_*, h_loss, g_loss,
/// bellman_residual, value_gap, dist_fvalue`. Values carry 17 significant
/// digits so they re-parse to the same doubles.
pub fn write_csv<W: Write>(out: W, traj: &Trajectory) -> Result<()> {
    let io = |e: csv::Error| Error::Io(e.to_string());
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let first = &traj.records[0];
    let mut header = vec!["t".to_string()];
    header.extend((0..first.theta.len()).map(|i| format!("theta_{i}")));
    header.extend((0..first.w.len()).map(|i| format!("w_{i}")));
    header.extend(["h_loss", "g_loss", "bellman_residual", "value_gap", "dist_fvalue"].map(String::from));
    wtr.write_record(&header).map_err(io)?;
    for r in &traj.records {
        let mut row = vec![r.t.to_string()];
        row.extend(r.theta.iter().map(|&x| fmt(x)));
        row.extend(r.w.iter().map(|&x| fmt(x)));
        row.extend([r.h_loss, r.g_loss, r.bellman_residual, r.value_gap].map(fmt));
        row.push(r.dist_fvalue.map(fmt).unwrap_or_default());
        wtr.write_record(&row).map_err(io)?;
    }
    wtr.flush()?;
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn inf_dist(a: &nalgebra::DVector<f64>, b: &nalgebra::DVector<f64>) -> f64 {
    (a - b).amax()
}

/// Runs `exp` and builds its summary. Nothing is written.
pub fn execute(exp: &Experiment) -> Result<(Trajectory, RunSummary)> {
    let ctx = &exp.ctx;
    let f_value = solve_f_value(ctx)?;
    let opts = RunOptions {
        gradients: exp.gradients,
        instrument: exp.instrument,
        f_value: Some(&f_value),
    };
    let started = Instant::now();
    let traj = match exp.algorithm {
        AlgoName::Lr => run_lr(ctx, &exp.init, &exp.hp, &opts)?,
        AlgoName::TdCopy => run_td_copy(ctx, &exp.init, &exp.hp, &opts)?,
        AlgoName::TdPolyak => run_td_polyak(ctx, &exp.init, &exp.hp, &opts)?,
    };
    let wall_time_secs = started.elapsed().as_secs_f64();

    let constants = schedule_constants(&linear_constants(ctx), exp.hp.lookahead_steps, exp.hp.replicate_steps);
    let reference = (!f_value.empty).then(|| ParamPair::from_stacked(&f_value.particular, ctx.theta_dim()));

    let (contraction_max_ratio, sigma) = match &reference {
        Some(reference) => {
            let report = empirical_contraction(&traj, reference, constants.kappa1)?;
            let theorem = matches!(exp.hp.beta, ReplicateStep::Theorem) && exp.algorithm == AlgoName::Lr;
            (report.max_ratio, sigma_check(&report, &constants, theorem))
        }
        None => (None, SigmaCheck::NotApplicable { reason: "F_value is empty".into() }),
    };

    let lemmas = exp.instrument.then(|| match &reference {
        None => LemmaSummary::Skipped { reason: "F_value is empty".into() },
        Some(reference) => match verify_lemmas(ctx, &traj, &constants, reference, LEMMA_TOL) {
            Ok(report) => LemmaSummary::Checked {
                checks: report.descent.len() + report.inner_contraction.len() + report.outer_bound.len(),
                violations: report.violations(),
                worst_relative_slack: report.worst_relative_slack(),
                tolerance: LEMMA_TOL,
            },
            Err(e) => LemmaSummary::Skipped { reason: e.to_string() },
        },
    });

    let last = traj.last();
    let v_star = ctx.mrp().exact_value()?;
    let v_theta = ctx.value_theta(&last.theta)?;
    let v_w = ctx.value_w(&last.w)?;

    let mut notes = Vec::new();
    if matches!(exp.hp.alpha, crate::algo::StepSize::OneOverL) {
        notes.push("alpha = 1/L with L = lambda_max(2 Phi_w^T D Phi_w)".to_string());
    }
    if matches!(exp.hp.beta, ReplicateStep::CurvatureDefault) && exp.algorithm == AlgoName::Lr {
        notes.push("beta = 1/(4 kappa1^2); endpoints may differ from other step-size choices while still lying in F_value".into());
    }

    let summary = RunSummary {
        algorithm: exp.algorithm,
        outer_iters: exp.hp.outer_iters,
        lookahead_steps: exp.hp.lookahead_steps,
        replicate_steps: exp.hp.replicate_steps,
        alpha: traj.alpha,
        beta: traj.beta.clone(),
        tau: (exp.algorithm == AlgoName::TdPolyak).then_some(exp.hp.tau),
        gradients: exp.gradients,
        final_t: last.t,
        theta: last.theta.iter().copied().collect(),
        w: last.w.iter().copied().collect(),
        h_loss: last.h_loss,
        g_loss: last.g_loss,
        bellman_residual: last.bellman_residual,
        value_gap: last.value_gap,
        value_error_theta: inf_dist(&v_theta, &v_star),
        value_error_w: inf_dist(&v_w, &v_star),
        value_theta: v_theta.iter().copied().collect(),
        value_w: v_w.iter().copied().collect(),
        true_value: v_star.iter().copied().collect(),
        dist_fvalue: last.dist_fvalue,
        dim_fvalue: (!f_value.empty).then(|| f_value.dim()),
        constants,
        contraction_max_ratio,
        sigma_check: sigma,
        lemmas,
        notes,
        wall_time_secs,
    };
    Ok((traj, summary))
}

/// Runs a configuration and writes the CSV (to `out`, else the configured
/// `output`) and the summary JSON beside it.
pub fn run_experiment(config: &ExperimentConfig, out: Option<&Path>) -> Result<RunOutput> {
    let exp = config.build()?;
    let (trajectory, summary) = execute(&exp)?;
    let csv_path = out.map(Path::to_path_buf).or_else(|| config.output.as_ref().map(PathBuf::from));
    let mut summary_path = None;
    if let Some(path) = &csv_path {
        let mut buf = Vec::new();
        write_csv(&mut buf, &trajectory)?;
        write_file(path, &buf)?;
        let json = summary_path_for(path);
        let mut text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(e.to_string()))?;
        text.push('\n');
        write_file(&json, text.as_bytes())?;
        summary_path = Some(json);
    }
    Ok(RunOutput {
        trajectory,
        summary,
        csv_path,
        summary_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = r#"{
        "mrp": {"P": [[0.6, 0.4], [0.2, 0.8]], "r": [1, 1], "gamma": 0.5},
        "features_theta": [[1, 2, 1], [1, 1, 2]],
        "init": {"theta": [1.2, 2, 0.5], "w": [0.1, 2, 0.5]},
        "algo": {"name": "lr", "T": 0, "K_L": 3}
    }"#;

    #[test]
    fn zero_iterations_write_one_row() {
        let cfg = ExperimentConfig::from_json(TINY).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.csv");
        let out = run_experiment(&cfg, Some(&path)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(
            lines[0],
            "t,theta_0,theta_1,theta_2,w_0,w_1,w_2,h_loss,g_loss,bellman_residual,value_gap,dist_fvalue"
        );
        assert!(!text.contains('\r'));
        assert!(out.summary_path.unwrap().ends_with("run.summary.json"));
        assert_eq!(out.summary.final_t, 0);
    }

    #[test]
    fn csv_values_round_trip() {
        let cfg = ExperimentConfig::from_json(&TINY.replace("\"T\": 0", "\"T\": 7")).unwrap();
        let (traj, _) = execute(&cfg.build().unwrap()).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &traj).unwrap();
        let mut rdr = csv::Reader::from_reader(buf.as_slice());
        for (row, rec) in rdr.records().zip(&traj.records) {
            let row = row.unwrap();
            let theta1: f64 = row[2].parse().unwrap();
            let gap: f64 = row[10].parse().unwrap();
            assert_eq!(theta1.to_bits(), rec.theta[1].to_bits());
            assert_eq!(gap.to_bits(), rec.value_gap.to_bits());
        }
    }

    #[test]
    fn empty_f_value_leaves_field_blank() {
        // a constant feature cannot represent v* = [1.5, 0.5]
        let text = r#"{
            "mrp": {"P": [[0.5, 0.5], [0.5, 0.5]], "r": [1, 0], "gamma": 0.5},
            "features_theta": [[1], [1]],
            "init": {"theta": [0], "w": [0]},
            "algo": {"name": "lr", "T": 2}
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        let (traj, summary) = execute(&cfg.build().unwrap()).unwrap();
        assert!(summary.dim_fvalue.is_none());
        let mut buf = Vec::new();
        write_csv(&mut buf, &traj).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().skip(1).all(|l| l.ends_with(',')));
    }
}
