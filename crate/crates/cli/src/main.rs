use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lr_core::harness::{self, load_config, Bundled};
use lr_core::rng::rng_from_seed;
use lr_core::sets::{check_claims, solve_f_pair, solve_f_single, solve_f_value, AffineSet};
use lr_core::theory::{linear_constants, schedule_constants};
use lr_core::Error;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "lr", version, about = "Lookahead-Replicate experiments on Markov reward processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured experiment and write its CSV and summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// CSV path; overrides the config's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the convergence constants of a configuration.
    Constants {
        #[arg(long)]
        config: PathBuf,
    },
    /// Check the Lookahead inequalities on generated instances.
    Verify {
        #[arg(long, default_value_t = 50)]
        seeds: u64,
        #[arg(long, default_value_t = 5)]
        states: usize,
        #[arg(long, default_value_t = 3)]
        dim: usize,
    },
    /// Sampled check of the solution-set relations (shared features only).
    Claims {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
    /// Print the affine solution sets of a configuration.
    SolutionSet {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a bundled two-state experiment against its thresholds.
    Reproduce {
        /// `b1` or `b2`.
        experiment: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const EXIT_INPUT: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_CHECK: u8 = 3;

enum Failure {
    Error(Error),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn print(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("reports serialize"));
}

fn set_json(set: &AffineSet) -> Value {
    let basis: Vec<Vec<f64>> = set.basis.column_iter().map(|c| c.iter().copied().collect()).collect();
    json!({
        "empty": set.empty,
        "dim": (!set.empty).then(|| set.dim()),
        "particular": set.particular.iter().copied().collect::<Vec<_>>(),
        "basis": basis,
        "residual": set.residual,
    })
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run { config, out } => {
            let cfg = load_config(&config)?;
            let output = harness::run_experiment(&cfg, out.as_deref())?;
            print(&output.summary);
            eprintln!("wall time: {:.3} s", output.summary.wall_time_secs);
            if let Some(path) = output.csv_path {
                eprintln!("wrote {}", path.display());
            }
        }
        Command::Constants { config } => {
            let exp = load_config(&config)?.build()?;
            let c = schedule_constants(&linear_constants(&exp.ctx), exp.hp.lookahead_steps, exp.hp.replicate_steps);
            print(&c);
        }
        Command::Verify { seeds, states, dim } => {
            let started = std::time::Instant::now();
            let report = harness::verify_suite(seeds, states, dim)?;
            print(&report);
            eprintln!(
                "{} checks on {} instances, {} violations, {:.2} s",
                report.total_checks,
                report.instances.len(),
                report.total_violations,
                started.elapsed().as_secs_f64()
            );
            if !report.pass {
                return Err(Failure::Check(format!("{} inequality violations", report.total_violations)));
            }
        }
        Command::Claims { config, samples } => {
            let cfg = load_config(&config)?;
            let exp = cfg.build()?;
            let mut rng = rng_from_seed(cfg.gradients.seed);
            let report = check_claims(&exp.ctx, samples, &mut rng)?;
            print(&report);
            if !report.pass() {
                return Err(Failure::Check("solution-set claims failed".into()));
            }
        }
        Command::SolutionSet { config } => {
            let exp = load_config(&config)?.build()?;
            let mut out = json!({ "f_value": set_json(&solve_f_value(&exp.ctx)?) });
            if exp.ctx.is_shared() {
                out["f_single"] = set_json(&solve_f_single(&exp.ctx)?);
                out["f_pair"] = set_json(&solve_f_pair(&exp.ctx)?);
            }
            print(&out);
        }
        Command::Reproduce { experiment, out } => {
            let which: Bundled = experiment.parse()?;
            let report = harness::reproduce(which, out.as_deref())?;
            print(&report);
            for c in &report.checks {
                eprintln!(
                    "{} {}: {:.3e} < {:.0e}",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.threshold
                );
            }
            let ep = &report.rounded_endpoint;
            eprintln!(
                "rounded endpoint: distance to F_value {:.3e} (tolerance {:.0e})",
                ep.distance, ep.tolerance
            );
            eprintln!("wall time: {:.3} s", report.wall_time_secs);
            if !report.pass {
                return Err(Failure::Check(format!("reproduce {} failed", which.name())));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(EXIT_INPUT);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(EXIT_CHECK)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_INPUT })
        }
    }
}
