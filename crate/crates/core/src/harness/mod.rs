//! Config-driven experiments, bundled reproductions and the generated
//! instances of the lemma suite.

pub mod config;
pub mod instance;
pub mod reproduce;
pub mod run;

pub use config::{load_config, Experiment, ExperimentConfig};
pub use instance::{generate_instance, generate_tabular_instance, verify_suite, GeneratedInstance, SuiteReport};
pub use reproduce::{reproduce, Bundled, ReproduceReport};
pub use run::{execute, run_experiment, write_csv, RunOutput, RunSummary};
