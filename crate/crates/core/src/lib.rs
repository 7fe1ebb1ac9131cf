//! Lookahead-Replicate value-function approximation for Markov reward
//! processes with linear features.
//!
//! The online parameters `w` are fitted to the bootstrapped target
//! `T v_theta` (Lookahead); the target parameters `theta` are then pulled
//! towards `v_w` in value space (Replicate). A pair with
//! `v_w = T v_theta` and `v_theta = v_w` is a solution even when
//! `theta != w`, and the two sides may use different feature maps.

pub mod algo;
pub mod error;
pub mod harness;
pub mod linear;
pub mod losses;
pub mod mrp;
pub mod rng;
pub mod sets;
pub mod theory;

pub use algo::{GradientMode, Hyperparams, ReplicateStep, RunOptions, StepSize, Trajectory, TrajectoryRecord};
pub use error::{Error, Result};
pub use linear::{FeatureMap, ParamPair, ParamVector};
pub use losses::{GradientEstimate, LossContext};
pub use mrp::{MarkovRewardProcess, ValueVector};
pub use sets::AffineSet;
pub use theory::{LemmaReport, TheoryConstants};
