//! Experiment runner for robust average-reward learning: multi-seed runs
//! with percentile envelopes, exact planning, robustness sweeps and a
//! support-function self-check. Results are written as CSV, JSON and SVG.

pub mod config;
pub mod error;
pub mod experiments;
pub mod plot;
pub mod stats;
pub mod support_check;
pub mod sweep;

pub use config::{Algorithm, EnvironmentConfig, ExperimentConfig, PolicyConfig, SupportCheckConfig};
pub use error::HarnessError;
pub use experiments::{run_control_experiment, run_eval_experiment, run_planner, ControlSummary, EvalSummary};
pub use support_check::{run_support_check, SupportReport};
pub use sweep::{run_robustness_sweep, SweepSummary};
