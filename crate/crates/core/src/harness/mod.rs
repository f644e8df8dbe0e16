//! Experiment orchestration: configuration, closed-loop runs and campaigns.

pub mod campaign;
pub mod config;
pub mod runner;

pub use campaign::{
    collect, configured_model, evaluate, fit_model, identify, parse_grid, simulate, simulate_with,
    sweep, training_data, Evaluation, Grid, Manifest, RunEntry, SweepCell,
};
pub use config::{load_table, set_dotted, ControllerKind, ExperimentConfig, SolverKind, WindConfig};
pub use runner::{run_closed_loop, Controller, Disturbance, RunSetup};
