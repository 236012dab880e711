//! Batch experiments and model files for the `simembed` command line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod experiment;
pub mod model_file;

pub use experiment::{run_experiment, time_fit, ExperimentPlan, ExperimentResult, Scenario};
pub use model_file::SavedModel;
