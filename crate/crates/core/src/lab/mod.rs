//! Desk-scale training lab: a shared encoder is pretrained on one task,
//! fine-tuned on a conflicting one, and then reverted with a merge plan.

mod experiment;
pub mod linalg;
pub mod model;
mod probe;
pub mod seed;
mod task;
mod train;

use thiserror::Error;

use crate::merge::MergeError;
use crate::schedule::{ScheduleError, Variant};

pub use experiment::{
    comparison_table, run_reversal_experiment, ExperimentReport, LabConfig, PhaseCurves, PreparedLab, VariantRun,
};
pub use linalg::Matrix;
pub use model::{grad, Head, ToyModel};
pub use probe::{probe_linear, ProbeSets, RidgeProbe};
pub use task::{Dataset, Task, TaskId, TaskSpec};
pub use train::{train, train_with, LossCurve, TrainConfig};

#[derive(Debug, Error)]
pub enum LabError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at step {step} (loss {loss})")]
    Diverged { step: u64, loss: f64 },
    #[error("probe normal equations are singular (lambda = {lambda})")]
    SingularProbe { lambda: f64 },
    #[error("parameter {name}: {reason}")]
    BadParameter { name: String, reason: String },
    #[error("plan {0} selects no parameter of the toy model")]
    PlanSelectsNothing(Variant),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Merge(#[from] MergeError),
}
