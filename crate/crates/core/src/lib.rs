//! Checkpoint arithmetic for reverting fine-tuned vision backbones to their
//! pretrained weights.
//!
//! - [`tensor_store`]: single-file tensor checkpoints, selectors, compatibility checks.
//! - [`merge`]: `(1 - alpha) * current + alpha * pretrained` over selected tensors.
//! - [`schedule`]: gradual and flip alpha curricula and the four reversal variants.
//! - [`lab`]: a small two-headed encoder that shows forgetting and its repair.
//! - [`ood`]: grasp/lift success accounting over episode logs.
//! - [`cli`]: the `revla` command-line front end.

pub mod cli;
pub mod lab;
pub mod merge;
pub mod ood;
pub mod schedule;
pub mod tensor_store;

pub use merge::{linear_merge, merge_distance, MergeError, MergeSpec};
pub use schedule::{apply_stage, MergePlan, Schedule, ScheduleMode, Variant};
pub use tensor_store::{load_checkpoint, save_checkpoint, select, validate_compat, Checkpoint, Selector, Tensor};
