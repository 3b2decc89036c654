//! End-to-end forgetting and reversal experiment.
//!
//! 1. Pretrain encoder + depth head on task A; the result is the pretrained
//!    checkpoint.
//! 2. Fine-tune encoder + action head on task B; the result is the fine-tuned
//!    checkpoint, whose encoder has drifted away from what task A needs.
//! 3. Train the action head alone while the encoder stays frozen and is
//!    stage-merged back toward the pretrained encoder per the merge plan.
//!
//! Task A is linearly probed on the encoder after every phase.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::model::{ToyModel, ACTION_HEAD_GROUP, DEPTH_HEAD_GROUP, ENCODER_GROUP, PARAM_NAMES};
use super::probe::{probe_linear, ProbeSets};
use super::seed::{derive_seed, streams};
use super::task::{Dataset, Task, TaskId, TaskSpec};
use super::train::{train, train_with, LossCurve, TrainConfig};
use super::LabError;
use crate::merge::merge_distance;
use crate::schedule::{apply_stage, AlphaRamp, MergePlan, Schedule, StageBoundary, Variant};
use crate::tensor_store::{Checkpoint, Selector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabConfig {
    pub seed: u64,
    pub pretrain_steps: u64,
    pub finetune_steps: u64,
    /// Length N of the reversal run.
    pub reversal_steps: u64,
    /// Stage length n of gradual schedules.
    pub stage_length: u64,
    pub lr: f64,
    pub batch_size: usize,
    /// Rows in each of the probe training and held-out sets.
    pub probe_samples: usize,
    pub ridge_lambda: f64,
    pub log_every: u64,
    pub ramp: AlphaRamp,
}

impl Default for LabConfig {
    fn default() -> Self {
        LabConfig {
            seed: 7,
            pretrain_steps: 5000,
            finetune_steps: 5000,
            reversal_steps: 5000,
            stage_length: 500,
            lr: 1e-2,
            batch_size: 32,
            probe_samples: 512,
            ridge_lambda: 1e-6,
            log_every: 50,
            ramp: AlphaRamp::Leading,
        }
    }
}

impl LabConfig {
    pub fn plan(&self, variant: Variant) -> Result<MergePlan, LabError> {
        let schedule = Schedule::new(variant.mode(), self.reversal_steps, self.stage_length)?.with_ramp(self.ramp);
        Ok(MergePlan::new(variant, schedule)?)
    }

    fn train_config(&self, steps: u64, stream: u64) -> TrainConfig {
        TrainConfig {
            steps,
            lr: self.lr,
            batch_size: self.batch_size,
            seed: derive_seed(self.seed, stream),
            log_every: self.log_every,
        }
    }

    fn task(&self, task: TaskId, stream: u64) -> Task {
        Task::new(TaskSpec { task, seed: derive_seed(self.seed, stream), samples: self.probe_samples })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseCurves {
    pub pretrain: LossCurve,
    pub finetune: LossCurve,
    pub reversal: LossCurve,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub variant: Variant,
    pub seed: u64,
    pub schedule: Schedule,
    pub stage_boundaries: Vec<StageBoundary>,
    pub selected: Vec<String>,
    /// Held-out MSE of the best constant predictor on task A.
    pub task_a_baseline_err: f64,
    /// Depth-head MSE on task A after pretraining.
    pub task_a_pretrain_err: f64,
    pub probe_err_pretrained: f64,
    pub probe_err_after_finetune: f64,
    pub probe_err_after_reversal: f64,
    pub forgetting_ratio: f64,
    pub task_b_err_after_finetune: f64,
    pub task_b_final_err: f64,
    pub encoder_bitwise_reverted: bool,
    /// L2 distance between fine-tuned and pretrained encoder tensors.
    pub encoder_drift: BTreeMap<String, f64>,
    pub curves: PhaseCurves,
}

/// Output of one variant's reversal run.
#[derive(Clone, Debug)]
pub struct VariantRun {
    pub report: ExperimentReport,
    pub final_checkpoint: Checkpoint,
}

/// Phases 1 and 2, shared by every variant with the same config.
#[derive(Clone, Debug)]
pub struct PreparedLab {
    config: LabConfig,
    task_b: Task,
    probe_a: ProbeSets,
    eval_b: Dataset,
    pretrained: Checkpoint,
    finetuned_model: ToyModel,
    finetuned: Checkpoint,
    task_a_baseline_err: f64,
    task_a_pretrain_err: f64,
    probe_err_pretrained: f64,
    probe_err_after_finetune: f64,
    task_b_err_after_finetune: f64,
    pretrain_curve: LossCurve,
    finetune_curve: LossCurve,
}

fn selector(patterns: &[&str]) -> Selector {
    Selector::new(patterns.iter().copied()).expect("static patterns are non-empty")
}

impl PreparedLab {
    pub fn new(config: LabConfig) -> Result<Self, LabError> {
        if config.probe_samples == 0 {
            return Err(LabError::Config("probe_samples must be positive".into()));
        }
        let task_a = config.task(TaskId::ADepth, streams::TASK_A);
        let task_b = config.task(TaskId::BAction, streams::TASK_B);
        let probe_a = ProbeSets::for_task(&task_a);
        let eval_b = task_b.dataset(streams::EVAL);

        let init = ToyModel::init(derive_seed(config.seed, streams::MODEL_INIT));
        let (pretrained_model, pretrain_curve) = train(
            &init,
            &task_a,
            &config.train_config(config.pretrain_steps, streams::PRETRAIN_BATCHES),
            &selector(&[ACTION_HEAD_GROUP]),
        )?;
        log::info!("pretraining done, last minibatch loss {:?}", pretrain_curve.last());

        let (finetuned_model, finetune_curve) = train(
            &pretrained_model,
            &task_b,
            &config.train_config(config.finetune_steps, streams::FINETUNE_BATCHES),
            &selector(&[DEPTH_HEAD_GROUP]),
        )?;
        log::info!("fine-tuning done, last minibatch loss {:?}", finetune_curve.last());

        Ok(PreparedLab {
            task_a_baseline_err: probe_a.constant_baseline(),
            task_a_pretrain_err: pretrained_model.loss(&probe_a.test.inputs, &probe_a.test.targets, task_a.head())?,
            probe_err_pretrained: probe_linear(&pretrained_model, &probe_a, config.ridge_lambda)?,
            probe_err_after_finetune: probe_linear(&finetuned_model, &probe_a, config.ridge_lambda)?,
            task_b_err_after_finetune: finetuned_model.loss(&eval_b.inputs, &eval_b.targets, task_b.head())?,
            pretrained: pretrained_model.to_checkpoint(),
            finetuned: finetuned_model.to_checkpoint(),
            finetuned_model,
            config,
            task_b,
            probe_a,
            eval_b,
            pretrain_curve,
            finetune_curve,
        })
    }

    pub fn config(&self) -> &LabConfig {
        &self.config
    }

    pub fn pretrained(&self) -> &Checkpoint {
        &self.pretrained
    }

    pub fn finetuned(&self) -> &Checkpoint {
        &self.finetuned
    }

    pub fn probe_err_pretrained(&self) -> f64 {
        self.probe_err_pretrained
    }

    pub fn probe_err_after_finetune(&self) -> f64 {
        self.probe_err_after_finetune
    }

    /// Phase 3 for one plan.
    pub fn run_variant(&self, plan: &MergePlan) -> Result<VariantRun, LabError> {
        let selected = plan.selector().select(PARAM_NAMES);
        if selected.is_empty() {
            return Err(LabError::PlanSelectsNothing(plan.variant()));
        }
        let schedule = *plan.schedule();
        let boundaries = schedule.stage_boundaries();
        let mut merge_at = |step: u64, model: &mut ToyModel| -> Result<(), LabError> {
            if boundaries.iter().any(|b| b.step == step) {
                // Always from the original fine-tuned weights: the encoder is
                // frozen, so nothing else could have changed them.
                let merged = apply_stage(&self.finetuned, &self.pretrained, plan, step)?;
                model.load_from(&merged, plan.selector())?;
                log::debug!("{}: merged at step {step}", plan.variant());
            }
            Ok(())
        };
        let cfg = self.config.train_config(schedule.total_steps(), streams::REVERSAL_BATCHES);
        let frozen = selector(&[ENCODER_GROUP, DEPTH_HEAD_GROUP]);
        let (mut model, reversal_curve) = train_with(&self.finetuned_model, &self.task_b, &cfg, &frozen, &mut merge_at)?;
        // A trailing ramp places its last boundary at step N, after training.
        merge_at(schedule.total_steps(), &mut model)?;

        let final_checkpoint = model.to_checkpoint();
        let encoder = selector(&[ENCODER_GROUP]);
        let encoder_bitwise_reverted = encoder
            .select(PARAM_NAMES)
            .iter()
            .all(|n| final_checkpoint.get(n) == self.pretrained.get(n));
        let probe_err_after_reversal = probe_linear(&model, &self.probe_a, self.config.ridge_lambda)?;

        let report = ExperimentReport {
            variant: plan.variant(),
            seed: self.config.seed,
            schedule,
            stage_boundaries: boundaries.clone(),
            selected,
            task_a_baseline_err: self.task_a_baseline_err,
            task_a_pretrain_err: self.task_a_pretrain_err,
            probe_err_pretrained: self.probe_err_pretrained,
            probe_err_after_finetune: self.probe_err_after_finetune,
            probe_err_after_reversal,
            forgetting_ratio: self.probe_err_after_finetune / self.probe_err_pretrained,
            task_b_err_after_finetune: self.task_b_err_after_finetune,
            task_b_final_err: model.loss(&self.eval_b.inputs, &self.eval_b.targets, self.task_b.head())?,
            encoder_bitwise_reverted,
            encoder_drift: merge_distance(&self.finetuned, &self.pretrained, &encoder)?,
            curves: PhaseCurves {
                pretrain: self.pretrain_curve.clone(),
                finetune: self.finetune_curve.clone(),
                reversal: reversal_curve,
            },
        };
        Ok(VariantRun { report, final_checkpoint })
    }
}

/// Runs all three phases for a single plan.
pub fn run_reversal_experiment(plan: &MergePlan, config: &LabConfig) -> Result<ExperimentReport, LabError> {
    Ok(PreparedLab::new(config.clone())?.run_variant(plan)?.report)
}

/// Plain-text comparison of variant reports.
pub fn comparison_table(reports: &[ExperimentReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:>14} {:>14} {:>14} {:>10} {:>12} {:>9}",
        "variant", "probe_pre", "probe_ft", "probe_rev", "ratio", "taskB_final", "reverted"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<12} {:>14.6e} {:>14.6e} {:>14.6e} {:>10.3} {:>12.6e} {:>9}",
            r.variant.name(),
            r.probe_err_pretrained,
            r.probe_err_after_finetune,
            r.probe_err_after_reversal,
            r.forgetting_ratio,
            r.task_b_final_err,
            r.encoder_bitwise_reverted
        );
    }
    out
}
