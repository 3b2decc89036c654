use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::ToyModel;
use super::task::Task;
use super::LabError;
use crate::tensor_store::Selector;

/// Plain gradient descent with a constant learning rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: u64,
    pub lr: f64,
    pub batch_size: usize,
    /// Seeds the minibatch stream.
    pub seed: u64,
    /// Record the minibatch loss every this many steps (0 disables logging).
    pub log_every: u64,
}

/// Minibatch losses, measured before each recorded update.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub steps: Vec<u64>,
    pub losses: Vec<f64>,
}

impl LossCurve {
    fn record(&mut self, step: u64, loss: f64) {
        self.steps.push(step);
        self.losses.push(loss);
    }

    pub fn last(&self) -> Option<f64> {
        self.losses.last().copied()
    }
}

pub fn train(model: &ToyModel, task: &Task, cfg: &TrainConfig, frozen: &Selector) -> Result<(ToyModel, LossCurve), LabError> {
    train_with(model, task, cfg, frozen, |_, _| Ok(()))
}

/// Like [`train`], calling `before_step(step, model)` ahead of every update.
/// The hook may rewrite parameters, e.g. to apply a staged merge.
pub fn train_with<F>(
    model: &ToyModel,
    task: &Task,
    cfg: &TrainConfig,
    frozen: &Selector,
    mut before_step: F,
) -> Result<(ToyModel, LossCurve), LabError>
where
    F: FnMut(u64, &mut ToyModel) -> Result<(), LabError>,
{
    if !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
        return Err(LabError::Config(format!("learning rate must be positive and finite, got {}", cfg.lr)));
    }
    if cfg.batch_size == 0 {
        return Err(LabError::Config("batch size must be positive".into()));
    }
    let mut model = model.clone();
    let mut curve = LossCurve::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let head = task.head();

    for step in 0..cfg.steps {
        before_step(step, &mut model)?;
        let batch = task.sample(&mut rng, cfg.batch_size);
        let (loss, grad) = model.loss_and_grad(&batch.inputs, &batch.targets, head, frozen)?;
        if !loss.is_finite() {
            return Err(LabError::Diverged { step, loss });
        }
        if cfg.log_every > 0 && (step % cfg.log_every == 0 || step + 1 == cfg.steps) {
            curve.record(step, loss);
        }
        for ((name, w), (_, g)) in model.params_mut().into_iter().zip(grad.params()) {
            if frozen.matches(name) {
                continue;
            }
            for (wi, gi) in w.iter_mut().zip(g) {
                *wi -= cfg.lr * gi;
            }
        }
    }
    if !model.is_finite() {
        return Err(LabError::Diverged { step: cfg.steps, loss: f64::NAN });
    }
    Ok((model, curve))
}
