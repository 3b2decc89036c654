//! Seeded regression tasks for the toy network.
//!
//! Task A ("depth") is a scalar target `tanh(g.x) + 0.5 tanh(h.x)` over all
//! sixteen input coordinates. Task B ("action") is a 7-dim target
//! `tanh(M (x * m))` where the binary mask `m` keeps only half of the
//! coordinates, so a network tuned for B has no reason to keep the rest.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::linalg::Matrix;
use super::model::{Head, ACTION_DIM, INPUT_DIM};
use super::seed::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskId {
    #[serde(rename = "A_depth")]
    ADepth,
    #[serde(rename = "B_action")]
    BAction,
}

impl TaskId {
    pub fn head(self) -> Head {
        match self {
            TaskId::ADepth => Head::Depth,
            TaskId::BAction => Head::Action,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task: TaskId,
    /// Fixes the target function; sample streams are derived from it.
    pub seed: u64,
    /// Size of datasets drawn with [`Task::dataset`].
    pub samples: usize,
}

/// Inputs with their targets, one row per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub inputs: Matrix,
    pub targets: Matrix,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
enum TargetFn {
    Depth { g: Vec<f64>, h: Vec<f64> },
    Action { mixing: Matrix, mask: Vec<f64> },
}

/// A task with its target function materialized from `TaskSpec::seed`.
#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    spec: TaskSpec,
    target: TargetFn,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| normal(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

impl Task {
    pub fn new(spec: TaskSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let target = match spec.task {
            TaskId::ADepth => {
                let g = unit_vector(&mut rng, INPUT_DIM);
                let h = unit_vector(&mut rng, INPUT_DIM);
                TargetFn::Depth { g, h }
            }
            TaskId::BAction => {
                let mut order: Vec<usize> = (0..INPUT_DIM).collect();
                order.shuffle(&mut rng);
                let mut mask = vec![0.0; INPUT_DIM];
                for &i in &order[..INPUT_DIM / 2] {
                    mask[i] = 1.0;
                }
                let scale = 1.0 / ((INPUT_DIM / 2) as f64).sqrt();
                let data = (0..ACTION_DIM * INPUT_DIM).map(|_| scale * normal(&mut rng)).collect();
                TargetFn::Action { mixing: Matrix::new(ACTION_DIM, INPUT_DIM, data), mask }
            }
        };
        Task { spec, target }
    }

    pub fn spec(&self) -> TaskSpec {
        self.spec
    }

    pub fn head(&self) -> Head {
        self.spec.task.head()
    }

    pub fn output_dim(&self) -> usize {
        self.head().output_dim()
    }

    /// The input mask of the action task; `None` for the depth task.
    pub fn mask(&self) -> Option<&[f64]> {
        match &self.target {
            TargetFn::Action { mask, .. } => Some(mask),
            TargetFn::Depth { .. } => None,
        }
    }

    pub fn target_of(&self, x: &[f64]) -> Vec<f64> {
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        match &self.target {
            TargetFn::Depth { g, h } => vec![dot(g, x).tanh() + 0.5 * dot(h, x).tanh()],
            TargetFn::Action { mixing, mask } => {
                let masked: Vec<f64> = x.iter().zip(mask).map(|(a, m)| a * m).collect();
                (0..ACTION_DIM).map(|o| dot(mixing.row(o), &masked).tanh()).collect()
            }
        }
    }

    pub fn targets(&self, inputs: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(inputs.rows(), self.output_dim());
        for r in 0..inputs.rows() {
            out.row_mut(r).copy_from_slice(&self.target_of(inputs.row(r)));
        }
        out
    }

    /// `rows` i.i.d. standard normal inputs from `rng`, with targets.
    pub fn sample(&self, rng: &mut ChaCha8Rng, rows: usize) -> Dataset {
        let data = (0..rows * INPUT_DIM).map(|_| normal(rng)).collect();
        let inputs = Matrix::new(rows, INPUT_DIM, data);
        let targets = self.targets(&inputs);
        Dataset { inputs, targets }
    }

    /// Deterministic stream of samples identified by `stream`.
    pub fn stream(&self, stream: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive_seed(self.spec.seed, stream))
    }

    /// `spec.samples` rows drawn from `stream`.
    pub fn dataset(&self, stream: u64) -> Dataset {
        self.sample(&mut self.stream(stream), self.spec.samples)
    }
}
