//! Two-layer tanh encoder with a depth head and an action head.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::linalg::Matrix;
use super::LabError;
use crate::tensor_store::{Checkpoint, Selector, Tensor};

pub const INPUT_DIM: usize = 16;
pub const HIDDEN_DIM: usize = 32;
pub const FEATURE_DIM: usize = 8;
pub const DEPTH_DIM: usize = 1;
pub const ACTION_DIM: usize = 7;

/// Every encoder parameter lives under this group.
pub const ENCODER_GROUP: &str = "vision.*";
pub const DEPTH_HEAD_GROUP: &str = "head.depth.*";
pub const ACTION_HEAD_GROUP: &str = "head.action.*";

pub const PARAM_NAMES: [&str; 8] = [
    "vision.dino.layer0.weight",
    "vision.dino.layer0.bias",
    "vision.dino.layer1.weight",
    "vision.dino.layer1.bias",
    "head.depth.weight",
    "head.depth.bias",
    "head.action.weight",
    "head.action.bias",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Depth,
    Action,
}

impl Head {
    pub fn output_dim(self) -> usize {
        match self {
            Head::Depth => DEPTH_DIM,
            Head::Action => ACTION_DIM,
        }
    }
}

/// `y = W x + b` with `W` stored `[out, in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Affine {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Affine {
    pub fn zeros(input: usize, output: usize) -> Self {
        Affine { weight: Matrix::zeros(output, input), bias: vec![0.0; output] }
    }

    fn random(input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        let scale = 1.0 / (input as f64).sqrt();
        let data = (0..input * output)
            .map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
            .collect();
        Affine { weight: Matrix::new(output, input, data), bias: vec![0.0; output] }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    /// Row-wise `x W^T + b`.
    fn apply(&self, x: &Matrix) -> Matrix {
        let (n_in, n_out) = (self.input_dim(), self.output_dim());
        let w = self.weight.data();
        let mut out = Matrix::zeros(x.rows(), n_out);
        for r in 0..x.rows() {
            let xr = x.row(r);
            let yr = out.row_mut(r);
            for (o, y) in yr.iter_mut().enumerate() {
                let wr = &w[o * n_in..(o + 1) * n_in];
                *y = self.bias[o] + wr.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        out
    }

    /// Accumulates `dW = dy^T x`, `db = colsum(dy)` and returns `dx = dy W`.
    fn backward(&self, x: &Matrix, dy: &Matrix, dw: &mut [f64], db: &mut [f64], want_dx: bool) -> Option<Matrix> {
        let (n_in, n_out) = (self.input_dim(), self.output_dim());
        let w = self.weight.data();
        let mut dx = want_dx.then(|| Matrix::zeros(x.rows(), n_in));
        for r in 0..x.rows() {
            let xr = x.row(r);
            let dyr = dy.row(r);
            for o in 0..n_out {
                let g = dyr[o];
                db[o] += g;
                for (acc, xi) in dw[o * n_in..(o + 1) * n_in].iter_mut().zip(xr) {
                    *acc += g * xi;
                }
            }
            if let Some(dx) = dx.as_mut() {
                let dxr = dx.row_mut(r);
                for o in 0..n_out {
                    let g = dyr[o];
                    for (d, wi) in dxr.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *d += g * wi;
                    }
                }
            }
        }
        dx
    }
}

/// The forgetting test-bed: encoder `16 -> 32 -> 8` with tanh after both
/// layers, a depth head `8 -> 1` and an action head `8 -> 7`.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyModel {
    pub layer0: Affine,
    pub layer1: Affine,
    pub depth_head: Affine,
    pub action_head: Affine,
}

struct Activations {
    hidden: Matrix,
    features: Matrix,
    output: Matrix,
}

impl ToyModel {
    pub fn zeros() -> Self {
        ToyModel {
            layer0: Affine::zeros(INPUT_DIM, HIDDEN_DIM),
            layer1: Affine::zeros(HIDDEN_DIM, FEATURE_DIM),
            depth_head: Affine::zeros(FEATURE_DIM, DEPTH_DIM),
            action_head: Affine::zeros(FEATURE_DIM, ACTION_DIM),
        }
    }

    /// Weights `N(0, 1/fan_in)`, biases zero.
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ToyModel {
            layer0: Affine::random(INPUT_DIM, HIDDEN_DIM, &mut rng),
            layer1: Affine::random(HIDDEN_DIM, FEATURE_DIM, &mut rng),
            depth_head: Affine::random(FEATURE_DIM, DEPTH_DIM, &mut rng),
            action_head: Affine::random(FEATURE_DIM, ACTION_DIM, &mut rng),
        }
    }

    pub fn head(&self, head: Head) -> &Affine {
        match head {
            Head::Depth => &self.depth_head,
            Head::Action => &self.action_head,
        }
    }

    fn layers(&self) -> [&Affine; 4] {
        [&self.layer0, &self.layer1, &self.depth_head, &self.action_head]
    }

    fn layers_mut(&mut self) -> [&mut Affine; 4] {
        [&mut self.layer0, &mut self.layer1, &mut self.depth_head, &mut self.action_head]
    }

    /// Parameter buffers in [`PARAM_NAMES`] order.
    pub fn params(&self) -> Vec<(&'static str, &[f64])> {
        self.layers()
            .into_iter()
            .enumerate()
            .flat_map(|(i, l)| [(PARAM_NAMES[2 * i], l.weight.data()), (PARAM_NAMES[2 * i + 1], &l.bias[..])])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        self.layers_mut()
            .into_iter()
            .enumerate()
            .flat_map(|(i, l)| {
                let Affine { weight, bias } = l;
                [(PARAM_NAMES[2 * i], weight.data_mut()), (PARAM_NAMES[2 * i + 1], &mut bias[..])]
            })
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|(_, p)| p.iter().all(|x| x.is_finite()))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::versioned();
        for (i, layer) in self.layers().into_iter().enumerate() {
            let (o, n) = (layer.output_dim(), layer.input_dim());
            ckpt.insert(PARAM_NAMES[2 * i], Tensor::f64(vec![o, n], layer.weight.data().to_vec()));
            ckpt.insert(PARAM_NAMES[2 * i + 1], Tensor::f64(vec![o], layer.bias.clone()));
        }
        ckpt
    }

    /// Rebuilds a model; every parameter must be present as a finite f64
    /// tensor of the expected shape. Extra tensors are ignored.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, LabError> {
        let mut model = ToyModel::zeros();
        model.load_from(ckpt, &Selector::all())?;
        Ok(model)
    }

    /// Copies the parameters matched by `sel` out of `ckpt`.
    pub fn load_from(&mut self, ckpt: &Checkpoint, sel: &Selector) -> Result<(), LabError> {
        for (name, buf) in self.params_mut() {
            if !sel.matches(name) {
                continue;
            }
            let tensor = ckpt.get(name).ok_or_else(|| LabError::BadParameter {
                name: name.to_string(),
                reason: "missing".into(),
            })?;
            let values = tensor.as_f64().ok_or_else(|| LabError::BadParameter {
                name: name.to_string(),
                reason: format!("dtype {} (expected F64)", tensor.dtype()),
            })?;
            if values.len() != buf.len() || tensor.numel() != Some(buf.len()) {
                return Err(LabError::BadParameter {
                    name: name.to_string(),
                    reason: format!("shape {:?} holds {} values, expected {}", tensor.shape, values.len(), buf.len()),
                });
            }
            if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
                return Err(LabError::BadParameter { name: name.to_string(), reason: format!("non-finite value {bad}") });
            }
            buf.copy_from_slice(values);
        }
        Ok(())
    }

    fn check_inputs(x: &Matrix) -> Result<(), LabError> {
        if x.cols() != INPUT_DIM {
            return Err(LabError::Shape(format!("inputs have {} columns, expected {INPUT_DIM}", x.cols())));
        }
        Ok(())
    }

    fn activations(&self, x: &Matrix, head: Head) -> Activations {
        let mut hidden = self.layer0.apply(x);
        hidden.data_mut().iter_mut().for_each(|v| *v = v.tanh());
        let mut features = self.layer1.apply(&hidden);
        features.data_mut().iter_mut().for_each(|v| *v = v.tanh());
        let output = self.head(head).apply(&features);
        Activations { hidden, features, output }
    }

    /// Encoder output `tanh(W1 tanh(W0 x + b0) + b1)`, one row per input.
    pub fn features(&self, x: &Matrix) -> Result<Matrix, LabError> {
        Self::check_inputs(x)?;
        let mut hidden = self.layer0.apply(x);
        hidden.data_mut().iter_mut().for_each(|v| *v = v.tanh());
        let mut features = self.layer1.apply(&hidden);
        features.data_mut().iter_mut().for_each(|v| *v = v.tanh());
        Ok(features)
    }

    pub fn forward(&self, x: &Matrix, head: Head) -> Result<Matrix, LabError> {
        Self::check_inputs(x)?;
        Ok(self.activations(x, head).output)
    }

    /// Mean over all output elements of the squared residual.
    pub fn loss(&self, x: &Matrix, y: &Matrix, head: Head) -> Result<f64, LabError> {
        let pred = self.forward(x, head)?;
        Self::check_targets(x, y, head)?;
        Ok(pred.mean_squared_diff(y))
    }

    fn check_targets(x: &Matrix, y: &Matrix, head: Head) -> Result<(), LabError> {
        if y.rows() != x.rows() || y.cols() != head.output_dim() {
            return Err(LabError::Shape(format!(
                "targets are {}x{}, expected {}x{}",
                y.rows(),
                y.cols(),
                x.rows(),
                head.output_dim()
            )));
        }
        Ok(())
    }

    /// Loss and its gradient with respect to every parameter, in the same
    /// layout as [`ToyModel`]. Parameters matched by `frozen` get exact zeros.
    pub fn loss_and_grad(&self, x: &Matrix, y: &Matrix, head: Head, frozen: &Selector) -> Result<(f64, ToyModel), LabError> {
        Self::check_inputs(x)?;
        Self::check_targets(x, y, head)?;
        if x.rows() == 0 {
            return Err(LabError::Shape("empty batch".into()));
        }
        let act = self.activations(x, head);
        let loss = act.output.mean_squared_diff(y);

        let scale = 2.0 / (y.rows() * y.cols()) as f64;
        let mut d_out = act.output.clone();
        for (d, t) in d_out.data_mut().iter_mut().zip(y.data()) {
            *d = scale * (*d - t);
        }

        let mut g = ToyModel::zeros();
        let head_grad = match head {
            Head::Depth => &mut g.depth_head,
            Head::Action => &mut g.action_head,
        };
        let mut d_feat = self
            .head(head)
            .backward(&act.features, &d_out, head_grad.weight.data_mut(), &mut head_grad.bias, true)
            .expect("requested");
        for (d, f) in d_feat.data_mut().iter_mut().zip(act.features.data()) {
            *d *= 1.0 - f * f;
        }
        let mut d_hidden = self
            .layer1
            .backward(&act.hidden, &d_feat, g.layer1.weight.data_mut(), &mut g.layer1.bias, true)
            .expect("requested");
        for (d, h) in d_hidden.data_mut().iter_mut().zip(act.hidden.data()) {
            *d *= 1.0 - h * h;
        }
        self.layer0.backward(x, &d_hidden, g.layer0.weight.data_mut(), &mut g.layer0.bias, false);

        for (name, buf) in g.params_mut() {
            if frozen.matches(name) {
                buf.fill(0.0);
            }
        }
        Ok((loss, g))
    }
}

/// Gradient of the mean-squared error as a checkpoint with the parameter
/// names and shapes of the model.
pub fn grad(model: &ToyModel, x: &Matrix, y: &Matrix, head: Head, frozen: &Selector) -> Result<Checkpoint, LabError> {
    Ok(model.loss_and_grad(x, y, head, frozen)?.1.to_checkpoint())
}
