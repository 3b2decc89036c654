//! Ridge-regularized linear readout on frozen encoder features.
//!
//! Features and targets are centered on the training means, the weights solve
//! `(Xc^T Xc + lambda I) w = Xc^T yc`, and the intercept is
//! `mean(y) - mean(x)^T w`. The intercept is not penalized, so constant
//! features reduce the probe to the mean predictor.

use serde::Serialize;

use super::linalg::{cholesky_solve, Matrix};
use super::model::ToyModel;
use super::seed::streams;
use super::task::{Dataset, Task};
use super::LabError;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RidgeProbe {
    /// `[features, outputs]`.
    pub weights: Matrix,
    pub intercept: Vec<f64>,
}

impl RidgeProbe {
    pub fn fit(features: &Matrix, targets: &Matrix, lambda: f64) -> Result<Self, LabError> {
        if features.rows() != targets.rows() || features.rows() == 0 {
            return Err(LabError::Shape(format!(
                "probe needs matching non-empty rows, got {} features and {} targets",
                features.rows(),
                targets.rows()
            )));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(LabError::Config(format!("ridge lambda must be non-negative, got {lambda}")));
        }
        let (n, d, t) = (features.rows(), features.cols(), targets.cols());
        let x_mean = features.column_means();
        let y_mean = targets.column_means();

        let mut gram = Matrix::zeros(d, d);
        let mut cross = Matrix::zeros(d, t);
        let mut xc = vec![0.0; d];
        for r in 0..n {
            for (c, (x, m)) in xc.iter_mut().zip(features.row(r).iter().zip(&x_mean)) {
                *c = x - m;
            }
            let yr = targets.row(r);
            for i in 0..d {
                for j in 0..d {
                    gram.data_mut()[i * d + j] += xc[i] * xc[j];
                }
                for k in 0..t {
                    cross.data_mut()[i * t + k] += xc[i] * (yr[k] - y_mean[k]);
                }
            }
        }
        for i in 0..d {
            gram.data_mut()[i * d + i] += lambda;
        }
        let weights = cholesky_solve(&gram, &cross).ok_or(LabError::SingularProbe { lambda })?;
        let intercept = (0..t)
            .map(|k| y_mean[k] - (0..d).map(|i| x_mean[i] * weights.get(i, k)).sum::<f64>())
            .collect();
        Ok(RidgeProbe { weights, intercept })
    }

    pub fn predict(&self, features: &Matrix) -> Matrix {
        let (d, t) = (self.weights.rows(), self.weights.cols());
        let mut out = Matrix::zeros(features.rows(), t);
        for r in 0..features.rows() {
            let x = features.row(r);
            for k in 0..t {
                out.data_mut()[r * t + k] =
                    self.intercept[k] + (0..d).map(|i| x[i] * self.weights.get(i, k)).sum::<f64>();
            }
        }
        out
    }

    pub fn mse(&self, features: &Matrix, targets: &Matrix) -> f64 {
        self.predict(features).mean_squared_diff(targets)
    }
}

/// Probe training and held-out data for one task.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeSets {
    pub train: Dataset,
    pub test: Dataset,
}

impl ProbeSets {
    /// Two disjoint streams of `task.spec().samples` rows each.
    pub fn for_task(task: &Task) -> Self {
        ProbeSets { train: task.dataset(streams::PROBE_TRAIN), test: task.dataset(streams::PROBE_TEST) }
    }

    /// Held-out MSE of the best constant predictor fitted on the training set.
    pub fn constant_baseline(&self) -> f64 {
        let mean = self.train.targets.column_means();
        let t = self.test.targets.cols();
        let pred = Matrix::new(
            self.test.len(),
            t,
            (0..self.test.len()).flat_map(|_| mean.iter().copied()).collect(),
        );
        pred.mean_squared_diff(&self.test.targets)
    }
}

/// Fits a ridge probe on the model's encoder features and returns its
/// held-out MSE.
pub fn probe_linear(model: &ToyModel, sets: &ProbeSets, lambda: f64) -> Result<f64, LabError> {
    let train_features = model.features(&sets.train.inputs)?;
    let probe = RidgeProbe::fit(&train_features, &sets.train.targets, lambda)?;
    let test_features = model.features(&sets.test.inputs)?;
    Ok(probe.mse(&test_features, &sets.test.targets))
}
