//! One-vs-one L2-regularized logistic regression, each pair fitted by
//! nonlinear conjugate gradient.

use super::cg::{self, CgOptions, Objective};
use super::{
    check_inputs, classes_present, ClassWeights, LinearUnit, ModelError, ModelKind, ModelParams,
    PairModel, TrainedClassifier,
};
use crate::corpus::SecurityClass;
use crate::text::SparseVector;

/// Weighted binary logistic loss
/// `Σ s_i ln(1 + exp(-y_i (w·x_i + b))) + λ/2 ‖w‖²` with an unregularized
/// bias stored as the last coordinate of the parameter vector.
pub struct LogisticObjective<'a> {
    x: Vec<&'a SparseVector>,
    y: Vec<f64>,
    sample_weight: Vec<f64>,
    lambda: f64,
    dim: usize,
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl<'a> LogisticObjective<'a> {
    /// `y` entries must be `±1`.
    pub fn new(
        x: Vec<&'a SparseVector>,
        y: Vec<f64>,
        sample_weight: Vec<f64>,
        lambda: f64,
        dim: usize,
    ) -> Self {
        LogisticObjective { x, y, sample_weight, lambda, dim }
    }

    fn margin(&self, i: usize, theta: &[f64]) -> f64 {
        self.x[i].dot_dense(&theta[..self.dim]) + theta[self.dim]
    }
}

impl Objective for LogisticObjective<'_> {
    fn dim(&self) -> usize {
        self.dim + 1
    }

    fn value(&self, theta: &[f64]) -> f64 {
        let data: f64 = (0..self.x.len())
            .map(|i| self.sample_weight[i] * softplus(-self.y[i] * self.margin(i, theta)))
            .sum();
        let reg: f64 = theta[..self.dim].iter().map(|w| w * w).sum();
        data + 0.5 * self.lambda * reg
    }

    fn value_and_gradient(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.dim + 1];
        let mut data = 0.0;
        for i in 0..self.x.len() {
            let t = -self.y[i] * self.margin(i, theta);
            let s = self.sample_weight[i];
            data += s * softplus(t);
            let coef = -s * self.y[i] * sigmoid(t);
            for (j, v) in self.x[i].iter() {
                grad[j] += coef * v;
            }
            grad[self.dim] += coef;
        }
        let mut reg = 0.0;
        for j in 0..self.dim {
            reg += theta[j] * theta[j];
            grad[j] += self.lambda * theta[j];
        }
        (data + 0.5 * self.lambda * reg, grad)
    }

    fn line<'b>(&'b self, theta: &'b [f64], d: &'b [f64]) -> Box<dyn Fn(f64) -> (f64, f64) + 'b> {
        let m: Vec<f64> = (0..self.x.len()).map(|i| self.margin(i, theta)).collect();
        let md: Vec<f64> = (0..self.x.len()).map(|i| self.margin(i, d)).collect();
        let (w, dw) = (&theta[..self.dim], &d[..self.dim]);
        let ww: f64 = w.iter().map(|v| v * v).sum();
        let wd: f64 = w.iter().zip(dw).map(|(a, b)| a * b).sum();
        let dd: f64 = dw.iter().map(|v| v * v).sum();
        Box::new(move |alpha| {
            let mut value = 0.0;
            let mut deriv = 0.0;
            for i in 0..m.len() {
                let t = -self.y[i] * (m[i] + alpha * md[i]);
                value += self.sample_weight[i] * softplus(t);
                deriv -= self.sample_weight[i] * self.y[i] * md[i] * sigmoid(t);
            }
            let reg = 0.5 * self.lambda * (ww + 2.0 * alpha * wd + alpha * alpha * dd);
            (value + reg, deriv + self.lambda * (wd + alpha * dd))
        })
    }
}

pub fn train_logreg_cg(
    x: &[SparseVector],
    y: &[SecurityClass],
    lambda: f64,
    class_weights: ClassWeights,
) -> Result<TrainedClassifier, ModelError> {
    train_logreg_cg_with(x, y, lambda, class_weights, &CgOptions::default())
}

pub fn train_logreg_cg_with(
    x: &[SparseVector],
    y: &[SecurityClass],
    lambda: f64,
    class_weights: ClassWeights,
    options: &CgOptions,
) -> Result<TrainedClassifier, ModelError> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(ModelError::BadHyperparameter(format!("lambda must be >= 0, got {lambda}")));
    }
    let dim = check_inputs(x, y)?;
    let classes = classes_present(y);
    if classes.len() < 2 {
        return Err(ModelError::SingleClass);
    }
    let mut pairs = Vec::new();
    for (a, &low) in classes.iter().enumerate() {
        for &high in &classes[a + 1..] {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            let mut ws = Vec::new();
            for (v, &label) in x.iter().zip(y) {
                if label == low || label == high {
                    xs.push(v);
                    ys.push(if label == high { 1.0 } else { -1.0 });
                    ws.push(class_weights[label.index()]);
                }
            }
            let objective = LogisticObjective::new(xs, ys, ws, lambda, dim);
            let r = cg::minimize(&objective, vec![0.0; dim + 1], options);
            if r.non_finite || r.x.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFiniteLoss);
            }
            let bias = r.x[dim];
            let mut weights = r.x;
            weights.truncate(dim);
            pairs.push(PairModel { low, high, unit: LinearUnit { weights, bias } });
        }
    }
    Ok(TrainedClassifier {
        kind: ModelKind::LogregOvo,
        classes,
        dim,
        params: ModelParams::OneVsOne(pairs),
        class_weights,
        hyperparameter: lambda,
        seed: 0,
        vectorizer_config: None,
    })
}
