//! One-vs-rest L2-regularized hinge-loss linear SVM trained with a seeded,
//! epoch-based stochastic subgradient scheme (step `1/(λt)`).
//!
//! Each binary unit minimizes
//! `½‖w̃‖² + C Σ s_i max(0, 1 - y_i w̃·x̃_i)` where `x̃ = (x, 1)` so the bias
//! is the last, regularized coordinate of `w̃`. The equivalent per-sample
//! form uses `λ = 1 / (C n)`. The best end-of-epoch iterate is kept.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    check_inputs, classes_present, ClassWeights, LinearUnit, ModelError, ModelKind, ModelParams,
    TrainedClassifier,
};
use crate::corpus::SecurityClass;
use crate::text::SparseVector;

pub const SVM_EPOCHS: usize = 100;

/// `½‖w̃‖² + C Σ s_i hinge_i` for one binary unit.
pub fn svm_objective(
    unit: &LinearUnit,
    x: &[SparseVector],
    y: &[f64],
    sample_weight: &[f64],
    cost: f64,
) -> f64 {
    let reg: f64 = unit.weights.iter().map(|w| w * w).sum::<f64>() + unit.bias * unit.bias;
    let loss: f64 = x
        .iter()
        .zip(y)
        .zip(sample_weight)
        .map(|((v, &yi), &s)| s * (1.0 - yi * unit.decision(v)).max(0.0))
        .sum();
    0.5 * reg + cost * loss
}

/// Scaled representation `w̃ = scale · v` so the shrink step is O(1).
struct ScaledWeights {
    v: Vec<f64>,
    v_bias: f64,
    scale: f64,
    sq_norm: f64,
}

impl ScaledWeights {
    fn new(dim: usize) -> Self {
        ScaledWeights { v: vec![0.0; dim], v_bias: 0.0, scale: 1.0, sq_norm: 0.0 }
    }

    fn decision(&self, x: &SparseVector) -> f64 {
        self.scale * (x.dot_dense(&self.v) + self.v_bias)
    }

    fn shrink(&mut self, factor: f64) {
        if factor <= 0.0 {
            self.v.iter_mut().for_each(|w| *w = 0.0);
            self.v_bias = 0.0;
            self.scale = 1.0;
            self.sq_norm = 0.0;
            return;
        }
        self.scale *= factor;
        if self.scale < 1e-9 {
            self.fold();
        }
    }

    fn fold(&mut self) {
        for w in &mut self.v {
            *w *= self.scale;
        }
        self.v_bias *= self.scale;
        self.sq_norm *= self.scale * self.scale;
        self.scale = 1.0;
    }

    /// `w̃ += step · x̃`.
    fn add(&mut self, x: &SparseVector, step: f64) {
        let delta = step / self.scale;
        let mut vx = self.v_bias;
        let mut xx = 1.0;
        for (j, val) in x.iter() {
            vx += self.v[j] * val;
            xx += val * val;
            self.v[j] += delta * val;
        }
        self.v_bias += delta;
        self.sq_norm += 2.0 * delta * vx + delta * delta * xx;
    }

    fn norm(&self) -> f64 {
        self.scale.abs() * self.sq_norm.max(0.0).sqrt()
    }

    fn to_unit(&self) -> LinearUnit {
        LinearUnit {
            weights: self.v.iter().map(|w| w * self.scale).collect(),
            bias: self.v_bias * self.scale,
        }
    }
}

fn train_unit(
    x: &[SparseVector],
    y: &[f64],
    sample_weight: &[f64],
    cost: f64,
    epochs: usize,
    seed: u64,
) -> Result<LinearUnit, ModelError> {
    let n = x.len();
    let dim = x[0].dim();
    let lambda = 1.0 / (cost * n as f64);
    let mean_weight = sample_weight.iter().sum::<f64>() / n as f64;
    let radius = (2.0 * mean_weight / lambda).sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut w = ScaledWeights::new(dim);
    let mut best = LinearUnit::zeros(dim);
    let mut best_obj = f64::INFINITY;
    let mut t = 0usize;
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let margin = y[i] * w.decision(&x[i]);
            w.shrink(1.0 - 1.0 / t as f64);
            if margin < 1.0 {
                w.add(&x[i], eta * sample_weight[i] * y[i]);
            }
            let norm = w.norm();
            if norm > radius {
                w.shrink(radius / norm);
            }
        }
        let unit = w.to_unit();
        let obj = svm_objective(&unit, x, y, sample_weight, cost);
        if !obj.is_finite() {
            return Err(ModelError::NonFiniteLoss);
        }
        if obj < best_obj {
            best_obj = obj;
            best = unit;
        }
    }
    Ok(best)
}

pub fn train_linear_svm(
    x: &[SparseVector],
    y: &[SecurityClass],
    cost: f64,
    class_weights: ClassWeights,
    seed: u64,
) -> Result<TrainedClassifier, ModelError> {
    train_linear_svm_epochs(x, y, cost, class_weights, seed, SVM_EPOCHS)
}

pub fn train_linear_svm_epochs(
    x: &[SparseVector],
    y: &[SecurityClass],
    cost: f64,
    class_weights: ClassWeights,
    seed: u64,
    epochs: usize,
) -> Result<TrainedClassifier, ModelError> {
    if !(cost.is_finite() && cost > 0.0) {
        return Err(ModelError::BadHyperparameter(format!("C must be > 0, got {cost}")));
    }
    let dim = check_inputs(x, y)?;
    let classes = classes_present(y);
    if classes.len() == 1 {
        let mut m = TrainedClassifier::constant(ModelKind::LinearSvm, classes[0], dim, seed);
        m.hyperparameter = cost;
        return Ok(m);
    }
    let sample_weight: Vec<f64> = y.iter().map(|c| class_weights[c.index()]).collect();
    let units = classes
        .iter()
        .map(|&c| {
            let targets: Vec<f64> = y.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
            let unit_seed = seed.wrapping_mul(31).wrapping_add(c.index() as u64);
            train_unit(x, &targets, &sample_weight, cost, epochs, unit_seed)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TrainedClassifier {
        kind: ModelKind::LinearSvm,
        classes,
        dim,
        params: ModelParams::OneVsRest(units),
        class_weights,
        hyperparameter: cost,
        seed,
        vectorizer_config: None,
    })
}

/// Per-unit `(targets, sample weights)` as used during training, for
/// objective checks.
pub fn unit_problems(
    y: &[SecurityClass],
    classes: &[SecurityClass],
    class_weights: ClassWeights,
) -> Vec<(Vec<f64>, Vec<f64>)> {
    let sample_weight: Vec<f64> = y.iter().map(|c| class_weights[c.index()]).collect();
    classes
        .iter()
        .map(|&c| {
            let targets = y.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
            (targets, sample_weight.clone())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use SecurityClass::*;

    fn separable() -> (Vec<SparseVector>, Vec<SecurityClass>) {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..60 {
            let (c, center) = match i % 3 {
                0 => (U, [3.0, 0.0, 0.0]),
                1 => (C, [0.0, 3.0, 0.0]),
                _ => (S, [0.0, 0.0, 3.0]),
            };
            let p: Vec<f64> = center.iter().map(|v| v + rng.gen_range(0.0..0.5)).collect();
            x.push(SparseVector::from_dense(&p));
            y.push(c);
        }
        (x, y)
    }

    #[test]
    fn separable_toy_fits() {
        let (x, y) = separable();
        let m = train_linear_svm(&x, &y, 1.0, [1.0; 3], 0).unwrap();
        assert_eq!(m.predict_all(&x).unwrap(), y);
    }

    #[test]
    fn beats_zero_and_random_probes() {
        let (x, y) = separable();
        let m = train_linear_svm(&x, &y, 1.0, [1.0; 3], 5).unwrap();
        let ModelParams::OneVsRest(units) = &m.params else { panic!() };
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for (unit, (targets, sw)) in units.iter().zip(unit_problems(&y, &m.classes, [1.0; 3])) {
            let trained = svm_objective(unit, &x, &targets, &sw, 1.0);
            assert!(trained <= svm_objective(&LinearUnit::zeros(3), &x, &targets, &sw, 1.0));
            for _ in 0..10 {
                let probe = LinearUnit {
                    weights: (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                    bias: rng.gen_range(-2.0..2.0),
                };
                assert!(trained <= svm_objective(&probe, &x, &targets, &sw, 1.0));
            }
        }
    }

    #[test]
    fn single_class_is_constant() {
        let x = vec![SparseVector::from_dense(&[1.0]); 4];
        let m = train_linear_svm(&x, &[S; 4], 1.0, [1.0; 3], 0).unwrap();
        assert!(m.is_constant());
        assert_eq!(m.predict(&SparseVector::zeros(1)), Ok(S));
    }

    #[test]
    fn deterministic_given_seed() {
        let (x, y) = separable();
        let a = train_linear_svm(&x, &y, 10.0, [1.0; 3], 3).unwrap();
        let b = train_linear_svm(&x, &y, 10.0, [1.0; 3], 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_non_positive_cost() {
        let (x, y) = separable();
        assert!(matches!(
            train_linear_svm(&x, &y, 0.0, [1.0; 3], 0),
            Err(ModelError::BadHyperparameter(_))
        ));
    }
}
