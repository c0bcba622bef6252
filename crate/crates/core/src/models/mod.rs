//! Linear classifiers over sparse paragraph vectors: multinomial Naive
//! Bayes, one-vs-one logistic regression fitted by conjugate gradient, and
//! a one-vs-rest linear SVM trained by subgradient descent. Grid search
//! over hyperparameters and feature-space settings lives in [`grid`].

pub mod cg;
pub mod grid;
pub mod logreg;
pub mod naive_bayes;
pub mod svm;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SecurityClass;
use crate::text::{SparseVector, TextError, VectorizerConfig};

pub use grid::{grid_search, GridPoint, GridSearchResult, GridSpec, Metric};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: model expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training data and labels differ in length ({samples} vs {labels})")]
    LengthMismatch { samples: usize, labels: usize },
    #[error("training data is empty")]
    EmptyTraining,
    #[error("one-vs-one training needs at least two classes")]
    SingleClass,
    #[error("loss became non-finite during training")]
    NonFiniteLoss,
    #[error("invalid hyperparameter: {0}")]
    BadHyperparameter(String),
    #[error("validation set is empty")]
    EmptyValidation,
    #[error("every grid point failed to train: {0}")]
    AllTrainingsFailed(String),
    #[error(transparent)]
    Text(#[from] TextError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    NaiveBayes,
    LogregOvo,
    LinearSvm,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::NaiveBayes => "naive_bayes",
            ModelKind::LogregOvo => "logreg_ovo",
            ModelKind::LinearSvm => "linear_svm",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeighting {
    Uniform,
    /// `n_samples / (n_classes * n_c)`.
    #[default]
    Balanced,
}

/// Per-class loss weights indexed by [`SecurityClass::index`].
pub type ClassWeights = [f64; 3];

pub fn class_weights(labels: &[SecurityClass], mode: ClassWeighting) -> ClassWeights {
    match mode {
        ClassWeighting::Uniform => [1.0; 3],
        ClassWeighting::Balanced => {
            let mut counts = [0usize; 3];
            for l in labels {
                counts[l.index()] += 1;
            }
            let present = counts.iter().filter(|&&c| c > 0).count().max(1);
            let n = labels.len() as f64;
            counts.map(|c| if c == 0 { 1.0 } else { n / (present as f64 * c as f64) })
        }
    }
}

/// Sorted, deduplicated classes present in `labels`.
pub fn classes_present(labels: &[SecurityClass]) -> Vec<SecurityClass> {
    let mut seen = [false; 3];
    for l in labels {
        seen[l.index()] = true;
    }
    SecurityClass::ALL.into_iter().filter(|c| seen[c.index()]).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearUnit {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearUnit {
    pub fn zeros(dim: usize) -> Self {
        LinearUnit { weights: vec![0.0; dim], bias: 0.0 }
    }

    pub fn decision(&self, x: &SparseVector) -> f64 {
        x.dot_dense(&self.weights) + self.bias
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairModel {
    /// Lower class of the pair; wins when the decision is negative.
    pub low: SecurityClass,
    /// Higher class; wins when the decision is non-negative.
    pub high: SecurityClass,
    pub unit: LinearUnit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelParams {
    Constant(SecurityClass),
    NaiveBayes {
        log_prior: Vec<f64>,
        log_likelihood: Vec<Vec<f64>>,
    },
    OneVsOne(Vec<PairModel>),
    OneVsRest(Vec<LinearUnit>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedClassifier {
    pub kind: ModelKind,
    pub classes: Vec<SecurityClass>,
    pub dim: usize,
    pub params: ModelParams,
    pub class_weights: ClassWeights,
    pub hyperparameter: f64,
    pub seed: u64,
    pub vectorizer_config: Option<VectorizerConfig>,
}

/// Picks the best-scoring class; ties go to the higher class.
fn argmax_high(scores: impl IntoIterator<Item = (SecurityClass, f64)>) -> SecurityClass {
    let mut best: Option<(SecurityClass, f64)> = None;
    for (c, s) in scores {
        match best {
            Some((bc, bs)) if s < bs || (s == bs && c < bc) => {}
            _ => best = Some((c, s)),
        }
    }
    best.map(|b| b.0).unwrap_or(SecurityClass::U)
}

impl TrainedClassifier {
    pub fn constant(kind: ModelKind, class: SecurityClass, dim: usize, seed: u64) -> Self {
        TrainedClassifier {
            kind,
            classes: vec![class],
            dim,
            params: ModelParams::Constant(class),
            class_weights: [1.0; 3],
            hyperparameter: 0.0,
            seed,
            vectorizer_config: None,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.params, ModelParams::Constant(_))
    }

    pub fn predict(&self, x: &SparseVector) -> Result<SecurityClass, ModelError> {
        if x.dim() != self.dim {
            return Err(ModelError::DimensionMismatch { expected: self.dim, got: x.dim() });
        }
        Ok(match &self.params {
            ModelParams::Constant(c) => *c,
            ModelParams::NaiveBayes { log_prior, log_likelihood } => argmax_high(
                self.classes.iter().enumerate().map(|(k, &c)| {
                    (c, log_prior[k] + x.dot_dense(&log_likelihood[k]))
                }),
            ),
            ModelParams::OneVsOne(pairs) => {
                let mut votes = [0.0f64; 3];
                for p in pairs {
                    let winner = if p.unit.decision(x) >= 0.0 { p.high } else { p.low };
                    votes[winner.index()] += 1.0;
                }
                argmax_high(self.classes.iter().map(|&c| (c, votes[c.index()])))
            }
            ModelParams::OneVsRest(units) => argmax_high(
                self.classes.iter().zip(units).map(|(&c, u)| (c, u.decision(x))),
            ),
        })
    }

    pub fn predict_all(&self, xs: &[SparseVector]) -> Result<Vec<SecurityClass>, ModelError> {
        xs.iter().map(|x| self.predict(x)).collect()
    }

    pub fn to_model_file(&self, grid_provenance: Option<grid::GridProvenance>) -> ModelFile {
        let (weights, bias, pairs) = match &self.params {
            ModelParams::Constant(_) => (vec![], vec![], None),
            ModelParams::NaiveBayes { log_prior, log_likelihood } => {
                (log_likelihood.clone(), log_prior.clone(), None)
            }
            ModelParams::OneVsOne(ps) => (
                ps.iter().map(|p| p.unit.weights.clone()).collect(),
                ps.iter().map(|p| p.unit.bias).collect(),
                Some(ps.iter().map(|p| [p.low, p.high]).collect()),
            ),
            ModelParams::OneVsRest(us) => (
                us.iter().map(|u| u.weights.clone()).collect(),
                us.iter().map(|u| u.bias).collect(),
                None,
            ),
        };
        ModelFile {
            schema: MODEL_SCHEMA.to_string(),
            kind: self.kind,
            constant: match self.params {
                ModelParams::Constant(c) => Some(c),
                _ => None,
            },
            classes: self.classes.clone(),
            dim: self.dim,
            vectorizer_config: self.vectorizer_config.clone(),
            weights,
            bias,
            pairs,
            class_weights: self.class_weights,
            hyperparameter: self.hyperparameter,
            seed: self.seed,
            grid_provenance,
        }
    }
}

pub const MODEL_SCHEMA: &str = "acess-model/1";

/// Versioned on-disk model layout. For Naive Bayes `weights` holds the
/// per-class log likelihoods and `bias` the log priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema: String,
    pub kind: ModelKind,
    pub classes: Vec<SecurityClass>,
    pub constant: Option<SecurityClass>,
    pub dim: usize,
    pub vectorizer_config: Option<VectorizerConfig>,
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub pairs: Option<Vec<[SecurityClass; 2]>>,
    pub class_weights: ClassWeights,
    pub hyperparameter: f64,
    pub seed: u64,
    pub grid_provenance: Option<grid::GridProvenance>,
}

impl ModelFile {
    pub fn into_classifier(self) -> TrainedClassifier {
        let params = if let Some(c) = self.constant {
            ModelParams::Constant(c)
        } else {
            match self.kind {
                ModelKind::NaiveBayes => ModelParams::NaiveBayes {
                    log_prior: self.bias,
                    log_likelihood: self.weights,
                },
                ModelKind::LogregOvo => ModelParams::OneVsOne(
                    self.pairs
                        .unwrap_or_default()
                        .into_iter()
                        .zip(self.weights.into_iter().zip(self.bias))
                        .map(|([low, high], (weights, bias))| PairModel {
                            low,
                            high,
                            unit: LinearUnit { weights, bias },
                        })
                        .collect(),
                ),
                ModelKind::LinearSvm => ModelParams::OneVsRest(
                    self.weights
                        .into_iter()
                        .zip(self.bias)
                        .map(|(weights, bias)| LinearUnit { weights, bias })
                        .collect(),
                ),
            }
        };
        TrainedClassifier {
            kind: self.kind,
            classes: self.classes,
            dim: self.dim,
            params,
            class_weights: self.class_weights,
            hyperparameter: self.hyperparameter,
            seed: self.seed,
            vectorizer_config: self.vectorizer_config,
        }
    }
}

pub(crate) fn check_inputs(x: &[SparseVector], y: &[SecurityClass]) -> Result<usize, ModelError> {
    if x.len() != y.len() {
        return Err(ModelError::LengthMismatch { samples: x.len(), labels: y.len() });
    }
    let dim = x.first().ok_or(ModelError::EmptyTraining)?.dim();
    if let Some(bad) = x.iter().find(|v| v.dim() != dim) {
        return Err(ModelError::DimensionMismatch { expected: dim, got: bad.dim() });
    }
    Ok(dim)
}

/// Training settings shared by every model kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub class_weighting: ClassWeighting,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { class_weighting: ClassWeighting::Balanced, seed: 0 }
    }
}

/// Trains `kind` with its single hyperparameter (α, λ or C). Single-class
/// data yields a constant predictor for every kind.
pub fn train(
    kind: ModelKind,
    x: &[SparseVector],
    y: &[SecurityClass],
    hyperparameter: f64,
    options: &TrainOptions,
) -> Result<TrainedClassifier, ModelError> {
    let dim = check_inputs(x, y)?;
    let classes = classes_present(y);
    if classes.len() == 1 {
        let mut m = TrainedClassifier::constant(kind, classes[0], dim, options.seed);
        m.hyperparameter = hyperparameter;
        return Ok(m);
    }
    let weights = class_weights(y, options.class_weighting);
    match kind {
        ModelKind::NaiveBayes => naive_bayes::train_naive_bayes(x, y, hyperparameter),
        ModelKind::LogregOvo => logreg::train_logreg_cg(x, y, hyperparameter, weights),
        ModelKind::LinearSvm => svm::train_linear_svm(x, y, hyperparameter, weights, options.seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use SecurityClass::*;

    #[test]
    fn balanced_weights() {
        let w = class_weights(&[U, U, U, S], ClassWeighting::Balanced);
        assert!((w[U.index()] - 4.0 / 6.0).abs() < 1e-12);
        assert!((w[S.index()] - 2.0).abs() < 1e-12);
        assert_eq!(class_weights(&[U, S], ClassWeighting::Uniform), [1.0; 3]);
    }

    #[test]
    fn constant_predictor_for_any_input() {
        let m = TrainedClassifier::constant(ModelKind::LinearSvm, C, 4, 0);
        for x in [SparseVector::zeros(4), SparseVector::from_dense(&[1.0, 0.0, 3.0, 0.0])] {
            assert_eq!(m.predict(&x), Ok(C));
        }
        assert!(matches!(
            m.predict(&SparseVector::zeros(3)),
            Err(ModelError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn ovo_vote_tie_goes_to_higher_class() {
        // U beats C, S beats U, C beats S: one vote each, S wins.
        let unit = |b: f64| LinearUnit { weights: vec![0.0], bias: b };
        let m = TrainedClassifier {
            kind: ModelKind::LogregOvo,
            classes: vec![U, C, S],
            dim: 1,
            params: ModelParams::OneVsOne(vec![
                PairModel { low: U, high: C, unit: unit(-1.0) },
                PairModel { low: U, high: S, unit: unit(1.0) },
                PairModel { low: C, high: S, unit: unit(-1.0) },
            ]),
            class_weights: [1.0; 3],
            hyperparameter: 1.0,
            seed: 0,
            vectorizer_config: None,
        };
        assert_eq!(m.predict(&SparseVector::zeros(1)), Ok(S));
        // S vs C tie with U losing both.
        let m2 = TrainedClassifier {
            params: ModelParams::OneVsOne(vec![
                PairModel { low: C, high: S, unit: unit(0.0) },
            ]),
            classes: vec![C, S],
            ..m
        };
        assert_eq!(m2.predict(&SparseVector::zeros(1)), Ok(S));
    }

    #[test]
    fn single_class_training_is_constant() {
        let x = vec![SparseVector::from_dense(&[1.0, 0.0]); 3];
        for kind in [ModelKind::NaiveBayes, ModelKind::LogregOvo, ModelKind::LinearSvm] {
            let m = train(kind, &x, &[U, U, U], 1.0, &TrainOptions::default()).unwrap();
            assert!(m.is_constant());
            assert_eq!(m.predict(&SparseVector::from_dense(&[0.0, 5.0])), Ok(U));
        }
    }

    #[test]
    fn model_file_round_trip() {
        let x = vec![
            SparseVector::from_dense(&[1.0, 0.0]),
            SparseVector::from_dense(&[0.0, 1.0]),
            SparseVector::from_dense(&[1.0, 1.0]),
        ];
        let y = [U, S, C];
        for kind in [ModelKind::NaiveBayes, ModelKind::LogregOvo, ModelKind::LinearSvm] {
            let m = train(kind, &x, &y, 1.0, &TrainOptions::default()).unwrap();
            let json = serde_json::to_string(&m.to_model_file(None)).unwrap();
            let back: ModelFile = serde_json::from_str(&json).unwrap();
            assert_eq!(back.schema, MODEL_SCHEMA);
            assert_eq!(back.into_classifier(), m);
        }
    }
}
