//! Validation-set grid search over a model hyperparameter and the
//! feature-space settings (maximum feature count, normalization).

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, ModelError, ModelKind, TrainOptions, TrainedClassifier};
use crate::corpus::SecurityClass;
use crate::metrics::EvalReport;
use crate::text::{
    term_counts, vectorize_counts, CorpusCounts, Normalization, SparseVector, TermCounts,
    Vectorizer, VectorizerConfig, Vocabulary,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub svm_cost: Vec<f64>,
    pub logreg_lambda: Vec<f64>,
    pub nb_alpha: Vec<f64>,
    /// `None` means every term is kept.
    #[serde(with = "crate::text::feature_cap::list")]
    pub max_features: Vec<Option<usize>>,
    pub normalization: Vec<Normalization>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            svm_cost: vec![0.01, 0.1, 1.0, 10.0, 100.0],
            logreg_lambda: vec![1e-4, 1e-2, 1.0],
            nb_alpha: vec![0.1, 1.0],
            max_features: vec![Some(1000), Some(5000), None],
            normalization: vec![Normalization::None, Normalization::L1, Normalization::L2],
        }
    }
}

impl GridSpec {
    pub fn hyperparameters(&self, kind: ModelKind) -> &[f64] {
        match kind {
            ModelKind::NaiveBayes => &self.nb_alpha,
            ModelKind::LogregOvo => &self.logreg_lambda,
            ModelKind::LinearSvm => &self.svm_cost,
        }
    }

    pub fn validate(&self, kind: ModelKind) -> Result<(), ModelError> {
        let hp = self.hyperparameters(kind);
        if hp.is_empty() || self.max_features.is_empty() || self.normalization.is_empty() {
            return Err(ModelError::BadHyperparameter("grid axis is empty".into()));
        }
        let ok = |v: &f64| match kind {
            ModelKind::LogregOvo => v.is_finite() && *v >= 0.0,
            _ => v.is_finite() && *v > 0.0,
        };
        if !hp.iter().all(ok) {
            return Err(ModelError::BadHyperparameter(format!("bad value in {hp:?}")));
        }
        if self.max_features.contains(&Some(0)) {
            return Err(ModelError::BadHyperparameter("max_features must be >= 1".into()));
        }
        Ok(())
    }

    /// Lexicographic enumeration: hyperparameter, then max features, then
    /// normalization. The first point is the declared default.
    pub fn points(&self, kind: ModelKind) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &h in self.hyperparameters(kind) {
            for &mf in &self.max_features {
                for &norm in &self.normalization {
                    out.push(GridPoint { hyperparameter: h, max_features: mf, normalization: norm });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub hyperparameter: f64,
    #[serde(with = "crate::text::feature_cap")]
    pub max_features: Option<usize>,
    pub normalization: Normalization,
}

impl GridPoint {
    pub fn apply(&self, base: &VectorizerConfig) -> VectorizerConfig {
        VectorizerConfig {
            max_features: self.max_features,
            normalization: self.normalization,
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    MacroF1,
    Accuracy,
}

impl Metric {
    pub fn score(self, truth: &[SecurityClass], predicted: &[SecurityClass]) -> f64 {
        match self {
            Metric::MacroF1 => {
                EvalReport::from_pairs(truth.iter().copied().zip(predicted.iter().copied())).macro_f1
            }
            Metric::Accuracy => {
                let hits = truth.iter().zip(predicted).filter(|(a, b)| a == b).count();
                hits as f64 / truth.len().max(1) as f64
            }
        }
    }
}

/// Texts with their labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Examples<'a> {
    pub texts: Vec<&'a str>,
    pub labels: Vec<SecurityClass>,
}

impl<'a> Examples<'a> {
    pub fn from_paragraphs<I>(paragraphs: I) -> Self
    where
        I: IntoIterator<Item = &'a crate::corpus::Paragraph>,
    {
        let (texts, labels) = paragraphs.into_iter().map(|p| (p.text.as_str(), p.label)).unzip();
        Examples { texts, labels }
    }

    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }

    pub fn concat(&self, other: &Examples<'a>) -> Examples<'a> {
        let mut out = self.clone();
        out.texts.extend(&other.texts);
        out.labels.extend(&other.labels);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridProvenance {
    pub point: GridPoint,
    pub index: usize,
    pub n_points: usize,
    pub validation_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub best: GridPoint,
    pub best_index: usize,
    pub best_score: f64,
    /// Validation score per grid point in enumeration order; `None` when
    /// that point failed to train.
    pub scores: Vec<(GridPoint, Option<f64>)>,
    pub vectorizer: Vectorizer,
    pub model: TrainedClassifier,
}

impl GridSearchResult {
    pub fn provenance(&self) -> GridProvenance {
        GridProvenance {
            point: self.best,
            index: self.best_index,
            n_points: self.scores.len(),
            validation_score: Some(self.best_score),
        }
    }
}

fn vectors(counts: &[TermCounts], vocab: &Vocabulary, config: &VectorizerConfig) -> Vec<SparseVector> {
    counts.iter().map(|c| vectorize_counts(c, vocab, config)).collect()
}

/// Fits a vectorizer and model for one grid point on `data`.
pub fn train_point(
    data: &Examples<'_>,
    base: &VectorizerConfig,
    point: &GridPoint,
    kind: ModelKind,
    options: &TrainOptions,
) -> Result<(Vectorizer, TrainedClassifier), ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyTraining);
    }
    let config = point.apply(base);
    let counts = CorpusCounts::new(&data.texts, &config);
    let vocabulary = Vocabulary::from_counts(&counts, &config)?;
    let x = vectors(counts.documents(), &vocabulary, &config);
    let mut model = train(kind, &x, &data.labels, point.hyperparameter, options)?;
    model.vectorizer_config = Some(config.clone());
    Ok((Vectorizer { config, vocabulary }, model))
}

/// Trains one model per grid point on `train`, scores each on
/// `validation`, and refits the best point on `train ∪ validation`.
/// Ties go to the earliest point in enumeration order.
pub fn grid_search(
    train_set: &Examples<'_>,
    validation: &Examples<'_>,
    base: &VectorizerConfig,
    grid: &GridSpec,
    kind: ModelKind,
    metric: Metric,
    options: &TrainOptions,
) -> Result<GridSearchResult, ModelError> {
    grid.validate(kind)?;
    if validation.is_empty() {
        return Err(ModelError::EmptyValidation);
    }
    if train_set.is_empty() {
        return Err(ModelError::EmptyTraining);
    }
    let points = grid.points(kind);
    let counts = CorpusCounts::new(&train_set.texts, base);
    let val_counts: Vec<TermCounts> =
        validation.texts.iter().map(|t| term_counts(t, base)).collect();

    let mut vocabularies: HashMap<Option<usize>, Result<Vocabulary, ModelError>> = HashMap::new();
    for mf in &grid.max_features {
        vocabularies.entry(*mf).or_insert_with(|| {
            let cfg = VectorizerConfig { max_features: *mf, ..base.clone() };
            Vocabulary::from_counts(&counts, &cfg).map_err(ModelError::from)
        });
    }

    let outcomes: Vec<Result<f64, ModelError>> = points
        .par_iter()
        .map(|point| {
            let vocab = vocabularies[&point.max_features].as_ref().map_err(Clone::clone)?;
            let config = point.apply(base);
            let x = vectors(counts.documents(), vocab, &config);
            let model = train(kind, &x, &train_set.labels, point.hyperparameter, options)?;
            let xv = vectors(&val_counts, vocab, &config);
            let predicted = model.predict_all(&xv)?;
            Ok(metric.score(&validation.labels, &predicted))
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    let mut first_error = None;
    let mut scores = Vec::with_capacity(points.len());
    for (i, (point, outcome)) in points.iter().zip(outcomes).enumerate() {
        match outcome {
            Ok(s) => {
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((i, s));
                }
                scores.push((*point, Some(s)));
            }
            Err(e) => {
                first_error.get_or_insert(e.to_string());
                scores.push((*point, None));
            }
        }
    }
    let (best_index, best_score) =
        best.ok_or_else(|| ModelError::AllTrainingsFailed(first_error.unwrap_or_default()))?;
    let best_point = points[best_index];
    let (vectorizer, model) =
        train_point(&train_set.concat(validation), base, &best_point, kind, options)?;
    Ok(GridSearchResult {
        best: best_point,
        best_index,
        best_score,
        scores,
        vectorizer,
        model,
    })
}
