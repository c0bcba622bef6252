//! Global (single-model) classification runs shared by the baselines and
//! the pruning pipeline, plus paragraph and document level reporting.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Paragraph, ParagraphId, SecurityClass};
use crate::kmeans::ClusterError;
use crate::lda::{prune_training_set, LdaError, PruneConfig, PruneOutcome};
use crate::metrics::{ConfusionMatrix, EvalReport};
use crate::models::grid::Examples;
use crate::models::{
    grid_search, ClassWeighting, GridSearchResult, GridSpec, Metric, ModelError, ModelKind,
    TrainOptions,
};
use crate::text::{Ngrams, TextError, VectorizerConfig, Weighting};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PipelineError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training set contains a single class")]
    SingleClassCorpus,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Lda(#[from] LdaError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: ParagraphId,
    pub truth: SecurityClass,
    pub predicted: SecurityClass,
}

pub fn paragraph_report(predictions: &[Prediction]) -> EvalReport {
    EvalReport::from_pairs(predictions.iter().map(|p| (p.truth, p.predicted)))
}

/// Groups paragraph predictions by document. The true document label is
/// the max over the true paragraph labels, the predicted one the max over
/// the predictions.
pub fn document_report(predictions: &[Prediction]) -> EvalReport {
    let mut docs: HashMap<String, (SecurityClass, SecurityClass)> = HashMap::new();
    for p in predictions {
        let e = docs.entry(p.id.document_key()).or_insert((p.truth, p.predicted));
        e.0 = e.0.max(p.truth);
        e.1 = e.1.max(p.predicted);
    }
    let mut cm = ConfusionMatrix::default();
    for (truth, predicted) in docs.into_values() {
        cm.add(truth, predicted);
    }
    EvalReport::from_confusion(cm)
}

/// TF-IDF over unigrams and bigrams, alphabetic, stopwords removed.
pub fn default_baseline_features() -> VectorizerConfig {
    VectorizerConfig {
        weighting: Weighting::Tfidf,
        ngrams: Ngrams::UNI_AND_BIGRAMS,
        ..VectorizerConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalConfig {
    pub kind: ModelKind,
    /// Base feature space; `max_features` and `normalization` are set per
    /// grid point.
    pub features: VectorizerConfig,
    pub grid: GridSpec,
    pub metric: Metric,
    pub class_weighting: ClassWeighting,
    pub seed: u64,
}

impl GlobalConfig {
    pub fn new(kind: ModelKind, seed: u64) -> Self {
        GlobalConfig {
            kind,
            features: default_baseline_features(),
            grid: GridSpec::default(),
            metric: Metric::MacroF1,
            class_weighting: ClassWeighting::Balanced,
            seed,
        }
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions { class_weighting: self.class_weighting, seed: self.seed }
    }
}

#[derive(Debug, Clone)]
pub struct GlobalOutput {
    pub search: GridSearchResult,
    pub predictions: Vec<Prediction>,
    pub report: EvalReport,
    pub document_report: EvalReport,
}

pub(crate) fn check_training(train: &[Paragraph]) -> Result<(), PipelineError> {
    let first = train.first().ok_or(PipelineError::EmptyTrainingSet)?.label;
    if train.iter().all(|p| p.label == first) {
        return Err(PipelineError::SingleClassCorpus);
    }
    Ok(())
}

/// Grid-searches one classifier on `train`/`validation` and predicts
/// `test`.
pub fn run_global(
    train: &[Paragraph],
    validation: &[Paragraph],
    test: &[Paragraph],
    config: &GlobalConfig,
) -> Result<GlobalOutput, PipelineError> {
    check_training(train)?;
    let search = grid_search(
        &Examples::from_paragraphs(train),
        &Examples::from_paragraphs(validation),
        &config.features,
        &config.grid,
        config.kind,
        config.metric,
        &config.train_options(),
    )?;
    let texts: Vec<&str> = test.iter().map(|p| p.text.as_str()).collect();
    let predicted = search.model.predict_all(&search.vectorizer.transform_all(&texts))?;
    let predictions: Vec<Prediction> = test
        .iter()
        .zip(predicted)
        .map(|(p, c)| Prediction { id: p.id.clone(), truth: p.label, predicted: c })
        .collect();
    Ok(GlobalOutput {
        report: paragraph_report(&predictions),
        document_report: document_report(&predictions),
        search,
        predictions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneLogregConfig {
    pub prune: PruneConfig,
    pub classifier: GlobalConfig,
}

impl PruneLogregConfig {
    pub fn new(seed: u64) -> Self {
        PruneLogregConfig {
            prune: PruneConfig { seed, ..Default::default() },
            classifier: GlobalConfig::new(ModelKind::LogregOvo, seed),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PruneLogregOutput {
    pub prune: PruneOutcome,
    pub global: GlobalOutput,
}

/// Topic-purity pruning of the training set followed by a global
/// classifier (one-vs-one logistic regression by default).
pub fn run_prune_logreg(
    train: &[Paragraph],
    validation: &[Paragraph],
    test: &[Paragraph],
    config: &PruneLogregConfig,
) -> Result<PruneLogregOutput, PipelineError> {
    check_training(train)?;
    let prune = prune_training_set(train, &config.prune)?;
    let global = run_global(&prune.pruned, validation, test, &config.classifier)?;
    Ok(PruneLogregOutput { prune, global })
}
