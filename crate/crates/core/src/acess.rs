//! Partitioned ACESS: cluster the training paragraphs in a TF-IDF
//! similarity space, route validation and test paragraphs to the nearest
//! training cluster, and fit one grid-searched classifier per cluster.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{DataSplit, Paragraph, SecurityClass};
use crate::kmeans::{
    default_cluster_count, fit_kmeans, ClusterModel, DEFAULT_CLUSTER_DIVISOR, DEFAULT_MAX_ITER,
    DEFAULT_TOL,
};
use crate::metrics::{f1_per_class, ConfusionMatrix, EvalReport};
use crate::models::grid::{train_point, Examples};
use crate::models::{
    classes_present, grid_search, ClassWeighting, GridPoint, GridSpec, Metric, ModelError,
    ModelKind, TrainOptions, TrainedClassifier,
};
use crate::pipeline::{check_training, document_report, paragraph_report, PipelineError, Prediction};
use crate::text::{
    cutoff_is_tied, CorpusCounts, Ngrams, Normalization, TextError, Vectorizer, VectorizerConfig,
    Vocabulary, Weighting,
};

/// File name the cluster model's `vocab_ref` points at.
pub const SIMILARITY_VOCAB_FILE: &str = "similarity_vocab.json";

/// Similarity space: TF-IDF unigrams, tie-inclusive top `k`, no
/// normalization.
pub fn similarity_features(top_k: usize) -> VectorizerConfig {
    VectorizerConfig {
        weighting: Weighting::Tfidf,
        ngrams: Ngrams::UNIGRAMS,
        max_features: Some(top_k),
        normalization: Normalization::None,
        ..VectorizerConfig::default()
    }
}

/// Security space: document frequency over unigrams and bigrams,
/// tie-inclusive top 1000.
pub fn security_features() -> VectorizerConfig {
    VectorizerConfig {
        weighting: Weighting::DocFrequency,
        ngrams: Ngrams::UNI_AND_BIGRAMS,
        max_features: Some(1000),
        normalization: Normalization::L2,
        ..VectorizerConfig::default()
    }
}

impl GridSpec {
    /// Per-cluster grid: the classifier hyperparameter only, with the
    /// security space fixed at top 1000 and L2 normalization.
    pub fn acess_default() -> Self {
        GridSpec {
            max_features: vec![Some(1000)],
            normalization: vec![Normalization::L2],
            ..GridSpec::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcessConfig {
    pub cluster_divisor: usize,
    /// Forces the cluster count instead of `n_train / cluster_divisor`.
    pub k_override: Option<usize>,
    pub similarity_top_k: usize,
    pub security_features: VectorizerConfig,
    pub classifier: ModelKind,
    pub grid: GridSpec,
    pub metric: Metric,
    pub class_weighting: ClassWeighting,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    pub seed: u64,
}

impl Default for AcessConfig {
    fn default() -> Self {
        AcessConfig {
            cluster_divisor: DEFAULT_CLUSTER_DIVISOR,
            k_override: None,
            similarity_top_k: 1000,
            security_features: security_features(),
            classifier: ModelKind::LinearSvm,
            grid: GridSpec::acess_default(),
            metric: Metric::MacroF1,
            class_weighting: ClassWeighting::Balanced,
            kmeans_max_iter: DEFAULT_MAX_ITER,
            kmeans_tol: DEFAULT_TOL,
            seed: 0,
        }
    }
}

impl AcessConfig {
    /// Training seed of cluster `i`; cluster 0 uses the run seed.
    pub fn cluster_seed(&self, i: usize) -> u64 {
        self.seed.wrapping_add(i as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub cluster: usize,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub classes_present: Vec<SecurityClass>,
    pub chosen: Option<GridPoint>,
    pub validation_score: Option<f64>,
    pub n_features: usize,
    /// Per-class F1 on this cluster's test bucket, ordered U, C, S.
    pub test_f1: [f64; 3],
    pub test_confusion: ConfusionMatrix,
    pub constant_predictor: bool,
    pub skipped_validation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingReport {
    pub k: usize,
    pub train_counts: Vec<usize>,
    pub validation_counts: Vec<usize>,
    pub test_counts: Vec<usize>,
    pub unused_validation: Vec<usize>,
    pub unused_test: Vec<usize>,
}

impl RoutingReport {
    pub fn from_assignments(k: usize, train: &[usize], validation: &[usize], test: &[usize]) -> Self {
        let count = |a: &[usize]| {
            let mut c = vec![0usize; k];
            for &i in a {
                c[i] += 1;
            }
            c
        };
        let train_counts = count(train);
        let validation_counts = count(validation);
        let test_counts = count(test);
        let unused = |c: &[usize]| (0..k).filter(|&i| c[i] == 0).collect();
        RoutingReport {
            k,
            unused_validation: unused(&validation_counts),
            unused_test: unused(&test_counts),
            train_counts,
            validation_counts,
            test_counts,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AcessOutput {
    pub k: usize,
    pub similarity_features: usize,
    /// Whether the similarity top-k cut fell inside a run of tied scores.
    pub similarity_cutoff_tied: bool,
    pub cluster_model: ClusterModel,
    /// Cluster of every train, validation and test paragraph.
    pub assignments: [Vec<usize>; 3],
    pub clusters: Vec<ClusterResult>,
    pub routing: RoutingReport,
    pub models: Vec<TrainedClassifier>,
    /// Test predictions in test-set order.
    pub predictions: Vec<Prediction>,
    pub report: EvalReport,
    pub document_report: EvalReport,
}

struct ClusterFit {
    result: ClusterResult,
    model: TrainedClassifier,
    predictions: Vec<(usize, SecurityClass)>,
}

fn majority(labels: &[SecurityClass]) -> SecurityClass {
    let mut counts = [0usize; 3];
    for l in labels {
        counts[l.index()] += 1;
    }
    // Ties go to the higher class.
    SecurityClass::ALL.into_iter().max_by_key(|c| counts[c.index()]).unwrap()
}

fn fit_cluster(
    index: usize,
    split: &DataSplit,
    buckets: [&[usize]; 3],
    config: &AcessConfig,
    fallback: SecurityClass,
) -> Result<ClusterFit, PipelineError> {
    let [tr, va, te] = buckets;
    let pick = |set: &'_ [Paragraph], idx: &[usize]| -> Vec<Paragraph> {
        idx.iter().map(|&i| set[i].clone()).collect()
    };
    let train = pick(&split.train, tr);
    let validation = pick(&split.validation, va);
    let test = pick(&split.test, te);
    let labels: Vec<SecurityClass> = train.iter().map(|p| p.label).collect();
    let classes = classes_present(&labels);
    let options = TrainOptions { class_weighting: config.class_weighting, seed: config.cluster_seed(index) };

    let mut chosen = None;
    let mut validation_score = None;
    let mut skipped_validation = false;
    let (vectorizer, model) = if classes.len() < 2 {
        let class = classes.first().copied().unwrap_or(fallback);
        (None, TrainedClassifier::constant(config.classifier, class, 0, options.seed))
    } else if validation.is_empty() {
        skipped_validation = true;
        let point = config.grid.points(config.classifier)[0];
        chosen = Some(point);
        let (v, m) = train_point(&Examples::from_paragraphs(&train), &config.security_features, &point, config.classifier, &options)?;
        (Some(v), m)
    } else {
        let r = grid_search(
            &Examples::from_paragraphs(&train),
            &Examples::from_paragraphs(&validation),
            &config.security_features,
            &config.grid,
            config.classifier,
            config.metric,
            &options,
        );
        match r {
            Ok(r) => {
                chosen = Some(r.best);
                validation_score = Some(r.best_score);
                (Some(r.vectorizer), r.model)
            }
            // No usable terms in this cluster: predict its majority class.
            Err(ModelError::AllTrainingsFailed(_)) | Err(ModelError::Text(TextError::NoTermsSurvive)) => {
                (None, TrainedClassifier::constant(config.classifier, majority(&labels), 0, options.seed))
            }
            Err(e) => return Err(e.into()),
        }
    };

    let texts: Vec<&str> = test.iter().map(|p| p.text.as_str()).collect();
    let predicted: Vec<SecurityClass> = match &vectorizer {
        Some(v) => model.predict_all(&v.transform_all(&texts))?,
        None => vec![
            match model.params {
                crate::models::ModelParams::Constant(c) => c,
                _ => unreachable!("only constant predictors lack a vectorizer"),
            };
            test.len()
        ],
    };
    let cm = ConfusionMatrix::from_pairs(test.iter().map(|p| p.label).zip(predicted.iter().copied()));
    let result = ClusterResult {
        cluster: index,
        n_train: train.len(),
        n_validation: validation.len(),
        n_test: test.len(),
        classes_present: classes,
        chosen,
        validation_score,
        n_features: vectorizer.as_ref().map_or(0, Vectorizer::dim),
        test_f1: f1_per_class(&cm),
        test_confusion: cm,
        constant_predictor: model.is_constant(),
        skipped_validation,
    };
    Ok(ClusterFit { result, model, predictions: te.iter().copied().zip(predicted).collect() })
}

pub fn run_acess(split: &DataSplit, config: &AcessConfig) -> Result<AcessOutput, PipelineError> {
    check_training(&split.train)?;
    let texts = |ps: &[Paragraph]| -> Vec<String> { ps.iter().map(|p| p.text.clone()).collect() };
    let train_texts = texts(&split.train);

    let similarity_config = similarity_features(config.similarity_top_k);
    let counts = CorpusCounts::new(&train_texts, &similarity_config);
    let similarity = Vectorizer {
        vocabulary: Vocabulary::from_counts(&counts, &similarity_config)?,
        config: similarity_config,
    };
    let similarity_cutoff_tied = cutoff_is_tied(&counts.scores(Weighting::Tfidf), config.similarity_top_k);
    drop(counts);
    let x_train = similarity.transform_all(&train_texts);
    let k = config
        .k_override
        .unwrap_or_else(|| default_cluster_count(split.train.len(), config.cluster_divisor))
        .clamp(1, split.train.len());
    let mut cluster_model = fit_kmeans(&x_train, k, config.seed, config.kmeans_max_iter, config.kmeans_tol)?;
    cluster_model.vocab_ref = Some(SIMILARITY_VOCAB_FILE.to_string());
    cluster_model.similarity_vocab = Some(similarity.vocabulary.clone());

    let train_assign = cluster_model.labels.clone();
    let val_assign = cluster_model.assign_all(&similarity.transform_all(&texts(&split.validation)))?;
    let test_assign = cluster_model.assign_all(&similarity.transform_all(&texts(&split.test)))?;
    let routing = RoutingReport::from_assignments(k, &train_assign, &val_assign, &test_assign);

    let bucket = |a: &[usize]| {
        let mut b = vec![Vec::new(); k];
        for (i, &c) in a.iter().enumerate() {
            b[c].push(i);
        }
        b
    };
    let (tb, vb, sb) = (bucket(&train_assign), bucket(&val_assign), bucket(&test_assign));
    let fallback = majority(&split.train.iter().map(|p| p.label).collect::<Vec<_>>());
    let fits: Vec<ClusterFit> = (0..k)
        .into_par_iter()
        .map(|i| fit_cluster(i, split, [&tb[i], &vb[i], &sb[i]], config, fallback))
        .collect::<Result<_, _>>()?;

    let mut slots: Vec<Option<SecurityClass>> = vec![None; split.test.len()];
    for f in &fits {
        for &(i, c) in &f.predictions {
            slots[i] = Some(c);
        }
    }
    let predictions: Vec<Prediction> = split
        .test
        .iter()
        .zip(slots)
        .map(|(p, c)| Prediction {
            id: p.id.clone(),
            truth: p.label,
            predicted: c.expect("every test paragraph is routed to one cluster"),
        })
        .collect();

    let (clusters, models) = fits.into_iter().map(|f| (f.result, f.model)).unzip();
    Ok(AcessOutput {
        k,
        similarity_features: similarity.dim(),
        similarity_cutoff_tied,
        cluster_model,
        assignments: [train_assign, val_assign, test_assign],
        clusters,
        routing,
        models,
        report: paragraph_report(&predictions),
        document_report: document_report(&predictions),
        predictions,
    })
}

/// Per-cluster membership counts of a completed run and the clusters left
/// unused at validation or test time.
pub fn explain_routing(output: &AcessOutput) -> RoutingReport {
    output.routing.clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::split_corpus;
    use crate::synth::{generate_synthetic_corpus, SyntheticSpec};

    fn small_split(seed: u64) -> DataSplit {
        let docs = generate_synthetic_corpus(&SyntheticSpec::planted_clusters(60, seed)).unwrap();
        split_corpus(&docs, [0.6, 0.2, 0.2], seed).unwrap()
    }

    #[test]
    fn routing_is_a_partition() {
        let split = small_split(3);
        let cfg = AcessConfig { k_override: Some(4), grid: GridSpec { svm_cost: vec![1.0], ..GridSpec::acess_default() }, ..Default::default() };
        let out = run_acess(&split, &cfg).unwrap();
        assert_eq!(out.report.total as usize, split.test.len());
        assert_eq!(out.clusters.iter().map(|c| c.n_test).sum::<usize>(), split.test.len());
        let r = explain_routing(&out);
        assert_eq!(r.train_counts.iter().sum::<usize>(), split.train.len());
        assert_eq!(r.validation_counts.iter().sum::<usize>(), split.validation.len());
        for (c, res) in out.clusters.iter().enumerate() {
            assert_eq!(res.n_train, r.train_counts[c]);
            assert_eq!(res.skipped_validation, res.n_validation == 0 && !res.constant_predictor);
        }
    }

    #[test]
    fn deterministic() {
        let split = small_split(4);
        let cfg = AcessConfig { k_override: Some(3), ..Default::default() };
        let a = run_acess(&split, &cfg).unwrap();
        let b = run_acess(&split, &cfg).unwrap();
        assert_eq!(a.clusters, b.clusters);
        assert_eq!(a.report, b.report);
    }

    #[test]
    fn majority_ties_go_high() {
        use SecurityClass::*;
        assert_eq!(majority(&[U, S]), S);
        assert_eq!(majority(&[U, U, S]), U);
    }
}
