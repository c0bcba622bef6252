//! Experiment runs: TOML configuration, data loading, method dispatch,
//! run directories and run comparison.
//!
//! A run directory holds:
//!
//! | file | content |
//! |---|---|
//! | `config.toml` | normalized config snapshot (output directory stripped) |
//! | `seeds.json` | every seed the run used |
//! | `manifest.json` | schema tag, config hash, sizes, dataset row, pooled metrics |
//! | `eval_paragraph.{json,csv}`, `eval_document.{json,csv}` | evaluation reports |
//! | `predictions.csv` | per test paragraph truth and prediction |
//! | method artifacts | models, cluster or topic reports, removal report |
//! | `log.jsonl` | per-stage timings |
//!
//! Everything except `log.jsonl` is a pure function of the config and the
//! input data.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::acess::{run_acess, AcessConfig, ClusterResult, RoutingReport, SIMILARITY_VOCAB_FILE};
use crate::corpus::{
    group_into_documents, read_paragraphs_jsonl, split_corpus, write_paragraphs_jsonl, CorpusError,
    DataSplit, Paragraph, SecurityClass, DEFAULT_SPLIT_RATIOS,
};
use crate::kmeans::default_cluster_count;
use crate::lda::{removal_report_csv, LdaError, PruneConfig};
use crate::metrics::{EvalReport, Provenance};
use crate::models::{ClassWeighting, GridSpec, Metric, ModelKind};
use crate::pipeline::{
    default_baseline_features, run_global, run_prune_logreg, GlobalConfig, GlobalOutput,
    PipelineError, Prediction, PruneLogregConfig,
};
use crate::synth::{generate_synthetic_corpus, SynthError, SyntheticSpec};
use crate::text::VectorizerConfig;

pub const RUN_SCHEMA: &str = "acess-run/1";

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_METHOD: i32 = 4;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Method(#[from] PipelineError),
    #[error("runs were evaluated on different test sets: {first} vs {other}")]
    SplitMismatch { first: String, other: String },
    #[error("io error at {path}: {message}")]
    Io { path: String, message: String },
}

impl ExperimentError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) | ExperimentError::Synth(_) => EXIT_CONFIG,
            ExperimentError::Method(_) => EXIT_METHOD,
            _ => EXIT_DATA,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentError::Config(_) => "config",
            ExperimentError::Synth(_) => "config",
            ExperimentError::Data(_) | ExperimentError::Corpus(_) => "data",
            ExperimentError::Method(_) => "method",
            ExperimentError::SplitMismatch { .. } => "split_mismatch",
            ExperimentError::Io { .. } => "io",
        }
    }

    pub fn record(&self) -> ErrorRecord {
        ErrorRecord { kind: self.kind().into(), exit_code: self.exit_code(), message: self.to_string() }
    }
}

/// Structured error written by the CLI on failure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub exit_code: i32,
    pub message: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |e| ExperimentError::Io { path: path.display().to_string(), message: e.to_string() }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    BaselineNb,
    BaselineSvm,
    BaselineLogreg,
    PruneLogreg,
    Acess,
}

impl Method {
    pub const ALL: [Method; 5] =
        [Method::BaselineNb, Method::BaselineSvm, Method::BaselineLogreg, Method::PruneLogreg, Method::Acess];

    pub fn name(self) -> &'static str {
        match self {
            Method::BaselineNb => "baseline_nb",
            Method::BaselineSvm => "baseline_svm",
            Method::BaselineLogreg => "baseline_logreg",
            Method::PruneLogreg => "prune_logreg",
            Method::Acess => "acess",
        }
    }

    fn baseline_kind(self) -> Option<ModelKind> {
        match self {
            Method::BaselineNb => Some(ModelKind::NaiveBayes),
            Method::BaselineSvm => Some(ModelKind::LinearSvm),
            Method::BaselineLogreg => Some(ModelKind::LogregOvo),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| ExperimentError::Config(format!("unknown method `{s}`")))
    }
}

/// Where paragraphs come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataConfig {
    /// Generated corpus; `seed` is mandatory.
    Synthetic(SyntheticSpec),
    /// Corpus manifest (JSON Lines) written by `ingest`.
    Corpus { path: PathBuf },
    /// Directory with `train.jsonl`, `validation.jsonl` and `test.jsonl`.
    Splits { dir: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    #[serde(default = "default_ratios")]
    pub ratios: [f64; 3],
    pub seed: u64,
}

fn default_ratios() -> [f64; 3] {
    DEFAULT_SPLIT_RATIOS
}

/// Settings of the global classifiers (the baselines and the classifier
/// after pruning).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineSettings {
    pub features: VectorizerConfig,
    pub grid: GridSpec,
    pub metric: Metric,
    pub class_weighting: ClassWeighting,
}

impl Default for BaselineSettings {
    fn default() -> Self {
        BaselineSettings {
            features: default_baseline_features(),
            grid: GridSpec::default(),
            metric: Metric::MacroF1,
            class_weighting: ClassWeighting::Balanced,
        }
    }
}

impl BaselineSettings {
    pub fn global_config(&self, kind: ModelKind, seed: u64) -> GlobalConfig {
        GlobalConfig {
            kind,
            features: self.features.clone(),
            grid: self.grid.clone(),
            metric: self.metric,
            class_weighting: self.class_weighting,
            seed,
        }
    }
}

/// One experiment. `seed` drives every method; nested `seed` keys in the
/// method sections must be absent or equal to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Dataset name used in the manifest; defaults to one derived from the
    /// data source.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub method: Method,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub data: DataConfig,
    /// Required unless the data source is a splits directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitConfig>,
    #[serde(default)]
    pub baseline: BaselineSettings,
    #[serde(default)]
    pub prune: PruneConfig,
    #[serde(default)]
    pub acess: AcessConfig,
}

fn has_key(table: &toml::Table, path: &[&str]) -> bool {
    let mut t = table;
    for (i, key) in path.iter().enumerate() {
        match t.get(*key) {
            Some(toml::Value::Table(inner)) if i + 1 < path.len() => t = inner,
            Some(_) if i + 1 == path.len() => return true,
            _ => return false,
        }
    }
    false
}

impl ExperimentConfig {
    /// A synthetic-corpus experiment with default method settings.
    pub fn synthetic(method: Method, spec: SyntheticSpec, split_seed: u64, seed: u64) -> Self {
        ExperimentConfig {
            name: None,
            method,
            seed,
            output_dir: None,
            data: DataConfig::Synthetic(spec),
            split: Some(SplitConfig { ratios: DEFAULT_SPLIT_RATIOS, seed: split_seed }),
            baseline: BaselineSettings::default(),
            prune: PruneConfig::default(),
            acess: AcessConfig::default(),
        }
        .normalized()
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ExperimentError::Config(e.to_string()))?;
        let source = table.get("data").and_then(|d| d.get("source")).and_then(|s| s.as_str());
        if source == Some("synthetic") && !has_key(&table, &["data", "seed"]) {
            return Err(ExperimentError::Config("data.seed is required for synthetic corpora".into()));
        }
        let nested = [("acess", "seed"), ("prune", "seed")];
        let config: ExperimentConfig =
            table.clone().try_into().map_err(|e: toml::de::Error| ExperimentError::Config(e.to_string()))?;
        for (section, key) in nested {
            if has_key(&table, &[section, key]) {
                let v = table[section][key].as_integer();
                if v != Some(config.seed as i64) {
                    return Err(ExperimentError::Config(format!(
                        "{section}.{key} must be omitted or equal the top-level seed"
                    )));
                }
            }
        }
        config.validate()?;
        Ok(config.normalized())
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        match &self.data {
            DataConfig::Splits { .. } => {}
            _ if self.split.is_none() => {
                return Err(ExperimentError::Config("[split] with a seed is required for this data source".into()))
            }
            DataConfig::Synthetic(spec) => spec.validate()?,
            DataConfig::Corpus { .. } => {}
        }
        if let Some(kind) = self.method.baseline_kind() {
            self.baseline.grid.validate(kind).map_err(|e| ExperimentError::Config(e.to_string()))?;
        }
        if self.method == Method::Acess {
            self.acess.grid.validate(self.acess.classifier).map_err(|e| ExperimentError::Config(e.to_string()))?;
            if self.acess.cluster_divisor == 0 || self.acess.k_override == Some(0) {
                return Err(ExperimentError::Config("cluster divisor and k must be at least 1".into()));
            }
        }
        Ok(())
    }

    /// Copies the run seed into the method sections.
    pub fn normalized(mut self) -> Self {
        self.acess.seed = self.seed;
        self.prune.seed = self.seed;
        self
    }

    /// TOML snapshot without the output directory; its hash identifies the
    /// run.
    pub fn snapshot(&self) -> Result<String, ExperimentError> {
        let mut c = self.clone().normalized();
        c.output_dir = None;
        toml::to_string(&c).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn dataset_name(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        let stem = |p: &Path| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        match &self.data {
            DataConfig::Synthetic(spec) => format!("synthetic-{}", spec.seed),
            DataConfig::Corpus { path } => stem(path),
            DataConfig::Splits { dir } => stem(dir),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub run_seed: u64,
    pub split_seed: Option<u64>,
    pub synthetic_seed: Option<u64>,
    /// Seeds of the pruning passes (pass 2 uses the next seed).
    pub lda_seeds: Option<[u64; 2]>,
    /// Per-cluster training seeds for ACESS.
    pub cluster_seeds: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub seed: Option<u64>,
    pub ratios: Option<[f64; 3]>,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

pub const SPLIT_FILES: [&str; 3] = ["train.jsonl", "validation.jsonl", "test.jsonl"];
const SPLIT_INFO_FILE: &str = "split.json";

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), ExperimentError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| ExperimentError::Data(e.to_string()))?;
    text.push('\n');
    write_file(path, text)
}

pub fn write_paragraph_file(path: &Path, paragraphs: &[Paragraph]) -> Result<(), ExperimentError> {
    let mut buf = Vec::new();
    write_paragraphs_jsonl(&mut buf, paragraphs)?;
    write_file(path, buf)
}

pub fn read_paragraph_file(path: &Path) -> Result<Vec<Paragraph>, ExperimentError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    Ok(read_paragraphs_jsonl(BufReader::new(f))?)
}

/// Writes the three split files plus `split.json`.
pub fn write_split_dir(split: &DataSplit, dir: &Path) -> Result<SplitInfo, ExperimentError> {
    for (name, set) in SPLIT_FILES.iter().zip([&split.train, &split.validation, &split.test]) {
        write_paragraph_file(&dir.join(name), set)?;
    }
    let info = SplitInfo {
        seed: Some(split.seed),
        ratios: Some(split.ratios),
        train: split.train.len(),
        validation: split.validation.len(),
        test: split.test.len(),
    };
    write_json(&dir.join(SPLIT_INFO_FILE), &info)?;
    Ok(info)
}

pub fn read_split_dir(dir: &Path) -> Result<DataSplit, ExperimentError> {
    let mut sets = Vec::new();
    for name in SPLIT_FILES {
        let path = dir.join(name);
        if !path.is_file() {
            return Err(ExperimentError::Data(format!("missing split file {}", path.display())));
        }
        sets.push(read_paragraph_file(&path)?);
    }
    let info: Option<SplitInfo> = fs::read_to_string(dir.join(SPLIT_INFO_FILE))
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok());
    let test = sets.pop().unwrap();
    let validation = sets.pop().unwrap();
    let train = sets.pop().unwrap();
    Ok(DataSplit {
        train,
        validation,
        test,
        seed: info.as_ref().and_then(|i| i.seed).unwrap_or(0),
        ratios: info.and_then(|i| i.ratios).unwrap_or(DEFAULT_SPLIT_RATIOS),
    })
}

/// Materializes the data split a config describes.
pub fn load_split(config: &ExperimentConfig) -> Result<DataSplit, ExperimentError> {
    let split_cfg = || config.split.clone().ok_or_else(|| ExperimentError::Config("[split] is required".into()));
    match &config.data {
        DataConfig::Synthetic(spec) => {
            let s = split_cfg()?;
            Ok(split_corpus(&generate_synthetic_corpus(spec)?, s.ratios, s.seed)?)
        }
        DataConfig::Corpus { path } => {
            let s = split_cfg()?;
            let docs = group_into_documents(read_paragraph_file(path)?);
            Ok(split_corpus(&docs, s.ratios, s.seed)?)
        }
        DataConfig::Splits { dir } => read_split_dir(dir),
    }
}

/// SHA-256 over the test paragraph ids and labels, in order.
pub fn test_set_hash(test: &[Paragraph]) -> String {
    let mut h = Sha256::new();
    for p in test {
        h.update(p.id.to_string().as_bytes());
        h.update(b"\t");
        h.update(p.label.to_string().as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

/// One row of the datasets table: cluster count and similarity feature
/// count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub dataset: String,
    pub clusters: usize,
    pub features: usize,
    /// `default_cluster_count(n_train, divisor)` for reference.
    pub default_clusters: usize,
    pub cutoff_tied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub macro_f1: f64,
    pub f1: BTreeMap<SecurityClass, f64>,
}

impl From<&EvalReport> for MetricSummary {
    fn from(r: &EvalReport) -> Self {
        MetricSummary { macro_f1: r.macro_f1, f1: r.per_class.iter().map(|(c, m)| (*c, m.f1)).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneSummary {
    pub k_main: usize,
    pub k_sub: Option<usize>,
    pub n_extracted: usize,
    pub n_removed: usize,
    pub thresholds: [(f64, f64); 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub run_id: String,
    pub method: Method,
    pub dataset: String,
    pub config_hash: String,
    pub test_set_hash: String,
    pub seeds: SeedRecord,
    pub split: SplitInfo,
    pub dataset_row: Option<DatasetRow>,
    pub paragraph: MetricSummary,
    pub document: MetricSummary,
    pub clusters: Option<Vec<ClusterResult>>,
    pub routing: Option<RoutingReport>,
    pub pruning: Option<PruneSummary>,
    /// Files of the run directory, sorted.
    pub files: Vec<String>,
}

#[derive(Serialize)]
struct LogRecord<'a> {
    stage: &'a str,
    elapsed_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    detail: Option<String>,
}

struct StageLog {
    lines: Vec<String>,
}

impl StageLog {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.push(stage, t.elapsed().as_secs_f64() * 1e3, None);
        out
    }

    fn push(&mut self, stage: &str, elapsed_ms: f64, detail: Option<String>) {
        log::info!("{stage}: {elapsed_ms:.1} ms");
        let rec = LogRecord { stage, elapsed_ms, detail };
        self.lines.push(serde_json::to_string(&rec).expect("log records serialize"));
    }
}

fn predictions_csv(predictions: &[Prediction]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["paragraph_id", "truth", "predicted"]).unwrap();
    for p in predictions {
        w.write_record([p.id.to_string(), p.truth.to_string(), p.predicted.to_string()]).unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

/// Outcome of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub paragraph_report: EvalReport,
    pub document_report: EvalReport,
}

struct MethodResult {
    predictions: Vec<Prediction>,
    paragraph: EvalReport,
    document: EvalReport,
    dataset_row: Option<DatasetRow>,
    clusters: Option<Vec<ClusterResult>>,
    routing: Option<RoutingReport>,
    pruning: Option<PruneSummary>,
    lda_seeds: Option<[u64; 2]>,
    cluster_seeds: Option<Vec<u64>>,
    /// Relative path and contents.
    artifacts: Vec<(String, Vec<u8>)>,
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("artifacts serialize");
    v.push(b'\n');
    v
}

fn global_artifacts(out: &GlobalOutput) -> Vec<(String, Vec<u8>)> {
    let scores: Vec<_> = out.search.scores.iter().map(|(p, s)| serde_json::json!({"point": p, "score": s})).collect();
    vec![
        ("model.json".into(), json_bytes(&out.search.model.to_model_file(Some(out.search.provenance())))),
        ("vocabulary.json".into(), json_bytes(&out.search.vectorizer.vocabulary)),
        ("grid_scores.json".into(), json_bytes(&scores)),
    ]
}

fn run_method(config: &ExperimentConfig, split: &DataSplit, log: &mut StageLog) -> Result<MethodResult, ExperimentError> {
    let seed = config.seed;
    if let Some(kind) = config.method.baseline_kind() {
        let cfg = config.baseline.global_config(kind, seed);
        let out = log.time("train_and_predict", || run_global(&split.train, &split.validation, &split.test, &cfg))?;
        return Ok(MethodResult {
            artifacts: global_artifacts(&out),
            predictions: out.predictions,
            paragraph: out.report,
            document: out.document_report,
            dataset_row: None,
            clusters: None,
            routing: None,
            pruning: None,
            lda_seeds: None,
            cluster_seeds: None,
        });
    }
    match config.method {
        Method::PruneLogreg => {
            let cfg = PruneLogregConfig {
                prune: PruneConfig { seed, ..config.prune },
                classifier: config.baseline.global_config(ModelKind::LogregOvo, seed),
            };
            let out = match log.time("prune_and_train", || {
                run_prune_logreg(&split.train, &split.validation, &split.test, &cfg)
            }) {
                Ok(o) => o,
                Err(e) => {
                    if let PipelineError::Lda(LdaError::EverythingPruned { report, .. }) = &e {
                        if let Some(dir) = &config.output_dir {
                            write_file(&dir.join("removals.csv"), report)?;
                        }
                    }
                    return Err(e.into());
                }
            };
            let mut artifacts = global_artifacts(&out.global);
            artifacts.push(("topics_main.json".into(), json_bytes(&out.prune.main_topics)));
            if let Some(sub) = &out.prune.sub_topics {
                artifacts.push(("topics_sub.json".into(), json_bytes(sub)));
            }
            artifacts.push(("removals.csv".into(), removal_report_csv(&out.prune.removals).into_bytes()));
            let pruning = PruneSummary {
                k_main: out.prune.k_main,
                k_sub: out.prune.k_sub,
                n_extracted: out.prune.n_extracted,
                n_removed: out.prune.removals.len(),
                thresholds: out.prune.thresholds.bands,
            };
            Ok(MethodResult {
                artifacts,
                predictions: out.global.predictions,
                paragraph: out.global.report,
                document: out.global.document_report,
                dataset_row: None,
                clusters: None,
                routing: None,
                pruning: Some(pruning),
                lda_seeds: Some([seed, seed.wrapping_add(1)]),
                cluster_seeds: None,
            })
        }
        Method::Acess => {
            let cfg = AcessConfig { seed, ..config.acess.clone() };
            let out = log.time("acess", || run_acess(split, &cfg))?;
            let mut artifacts = vec![
                ("cluster_model.json".into(), json_bytes(&out.cluster_model)),
                ("clusters.json".into(), json_bytes(&out.clusters)),
                ("routing.json".into(), json_bytes(&out.routing)),
            ];
            if let Some(v) = &out.cluster_model.similarity_vocab {
                artifacts.push((SIMILARITY_VOCAB_FILE.into(), json_bytes(v)));
            }
            for (i, m) in out.models.iter().enumerate() {
                artifacts.push((format!("models/cluster_{i}.json"), json_bytes(&m.to_model_file(None))));
            }
            for (split_name, (set, assign)) in ["train", "validation", "test"]
                .iter()
                .zip([&split.train, &split.validation, &split.test].into_iter().zip(&out.assignments))
            {
                let mut buckets: Vec<Vec<&Paragraph>> = vec![Vec::new(); out.k];
                for (p, &c) in set.iter().zip(assign) {
                    buckets[c].push(p);
                }
                for (i, b) in buckets.into_iter().enumerate() {
                    let mut buf = Vec::new();
                    write_paragraphs_jsonl(&mut buf, b)?;
                    artifacts.push((format!("partitions/cluster_{i}.{split_name}.jsonl"), buf));
                }
            }
            let dataset_row = DatasetRow {
                dataset: config.dataset_name(),
                clusters: out.k,
                features: out.similarity_features,
                default_clusters: default_cluster_count(split.train.len(), cfg.cluster_divisor),
                cutoff_tied: out.similarity_cutoff_tied,
            };
            Ok(MethodResult {
                artifacts,
                cluster_seeds: Some((0..out.k).map(|i| cfg.cluster_seed(i)).collect()),
                predictions: out.predictions,
                paragraph: out.report,
                document: out.document_report,
                dataset_row: Some(dataset_row),
                clusters: Some(out.clusters),
                routing: Some(out.routing),
                pruning: None,
                lda_seeds: None,
            })
        }
        _ => unreachable!("baselines handled above"),
    }
}

/// Runs one experiment into `out_dir` (created if needed).
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary, ExperimentError> {
    config.validate()?;
    let config = ExperimentConfig { output_dir: Some(out_dir.to_path_buf()), ..config.clone().normalized() };
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut log = StageLog { lines: Vec::new() };

    let snapshot = config.snapshot()?;
    let config_hash = sha256_hex(snapshot.as_bytes());
    let run_id = format!("{}-{}", config.method, &config_hash[..12]);
    write_file(&out_dir.join("config.toml"), &snapshot)?;

    let split = log.time("load_data", || load_split(&config))?;
    if split.train.is_empty() || split.test.is_empty() {
        return Err(ExperimentError::Data("training and test sets must be non-empty".into()));
    }
    let test_hash = test_set_hash(&split.test);
    let result = run_method(&config, &split, &mut log)?;

    let provenance = |level: &str| Provenance {
        run_id: run_id.clone(),
        method: config.method.name().into(),
        level: level.into(),
        config_hash: config_hash.clone(),
        test_set_hash: test_hash.clone(),
    };
    let paragraph = result.paragraph.with_provenance(provenance("paragraph"));
    let document = result.document.with_provenance(provenance("document"));

    let seeds = SeedRecord {
        run_seed: config.seed,
        split_seed: match &config.data {
            DataConfig::Splits { .. } => Some(split.seed),
            _ => config.split.as_ref().map(|s| s.seed),
        },
        synthetic_seed: match &config.data {
            DataConfig::Synthetic(spec) => Some(spec.seed),
            _ => None,
        },
        lda_seeds: result.lda_seeds,
        cluster_seeds: result.cluster_seeds,
    };

    let started = Instant::now();
    let mut files: Vec<(String, Vec<u8>)> = result.artifacts;
    files.push(("eval_paragraph.json".into(), json_bytes(&paragraph)));
    files.push(("eval_paragraph.csv".into(), paragraph.to_csv().into_bytes()));
    files.push(("eval_document.json".into(), json_bytes(&document)));
    files.push(("eval_document.csv".into(), document.to_csv().into_bytes()));
    files.push(("predictions.csv".into(), predictions_csv(&result.predictions).into_bytes()));
    files.push(("seeds.json".into(), json_bytes(&seeds)));
    for (name, bytes) in &files {
        write_file(&out_dir.join(name), bytes)?;
    }

    let mut names: Vec<String> = files.into_iter().map(|(n, _)| n).collect();
    names.extend(["config.toml", "manifest.json", "log.jsonl"].map(String::from));
    names.sort();
    let manifest = RunManifest {
        schema: RUN_SCHEMA.into(),
        run_id,
        method: config.method,
        dataset: config.dataset_name(),
        config_hash,
        test_set_hash: test_hash,
        seeds,
        split: SplitInfo {
            seed: Some(split.seed),
            ratios: Some(split.ratios),
            train: split.train.len(),
            validation: split.validation.len(),
            test: split.test.len(),
        },
        dataset_row: result.dataset_row,
        paragraph: (&paragraph).into(),
        document: (&document).into(),
        clusters: result.clusters,
        routing: result.routing,
        pruning: result.pruning,
        files: names,
    };
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    log.push("write_reports", started.elapsed().as_secs_f64() * 1e3, None);

    let log_path = out_dir.join("log.jsonl");
    let mut f = fs::File::create(&log_path).map_err(io_err(&log_path))?;
    for line in &log.lines {
        writeln!(f, "{line}").map_err(io_err(&log_path))?;
    }
    Ok(RunSummary { dir: out_dir.to_path_buf(), manifest, paragraph_report: paragraph, document_report: document })
}

/// Evaluation granularity of a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Paragraph,
    Document,
}

impl Level {
    pub fn file_name(self) -> &'static str {
        match self {
            Level::Paragraph => "eval_paragraph.json",
            Level::Document => "eval_document.json",
        }
    }
}

/// Column order of the comparison table.
pub const COMPARISON_COLUMNS: [&str; 4] = ["S", "C", "U", "macro"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub run: String,
    pub method: String,
    /// F1 of S, C and U, then macro-F1.
    pub values: [f64; 4],
    pub best: [bool; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub level: Level,
    pub test_set_hash: String,
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["run".to_string(), "method".to_string()];
        header.extend(COMPARISON_COLUMNS.iter().map(|c| format!("f1_{c}")));
        header.extend(COMPARISON_COLUMNS.iter().map(|c| format!("best_{c}")));
        w.write_record(&header).unwrap();
        for r in &self.rows {
            let mut rec = vec![r.run.clone(), r.method.clone()];
            rec.extend(r.values.iter().map(|v| v.to_string()));
            rec.extend(r.best.iter().map(|b| b.to_string()));
            w.write_record(&rec).unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }

    /// Fixed-width table; `*` marks the best value of each column.
    pub fn to_table(&self) -> String {
        let run_w = self.rows.iter().map(|r| r.run.len()).max().unwrap_or(3).max(3);
        let method_w = self.rows.iter().map(|r| r.method.len()).max().unwrap_or(6).max(6);
        let mut out = format!("{:<run_w$}  {:<method_w$}", "run", "method");
        for c in COMPARISON_COLUMNS {
            out.push_str(&format!("  {c:>8}"));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{:<run_w$}  {:<method_w$}", r.run, r.method));
            for (v, b) in r.values.iter().zip(r.best) {
                let cell = format!("{v:.4}{}", if b { "*" } else { " " });
                out.push_str(&format!("  {cell:>8}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Reads only the serialized evaluation reports of each run directory.
pub fn compare_runs(dirs: &[PathBuf], level: Level) -> Result<Comparison, ExperimentError> {
    if dirs.len() < 2 {
        return Err(ExperimentError::Config("compare needs at least two runs".into()));
    }
    let mut reports = Vec::new();
    for dir in dirs {
        let path = dir.join(level.file_name());
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let report: EvalReport = serde_json::from_str(&text)
            .map_err(|e| ExperimentError::Data(format!("{}: {e}", path.display())))?;
        let run = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| dir.display().to_string());
        reports.push((run, report));
    }
    let first_hash = reports[0].1.provenance.test_set_hash.clone();
    for (_, r) in &reports[1..] {
        if r.provenance.test_set_hash != first_hash {
            return Err(ExperimentError::SplitMismatch {
                first: first_hash,
                other: r.provenance.test_set_hash.clone(),
            });
        }
    }
    let mut rows: Vec<ComparisonRow> = reports
        .into_iter()
        .map(|(run, r)| ComparisonRow {
            run,
            method: r.provenance.method.clone(),
            values: [r.f1(SecurityClass::S), r.f1(SecurityClass::C), r.f1(SecurityClass::U), r.macro_f1],
            best: [false; 4],
        })
        .collect();
    for col in 0..4 {
        let max = rows.iter().map(|r| r.values[col]).fold(f64::NEG_INFINITY, f64::max);
        for r in &mut rows {
            r.best[col] = r.values[col] == max;
        }
    }
    Ok(Comparison { level, test_set_hash: first_hash, rows })
}
