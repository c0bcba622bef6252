//! Collapsed-Gibbs LDA, topic/class composition, purity bands and the
//! two-pass pruning of confusable training instances.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Paragraph, ParagraphId, SecurityClass};
use crate::text::{tokenize, VectorizerConfig};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LdaError {
    #[error("corpus has no tokens")]
    EmptyCorpus,
    #[error("K = {k} exceeds the vocabulary size ({vocab})")]
    KTooLarge { k: usize, vocab: usize },
    #[error("invalid LDA config: {0}")]
    BadConfig(String),
    #[error("document {0} is out of range")]
    OutOfRange(usize),
    #[error("{labels} labels for {documents} documents")]
    LabelCountMismatch { labels: usize, documents: usize },
    #[error("invalid class fractions or factors: {0}")]
    BadFractions(String),
    #[error("pruning removed {removed} instances and left an unusable training set: {reason}")]
    EverythingPruned { removed: usize, reason: String, report: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub k: usize,
    /// Symmetric document-topic prior; `None` means `50 / K`.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl LdaConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        LdaConfig { k, alpha: None, beta: 0.01, iterations: 500, seed }
    }

    pub fn alpha_value(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.k as f64)
    }
}

/// Tokenization used for topic modeling: alphabetic unigrams without
/// stopwords.
pub fn lda_tokenizer() -> VectorizerConfig {
    VectorizerConfig::default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub iterations: usize,
    pub vocabulary: Vec<String>,
    /// `topic_word[k][w]`.
    pub topic_word: Vec<Vec<u32>>,
    /// `doc_topic[d][k]`.
    pub doc_topic: Vec<Vec<u32>>,
    pub assignments: Vec<Vec<u32>>,
}

/// A running collapsed Gibbs chain. [`GibbsSampler::sweep`] resamples
/// every token once.
pub struct GibbsSampler {
    k: usize,
    alpha: f64,
    beta: f64,
    seed: u64,
    vocabulary: Vec<String>,
    docs: Vec<Vec<u32>>,
    z: Vec<Vec<u32>>,
    ndk: Vec<Vec<u32>>,
    /// Word-major `nwk[w * k + t]`.
    nwk: Vec<u32>,
    nk: Vec<u32>,
    rng: ChaCha8Rng,
    sweeps: usize,
    weights: Vec<f64>,
}

impl GibbsSampler {
    pub fn new<S: AsRef<str>>(texts: &[S], config: &LdaConfig) -> Result<Self, LdaError> {
        let tok = lda_tokenizer();
        let tokens: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t.as_ref(), &tok)).collect();
        Self::from_tokens(tokens, config)
    }

    pub fn from_tokens(tokens: Vec<Vec<String>>, config: &LdaConfig) -> Result<Self, LdaError> {
        if config.k < 2 {
            return Err(LdaError::BadConfig(format!("K must be >= 2, got {}", config.k)));
        }
        if config.iterations == 0 {
            return Err(LdaError::BadConfig("iterations must be >= 1".into()));
        }
        let alpha = config.alpha_value();
        if !(alpha > 0.0 && alpha.is_finite() && config.beta > 0.0 && config.beta.is_finite()) {
            return Err(LdaError::BadConfig(format!("alpha {alpha} / beta {} must be > 0", config.beta)));
        }
        let vocabulary: Vec<String> =
            tokens.iter().flatten().cloned().collect::<BTreeSet<_>>().into_iter().collect();
        if vocabulary.is_empty() {
            return Err(LdaError::EmptyCorpus);
        }
        if config.k > vocabulary.len() {
            return Err(LdaError::KTooLarge { k: config.k, vocab: vocabulary.len() });
        }
        let index: HashMap<&str, u32> =
            vocabulary.iter().enumerate().map(|(i, w)| (w.as_str(), i as u32)).collect();
        let docs: Vec<Vec<u32>> = tokens
            .iter()
            .map(|d| d.iter().map(|w| index[w.as_str()]).collect())
            .collect();

        let k = config.k;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut ndk = vec![vec![0u32; k]; docs.len()];
        let mut nwk = vec![0u32; vocabulary.len() * k];
        let mut nk = vec![0u32; k];
        let mut z = Vec::with_capacity(docs.len());
        for (d, doc) in docs.iter().enumerate() {
            let zd: Vec<u32> = doc
                .iter()
                .map(|&w| {
                    let t = rng.gen_range(0..k);
                    ndk[d][t] += 1;
                    nwk[w as usize * k + t] += 1;
                    nk[t] += 1;
                    t as u32
                })
                .collect();
            z.push(zd);
        }
        Ok(GibbsSampler {
            k,
            alpha,
            beta: config.beta,
            seed: config.seed,
            vocabulary,
            docs,
            z,
            ndk,
            nwk,
            nk,
            rng,
            sweeps: 0,
            weights: vec![0.0; k],
        })
    }

    pub fn sweep(&mut self) {
        let k = self.k;
        let vbeta = self.vocabulary.len() as f64 * self.beta;
        for d in 0..self.docs.len() {
            for i in 0..self.docs[d].len() {
                let w = self.docs[d][i] as usize;
                let old = self.z[d][i] as usize;
                self.ndk[d][old] -= 1;
                self.nwk[w * k + old] -= 1;
                self.nk[old] -= 1;

                let row = &self.nwk[w * k..(w + 1) * k];
                let mut total = 0.0;
                for t in 0..k {
                    let p = (self.ndk[d][t] as f64 + self.alpha) * (row[t] as f64 + self.beta)
                        / (self.nk[t] as f64 + vbeta);
                    total += p;
                    self.weights[t] = total;
                }
                let u = self.rng.gen::<f64>() * total;
                let new = self.weights.iter().position(|&c| u < c).unwrap_or(k - 1);

                self.z[d][i] = new as u32;
                self.ndk[d][new] += 1;
                self.nwk[w * k + new] += 1;
                self.nk[new] += 1;
            }
        }
        self.sweeps += 1;
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn n_tokens(&self) -> usize {
        self.docs.iter().map(Vec::len).sum()
    }

    /// Sum of all topic-word counts.
    pub fn topic_word_total(&self) -> u64 {
        self.nwk.iter().map(|&c| c as u64).sum()
    }

    /// Recounts every matrix from the assignments and compares.
    pub fn counts_consistent(&self) -> bool {
        let k = self.k;
        let mut ndk = vec![vec![0u32; k]; self.docs.len()];
        let mut nwk = vec![0u32; self.nwk.len()];
        let mut nk = vec![0u32; k];
        for (d, (doc, zd)) in self.docs.iter().zip(&self.z).enumerate() {
            for (&w, &t) in doc.iter().zip(zd) {
                ndk[d][t as usize] += 1;
                nwk[w as usize * k + t as usize] += 1;
                nk[t as usize] += 1;
            }
        }
        let doc_sums = self
            .ndk
            .iter()
            .zip(&self.docs)
            .all(|(row, doc)| row.iter().sum::<u32>() as usize == doc.len());
        ndk == self.ndk && nwk == self.nwk && nk == self.nk && doc_sums
    }

    pub fn model(&self) -> TopicModel {
        let k = self.k;
        let v = self.vocabulary.len();
        let topic_word = (0..k).map(|t| (0..v).map(|w| self.nwk[w * k + t]).collect()).collect();
        TopicModel {
            k,
            alpha: self.alpha,
            beta: self.beta,
            seed: self.seed,
            iterations: self.sweeps,
            vocabulary: self.vocabulary.clone(),
            topic_word,
            doc_topic: self.ndk.clone(),
            assignments: self.z.clone(),
        }
    }
}

pub fn fit_lda_gibbs<S: AsRef<str>>(texts: &[S], config: &LdaConfig) -> Result<TopicModel, LdaError> {
    let mut sampler = GibbsSampler::new(texts, config)?;
    for _ in 0..config.iterations {
        sampler.sweep();
    }
    Ok(sampler.model())
}

impl TopicModel {
    pub fn n_documents(&self) -> usize {
        self.doc_topic.len()
    }

    /// `φ[k][w] = (n_kw + β) / (n_k + Vβ)`.
    pub fn phi(&self) -> Vec<Vec<f64>> {
        let vbeta = self.vocabulary.len() as f64 * self.beta;
        self.topic_word
            .iter()
            .map(|row| {
                let denom = row.iter().map(|&c| c as f64).sum::<f64>() + vbeta;
                row.iter().map(|&c| (c as f64 + self.beta) / denom).collect()
            })
            .collect()
    }

    /// `θ[d][k] = (n_dk + α) / (n_d + Kα)`.
    pub fn theta(&self, doc: usize) -> Result<Vec<f64>, LdaError> {
        let row = self.doc_topic.get(doc).ok_or(LdaError::OutOfRange(doc))?;
        let denom = row.iter().map(|&c| c as f64).sum::<f64>() + self.k as f64 * self.alpha;
        Ok(row.iter().map(|&c| (c as f64 + self.alpha) / denom).collect())
    }

    /// Argmax of θ for `doc`, ties to the lowest topic index.
    pub fn dominant_topic(&self, doc: usize) -> Result<usize, LdaError> {
        let theta = self.theta(doc)?;
        let mut best = 0;
        for (t, &p) in theta.iter().enumerate() {
            if p > theta[best] {
                best = t;
            }
        }
        Ok(best)
    }

    pub fn top_words(&self, topic: usize, n: usize) -> Vec<String> {
        let row = &self.topic_word[topic];
        let mut idx: Vec<usize> = (0..row.len()).collect();
        idx.sort_by(|&a, &b| row[b].cmp(&row[a]).then(a.cmp(&b)));
        idx.into_iter().take(n).map(|w| self.vocabulary[w].clone()).collect()
    }
}

/// The two class pairs examined for confusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConfusablePair {
    #[serde(rename = "S&C")]
    SecretConfidential,
    #[serde(rename = "U&C")]
    UnclassifiedConfidential,
}

impl ConfusablePair {
    pub const ALL: [ConfusablePair; 2] =
        [ConfusablePair::SecretConfidential, ConfusablePair::UnclassifiedConfidential];

    pub fn classes(self) -> [SecurityClass; 2] {
        match self {
            ConfusablePair::SecretConfidential => [SecurityClass::S, SecurityClass::C],
            ConfusablePair::UnclassifiedConfidential => [SecurityClass::U, SecurityClass::C],
        }
    }

    pub fn contains(self, c: SecurityClass) -> bool {
        self.classes().contains(&c)
    }
}

impl fmt::Display for ConfusablePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConfusablePair::SecretConfidential => "S&C",
            ConfusablePair::UnclassifiedConfidential => "U&C",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicComposition {
    pub topic: usize,
    /// Document indices whose dominant topic is `topic`.
    pub members: Vec<usize>,
    pub counts: [usize; 3],
    /// Indexed by [`SecurityClass::index`].
    pub fractions: [f64; 3],
    pub flagged: Vec<ConfusablePair>,
}

impl TopicComposition {
    pub fn fraction(&self, c: SecurityClass) -> f64 {
        self.fractions[c.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionSummary {
    pub topics: Vec<TopicComposition>,
    /// Topics without any member.
    pub empty_topics: Vec<usize>,
}

pub fn topic_class_composition(
    model: &TopicModel,
    labels: &[SecurityClass],
) -> Result<CompositionSummary, LdaError> {
    if labels.len() != model.n_documents() {
        return Err(LdaError::LabelCountMismatch {
            labels: labels.len(),
            documents: model.n_documents(),
        });
    }
    let mut members = vec![Vec::new(); model.k];
    for d in 0..model.n_documents() {
        members[model.dominant_topic(d)?].push(d);
    }
    let mut topics = Vec::new();
    let mut empty_topics = Vec::new();
    for (topic, m) in members.into_iter().enumerate() {
        if m.is_empty() {
            empty_topics.push(topic);
            continue;
        }
        let mut counts = [0usize; 3];
        for &d in &m {
            counts[labels[d].index()] += 1;
        }
        let n = m.len() as f64;
        topics.push(TopicComposition {
            topic,
            members: m,
            counts,
            fractions: counts.map(|c| c as f64 / n),
            flagged: Vec::new(),
        });
    }
    Ok(CompositionSummary { topics, empty_topics })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PurityThresholds {
    /// `(lower, upper)` per class, indexed by [`SecurityClass::index`].
    /// A class absent from training gets the empty band `(0, 0)`.
    pub bands: [(f64, f64); 3],
}

impl PurityThresholds {
    pub fn new(bands: [(f64, f64); 3]) -> Result<Self, LdaError> {
        for (c, (lo, hi)) in SecurityClass::ALL.iter().zip(bands) {
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) || (lo == hi && hi > 0.0) {
                return Err(LdaError::BadFractions(format!("band for {c} is [{lo}, {hi}]")));
            }
        }
        Ok(PurityThresholds { bands })
    }

    pub fn lower(&self, c: SecurityClass) -> f64 {
        self.bands[c.index()].0
    }

    pub fn upper(&self, c: SecurityClass) -> f64 {
        self.bands[c.index()].1
    }

    pub fn contains(&self, c: SecurityClass, fraction: f64) -> bool {
        let (lo, hi) = self.bands[c.index()];
        lo < hi && lo <= fraction && fraction <= hi
    }
}

pub const DEFAULT_LO_FACTOR: f64 = 0.5;
pub const DEFAULT_HI_FACTOR: f64 = 1.5;

/// `lower = lo·p_c`, `upper = min(1, hi·p_c)` for each class fraction.
pub fn derive_thresholds(
    fractions: [f64; 3],
    lo_factor: f64,
    hi_factor: f64,
) -> Result<PurityThresholds, LdaError> {
    if !(lo_factor > 0.0 && lo_factor < hi_factor && hi_factor.is_finite()) {
        return Err(LdaError::BadFractions(format!(
            "factors must satisfy 0 < lo < hi, got {lo_factor}, {hi_factor}"
        )));
    }
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-9 {
        return Err(LdaError::BadFractions(format!("{fractions:?} do not sum to 1")));
    }
    PurityThresholds::new(fractions.map(|p| (lo_factor * p, (hi_factor * p).min(1.0))))
}

pub fn class_fractions(labels: &[SecurityClass]) -> [f64; 3] {
    let mut counts = [0usize; 3];
    for l in labels {
        counts[l.index()] += 1;
    }
    let n = labels.len().max(1) as f64;
    counts.map(|c| c as f64 / n)
}

/// Pairs whose two class fractions both fall inside their bands. U&S is
/// never examined.
pub fn impure_pairs(comp: &TopicComposition, thresholds: &PurityThresholds) -> Vec<ConfusablePair> {
    ConfusablePair::ALL
        .into_iter()
        .filter(|pair| pair.classes().iter().all(|&c| thresholds.contains(c, comp.fraction(c))))
        .collect()
}

pub fn flag_impure_topics(
    compositions: &[TopicComposition],
    thresholds: &PurityThresholds,
) -> BTreeSet<(usize, ConfusablePair)> {
    compositions
        .iter()
        .flat_map(|c| impure_pairs(c, thresholds).into_iter().map(move |p| (c.topic, p)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PruneConfig {
    /// `None` means `max(10, n_train / 500)`.
    pub k_main: Option<usize>,
    /// `None` means `max(5, n_extracted / 200)`.
    pub k_sub: Option<usize>,
    /// `None` means `50 / K` for each pass.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub lo_factor: f64,
    pub hi_factor: f64,
    /// Overrides the bands derived from the training class fractions.
    pub thresholds: Option<PurityThresholds>,
    pub seed: u64,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig {
            k_main: None,
            k_sub: None,
            alpha: None,
            beta: 0.01,
            iterations: 500,
            lo_factor: DEFAULT_LO_FACTOR,
            hi_factor: DEFAULT_HI_FACTOR,
            thresholds: None,
            seed: 0,
        }
    }
}

pub fn default_k_main(n_train: usize) -> usize {
    (n_train / 500).max(10)
}

pub fn default_k_sub(n_extracted: usize) -> usize {
    (n_extracted / 200).max(5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub paragraph_id: ParagraphId,
    pub pass: u8,
    pub topic: usize,
    pub pair: ConfusablePair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicEntry {
    pub index: usize,
    pub top_words: Vec<String>,
    pub size: usize,
    pub class_fractions: BTreeMap<SecurityClass, f64>,
    pub flagged_pair: Vec<ConfusablePair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct TopicReport {
    pub K: usize,
    pub seed: u64,
    pub topics: Vec<TopicEntry>,
}

pub fn topic_report(model: &TopicModel, summary: &CompositionSummary, top_n: usize) -> TopicReport {
    let topics = summary
        .topics
        .iter()
        .map(|c| TopicEntry {
            index: c.topic,
            top_words: model.top_words(c.topic, top_n),
            size: c.members.len(),
            class_fractions: SecurityClass::ALL
                .iter()
                .filter(|k| c.counts[k.index()] > 0)
                .map(|&k| (k, c.fraction(k)))
                .collect(),
            flagged_pair: c.flagged.clone(),
        })
        .collect();
    TopicReport { K: model.k, seed: model.seed, topics }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneOutcome {
    pub pruned: Vec<Paragraph>,
    pub removals: Vec<Removal>,
    pub thresholds: PurityThresholds,
    pub k_main: usize,
    pub k_sub: Option<usize>,
    pub n_extracted: usize,
    pub main_topics: TopicReport,
    pub sub_topics: Option<TopicReport>,
}

/// CSV with header `paragraph_id,pass,topic,pair`.
pub fn removal_report_csv(removals: &[Removal]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["paragraph_id", "pass", "topic", "pair"]).unwrap();
    for r in removals {
        w.write_record([
            r.paragraph_id.to_string(),
            r.pass.to_string(),
            r.topic.to_string(),
            r.pair.to_string(),
        ])
        .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

fn clamp_k(k: usize, tokens: &[Vec<String>]) -> usize {
    let vocab = tokens.iter().flatten().collect::<BTreeSet<_>>().len();
    k.min(vocab)
}

fn modeled_composition(
    tokens: Vec<Vec<String>>,
    labels: &[SecurityClass],
    config: &LdaConfig,
    thresholds: &PurityThresholds,
) -> Result<(TopicModel, CompositionSummary), LdaError> {
    let model = {
        let mut s = GibbsSampler::from_tokens(tokens, config)?;
        for _ in 0..config.iterations {
            s.sweep();
        }
        s.model()
    };
    let mut summary = topic_class_composition(&model, labels)?;
    for c in &mut summary.topics {
        c.flagged = impure_pairs(c, thresholds);
    }
    Ok((model, summary))
}

/// Fits one topic model over `paragraphs` and reports every populated
/// topic with its class fractions and the confusable pairs flagged against
/// bands derived from the paragraphs' own class fractions.
pub fn describe_topics(
    paragraphs: &[Paragraph],
    config: &LdaConfig,
    lo_factor: f64,
    hi_factor: f64,
    top_n: usize,
) -> Result<(TopicReport, PurityThresholds), LdaError> {
    if paragraphs.is_empty() {
        return Err(LdaError::EmptyCorpus);
    }
    let labels: Vec<SecurityClass> = paragraphs.iter().map(|p| p.label).collect();
    let thresholds = derive_thresholds(class_fractions(&labels), lo_factor, hi_factor)?;
    let tok = lda_tokenizer();
    let tokens: Vec<Vec<String>> = paragraphs.iter().map(|p| tokenize(&p.text, &tok)).collect();
    let (model, summary) = modeled_composition(tokens, &labels, config, &thresholds)?;
    Ok((topic_report(&model, &summary, top_n), thresholds))
}

/// Pass 1 models the full training set and extracts the conditioned-pair
/// members of impure main topics. Pass 2 models all extracted instances
/// together; conditioned-pair members of impure subtopics are removed and
/// every other extracted instance goes back to the training set.
pub fn prune_training_set(train: &[Paragraph], config: &PruneConfig) -> Result<PruneOutcome, LdaError> {
    if train.is_empty() {
        return Err(LdaError::EmptyCorpus);
    }
    let labels: Vec<SecurityClass> = train.iter().map(|p| p.label).collect();
    let thresholds = match config.thresholds {
        Some(t) => t,
        None => derive_thresholds(class_fractions(&labels), config.lo_factor, config.hi_factor)?,
    };
    let tok = lda_tokenizer();
    let tokens: Vec<Vec<String>> = train.iter().map(|p| tokenize(&p.text, &tok)).collect();

    let k_main = clamp_k(config.k_main.unwrap_or_else(|| default_k_main(train.len())), &tokens);
    let main_cfg = LdaConfig {
        k: k_main,
        alpha: config.alpha,
        beta: config.beta,
        iterations: config.iterations,
        seed: config.seed,
    };
    let (main_model, main_summary) =
        modeled_composition(tokens.clone(), &labels, &main_cfg, &thresholds)?;
    let main_topics = topic_report(&main_model, &main_summary, 10);

    let mut extracted: Vec<usize> = Vec::new();
    for comp in &main_summary.topics {
        if comp.flagged.is_empty() {
            continue;
        }
        extracted.extend(
            comp.members
                .iter()
                .copied()
                .filter(|&d| comp.flagged.iter().any(|p| p.contains(labels[d]))),
        );
    }
    extracted.sort_unstable();

    let mut removals = Vec::new();
    let mut removed = vec![false; train.len()];
    let mut k_sub = None;
    let mut sub_topics = None;
    if !extracted.is_empty() {
        let sub_tokens: Vec<Vec<String>> = extracted.iter().map(|&d| tokens[d].clone()).collect();
        let k = clamp_k(config.k_sub.unwrap_or_else(|| default_k_sub(extracted.len())), &sub_tokens);
        if k >= 2 {
            let sub_labels: Vec<SecurityClass> = extracted.iter().map(|&d| labels[d]).collect();
            let sub_cfg = LdaConfig {
                k,
                alpha: config.alpha,
                beta: config.beta,
                iterations: config.iterations,
                seed: config.seed.wrapping_add(1),
            };
            let (sub_model, sub_summary) =
                modeled_composition(sub_tokens, &sub_labels, &sub_cfg, &thresholds)?;
            for comp in &sub_summary.topics {
                for &m in &comp.members {
                    let d = extracted[m];
                    if let Some(pair) = comp.flagged.iter().find(|p| p.contains(labels[d])) {
                        removed[d] = true;
                        removals.push(Removal {
                            paragraph_id: train[d].id.clone(),
                            pass: 2,
                            topic: comp.topic,
                            pair: *pair,
                        });
                    }
                }
            }
            k_sub = Some(k);
            sub_topics = Some(topic_report(&sub_model, &sub_summary, 10));
        }
    }
    removals.sort_by(|a, b| a.paragraph_id.cmp(&b.paragraph_id));

    let pruned: Vec<Paragraph> =
        train.iter().zip(&removed).filter(|(_, &r)| !r).map(|(p, _)| p.clone()).collect();
    let before: BTreeSet<SecurityClass> = labels.iter().copied().collect();
    let after: BTreeSet<SecurityClass> = pruned.iter().map(|p| p.label).collect();
    if pruned.is_empty() || before != after {
        let missing: Vec<String> = before.difference(&after).map(|c| c.to_string()).collect();
        return Err(LdaError::EverythingPruned {
            removed: removals.len(),
            reason: if pruned.is_empty() {
                "no instances left".into()
            } else {
                format!("classes {} lost", missing.join(","))
            },
            report: removal_report_csv(&removals),
        });
    }
    Ok(PruneOutcome {
        pruned,
        removals,
        thresholds,
        k_main,
        k_sub,
        n_extracted: extracted.len(),
        main_topics,
        sub_topics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use SecurityClass::*;

    fn bimodal(n: usize, seed: u64) -> Vec<String> {
        let a = ["cat", "pet", "fur", "paw", "kitten", "whisker", "purr", "leash"];
        let b = ["bond", "yield", "market", "equity", "coupon", "broker", "index", "dividend"];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let words = if i % 2 == 0 { &a } else { &b };
                (0..20).map(|_| words[rng.gen_range(0..8)]).collect::<Vec<_>>().join(" ")
            })
            .collect()
    }

    #[test]
    fn separates_disjoint_vocabularies() {
        let texts = bimodal(60, 1);
        let cfg = LdaConfig { iterations: 200, ..LdaConfig::new(2, 7) };
        let m = fit_lda_gibbs(&texts, &cfg).unwrap();
        let group_a: BTreeSet<&str> =
            ["cat", "pet", "fur", "paw", "kitten", "whisker", "purr", "leash"].into();
        for t in 0..2 {
            let top = m.top_words(t, 5);
            let in_a = top.iter().filter(|w| group_a.contains(w.as_str())).count();
            assert!(in_a == 0 || in_a == 5, "{top:?}");
        }
    }

    #[test]
    fn single_document_normalizes() {
        let m = fit_lda_gibbs(&["alpha beta gamma alpha"], &LdaConfig { iterations: 5, ..LdaConfig::new(2, 0) })
            .unwrap();
        let theta = m.theta(0).unwrap();
        assert!((theta.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for row in m.phi() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert_eq!(m.doc_topic[0].iter().sum::<u32>(), 4);
        assert_eq!(m.theta(1), Err(LdaError::OutOfRange(1)));
    }

    #[test]
    fn config_errors() {
        assert_eq!(fit_lda_gibbs(&["the of"], &LdaConfig::new(2, 0)), Err(LdaError::EmptyCorpus));
        assert_eq!(
            fit_lda_gibbs(&["alpha beta"], &LdaConfig::new(3, 0)),
            Err(LdaError::KTooLarge { k: 3, vocab: 2 })
        );
        assert!(matches!(fit_lda_gibbs(&["alpha beta"], &LdaConfig::new(1, 0)), Err(LdaError::BadConfig(_))));
    }

    #[test]
    fn same_seed_same_assignments() {
        let texts = bimodal(20, 3);
        let cfg = LdaConfig { iterations: 30, ..LdaConfig::new(3, 11) };
        assert_eq!(fit_lda_gibbs(&texts, &cfg).unwrap(), fit_lda_gibbs(&texts, &cfg).unwrap());
    }

    #[test]
    fn conservation_after_every_sweep() {
        let texts = bimodal(30, 4);
        let mut s = GibbsSampler::new(&texts, &LdaConfig::new(4, 2)).unwrap();
        for _ in 0..20 {
            s.sweep();
            assert_eq!(s.topic_word_total(), s.n_tokens() as u64);
            assert!(s.counts_consistent());
        }
    }

    fn model_with_counts(doc_topic: Vec<Vec<u32>>) -> TopicModel {
        let k = doc_topic[0].len();
        TopicModel {
            k,
            alpha: 0.1,
            beta: 0.01,
            seed: 0,
            iterations: 0,
            vocabulary: vec!["w".into(); k],
            topic_word: vec![vec![0; k]; k],
            doc_topic,
            assignments: vec![],
        }
    }

    #[test]
    fn dominant_topic_ties_low() {
        let m = model_with_counts(vec![vec![0, 5, 0], vec![2, 2, 0], vec![0, 0, 0]]);
        assert_eq!(m.dominant_topic(0), Ok(1));
        assert_eq!(m.dominant_topic(1), Ok(0));
        assert_eq!(m.dominant_topic(2), Ok(0));
    }

    #[test]
    fn composition_counts() {
        let m = model_with_counts(vec![vec![3, 0], vec![3, 0], vec![3, 0], vec![3, 0]]);
        let s = topic_class_composition(&m, &[C, C, C, U]).unwrap();
        assert_eq!(s.topics.len(), 1);
        assert_eq!(s.empty_topics, vec![1]);
        assert_eq!(s.topics[0].fraction(C), 0.75);
        assert_eq!(s.topics[0].fraction(U), 0.25);
        assert!(matches!(
            topic_class_composition(&m, &[C]),
            Err(LdaError::LabelCountMismatch { .. })
        ));
    }

    #[test]
    fn threshold_rule() {
        let t = derive_thresholds([0.5, 0.3, 0.2], 0.5, 1.5).unwrap();
        assert!((t.lower(C) - 0.15).abs() < 1e-12 && (t.upper(C) - 0.45).abs() < 1e-12);
        let t = derive_thresholds([0.8, 0.1, 0.1], 0.5, 1.5).unwrap();
        assert_eq!(t.upper(U), 1.0);
        assert!(matches!(derive_thresholds([0.5, 0.3, 0.2], 1.0, 1.0), Err(LdaError::BadFractions(_))));
        assert!(matches!(derive_thresholds([0.5, 0.3, 0.3], 0.5, 1.5), Err(LdaError::BadFractions(_))));
    }

    fn comp(topic: usize, fractions: [f64; 3]) -> TopicComposition {
        TopicComposition { topic, members: vec![0], counts: [0; 3], fractions, flagged: vec![] }
    }

    #[test]
    fn flagging_examples() {
        let t = derive_thresholds([0.2, 0.4, 0.4], 0.5, 1.5).unwrap();
        let mixed = comp(0, [0.0, 0.5, 0.5]);
        let mostly_c = comp(1, [0.05, 0.9, 0.05]);
        let pure = comp(2, [0.0, 0.0, 1.0]);
        let flags = flag_impure_topics(&[mixed, mostly_c, pure], &t);
        assert_eq!(flags, [(0, ConfusablePair::SecretConfidential)].into());
        // U and S in band but never examined together.
        let us = comp(3, [0.2, 0.0, 0.4]);
        assert!(flag_impure_topics(&[us], &t).is_empty());
    }

    #[test]
    fn no_flag_is_a_no_op() {
        use crate::corpus::Document;
        let ym = crate::corpus::YearMonth { year: 2009, month: 1 };
        let doc = Document::from_parts(
            "X",
            ym,
            "1",
            S,
            "s",
            (0..40).map(|i| {
                if i % 2 == 0 {
                    (U, "weather harvest crops rainfall farmers".to_string())
                } else {
                    (S, "missile warhead launcher enrichment reactor".to_string())
                }
            }),
        );
        let cfg = PruneConfig { iterations: 50, k_main: Some(2), ..Default::default() };
        let out = prune_training_set(&doc.paragraphs, &cfg).unwrap();
        assert_eq!(out.pruned, doc.paragraphs);
        assert!(out.removals.is_empty());
        assert_eq!(removal_report_csv(&out.removals), "paragraph_id,pass,topic,pair\n");
    }

    proptest! {
        #[test]
        fn fractions_sum_to_one(labels in proptest::collection::vec(0usize..3, 1..60), seed in 0u64..100) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let doc_topic: Vec<Vec<u32>> =
                labels.iter().map(|_| (0..4).map(|_| rng.gen_range(0..5)).collect()).collect();
            let m = model_with_counts(doc_topic);
            let labels: Vec<SecurityClass> =
                labels.iter().map(|&i| SecurityClass::from_index(i).unwrap()).collect();
            let s = topic_class_composition(&m, &labels).unwrap();
            let total: usize = s.topics.iter().map(|t| t.members.len()).sum();
            prop_assert_eq!(total, labels.len());
            for t in &s.topics {
                prop_assert!((t.fractions.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn widening_bands_never_unflags(
            f in proptest::collection::vec(0.0f64..1.0, 3),
            p in proptest::collection::vec(0.05f64..1.0, 3),
            widen in 1.0f64..2.0,
        ) {
            let s: f64 = f.iter().sum::<f64>().max(1e-9);
            let c = comp(0, [f[0] / s, f[1] / s, f[2] / s]);
            let ps: f64 = p.iter().sum();
            let p = [p[0] / ps, p[1] / ps, p[2] / ps];
            let narrow = derive_thresholds(p, 0.5, 1.5).unwrap();
            let wide = derive_thresholds(p, 0.5 / widen, 1.5 * widen).unwrap();
            let a = flag_impure_topics(std::slice::from_ref(&c), &narrow);
            let b = flag_impure_topics(std::slice::from_ref(&c), &wide);
            prop_assert!(a.is_subset(&b));
        }
    }
}
