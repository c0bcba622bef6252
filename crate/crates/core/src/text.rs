//! Tokenization, vocabulary construction with tie-inclusive top-K
//! selection, and sparse TF-IDF / document-frequency / count vectors.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TextError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("no terms survive tokenization")]
    NoTermsSurvive,
    #[error("invalid vectorizer config: {0}")]
    BadConfig(String),
    #[error("sparse vector invariant violated: {0}")]
    BadVector(String),
}

const STOPWORDS_TXT: &str = include_str!("../data/stopwords.txt");

fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORDS_TXT
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect()
    })
}

/// SHA-256 of the built-in stopword list, hex encoded.
pub fn stopword_list_hash() -> String {
    hex::encode(Sha256::digest(STOPWORDS_TXT.as_bytes()))
}

pub fn is_stopword(term: &str) -> bool {
    stopwords().contains(term)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Tfidf,
    DocFrequency,
    Count,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    None,
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ngrams {
    pub unigrams: bool,
    pub bigrams: bool,
}

impl Ngrams {
    pub const UNIGRAMS: Ngrams = Ngrams { unigrams: true, bigrams: false };
    pub const UNI_AND_BIGRAMS: Ngrams = Ngrams { unigrams: true, bigrams: true };
}

/// Serde form of an optional feature cap: a count, or `"all"` for no cap.
/// Config files are TOML, which has no null.
pub mod feature_cap {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    pub(crate) enum Cap {
        Count(usize),
        Word(String),
    }

    impl Cap {
        pub(crate) fn from_option(v: Option<usize>) -> Self {
            v.map_or_else(|| Cap::Word("all".into()), Cap::Count)
        }

        pub(crate) fn into_option<E: serde::de::Error>(self) -> Result<Option<usize>, E> {
            match self {
                Cap::Count(n) => Ok(Some(n)),
                Cap::Word(w) if w == "all" => Ok(None),
                Cap::Word(w) => Err(E::custom(format!("expected a count or \"all\", got `{w}`"))),
            }
        }
    }

    pub fn serialize<S: Serializer>(v: &Option<usize>, s: S) -> Result<S::Ok, S::Error> {
        Cap::from_option(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<usize>, D::Error> {
        Cap::deserialize(d)?.into_option()
    }

    /// The same encoding for a list of caps.
    pub mod list {
        use super::Cap;
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(v: &[Option<usize>], s: S) -> Result<S::Ok, S::Error> {
            v.iter().map(|c| Cap::from_option(*c)).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Option<usize>>, D::Error> {
            Vec::<Cap>::deserialize(d)?.into_iter().map(Cap::into_option).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct VectorizerConfig {
    pub weighting: Weighting,
    pub ngrams: Ngrams,
    /// `None` keeps every term.
    #[serde(with = "feature_cap")]
    pub max_features: Option<usize>,
    pub normalization: Normalization,
    pub alphabetic_only: bool,
    pub remove_stopwords: bool,
    pub min_token_len: usize,
}

impl Default for VectorizerConfig {
    fn default() -> Self {
        VectorizerConfig {
            weighting: Weighting::Tfidf,
            ngrams: Ngrams::UNIGRAMS,
            max_features: None,
            normalization: Normalization::None,
            alphabetic_only: true,
            remove_stopwords: true,
            min_token_len: 2,
        }
    }
}

impl VectorizerConfig {
    pub fn validate(&self) -> Result<(), TextError> {
        if !self.ngrams.unigrams && !self.ngrams.bigrams {
            return Err(TextError::BadConfig("ngram range is empty".into()));
        }
        if self.max_features == Some(0) {
            return Err(TextError::BadConfig("max_features must be at least 1".into()));
        }
        Ok(())
    }

    /// Two configs tokenize identically when these fields agree.
    fn same_tokenization(&self, other: &VectorizerConfig) -> bool {
        self.ngrams == other.ngrams
            && self.alphabetic_only == other.alphabetic_only
            && self.remove_stopwords == other.remove_stopwords
            && self.min_token_len == other.min_token_len
    }
}

/// Lowercased tokens split on non-letter boundaries (non-alphanumeric when
/// `alphabetic_only` is off), stopwords removed, bigrams appended after
/// the unigrams.
pub fn tokenize(text: &str, config: &VectorizerConfig) -> Vec<String> {
    let lower = text.to_lowercase();
    let words = lower
        .split(|c: char| {
            if config.alphabetic_only {
                !c.is_alphabetic()
            } else {
                !c.is_alphanumeric()
            }
        })
        .filter(|w| !w.is_empty())
        .filter(|w| w.chars().count() >= config.min_token_len.max(1))
        .filter(|w| !(config.remove_stopwords && is_stopword(w)));
    let words: Vec<&str> = words.collect();

    let mut out = Vec::new();
    if config.ngrams.unigrams {
        out.extend(words.iter().map(|w| w.to_string()));
    }
    if config.ngrams.bigrams {
        out.extend(words.windows(2).map(|p| format!("{} {}", p[0], p[1])));
    }
    out
}

pub type TermCounts = HashMap<String, u32>;

pub fn term_counts(text: &str, config: &VectorizerConfig) -> TermCounts {
    let mut counts = TermCounts::new();
    for t in tokenize(text, config) {
        *counts.entry(t).or_insert(0) += 1;
    }
    counts
}

/// Smoothed IDF: `ln((1 + N) / (1 + df)) + 1`.
pub fn idf(n_documents: usize, df: u32) -> f64 {
    ((1.0 + n_documents as f64) / (1.0 + df as f64)).ln() + 1.0
}

/// Tokenized corpus: per-document term counts and corpus document
/// frequencies. Reused across vocabularies that share tokenization.
#[derive(Debug, Clone)]
pub struct CorpusCounts {
    config: VectorizerConfig,
    docs: Vec<TermCounts>,
    df: HashMap<String, u32>,
}

impl CorpusCounts {
    pub fn new<S: AsRef<str> + Sync>(texts: &[S], config: &VectorizerConfig) -> Self {
        let docs: Vec<TermCounts> = texts
            .par_iter()
            .map(|t| term_counts(t.as_ref(), config))
            .collect();
        let df = docs
            .par_iter()
            .fold(HashMap::new, |mut acc: HashMap<String, u32>, d| {
                for term in d.keys() {
                    *acc.entry(term.clone()).or_insert(0) += 1;
                }
                acc
            })
            .reduce(HashMap::new, |mut a, b| {
                for (k, v) in b {
                    *a.entry(k).or_insert(0) += v;
                }
                a
            });
        CorpusCounts { config: config.clone(), docs, df }
    }

    pub fn documents(&self) -> &[TermCounts] {
        &self.docs
    }

    pub fn n_documents(&self) -> usize {
        self.docs.len()
    }

    pub fn document_frequency(&self, term: &str) -> u32 {
        self.df.get(term).copied().unwrap_or(0)
    }

    /// Corpus-level score per term under `weighting`: the maximum
    /// per-document tf-idf, the raw document frequency, or the total count.
    pub fn scores(&self, weighting: Weighting) -> HashMap<String, f64> {
        let n = self.docs.len();
        match weighting {
            Weighting::DocFrequency => {
                self.df.iter().map(|(t, &df)| (t.clone(), df as f64)).collect()
            }
            Weighting::Count => {
                let mut total: HashMap<String, f64> = HashMap::new();
                for d in &self.docs {
                    for (t, &c) in d {
                        *total.entry(t.clone()).or_insert(0.0) += c as f64;
                    }
                }
                total
            }
            Weighting::Tfidf => {
                let mut best: HashMap<String, f64> = HashMap::new();
                for d in &self.docs {
                    for (t, &c) in d {
                        let w = c as f64 * idf(n, self.df[t]);
                        let e = best.entry(t.clone()).or_insert(w);
                        if w > *e {
                            *e = w;
                        }
                    }
                }
                best
            }
        }
    }
}

/// All terms scoring strictly above the K-th highest score plus every term
/// tied with it.
pub fn select_top_features(scores: &HashMap<String, f64>, k: usize) -> BTreeSet<String> {
    let k = k.max(1);
    if scores.len() <= k {
        return scores.keys().cloned().collect();
    }
    let mut values: Vec<f64> = scores.values().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    let cutoff = values[k - 1];
    scores
        .iter()
        .filter(|(_, &s)| s >= cutoff)
        .map(|(t, _)| t.clone())
        .collect()
}

/// True when a top-`k` cut falls inside a run of equal scores, so the
/// tie-inclusive selection keeps more than `k` terms.
pub fn cutoff_is_tied(scores: &HashMap<String, f64>, k: usize) -> bool {
    let k = k.max(1);
    if scores.len() <= k {
        return false;
    }
    let mut values: Vec<f64> = scores.values().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values[k - 1] == values[k]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermStats {
    pub term: String,
    pub index: usize,
    pub df: u32,
    pub score: f64,
}

/// Dense term indices `0..len`, ordered lexicographically by term.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    n_documents: usize,
    terms: Vec<TermStats>,
    lookup: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    n_documents: usize,
    terms: Vec<TermStats>,
}

impl Serialize for Vocabulary {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        VocabularyFile { n_documents: self.n_documents, terms: self.terms.clone() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let mut f = VocabularyFile::deserialize(d)?;
        f.terms.sort_by_key(|t| t.index);
        if f.terms.iter().enumerate().any(|(i, t)| t.index != i) {
            return Err(serde::de::Error::custom("vocabulary indices are not dense"));
        }
        Ok(Vocabulary::from_terms(f.n_documents, f.terms))
    }
}

impl Vocabulary {
    fn from_terms(n_documents: usize, terms: Vec<TermStats>) -> Self {
        let lookup = terms.iter().map(|t| (t.term.clone(), t.index)).collect();
        Vocabulary { n_documents, terms, lookup }
    }

    pub fn from_counts(counts: &CorpusCounts, config: &VectorizerConfig) -> Result<Self, TextError> {
        config.validate()?;
        if !counts.config.same_tokenization(config) {
            return Err(TextError::BadConfig("corpus counts were tokenized differently".into()));
        }
        if counts.n_documents() == 0 {
            return Err(TextError::EmptyCorpus);
        }
        let scores = counts.scores(config.weighting);
        if scores.is_empty() {
            return Err(TextError::NoTermsSurvive);
        }
        let selected = match config.max_features {
            Some(k) => select_top_features(&scores, k),
            None => scores.keys().cloned().collect(),
        };
        let terms = selected
            .into_iter()
            .enumerate()
            .map(|(index, term)| TermStats {
                df: counts.document_frequency(&term),
                score: scores[&term],
                term,
                index,
            })
            .collect();
        Ok(Self::from_terms(counts.n_documents(), terms))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_documents(&self) -> usize {
        self.n_documents
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.lookup.get(term).copied()
    }

    pub fn terms(&self) -> &[TermStats] {
        &self.terms
    }

    pub fn term(&self, index: usize) -> Option<&str> {
        self.terms.get(index).map(|t| t.term.as_str())
    }
}

pub fn build_vocabulary<S: AsRef<str> + Sync>(
    texts: &[S],
    config: &VectorizerConfig,
) -> Result<Vocabulary, TextError> {
    config.validate()?;
    if texts.is_empty() {
        return Err(TextError::EmptyCorpus);
    }
    Vocabulary::from_counts(&CorpusCounts::new(texts, config), config)
}

/// Sorted `(index, weight)` pairs with no explicit zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    dim: usize,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVector {
    pub fn zeros(dim: usize) -> Self {
        SparseVector { dim, indices: Vec::new(), values: Vec::new() }
    }

    pub fn new(dim: usize, entries: Vec<(usize, f64)>) -> Result<Self, TextError> {
        let mut indices = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        let mut last: Option<usize> = None;
        for (i, v) in entries {
            if i >= dim {
                return Err(TextError::BadVector(format!("index {i} >= dimension {dim}")));
            }
            if last.is_some_and(|l| i <= l) {
                return Err(TextError::BadVector("indices not strictly increasing".into()));
            }
            last = Some(i);
            if v != 0.0 {
                indices.push(i as u32);
                values.push(v);
            }
        }
        Ok(SparseVector { dim, indices, values })
    }

    /// Builds from a dense slice, dropping zeros.
    pub fn from_dense(dense: &[f64]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i as u32, *v))
            .unzip();
        SparseVector { dim: dense.len(), indices, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().map(|&i| i as usize).zip(self.values.iter().copied())
    }

    pub fn get(&self, index: usize) -> f64 {
        match self.indices.binary_search(&(index as u32)) {
            Ok(p) => self.values[p],
            Err(_) => 0.0,
        }
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * dense[i]).sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            d[i] = v;
        }
        d
    }

    pub fn normalize(&mut self, mode: Normalization) {
        let norm = match mode {
            Normalization::None => return,
            Normalization::L1 => self.values.iter().map(|v| v.abs()).sum::<f64>(),
            Normalization::L2 => self.squared_norm().sqrt(),
        };
        if norm > 0.0 {
            for v in &mut self.values {
                *v /= norm;
            }
        }
    }
}

pub fn vectorize_counts(
    counts: &TermCounts,
    vocab: &Vocabulary,
    config: &VectorizerConfig,
) -> SparseVector {
    let mut entries: Vec<(usize, f64)> = counts
        .iter()
        .filter_map(|(term, &tf)| {
            let idx = vocab.index_of(term)?;
            let stats = &vocab.terms[idx];
            let w = match config.weighting {
                Weighting::Tfidf => tf as f64 * idf(vocab.n_documents, stats.df),
                Weighting::DocFrequency => stats.df as f64,
                Weighting::Count => tf as f64,
            };
            Some((idx, w))
        })
        .collect();
    entries.sort_unstable_by_key(|e| e.0);
    let mut v = SparseVector::new(vocab.len(), entries).expect("vocabulary indices are dense");
    v.normalize(config.normalization);
    v
}

pub fn vectorize(text: &str, vocab: &Vocabulary, config: &VectorizerConfig) -> SparseVector {
    vectorize_counts(&term_counts(text, config), vocab, config)
}

/// A vocabulary bundled with the config it was built with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vectorizer {
    pub config: VectorizerConfig,
    pub vocabulary: Vocabulary,
}

impl Vectorizer {
    pub fn fit<S: AsRef<str> + Sync>(texts: &[S], config: &VectorizerConfig) -> Result<Self, TextError> {
        Ok(Vectorizer { config: config.clone(), vocabulary: build_vocabulary(texts, config)? })
    }

    pub fn transform(&self, text: &str) -> SparseVector {
        vectorize(text, &self.vocabulary, &self.config)
    }

    pub fn transform_all<S: AsRef<str> + Sync>(&self, texts: &[S]) -> Vec<SparseVector> {
        texts.par_iter().map(|t| self.transform(t.as_ref())).collect()
    }

    pub fn dim(&self) -> usize {
        self.vocabulary.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cutoff_tie_detection() {
        let m = |v: &[f64]| -> HashMap<String, f64> {
            v.iter().enumerate().map(|(i, &s)| (format!("t{i}"), s)).collect()
        };
        assert!(cutoff_is_tied(&m(&[3.0, 2.0, 2.0, 1.0]), 2));
        assert!(!cutoff_is_tied(&m(&[3.0, 2.0, 2.0, 1.0]), 3));
        assert!(!cutoff_is_tied(&m(&[1.0, 1.0]), 2));
        let s = m(&[3.0, 2.0, 2.0, 1.0]);
        assert_eq!(select_top_features(&s, 2).len() > 2, cutoff_is_tied(&s, 2));
    }

    fn letters() -> VectorizerConfig {
        VectorizerConfig { min_token_len: 1, remove_stopwords: false, ..Default::default() }
    }

    #[test]
    fn tokenize_examples() {
        let cfg = VectorizerConfig::default();
        assert_eq!(
            tokenize("The embassy reported 3 incidents.", &cfg),
            vec!["embassy", "reported", "incidents"]
        );
        assert!(tokenize("", &cfg).is_empty());
        let bi = VectorizerConfig { ngrams: Ngrams::UNI_AND_BIGRAMS, ..cfg.clone() };
        assert_eq!(
            tokenize("prime minister visit", &bi),
            vec!["prime", "minister", "visit", "prime minister", "minister visit"]
        );
    }

    #[test]
    fn digits_and_short_tokens() {
        let cfg = VectorizerConfig::default();
        assert_eq!(tokenize("a b4 x9y zz", &cfg), vec!["zz"]);
        let alnum = VectorizerConfig { alphabetic_only: false, ..cfg };
        assert_eq!(tokenize("a b4 x9y zz", &alnum), vec!["b4", "x9y", "zz"]);
    }

    #[test]
    fn df_vocabulary() {
        let cfg = VectorizerConfig { weighting: Weighting::DocFrequency, ..letters() };
        let v = build_vocabulary(&["a b", "b c", "b"], &cfg).unwrap();
        let df: Vec<(&str, u32)> = v.terms().iter().map(|t| (t.term.as_str(), t.df)).collect();
        assert_eq!(df, vec![("a", 1), ("b", 3), ("c", 1)]);
        assert_eq!(v.n_documents(), 3);
    }

    #[test]
    fn count_vocabulary_single_doc() {
        let cfg = VectorizerConfig { weighting: Weighting::Count, ..letters() };
        let v = build_vocabulary(&["x x y"], &cfg).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.terms()[0].score, 2.0);
    }

    #[test]
    fn vocabulary_errors() {
        let cfg = VectorizerConfig::default();
        let empty: [&str; 0] = [];
        assert_eq!(build_vocabulary(&empty, &cfg), Err(TextError::EmptyCorpus));
        assert_eq!(build_vocabulary(&["the of 12"], &cfg), Err(TextError::NoTermsSurvive));
    }

    #[test]
    fn tfidf_hand_evaluation() {
        let cfg = letters();
        let v = build_vocabulary(&["a b", "b c", "b"], &cfg).unwrap();
        let x = vectorize("a a b", &v, &cfg);
        let a = v.index_of("a").unwrap();
        let b = v.index_of("b").unwrap();
        assert_eq!(x.get(a), 2.0 * ((4.0f64 / 2.0).ln() + 1.0));
        assert_eq!(x.get(b), 1.0);
        assert_eq!(x.nnz(), 2);
    }

    #[test]
    fn oov_gives_zero_vector() {
        let cfg = letters();
        let v = build_vocabulary(&["a b", "b c", "b"], &cfg).unwrap();
        let x = vectorize("z z z", &v, &cfg);
        assert_eq!(x.nnz(), 0);
        assert_eq!(x.dim(), 3);
    }

    #[test]
    fn l2_and_l1_normalization() {
        let v = build_vocabulary(&["alpha beta beta", "gamma"], &VectorizerConfig::default()).unwrap();
        let l2 = VectorizerConfig { normalization: Normalization::L2, ..Default::default() };
        let x = vectorize("alpha beta beta gamma", &v, &l2);
        assert!((x.squared_norm().sqrt() - 1.0).abs() < 1e-12);
        let l1 = VectorizerConfig { normalization: Normalization::L1, ..Default::default() };
        let y = vectorize("alpha beta beta gamma", &v, &l1);
        assert!((y.iter().map(|(_, w)| w.abs()).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn top_features_ties() {
        let scores: HashMap<String, f64> =
            [("a", 5.0), ("b", 4.0), ("c", 4.0), ("d", 3.0)].map(|(k, v)| (k.to_string(), v)).into();
        let sel: Vec<_> = select_top_features(&scores, 2).into_iter().collect();
        assert_eq!(sel, vec!["a", "b", "c"]);
        let flat: HashMap<String, f64> = [("a", 1.0), ("b", 1.0), ("c", 1.0)].map(|(k, v)| (k.to_string(), v)).into();
        assert_eq!(select_top_features(&flat, 1).len(), 3);
    }

    #[test]
    fn sparse_vector_invariants() {
        assert!(SparseVector::new(3, vec![(1, 1.0), (1, 2.0)]).is_err());
        assert!(SparseVector::new(3, vec![(3, 1.0)]).is_err());
        let v = SparseVector::new(3, vec![(0, 0.0), (2, 1.5)]).unwrap();
        assert_eq!(v.nnz(), 1);
    }

    #[test]
    fn vocabulary_json_shape() {
        let v = build_vocabulary(&["alpha beta", "beta"], &VectorizerConfig::default()).unwrap();
        let json = serde_json::to_value(&v).unwrap();
        assert_eq!(json["n_documents"], 2);
        assert_eq!(json["terms"][1]["term"], "beta");
        assert_eq!(json["terms"][1]["index"], 1);
        assert_eq!(json["terms"][1]["df"], 2);
        let back: Vocabulary = serde_json::from_value(json).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn stopword_hash_is_stable() {
        assert_eq!(stopword_list_hash().len(), 64);
        assert!(is_stopword("the") && !is_stopword("embassy"));
    }

    proptest! {
        #[test]
        fn unigram_tokenize_idempotent(text in "[a-zA-Z0-9 ,.]{0,80}") {
            let cfg = VectorizerConfig::default();
            let once = tokenize(&text, &cfg);
            let twice = tokenize(&once.join(" "), &cfg);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn idf_decreasing_in_df(n in 1usize..1000, a in 1u32..500, b in 1u32..500) {
            prop_assume!(a < b);
            prop_assert!(idf(n, a) > idf(n, b));
        }
    }
}
