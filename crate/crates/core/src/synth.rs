//! Deterministic synthetic cable corpora with planted similarity groups,
//! group-local class vocabularies and optional confusable S/C paragraphs.
//!
//! Each group has its own background vocabulary. Three marker sets are
//! rotated across groups, so marker set `(c + g) % 3` signals class `c` in
//! group `g`: a marker word means different classes in different groups.
//! A weaker set of global class markers carries the same meaning
//! everywhere. Confusable paragraphs draw mostly from one shared vocabulary
//! and are labeled S or C at random.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{derive_document_label, Document, SecurityClass, YearMonth};
use crate::text::is_stopword;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    BadSpec(String),
}

/// Relative token-source weights for ordinary paragraphs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenShares {
    pub background: f64,
    pub common: f64,
    pub local_marker: f64,
    pub global_marker: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_documents: usize,
    /// Inclusive range.
    pub paragraphs_per_document: (usize, usize),
    /// Inclusive range.
    pub words_per_paragraph: (usize, usize),
    /// Class mixture ordered U, C, S.
    pub mixture: [f64; 3],
    /// Optional per-group class mixtures overriding `mixture`; one entry
    /// per group when non-empty.
    pub group_mixtures: Vec<[f64; 3]>,
    pub n_groups: usize,
    pub background_vocab: usize,
    pub common_vocab: usize,
    pub marker_vocab: usize,
    pub global_marker_vocab: usize,
    pub shares: TokenShares,
    /// Probability that a paragraph is a confusable S/C paragraph.
    pub confusable_rate: f64,
    pub confusable_vocab: usize,
    /// Share of confusable-vocabulary tokens in a confusable paragraph; the
    /// rest are class markers of a random class.
    pub confusable_share: f64,
    pub origin: String,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_documents: 300,
            paragraphs_per_document: (3, 7),
            words_per_paragraph: (20, 40),
            mixture: [0.4, 0.3, 0.3],
            group_mixtures: Vec::new(),
            n_groups: 3,
            background_vocab: 400,
            common_vocab: 100,
            marker_vocab: 40,
            global_marker_vocab: 30,
            shares: TokenShares {
                background: 0.51,
                common: 0.15,
                local_marker: 0.3,
                global_marker: 0.04,
            },
            confusable_rate: 0.0,
            confusable_vocab: 60,
            confusable_share: 0.7,
            origin: "SYNTHPOST".into(),
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::BadSpec(m.into()));
        let valid_mixture = |m: &[f64; 3]| {
            let sum: f64 = m.iter().sum();
            m.iter().all(|p| p.is_finite() && *p >= 0.0) && (sum - 1.0).abs() <= 1e-9
        };
        if !valid_mixture(&self.mixture) || !self.group_mixtures.iter().all(valid_mixture) {
            return bad("class mixture must be non-negative and sum to 1");
        }
        if self.n_groups == 0 {
            return bad("n_groups must be >= 1");
        }
        if !self.group_mixtures.is_empty() && self.group_mixtures.len() != self.n_groups {
            return bad("group_mixtures needs one entry per group");
        }
        if self.n_documents == 0 {
            return bad("n_documents must be >= 1");
        }
        let (p0, p1) = self.paragraphs_per_document;
        let (w0, w1) = self.words_per_paragraph;
        if p0 == 0 || p0 > p1 || w0 == 0 || w0 > w1 {
            return bad("ranges must be non-empty and start at >= 1");
        }
        let s = self.shares;
        let shares = [s.background, s.common, s.local_marker, s.global_marker];
        if shares.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || shares.iter().sum::<f64>() <= 0.0 {
            return bad("token shares must be non-negative with a positive sum");
        }
        let sizes = [
            (s.background, self.background_vocab),
            (s.common, self.common_vocab),
            (s.local_marker, self.marker_vocab),
            (s.global_marker, self.global_marker_vocab),
        ];
        if sizes.iter().any(|&(share, n)| share > 0.0 && n == 0) {
            return bad("a vocabulary with a positive share is empty");
        }
        if !(0.0..=1.0).contains(&self.confusable_rate) || !(0.0..=1.0).contains(&self.confusable_share) {
            return bad("confusable rate and share must lie in [0, 1]");
        }
        if self.confusable_rate > 0.0 && self.confusable_vocab == 0 {
            return bad("confusable vocabulary is empty");
        }
        if self.origin.trim().is_empty() {
            return bad("origin must be non-empty");
        }
        Ok(())
    }

    /// Three planted similarity groups with rotated local class markers.
    /// Each group leans towards one class, so topics over a group are not
    /// mixed near the corpus class rates.
    pub fn planted_clusters(n_documents: usize, seed: u64) -> Self {
        SyntheticSpec {
            n_documents,
            group_mixtures: vec![[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.1, 0.1, 0.8]],
            seed,
            ..Default::default()
        }
    }

    /// One group with class-dominant vocabulary, suited to topic pruning.
    pub fn pruning_base(n_documents: usize, seed: u64) -> Self {
        SyntheticSpec {
            n_documents,
            mixture: [0.2, 0.4, 0.4],
            n_groups: 1,
            shares: TokenShares {
                background: 0.25,
                common: 0.1,
                local_marker: 0.5,
                global_marker: 0.15,
            },
            origin: "BASEPOST".into(),
            seed,
            ..Default::default()
        }
    }

    /// Only confusable S/C paragraphs, from a distinct origin so they can be
    /// told apart after mixing into a training set.
    pub fn confusable_only(n_documents: usize, seed: u64) -> Self {
        SyntheticSpec {
            confusable_rate: 1.0,
            origin: "INJECTPOST".into(),
            ..Self::pruning_base(n_documents, seed)
        }
    }
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Letters-only pseudo-word for a global id, three or more syllables.
fn pseudo_word(mut id: usize) -> String {
    let mut s = String::new();
    let base = CONSONANTS.len() * VOWELS.len();
    for i in 0.. {
        let syl = id % base;
        s.push(CONSONANTS[syl / VOWELS.len()] as char);
        s.push(VOWELS[syl % VOWELS.len()] as char);
        id /= base;
        if id == 0 && i >= 2 {
            break;
        }
    }
    s
}

struct WordFactory {
    next: usize,
}

impl WordFactory {
    fn take(&mut self, n: usize) -> Vec<String> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let w = pseudo_word(self.next);
            self.next += 1;
            if !is_stopword(&w) {
                out.push(w);
            }
        }
        out
    }
}

struct Vocabularies {
    background: Vec<Vec<String>>,
    common: Vec<String>,
    markers: [Vec<String>; 3],
    global: [Vec<String>; 3],
    confusable: Vec<String>,
    /// Zipf-like weights over a background list: a frequent head shared by
    /// the group and a long tail of rare words.
    background_weights: WeightedIndex<f64>,
}

impl Vocabularies {
    /// Word lists depend only on the sizes, never on the seed, so corpora
    /// from different seeds share a vocabulary.
    fn new(spec: &SyntheticSpec) -> Self {
        let mut f = WordFactory { next: 0 };
        let common = f.take(spec.common_vocab);
        let markers = [f.take(spec.marker_vocab), f.take(spec.marker_vocab), f.take(spec.marker_vocab)];
        let global = [
            f.take(spec.global_marker_vocab),
            f.take(spec.global_marker_vocab),
            f.take(spec.global_marker_vocab),
        ];
        let confusable = f.take(spec.confusable_vocab);
        let background = (0..spec.n_groups).map(|_| f.take(spec.background_vocab)).collect();
        let background_weights = WeightedIndex::new((0..spec.background_vocab.max(1)).map(|r| 1.0 / (r + 1) as f64))
            .expect("positive weights");
        Vocabularies { background, common, markers, global, confusable, background_weights }
    }

    fn background_word(&self, rng: &mut ChaCha8Rng, group: usize) -> &str {
        &self.background[group][self.background_weights.sample(rng)]
    }

    fn local(&self, group: usize, class: SecurityClass) -> &[String] {
        &self.markers[(class.index() + group) % 3]
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, words: &'a [String]) -> &'a str {
    &words[rng.gen_range(0..words.len())]
}

fn ordinary_paragraph(
    rng: &mut ChaCha8Rng,
    spec: &SyntheticSpec,
    vocab: &Vocabularies,
    group: usize,
    class: SecurityClass,
    sources: &WeightedIndex<f64>,
) -> String {
    let n = rng.gen_range(spec.words_per_paragraph.0..=spec.words_per_paragraph.1);
    // Background and common words come first and markers after, which
    // keeps group/class conjunctions out of adjacent-word bigrams.
    let mut context = Vec::new();
    let mut markers = Vec::new();
    for _ in 0..n {
        match sources.sample(rng) {
            0 => context.push(vocab.background_word(rng, group)),
            1 => context.push(pick(rng, &vocab.common)),
            2 => markers.push(pick(rng, vocab.local(group, class))),
            _ => markers.push(pick(rng, &vocab.global[class.index()])),
        }
    }
    context.extend(markers);
    context.join(" ")
}

fn confusable_paragraph(rng: &mut ChaCha8Rng, spec: &SyntheticSpec, vocab: &Vocabularies, group: usize) -> String {
    let n = rng.gen_range(spec.words_per_paragraph.0..=spec.words_per_paragraph.1);
    let decoy = SecurityClass::ALL[rng.gen_range(0..3)];
    let mut shared = Vec::new();
    let mut markers = Vec::new();
    for _ in 0..n {
        if rng.gen_bool(spec.confusable_share) {
            shared.push(pick(rng, &vocab.confusable));
        } else if rng.gen_bool(0.5) || vocab.global[decoy.index()].is_empty() {
            markers.push(pick(rng, vocab.local(group, decoy)));
        } else {
            markers.push(pick(rng, &vocab.global[decoy.index()]));
        }
    }
    shared.extend(markers);
    shared.join(" ")
}

/// Builds `spec.n_documents` documents; identical specs give identical
/// corpora.
pub fn generate_synthetic_corpus(spec: &SyntheticSpec) -> Result<Vec<Document>, SynthError> {
    spec.validate()?;
    let vocab = Vocabularies::new(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mixtures = if spec.group_mixtures.is_empty() {
        vec![spec.mixture; spec.n_groups]
    } else {
        spec.group_mixtures.clone()
    };
    let classes = mixtures
        .iter()
        .map(WeightedIndex::new)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| SynthError::BadSpec(e.to_string()))?;
    let s = spec.shares;
    let sources = WeightedIndex::new([s.background, s.common, s.local_marker, s.global_marker])
        .map_err(|e| SynthError::BadSpec(e.to_string()))?;

    let mut docs = Vec::with_capacity(spec.n_documents);
    for d in 0..spec.n_documents {
        let group = rng.gen_range(0..spec.n_groups);
        let year_month = YearMonth { year: rng.gen_range(2004..=2010), month: rng.gen_range(1..=12) };
        let n_par = rng.gen_range(spec.paragraphs_per_document.0..=spec.paragraphs_per_document.1);
        let mut paragraphs = Vec::with_capacity(n_par);
        for _ in 0..n_par {
            if spec.confusable_rate > 0.0 && rng.gen_bool(spec.confusable_rate) {
                let label = if rng.gen_bool(0.5) { SecurityClass::S } else { SecurityClass::C };
                paragraphs.push((label, confusable_paragraph(&mut rng, spec, &vocab, group)));
            } else {
                let label = SecurityClass::ALL[classes[group].sample(&mut rng)];
                paragraphs.push((label, ordinary_paragraph(&mut rng, spec, &vocab, group, label, &sources)));
            }
        }
        let header = derive_document_label(paragraphs.iter().map(|p| p.0))
            .expect("documents have at least one paragraph");
        let subject: Vec<&str> = (0..4).map(|_| vocab.background_word(&mut rng, group)).collect();
        docs.push(Document::from_parts(
            &spec.origin,
            year_month,
            &format!("{:06}", d + 1),
            header,
            &subject.join(" ").to_uppercase(),
            paragraphs,
        ));
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_cable, SecurityClass::*};
    use std::collections::HashSet;

    #[test]
    fn all_unclassified_mixture() {
        let spec = SyntheticSpec {
            n_documents: 20,
            n_groups: 1,
            mixture: [1.0, 0.0, 0.0],
            ..Default::default()
        };
        for d in generate_synthetic_corpus(&spec).unwrap() {
            assert_eq!(d.header_label, U);
            assert!(d.paragraphs.iter().all(|p| p.label == U));
        }
    }

    #[test]
    fn regeneration_is_identical() {
        let spec = SyntheticSpec::planted_clusters(300, 11);
        let a = generate_synthetic_corpus(&spec).unwrap();
        let b = generate_synthetic_corpus(&spec).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn headers_follow_max_rule() {
        let docs = generate_synthetic_corpus(&SyntheticSpec::planted_clusters(1000, 2)).unwrap();
        for d in &docs {
            assert_eq!(d.header_label, d.derived_label().unwrap());
        }
    }

    #[test]
    fn pseudo_words_are_distinct_letters() {
        let words: Vec<String> = (0..5000).map(pseudo_word).collect();
        assert!(words.iter().all(|w| w.len() >= 6 && w.chars().all(|c| c.is_ascii_lowercase())));
        assert_eq!(words.iter().collect::<HashSet<_>>().len(), words.len());
    }

    #[test]
    fn cables_round_trip_through_the_parser() {
        let docs = generate_synthetic_corpus(&SyntheticSpec::planted_clusters(10, 5)).unwrap();
        for d in &docs {
            let back = parse_cable(&d.to_cable_text()).unwrap();
            assert_eq!(&back, d);
        }
    }

    #[test]
    fn confusable_only_is_secret_or_confidential() {
        let docs = generate_synthetic_corpus(&SyntheticSpec::confusable_only(30, 1)).unwrap();
        let labels: Vec<_> = docs.iter().flat_map(|d| d.paragraphs.iter().map(|p| p.label)).collect();
        assert!(labels.iter().all(|&l| l == S || l == C));
        assert!(labels.contains(&S) && labels.contains(&C));
    }

    #[test]
    fn bad_specs() {
        let bad_mix = SyntheticSpec { mixture: [0.5, 0.5, 0.5], ..Default::default() };
        assert!(generate_synthetic_corpus(&bad_mix).is_err());
        let no_groups = SyntheticSpec { n_groups: 0, ..Default::default() };
        assert!(generate_synthetic_corpus(&no_groups).is_err());
    }
}
