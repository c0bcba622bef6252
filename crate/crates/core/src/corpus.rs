//! Cable corpus: security classes, paragraph identifiers, the cable text
//! parser, max-rule document labels and document-level data splits.
//!
//! A cable is plain text with three sections. The head carries metadata
//! and a full-word classification (`SECRET`, `CONFIDENTIAL`,
//! `UNCLASSIFIED`, optionally letter-spaced as `S E C R E T`). A
//! `SUBJECT:` line follows, then body paragraphs separated by blank lines.
//! Each body paragraph starts with an optional number and a bracketed
//! marking such as `(C)` or `(S/NF)`.
//!
//! ```text
//! CABLE: 000123
//! ORIGIN: Berlin
//! DATE: 2009-05
//! CLASSIFICATION: CONFIDENTIAL
//! SUBJECT: Coalition talks
//!
//! 1. (C) First paragraph.
//!
//! 2. (U) Second paragraph.
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CorpusError {
    #[error("no full-word classification found in the cable head")]
    MissingHeaderLabel,
    #[error("cable body contains no parseable paragraphs")]
    EmptyBody,
    #[error("unknown paragraph marking `({marking})` at byte offset {offset}")]
    UnknownMarking { marking: String, offset: usize },
    #[error("cable head is missing the {0} field")]
    MissingMetadata(&'static str),
    #[error("cannot derive a label from an empty paragraph list")]
    EmptyInput,
    #[error("split ratios must be positive and sum to 1, got {0:?}")]
    BadRatios([f64; 3]),
    #[error("need at least 3 documents to split, got {0}")]
    TooFewDocuments(usize),
    #[error("invalid paragraph id `{0}`")]
    BadParagraphId(String),
    #[error("invalid security class `{0}`")]
    BadClass(String),
    #[error("corpus record {line}: {message}")]
    BadRecord { line: usize, message: String },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for CorpusError {
    fn from(e: std::io::Error) -> Self {
        CorpusError::Io(e.to_string())
    }
}

/// Ordinal security label, `U < C < S`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SecurityClass {
    U,
    C,
    S,
}

impl SecurityClass {
    pub const ALL: [SecurityClass; 3] = [SecurityClass::U, SecurityClass::C, SecurityClass::S];

    pub fn index(self) -> usize {
        match self {
            SecurityClass::U => 0,
            SecurityClass::C => 1,
            SecurityClass::S => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn letter(self) -> char {
        match self {
            SecurityClass::U => 'U',
            SecurityClass::C => 'C',
            SecurityClass::S => 'S',
        }
    }

    pub fn full_word(self) -> &'static str {
        match self {
            SecurityClass::U => "UNCLASSIFIED",
            SecurityClass::C => "CONFIDENTIAL",
            SecurityClass::S => "SECRET",
        }
    }

    fn from_letter(c: char) -> Option<Self> {
        match c {
            'U' => Some(SecurityClass::U),
            'C' => Some(SecurityClass::C),
            'S' => Some(SecurityClass::S),
            _ => None,
        }
    }
}

impl fmt::Display for SecurityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for SecurityClass {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_uppercase();
        match t.as_str() {
            "U" | "UNCLASSIFIED" => Ok(SecurityClass::U),
            "C" | "CONFIDENTIAL" => Ok(SecurityClass::C),
            "S" | "SECRET" => Ok(SecurityClass::S),
            _ => Err(CorpusError::BadClass(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct YearMonth {
    pub year: u16,
    pub month: u8,
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

/// `ORIGIN-YYYYMM-CABLE-POS-L`, e.g. `BERLIN-200905-000123-04-C`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParagraphId {
    origin: String,
    year_month: YearMonth,
    cable_number: String,
    position: u32,
    label: SecurityClass,
}

/// Origin is upper-cased with whitespace removed.
pub fn normalize_origin(origin: &str) -> String {
    origin
        .chars()
        .filter(|c| !c.is_whitespace())
        .flat_map(char::to_uppercase)
        .collect()
}

fn normalize_cable_number(cable: &str) -> String {
    cable.chars().filter(|c| !c.is_whitespace() && *c != '-').collect()
}

impl ParagraphId {
    pub fn new(
        origin: &str,
        year_month: YearMonth,
        cable_number: &str,
        position: u32,
        label: SecurityClass,
    ) -> Self {
        ParagraphId {
            origin: normalize_origin(origin),
            year_month,
            cable_number: normalize_cable_number(cable_number),
            position,
            label,
        }
    }

    pub fn origin(&self) -> &str {
        &self.origin
    }
    pub fn year_month(&self) -> YearMonth {
        self.year_month
    }
    pub fn cable_number(&self) -> &str {
        &self.cable_number
    }
    pub fn position(&self) -> u32 {
        self.position
    }
    pub fn label(&self) -> SecurityClass {
        self.label
    }

    /// Key shared by every paragraph of one cable: `ORIGIN-YYYYMM-CABLE`.
    pub fn document_key(&self) -> String {
        format!(
            "{}-{:04}{:02}-{}",
            self.origin, self.year_month.year, self.year_month.month, self.cable_number
        )
    }
}

impl fmt::Display for ParagraphId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{:02}-{}", self.document_key(), self.position, self.label)
    }
}

impl FromStr for ParagraphId {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CorpusError::BadParagraphId(s.to_string());
        let mut parts = s.rsplitn(4, '-');
        let label = parts.next().ok_or_else(bad)?;
        let pos = parts.next().ok_or_else(bad)?;
        let cable = parts.next().ok_or_else(bad)?;
        let rest = parts.next().ok_or_else(bad)?;
        let (origin, ym) = rest.rsplit_once('-').ok_or_else(bad)?;
        if origin.is_empty() || cable.is_empty() || ym.len() != 6 || label.len() != 1 {
            return Err(bad());
        }
        let year: u16 = ym[..4].parse().map_err(|_| bad())?;
        let month: u8 = ym[4..].parse().map_err(|_| bad())?;
        if !(1..=12).contains(&month) {
            return Err(bad());
        }
        let position: u32 = pos.parse().map_err(|_| bad())?;
        let label = label
            .chars()
            .next()
            .and_then(SecurityClass::from_letter)
            .ok_or_else(bad)?;
        let id = ParagraphId::new(origin, YearMonth { year, month }, cable, position, label);
        if id.origin != origin {
            return Err(bad());
        }
        Ok(id)
    }
}

impl Serialize for ParagraphId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ParagraphId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paragraph {
    pub id: ParagraphId,
    pub text: String,
    pub label: SecurityClass,
    pub position: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub cable_number: String,
    pub origin: String,
    pub year_month: YearMonth,
    pub header_label: SecurityClass,
    pub subject: String,
    pub paragraphs: Vec<Paragraph>,
}

impl Document {
    /// Builds a document from `(label, text)` pairs, assigning positions
    /// `1..=n` and paragraph ids.
    pub fn from_parts(
        origin: &str,
        year_month: YearMonth,
        cable_number: &str,
        header_label: SecurityClass,
        subject: &str,
        paragraphs: impl IntoIterator<Item = (SecurityClass, String)>,
    ) -> Self {
        let origin = normalize_origin(origin);
        let cable_number = normalize_cable_number(cable_number);
        let paragraphs = paragraphs
            .into_iter()
            .enumerate()
            .map(|(i, (label, text))| {
                let position = i as u32 + 1;
                Paragraph {
                    id: ParagraphId::new(&origin, year_month, &cable_number, position, label),
                    text,
                    label,
                    position,
                }
            })
            .collect();
        Document {
            cable_number,
            origin,
            year_month,
            header_label,
            subject: subject.to_string(),
            paragraphs,
        }
    }

    /// Max-rule label over the paragraph labels.
    pub fn derived_label(&self) -> Result<SecurityClass, CorpusError> {
        derive_document_label(self.paragraphs.iter().map(|p| p.label))
    }

    pub fn key(&self) -> String {
        format!(
            "{}-{:04}{:02}-{}",
            self.origin, self.year_month.year, self.year_month.month, self.cable_number
        )
    }

    /// Renders the document in the cable text format accepted by
    /// [`parse_cable`].
    pub fn to_cable_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("CABLE: {}\n", self.cable_number));
        out.push_str(&format!("ORIGIN: {}\n", self.origin));
        out.push_str(&format!("DATE: {}\n", self.year_month));
        out.push_str(&format!("CLASSIFICATION: {}\n", self.header_label.full_word()));
        out.push_str(&format!("SUBJECT: {}\n", self.subject));
        for p in &self.paragraphs {
            out.push_str(&format!("\n{}. ({}) {}\n", p.position, p.label, p.text));
        }
        out
    }
}

/// `C(D) = max_j C(P_j)`.
pub fn derive_document_label<I>(labels: I) -> Result<SecurityClass, CorpusError>
where
    I: IntoIterator<Item = SecurityClass>,
{
    labels.into_iter().max().ok_or(CorpusError::EmptyInput)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ParseOptions {
    /// Unmarked body paragraphs take the header class instead of being skipped.
    pub inherit_header_label: bool,
}

fn marking_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(?:\d+\s*\.\s*)?\(([A-Z][A-Z/ ]{0,7})\)").unwrap())
}

fn date_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b((?:19|20)\d{2})-?(0[1-9]|1[0-2])\b").unwrap())
}

fn collapse_spaced(line: &str) -> String {
    // "C O N F I D E N T I A L" -> "CONFIDENTIAL"
    let mut out = String::with_capacity(line.len());
    let chars: Vec<char> = line.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if c == ' '
            && i > 0
            && i + 1 < chars.len()
            && chars[i - 1].is_ascii_uppercase()
            && chars[i + 1].is_ascii_uppercase()
            && (i < 2 || chars[i - 2] == ' ' || !chars[i - 2].is_ascii_alphabetic())
            && (i + 2 >= chars.len() || chars[i + 2] == ' ')
        {
            continue;
        }
        out.push(c);
    }
    out
}

fn find_full_word_class(line: &str) -> Option<(SecurityClass, String)> {
    let collapsed = collapse_spaced(line);
    for word in collapsed.split(|c: char| !c.is_ascii_alphabetic()) {
        let class = match word {
            "UNCLASSIFIED" => SecurityClass::U,
            "CONFIDENTIAL" => SecurityClass::C,
            "SECRET" => SecurityClass::S,
            _ => continue,
        };
        return Some((class, collapsed.clone()));
    }
    None
}

fn key_value<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    let (k, v) = line.split_once(':')?;
    k.trim().eq_ignore_ascii_case(key).then(|| v.trim())
}

/// Parses one cable with default options.
pub fn parse_cable(raw: &str) -> Result<Document, CorpusError> {
    parse_cable_with(raw, ParseOptions::default())
}

pub fn parse_cable_with(raw: &str, options: ParseOptions) -> Result<Document, CorpusError> {
    let mut header_label = None;
    let mut class_line_tail: Option<String> = None;
    let mut origin = None;
    let mut cable = None;
    let mut year_month = None;
    let mut subject = None;
    let mut offset = 0usize;
    let mut body_start = raw.len();

    for line in raw.split_inclusive('\n') {
        offset += line.len();
        let trimmed = line.trim();
        if let Some(v) = key_value(trimmed, "SUBJECT") {
            subject = Some(v.to_string());
            body_start = offset;
            break;
        }
        if let Some(v) = key_value(trimmed, "ORIGIN") {
            origin = Some(v.to_string());
            continue;
        }
        if let Some(v) = key_value(trimmed, "CABLE") {
            cable = Some(v.to_string());
            continue;
        }
        if let Some(v) = key_value(trimmed, "DATE") {
            if let Some(m) = date_re().captures(v) {
                year_month = Some(YearMonth {
                    year: m[1].parse().unwrap(),
                    month: m[2].parse().unwrap(),
                });
            }
            continue;
        }
        if header_label.is_none() {
            if let Some((class, collapsed)) = find_full_word_class(trimmed) {
                header_label = Some(class);
                class_line_tail = Some(collapsed);
            }
        }
        if year_month.is_none() {
            if let Some(m) = date_re().captures(trimmed) {
                year_month = Some(YearMonth {
                    year: m[1].parse().unwrap(),
                    month: m[2].parse().unwrap(),
                });
            }
        }
    }

    let header_label = header_label.ok_or(CorpusError::MissingHeaderLabel)?;

    // Real cable heads read "CONFIDENTIAL SECTION 01 OF 02 BERLIN 000123".
    if let Some(tail) = &class_line_tail {
        let words: Vec<&str> = tail.split_whitespace().collect();
        if words.len() >= 2 {
            let last = words[words.len() - 1];
            let prev = words[words.len() - 2];
            if cable.is_none() && last.chars().all(|c| c.is_ascii_digit()) {
                cable = Some(last.to_string());
            }
            if origin.is_none()
                && prev.chars().all(|c| c.is_ascii_uppercase())
                && find_full_word_class(prev).is_none()
            {
                origin = Some(prev.to_string());
            }
        }
    }
    let origin = origin.ok_or(CorpusError::MissingMetadata("origin"))?;
    let cable = cable.ok_or(CorpusError::MissingMetadata("cable number"))?;
    let year_month = year_month.ok_or(CorpusError::MissingMetadata("date"))?;
    let subject = subject.unwrap_or_default();

    let mut paragraphs = Vec::new();
    for (block_offset, block) in paragraph_blocks(&raw[body_start..]) {
        let abs_offset = body_start + block_offset;
        let (label, text) = match marking_re().captures(block) {
            Some(caps) => {
                let mark = caps.get(1).unwrap();
                let first = mark.as_str().chars().next().unwrap();
                let label = SecurityClass::from_letter(first).ok_or_else(|| {
                    CorpusError::UnknownMarking {
                        marking: mark.as_str().to_string(),
                        offset: abs_offset + mark.start() - 1,
                    }
                })?;
                (label, &block[caps.get(0).unwrap().end()..])
            }
            None if options.inherit_header_label => (header_label, block),
            None => {
                log::warn!(
                    "cable {}: skipping unmarked paragraph at byte {}",
                    cable,
                    abs_offset
                );
                continue;
            }
        };
        let text = text.split_whitespace().collect::<Vec<_>>().join(" ");
        if text.is_empty() {
            log::warn!("cable {}: skipping empty paragraph at byte {}", cable, abs_offset);
            continue;
        }
        paragraphs.push((label, text));
    }
    if paragraphs.is_empty() {
        return Err(CorpusError::EmptyBody);
    }
    Ok(Document::from_parts(
        &origin,
        year_month,
        &cable,
        header_label,
        &subject,
        paragraphs,
    ))
}

/// Blank-line separated blocks with their byte offsets (leading
/// whitespace of each block skipped).
fn paragraph_blocks(body: &str) -> Vec<(usize, &str)> {
    let mut blocks = Vec::new();
    let mut start: Option<usize> = None;
    let mut end = 0;
    let mut offset = 0;
    for line in body.split_inclusive('\n') {
        let line_start = offset;
        offset += line.len();
        if line.trim().is_empty() {
            if let Some(s) = start.take() {
                blocks.push((s, &body[s..end]));
            }
        } else {
            if start.is_none() {
                start = Some(line_start + (line.len() - line.trim_start().len()));
            }
            end = line_start + line.trim_end().len();
        }
    }
    if let Some(s) = start {
        blocks.push((s, &body[s..end]));
    }
    blocks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSplit {
    pub train: Vec<Paragraph>,
    pub validation: Vec<Paragraph>,
    pub test: Vec<Paragraph>,
    pub seed: u64,
    pub ratios: [f64; 3],
}

pub const DEFAULT_SPLIT_RATIOS: [f64; 3] = [0.6, 0.2, 0.2];

/// Seeded document-level shuffle followed by contiguous assignment by ratio.
pub fn split_corpus(
    documents: &[Document],
    ratios: [f64; 3],
    seed: u64,
) -> Result<DataSplit, CorpusError> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(CorpusError::BadRatios(ratios));
    }
    let n = documents.len();
    if n < 3 {
        return Err(CorpusError::TooFewDocuments(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut counts = [
        (ratios[0] * n as f64).round() as usize,
        (ratios[1] * n as f64).round() as usize,
        0,
    ];
    counts[0] = counts[0].clamp(1, n - 2);
    counts[1] = counts[1].clamp(1, n - 1 - counts[0]);
    counts[2] = n - counts[0] - counts[1];

    let take = |range: std::ops::Range<usize>| -> Vec<Paragraph> {
        order[range]
            .iter()
            .flat_map(|&i| documents[i].paragraphs.iter().cloned())
            .collect()
    };
    Ok(DataSplit {
        train: take(0..counts[0]),
        validation: take(counts[0]..counts[0] + counts[1]),
        test: take(counts[0] + counts[1]..n),
        seed,
        ratios,
    })
}

/// One JSON Lines record of the corpus manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: ParagraphId,
    pub doc: String,
    pub origin: String,
    pub year_month: String,
    pub position: u32,
    pub label: SecurityClass,
    pub text: String,
}

impl From<&Paragraph> for CorpusRecord {
    fn from(p: &Paragraph) -> Self {
        CorpusRecord {
            id: p.id.clone(),
            doc: p.id.document_key(),
            origin: p.id.origin().to_string(),
            year_month: p.id.year_month().to_string(),
            position: p.position,
            label: p.label,
            text: p.text.clone(),
        }
    }
}

impl CorpusRecord {
    pub fn into_paragraph(self) -> Paragraph {
        Paragraph {
            id: self.id,
            text: self.text,
            label: self.label,
            position: self.position,
        }
    }
}

pub fn write_paragraphs_jsonl<W: Write>(
    mut w: W,
    paragraphs: impl IntoIterator<Item = impl std::borrow::Borrow<Paragraph>>,
) -> Result<(), CorpusError> {
    for p in paragraphs {
        let rec = CorpusRecord::from(p.borrow());
        serde_json::to_writer(&mut w, &rec).map_err(|e| CorpusError::Io(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_paragraphs_jsonl<R: BufRead>(r: R) -> Result<Vec<Paragraph>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusRecord = serde_json::from_str(&line).map_err(|e| CorpusError::BadRecord {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec.into_paragraph());
    }
    Ok(out)
}

/// Regroups paragraphs into documents by their document key, in order of
/// first appearance. Header labels are re-derived by the max rule; the
/// subject is not part of the manifest and comes back empty.
pub fn group_into_documents(paragraphs: Vec<Paragraph>) -> Vec<Document> {
    let mut keys: Vec<String> = Vec::new();
    let mut groups: std::collections::HashMap<String, Vec<Paragraph>> = Default::default();
    for p in paragraphs {
        let key = p.id.document_key();
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                keys.push(key);
                Vec::new()
            })
            .push(p);
    }
    keys.into_iter()
        .map(|k| {
            let mut ps = groups.remove(&k).unwrap();
            ps.sort_by_key(|p| p.position);
            let first = &ps[0].id;
            Document {
                cable_number: first.cable_number().to_string(),
                origin: first.origin().to_string(),
                year_month: first.year_month(),
                header_label: derive_document_label(ps.iter().map(|p| p.label)).unwrap(),
                subject: String::new(),
                paragraphs: ps,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestFailure {
    pub path: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub documents: Vec<Document>,
    pub failures: Vec<IngestFailure>,
}

/// Parses every file under `dir` matching the glob `pattern`, in sorted
/// path order. Cables that fail to parse are collected, not fatal.
pub fn ingest_dir(dir: &Path, pattern: &str, options: ParseOptions) -> Result<Ingested, CorpusError> {
    if !dir.is_dir() {
        return Err(CorpusError::Io(format!("{} is not a directory", dir.display())));
    }
    let full = dir.join(pattern);
    let paths = glob::glob(&full.to_string_lossy()).map_err(|e| CorpusError::Io(e.to_string()))?;
    let mut paths: Vec<PathBuf> = paths
        .filter_map(Result::ok)
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    let mut documents = Vec::new();
    let mut failures = Vec::new();
    for path in paths {
        let raw = std::fs::read_to_string(&path)?;
        match parse_cable_with(&raw, options) {
            Ok(d) => documents.push(d),
            Err(e) => failures.push(IngestFailure { path: path.display().to_string(), error: e.to_string() }),
        }
    }
    Ok(Ingested { documents, failures })
}

/// Checks that no two documents share a key, returning the duplicates.
pub fn duplicate_document_keys(documents: &[Document]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut dups = BTreeSet::new();
    for d in documents {
        let k = d.key();
        if !seen.insert(k.clone()) {
            dups.insert(k);
        }
    }
    dups.into_iter().collect()
}
