//! Paragraph-level security classification of cable corpora.
//!
//! The pipeline parses cables into labeled paragraphs, builds bag-of-words
//! feature spaces, and compares cluster-local classification (ACESS) and
//! topic-purity pruning against global linear baselines.

pub mod corpus;
pub mod metrics;
pub mod models;
pub mod text;
pub mod kmeans;
pub mod lda;
pub mod synth;
pub mod acess;
pub mod pipeline;
pub mod experiment;
