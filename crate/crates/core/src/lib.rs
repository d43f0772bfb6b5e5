//! Corpus-quality pipeline for LLM pretraining data.
//!
//! The crate covers the full curation recipe over sharded JSONL corpora:
//!
//! * [`dedup`]: sharded exact-substring deduplication backed by suffix arrays,
//!   keeping the first occurrence of every repeated span.
//! * [`textstats`], [`tokenize`], [`classifier`]: per-document quality
//!   annotations (readability, tokenization ratios, classifier confidences).
//! * [`ensemble`]: category resolution and the ensemble filtering rules.
//! * [`pipeline`]: stage orchestration, calibration, sampling and statistics
//!   behind the `gneissforge` CLI.

pub mod classifier;
pub mod corpus;
pub mod dedup;
pub mod ensemble;
pub mod error;
pub mod pipeline;
pub mod rng;
pub mod textstats;
pub mod tokenize;

pub use corpus::{AnnotationSet, AnnotationValue, Document, Shard};
pub use error::{Error, Result};
