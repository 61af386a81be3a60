//! Source-bias analysis for dense retrieval.
//!
//! The crate is split along the pipeline:
//!
//! * [`corpus`] loads passages, human/LLM pair maps, queries, and qrels.
//! * [`embed_store`] persists id-indexed embedding matrices and speaks the
//!   out-of-process encoder protocol.
//! * [`metrics`] scores runs for source preference (NDSR) and effectiveness
//!   (NDCG), and produces runs by exact dot-product retrieval.
//! * [`geometry`] estimates displacement directions and tests them against the
//!   cosine null of random directions on the unit sphere.
//! * [`linguistics`] covers tokenization, IDF, BM25, perplexity ingestion, and
//!   effect sizes.
//! * [`debias`] removes a bias direction from document embeddings.
//! * [`contrast_lab`] is a synthetic contrastive-training lab used to check
//!   the supervision-imbalance mechanism end to end.

pub mod config;
pub mod contrast_lab;
pub mod corpus;
pub mod debias;
pub mod embed_store;
pub mod error;
pub mod geometry;
pub mod linguistics;
pub mod metrics;
pub mod special;

pub use corpus::{Corpus, PairMap, Passage, Qrels, QuerySet, Source};
pub use embed_store::EmbeddingMatrix;
pub use error::{Error, ErrorKind, Result};
pub use geometry::DirectionEstimate;
pub use metrics::{PreferenceReport, Run};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
