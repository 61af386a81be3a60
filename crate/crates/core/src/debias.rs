//! Inference-time projection debiasing.
//!
//! Every document embedding loses its component along a unit bias direction
//! `n`: `v' = v - <v, n> n`. Query embeddings are left alone and rows are not
//! renormalized afterwards.

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{PairMap, Qrels, Source};
use crate::embed_store::{read_embeddings, EmbeddingMatrix, StoreError};
use crate::geometry::{mean_direction, pair_displacements, DirectionEstimate, DirectionLabel, GeometryError};
use crate::metrics::{self, MetricsError, NdcgReport, PreferenceReport};
use crate::{dot, norm};

const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum DebiasError {
    #[error("direction norm {0} is not 1")]
    NotUnitDirection(f64),
    #[error("dimension mismatch: vector {0}, direction {1}")]
    DimensionMismatch(usize, usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Where the bias direction comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DirectionSource {
    /// Mean displacement over sampled human/LLM pairs of this dataset.
    FromPairs { seed: u64, sample_size: usize },
    /// A direction file written earlier, possibly for another dataset.
    FromFile(std::path::PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DebiasConfig {
    pub direction_source: DirectionSource,
    pub keep_queries: bool,
}

impl Default for DebiasConfig {
    fn default() -> Self {
        DebiasConfig {
            direction_source: DirectionSource::FromPairs {
                seed: 0,
                sample_size: 1000,
            },
            keep_queries: true,
        }
    }
}

/// Estimates or loads the direction named by `source`. `pairs` and `embs`
/// are only consulted for [`DirectionSource::FromPairs`].
pub fn resolve_direction(
    source: &DirectionSource,
    pairs: Option<&PairMap>,
    embs: &EmbeddingMatrix,
) -> Result<DirectionEstimate, DebiasError> {
    match source {
        DirectionSource::FromPairs { seed, sample_size } => {
            let pairs = pairs.ok_or(GeometryError::EmptyInput)?;
            let disp = pair_displacements(pairs, embs)?;
            Ok(mean_direction(&disp.vectors, *seed, Some(*sample_size), DirectionLabel::LH)?)
        }
        DirectionSource::FromFile(path) => {
            Ok(DirectionEstimate::from_matrix(&read_embeddings(path)?)?)
        }
    }
}

fn check_unit(n: &[f64]) -> Result<(), DebiasError> {
    let len = norm(n);
    if (len - 1.0).abs() > UNIT_TOLERANCE {
        return Err(DebiasError::NotUnitDirection(len));
    }
    Ok(())
}

/// `v - <v, n> n`.
pub fn project_out(v: &[f64], n: &[f64]) -> Result<Vec<f64>, DebiasError> {
    if v.len() != n.len() {
        return Err(DebiasError::DimensionMismatch(v.len(), n.len()));
    }
    check_unit(n)?;
    let c = dot(v, n);
    Ok(v.iter().zip(n).map(|(x, d)| x - c * d).collect())
}

/// Projects every row. Arithmetic is done in `f64` and stored back as `f32`.
pub fn debias_matrix(
    embs: &EmbeddingMatrix,
    direction: &DirectionEstimate,
) -> Result<EmbeddingMatrix, DebiasError> {
    let n = &direction.direction;
    if embs.dim() != n.len() {
        return Err(DebiasError::DimensionMismatch(embs.dim(), n.len()));
    }
    check_unit(n)?;
    let project = |row: &[f32]| -> Vec<f32> {
        let c: f64 = row.iter().zip(n).map(|(&x, d)| f64::from(x) * d).sum();
        row.iter()
            .zip(n)
            .map(|(&x, d)| (f64::from(x) - c * d) as f32)
            .collect()
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let data: Vec<f32> = embs
            .as_slice()
            .par_chunks_exact(embs.dim())
            .flat_map_iter(project)
            .collect();
        Ok(EmbeddingMatrix::new(embs.dim(), embs.ids().to_vec(), data)?)
    }
    #[cfg(not(feature = "parallel"))]
    {
        Ok(embs.map_rows(project)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSnapshot {
    pub preference: PreferenceReport,
    pub ndcg: NdcgReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DebiasEvaluation {
    pub before: EvalSnapshot,
    pub after: EvalSnapshot,
    /// `|after ΔNDSR| / |before ΔNDSR|`; absent when there was no bias.
    pub remaining_bias: Option<f64>,
    pub renormalized: bool,
}

/// Retrieves with the original and the projected document embeddings and
/// scores both runs.
pub fn debias_eval(
    query_embs: &EmbeddingMatrix,
    doc_embs: &EmbeddingMatrix,
    direction: &DirectionEstimate,
    sources: &HashMap<String, Source>,
    qrels: &Qrels,
    k: usize,
) -> Result<DebiasEvaluation, DebiasError> {
    let snapshot = |docs: &EmbeddingMatrix| -> Result<EvalSnapshot, DebiasError> {
        let run = metrics::brute_force_retrieve(query_embs, docs, k)?;
        Ok(EvalSnapshot {
            preference: metrics::delta_ndsr(&run, sources, k)?,
            ndcg: metrics::ndcg(&run, qrels, k)?,
        })
    };
    let projected = debias_matrix(doc_embs, direction)?;
    let before = snapshot(doc_embs)?;
    let after = snapshot(&projected)?;
    let b = before.preference.mean_delta.abs();
    let remaining_bias = (b > 0.0).then(|| after.preference.mean_delta.abs() / b);
    Ok(DebiasEvaluation {
        before,
        after,
        remaining_bias,
        renormalized: false,
    })
}
