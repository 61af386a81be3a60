//! Source preference (NDSR / ΔNDSR), NDCG, TREC run I/O, and exact
//! dot-product retrieval.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{Qrels, Source};
use crate::embed_store::EmbeddingMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("invalid rank {0} (ranks start at 1)")]
    InvalidRank(usize),
    #[error("evaluation depth must be at least 1")]
    InvalidDepth,
    #[error("empty ranking{}", .0.as_ref().map(|q| format!(" for query {q:?}")).unwrap_or_default())]
    EmptyRanking(Option<String>),
    #[error("retrieved document {0:?} has no source label")]
    MissingSourceLabel(String),
    #[error("no query has a positive ideal DCG")]
    NoJudgedQueries,
    #[error("run has no queries")]
    EmptyRun,
    #[error("dimension mismatch: queries {queries}, documents {docs}")]
    DimensionMismatch { queries: usize, docs: usize },
    #[error("query {query:?}: {reason}")]
    InvalidRun { query: String, reason: String },
    #[error("{path}: line {line}: malformed run record: {reason}")]
    MalformedRecord {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

fn io_err(path: &Path, e: std::io::Error) -> MetricsError {
    MetricsError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub score: f64,
}

/// Per-query ranked lists, scores non-increasing, no repeated documents.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Run {
    rankings: BTreeMap<String, Vec<ScoredDoc>>,
}

impl Run {
    pub fn new(rankings: BTreeMap<String, Vec<ScoredDoc>>) -> Result<Self, MetricsError> {
        for (q, list) in &rankings {
            let mut seen = HashSet::with_capacity(list.len());
            for (i, d) in list.iter().enumerate() {
                if !d.score.is_finite() {
                    return Err(MetricsError::InvalidRun {
                        query: q.clone(),
                        reason: format!("non-finite score for {:?}", d.doc_id),
                    });
                }
                if i > 0 && d.score > list[i - 1].score {
                    return Err(MetricsError::InvalidRun {
                        query: q.clone(),
                        reason: format!("scores increase at rank {}", i + 1),
                    });
                }
                if !seen.insert(d.doc_id.as_str()) {
                    return Err(MetricsError::InvalidRun {
                        query: q.clone(),
                        reason: format!("document {:?} ranked twice", d.doc_id),
                    });
                }
            }
        }
        Ok(Run { rankings })
    }

    /// Sorts each list by descending score, ties by ascending doc id.
    pub fn from_unsorted(
        mut rankings: BTreeMap<String, Vec<ScoredDoc>>,
    ) -> Result<Self, MetricsError> {
        for list in rankings.values_mut() {
            list.sort_by(rank_order);
        }
        Self::new(rankings)
    }

    pub fn rankings(&self) -> &BTreeMap<String, Vec<ScoredDoc>> {
        &self.rankings
    }

    pub fn ranking(&self, query_id: &str) -> Option<&[ScoredDoc]> {
        self.rankings.get(query_id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.rankings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rankings.is_empty()
    }
}

fn rank_order(a: &ScoredDoc, b: &ScoredDoc) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.doc_id.cmp(&b.doc_id))
}

/// Reads a six-column TREC run (`qid Q0 docid rank score tag`). Lists are
/// ordered by score, with the rank column breaking ties.
pub fn read_run(path: impl AsRef<Path>) -> Result<Run, MetricsError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut raw: BTreeMap<String, Vec<(i64, ScoredDoc)>> = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            continue;
        }
        let malformed = |reason: &str| MetricsError::MalformedRecord {
            path: path.display().to_string(),
            line: i + 1,
            reason: reason.to_string(),
        };
        if cols.len() != 6 {
            return Err(malformed("expected 6 columns"));
        }
        let rank: i64 = cols[3].parse().map_err(|_| malformed("rank is not an integer"))?;
        let score: f64 = cols[4].parse().map_err(|_| malformed("score is not a number"))?;
        raw.entry(cols[0].to_string()).or_default().push((
            rank,
            ScoredDoc {
                doc_id: cols[2].to_string(),
                score,
            },
        ));
    }
    let rankings = raw
        .into_iter()
        .map(|(q, mut list)| {
            list.sort_by(|(ra, a), (rb, b)| b.score.total_cmp(&a.score).then(ra.cmp(rb)));
            (q, list.into_iter().map(|(_, d)| d).collect())
        })
        .collect();
    Run::new(rankings)
}

pub fn write_run(run: &Run, tag: &str, path: impl AsRef<Path>) -> Result<(), MetricsError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for (q, list) in run.rankings() {
        for (i, d) in list.iter().enumerate() {
            writeln!(w, "{q} Q0 {} {} {} {tag}", d.doc_id, i + 1, d.score)
                .map_err(|e| io_err(path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// `1 / log2(1 + rank)`.
pub fn rank_discount(rank: usize) -> Result<f64, MetricsError> {
    if rank < 1 {
        return Err(MetricsError::InvalidRank(rank));
    }
    Ok(1.0 / ((1 + rank) as f64).log2())
}

fn discount(rank: usize) -> f64 {
    1.0 / ((1 + rank) as f64).log2()
}

/// `(NDSR_Human@k, NDSR_LLM@k)` for a ranked list of source labels. Lists
/// shorter than `k` are evaluated at their own length.
pub fn ndsr(labels: &[Source], k: usize) -> Result<(f64, f64), MetricsError> {
    if k == 0 {
        return Err(MetricsError::InvalidDepth);
    }
    if labels.is_empty() {
        return Err(MetricsError::EmptyRanking(None));
    }
    let (mut human, mut llm) = (0.0, 0.0);
    for (i, s) in labels.iter().take(k).enumerate() {
        let w = discount(i + 1);
        match s {
            Source::Human => human += w,
            Source::Llm => llm += w,
        }
    }
    let total = human + llm;
    Ok((human / total, llm / total))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryPreference {
    pub ndsr_human: f64,
    pub ndsr_llm: f64,
    pub delta: f64,
}

/// ΔNDSR@k per query and averaged. Positive means human passages are
/// preferred.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreferenceReport {
    pub k: usize,
    pub per_query: BTreeMap<String, QueryPreference>,
    pub mean_delta: f64,
}

impl PreferenceReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("query_id,ndsr_human,ndsr_llm,delta\n");
        for (q, p) in &self.per_query {
            writeln!(s, "{q},{},{},{}", p.ndsr_human, p.ndsr_llm, p.delta).unwrap();
        }
        s
    }
}

pub fn delta_ndsr(
    run: &Run,
    sources: &HashMap<String, Source>,
    k: usize,
) -> Result<PreferenceReport, MetricsError> {
    if k == 0 {
        return Err(MetricsError::InvalidDepth);
    }
    if run.is_empty() {
        return Err(MetricsError::EmptyRun);
    }
    let mut per_query = BTreeMap::new();
    let mut labels = Vec::with_capacity(k);
    for (q, list) in run.rankings() {
        labels.clear();
        for d in list.iter().take(k) {
            let s = sources
                .get(&d.doc_id)
                .ok_or_else(|| MetricsError::MissingSourceLabel(d.doc_id.clone()))?;
            labels.push(*s);
        }
        let (h, l) = ndsr(&labels, k).map_err(|e| match e {
            MetricsError::EmptyRanking(_) => MetricsError::EmptyRanking(Some(q.clone())),
            e => e,
        })?;
        per_query.insert(
            q.clone(),
            QueryPreference {
                ndsr_human: h,
                ndsr_llm: l,
                delta: h - l,
            },
        );
    }
    let mean_delta = per_query.values().map(|p| p.delta).sum::<f64>() / per_query.len() as f64;
    Ok(PreferenceReport {
        k,
        per_query,
        mean_delta,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NdcgReport {
    pub k: usize,
    pub per_query: BTreeMap<String, f64>,
    pub mean: f64,
    /// Queries in the run without any positive judgment.
    pub skipped: usize,
}

impl NdcgReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("query_id,ndcg\n");
        for (q, v) in &self.per_query {
            writeln!(s, "{q},{v}").unwrap();
        }
        s
    }
}

/// NDCG@k with linear gain. Queries whose ideal DCG is zero are skipped and
/// counted.
pub fn ndcg(run: &Run, qrels: &Qrels, k: usize) -> Result<NdcgReport, MetricsError> {
    if k == 0 {
        return Err(MetricsError::InvalidDepth);
    }
    let mut per_query = BTreeMap::new();
    let mut skipped = 0;
    for (q, list) in run.rankings() {
        let Some(judged) = qrels.query(q) else {
            skipped += 1;
            continue;
        };
        let mut ideal: Vec<u32> = judged.values().copied().filter(|&g| g > 0).collect();
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let idcg: f64 = ideal
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, &g)| f64::from(g) * discount(i + 1))
            .sum();
        if idcg <= 0.0 {
            skipped += 1;
            continue;
        }
        let dcg: f64 = list
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, d)| f64::from(judged.get(&d.doc_id).copied().unwrap_or(0)) * discount(i + 1))
            .sum();
        per_query.insert(q.clone(), dcg / idcg);
    }
    if per_query.is_empty() {
        return Err(MetricsError::NoJudgedQueries);
    }
    let mean = per_query.values().sum::<f64>() / per_query.len() as f64;
    Ok(NdcgReport {
        k,
        per_query,
        mean,
        skipped,
    })
}

fn score_row(query: &[f32], docs: &EmbeddingMatrix) -> Vec<f64> {
    docs.as_slice()
        .chunks_exact(docs.dim())
        .map(|d| {
            query
                .iter()
                .zip(d)
                .map(|(&a, &b)| f64::from(a) * f64::from(b))
                .sum()
        })
        .collect()
}

fn top_k(query: &[f32], docs: &EmbeddingMatrix, k: usize) -> Vec<ScoredDoc> {
    let scores = score_row(query, docs);
    let ids = docs.ids();
    let cmp = |&a: &usize, &b: &usize| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| ids[a].cmp(&ids[b]))
    };
    let mut order: Vec<usize> = (0..scores.len()).collect();
    if k < order.len() {
        order.select_nth_unstable_by(k, cmp);
        order.truncate(k);
    }
    order.sort_by(cmp);
    order
        .into_iter()
        .map(|i| ScoredDoc {
            doc_id: ids[i].clone(),
            score: scores[i],
        })
        .collect()
}

/// Exact top-k by inner product for every query row. Ties go to the smaller
/// doc id.
pub fn brute_force_retrieve(
    queries: &EmbeddingMatrix,
    docs: &EmbeddingMatrix,
    k: usize,
) -> Result<Run, MetricsError> {
    if k == 0 {
        return Err(MetricsError::InvalidDepth);
    }
    if queries.dim() != docs.dim() {
        return Err(MetricsError::DimensionMismatch {
            queries: queries.dim(),
            docs: docs.dim(),
        });
    }
    #[cfg(feature = "parallel")]
    let lists: Vec<(String, Vec<ScoredDoc>)> = {
        use rayon::prelude::*;
        (0..queries.len())
            .into_par_iter()
            .map(|i| (queries.ids()[i].clone(), top_k(queries.row(i), docs, k)))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let lists: Vec<(String, Vec<ScoredDoc>)> = (0..queries.len())
        .map(|i| (queries.ids()[i].clone(), top_k(queries.row(i), docs, k)))
        .collect();
    Run::new(lists.into_iter().collect())
}
