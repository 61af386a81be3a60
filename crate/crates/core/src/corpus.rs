//! Passages, human/LLM pair maps, query sets, and TREC qrels.
//!
//! Corpora and query sets are line-delimited JSON. Qrels use the TREC
//! four-column layout so BEIR-style exports load unchanged. Pair maps are a
//! tab-separated file with a `human_id\tllm_id` header.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CorpusError {
    #[error("{path}: line {line}: malformed record: {reason}")]
    MalformedRecord {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("unknown source label {0:?} (expected Human or LLM)")]
    UnknownSource(String),
    #[error("{path}: line {line}: negative grade {grade}")]
    NegativeGrade {
        path: String,
        line: usize,
        grade: i64,
    },
    #[error("pair references unknown passage {0:?}")]
    UnresolvedId(String),
    #[error("pair ({human}, {llm}): expected a Human and an LLM passage")]
    SourceMismatch { human: String, llm: String },
    #[error("pair ({human}, {llm}): passages come from different datasets")]
    DatasetMismatch { human: String, llm: String },
    #[error("passage {0:?} appears in more than one pair")]
    DuplicatePairMember(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

fn io_err(path: &Path, e: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Origin of a passage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    Human,
    #[serde(rename = "LLM")]
    Llm,
}

impl Source {
    pub fn flipped(self) -> Source {
        match self {
            Source::Human => Source::Llm,
            Source::Llm => Source::Human,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Human => "Human",
            Source::Llm => "LLM",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("human") {
            Ok(Source::Human)
        } else if s.eq_ignore_ascii_case("llm") {
            Ok(Source::Llm)
        } else {
            Err(CorpusError::UnknownSource(s.to_string()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Passage {
    pub id: String,
    pub text: String,
    pub source: Source,
    pub dataset: String,
}

#[derive(Deserialize)]
struct PassageRecord {
    #[serde(alias = "_id")]
    id: String,
    text: String,
    source: String,
    dataset: Option<String>,
}

/// An id-indexed collection of passages.
///
/// Ids are unique across the whole collection, which is stricter than
/// per-dataset uniqueness and keeps pair and run resolution unambiguous.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    passages: Vec<Passage>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn from_passages(passages: Vec<Passage>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(passages.len());
        for (i, p) in passages.iter().enumerate() {
            if p.id.is_empty() {
                return Err(CorpusError::MalformedRecord {
                    path: String::new(),
                    line: i + 1,
                    reason: "empty id".into(),
                });
            }
            if index.insert(p.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId(p.id.clone()));
            }
        }
        Ok(Corpus { passages, index })
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Passage> {
        self.index.get(id).map(|&i| &self.passages[i])
    }

    /// Source label per passage id, the lookup used by preference metrics.
    pub fn sources(&self) -> HashMap<String, Source> {
        self.passages
            .iter()
            .map(|p| (p.id.clone(), p.source))
            .collect()
    }

    /// Passages of one source, in corpus order.
    pub fn by_source(&self, source: Source) -> impl Iterator<Item = &Passage> {
        self.passages.iter().filter(move |p| p.source == source)
    }
}

/// Reads a JSONL corpus. Records without a `dataset` field take `dataset`.
pub fn load_corpus(path: impl AsRef<Path>, dataset: &str) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut passages = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PassageRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRecord {
                path: path.display().to_string(),
                line: i + 1,
                reason: e.to_string(),
            })?;
        if rec.id.is_empty() {
            return Err(CorpusError::MalformedRecord {
                path: path.display().to_string(),
                line: i + 1,
                reason: "empty id".into(),
            });
        }
        passages.push(Passage {
            id: rec.id,
            text: rec.text,
            source: rec.source.parse()?,
            dataset: rec.dataset.unwrap_or_else(|| dataset.to_string()),
        });
    }
    Corpus::from_passages(passages)
}

pub fn write_corpus(passages: &[Passage], path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for p in passages {
        let line = serde_json::to_string(p).expect("passage serializes");
        writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Relevance grades per query and document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Qrels {
    grades: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets a grade, returning the previous one if the pair was already judged.
    pub fn insert(&mut self, query_id: &str, doc_id: &str, grade: u32) -> Option<u32> {
        self.grades
            .entry(query_id.to_string())
            .or_default()
            .insert(doc_id.to_string(), grade)
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> u32 {
        self.grades
            .get(query_id)
            .and_then(|m| m.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn query(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.grades.get(query_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &BTreeMap<String, u32>)> {
        self.grades.iter()
    }

    pub fn len(&self) -> usize {
        self.grades.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grades.is_empty()
    }

    /// Documents judged with a positive grade for a query.
    pub fn positives(&self, query_id: &str) -> Vec<&str> {
        self.grades
            .get(query_id)
            .map(|m| {
                m.iter()
                    .filter(|(_, &g)| g > 0)
                    .map(|(d, _)| d.as_str())
                    .collect()
            })
            .unwrap_or_default()
    }
}

/// Reads TREC qrels (`query_id iter doc_id grade`). Repeated judgments keep
/// the last grade and log a warning.
pub fn load_qrels(path: impl AsRef<Path>) -> Result<Qrels, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    parse_qrels(BufReader::new(file), &path.display().to_string())
}

pub fn parse_qrels(reader: impl BufRead, origin: &str) -> Result<Qrels, CorpusError> {
    let mut qrels = Qrels::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CorpusError::Io {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            continue;
        }
        let malformed = |reason: &str| CorpusError::MalformedRecord {
            path: origin.to_string(),
            line: i + 1,
            reason: reason.to_string(),
        };
        if cols.len() != 4 {
            // BEIR tsv exports start with a header row.
            if i == 0 && cols.first() == Some(&"query-id") {
                continue;
            }
            return Err(malformed("expected 4 columns"));
        }
        let grade: i64 = cols[3].parse().map_err(|_| malformed("grade is not an integer"))?;
        if grade < 0 {
            return Err(CorpusError::NegativeGrade {
                path: origin.to_string(),
                line: i + 1,
                grade,
            });
        }
        let grade = u32::try_from(grade).map_err(|_| malformed("grade out of range"))?;
        if let Some(prev) = qrels.insert(cols[0], cols[2], grade) {
            log::warn!(
                "{origin}: line {}: duplicate judgment for ({}, {}); {} replaces {}",
                i + 1,
                cols[0],
                cols[2],
                grade,
                prev
            );
        }
    }
    Ok(qrels)
}

pub fn write_qrels(qrels: &Qrels, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for (q, docs) in qrels.iter() {
        for (d, g) in docs {
            writeln!(w, "{q} 0 {d} {g}").map_err(|e| io_err(path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Query text keyed by id, in id order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QuerySet {
    pub queries: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct QueryRecord {
    #[serde(alias = "_id")]
    id: String,
    text: String,
}

pub fn load_queries(path: impl AsRef<Path>) -> Result<QuerySet, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut queries = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: QueryRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRecord {
                path: path.display().to_string(),
                line: i + 1,
                reason: e.to_string(),
            })?;
        if rec.id.is_empty() {
            return Err(CorpusError::MalformedRecord {
                path: path.display().to_string(),
                line: i + 1,
                reason: "empty id".into(),
            });
        }
        if queries.insert(rec.id.clone(), rec.text).is_some() {
            return Err(CorpusError::DuplicateId(rec.id));
        }
    }
    Ok(QuerySet { queries })
}

pub fn write_queries(queries: &QuerySet, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for (id, text) in &queries.queries {
        let line = serde_json::json!({ "id": id, "text": text });
        writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Human/LLM counterparts. Every pair resolves to one Human and one LLM
/// passage from the same dataset, and no passage is in two pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairMap {
    pairs: Vec<(String, String)>,
}

impl PairMap {
    pub fn new(pairs: Vec<(String, String)>, corpus: &Corpus) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for (human, llm) in &pairs {
            let h = corpus
                .get(human)
                .ok_or_else(|| CorpusError::UnresolvedId(human.clone()))?;
            let l = corpus
                .get(llm)
                .ok_or_else(|| CorpusError::UnresolvedId(llm.clone()))?;
            if h.source != Source::Human || l.source != Source::Llm {
                return Err(CorpusError::SourceMismatch {
                    human: human.clone(),
                    llm: llm.clone(),
                });
            }
            if h.dataset != l.dataset {
                return Err(CorpusError::DatasetMismatch {
                    human: human.clone(),
                    llm: llm.clone(),
                });
            }
            for id in [human, llm] {
                if !seen.insert(id.as_str()) {
                    return Err(CorpusError::DuplicatePairMember(id.clone()));
                }
            }
        }
        Ok(PairMap { pairs })
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

pub fn load_pairs(path: impl AsRef<Path>, corpus: &Corpus) -> Result<PairMap, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut pairs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let malformed = |reason: &str| CorpusError::MalformedRecord {
            path: path.display().to_string(),
            line: i + 1,
            reason: reason.to_string(),
        };
        if i == 0 {
            if line.trim_end() != "human_id\tllm_id" {
                return Err(malformed("expected header `human_id\\tllm_id`"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.trim_end_matches(['\r', '\n']).split('\t');
        match (cols.next(), cols.next(), cols.next()) {
            (Some(h), Some(l), None) if !h.is_empty() && !l.is_empty() => {
                pairs.push((h.to_string(), l.to_string()))
            }
            _ => return Err(malformed("expected two tab-separated ids")),
        }
    }
    PairMap::new(pairs, corpus)
}

pub fn write_pairs(pairs: &PairMap, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "human_id\tllm_id").map_err(|e| io_err(path, e))?;
    for (h, l) in pairs.pairs() {
        writeln!(w, "{h}\t{l}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    fn small_corpus() -> Corpus {
        let mk = |id: &str, source| Passage {
            id: id.into(),
            text: format!("text of {id}"),
            source,
            dataset: "toy".into(),
        };
        Corpus::from_passages(vec![
            mk("h1", Source::Human),
            mk("h2", Source::Human),
            mk("l1", Source::Llm),
            mk("l2", Source::Llm),
        ])
        .unwrap()
    }

    #[test]
    fn loads_two_valid_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "c.jsonl",
            "{\"id\":\"p1\",\"text\":\"a\",\"source\":\"Human\"}\n{\"id\":\"p2\",\"text\":\"b\",\"source\":\"LLM\",\"dataset\":\"other\"}\n",
        );
        let c = load_corpus(&p, "toy").unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.get("p1").unwrap().dataset, "toy");
        assert_eq!(c.get("p2").unwrap().dataset, "other");
        assert_eq!(c.get("p2").unwrap().source, Source::Llm);
    }

    #[test]
    fn duplicate_id_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "c.jsonl",
            "{\"id\":\"p1\",\"text\":\"a\",\"source\":\"Human\"}\n{\"id\":\"p1\",\"text\":\"b\",\"source\":\"LLM\"}\n",
        );
        assert_eq!(
            load_corpus(&p, "toy").unwrap_err(),
            CorpusError::DuplicateId("p1".into())
        );
    }

    #[test]
    fn unknown_source_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "c.jsonl", "{\"id\":\"p1\",\"text\":\"a\",\"source\":\"AI\"}\n");
        assert_eq!(
            load_corpus(&p, "toy").unwrap_err(),
            CorpusError::UnknownSource("AI".into())
        );
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "c.jsonl",
            "{\"id\":\"p1\",\"text\":\"a\",\"source\":\"Human\"}\n{\"id\":\"p2\"\n",
        );
        match load_corpus(&p, "toy").unwrap_err() {
            CorpusError::MalformedRecord { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn corpus_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = small_corpus();
        let p = dir.path().join("c.jsonl");
        write_corpus(c.passages(), &p).unwrap();
        let back = load_corpus(&p, "ignored").unwrap();
        assert_eq!(back.passages(), c.passages());
    }

    #[test]
    fn qrels_single_record() {
        let q = parse_qrels(Cursor::new("q1 0 d1 1\n"), "mem").unwrap();
        assert_eq!(q.grade("q1", "d1"), 1);
        assert_eq!(q.len(), 1);
    }

    #[test]
    fn qrels_negative_grade() {
        let err = parse_qrels(Cursor::new("q1 0 d1 -1\n"), "mem").unwrap_err();
        assert!(matches!(err, CorpusError::NegativeGrade { grade: -1, line: 1, .. }));
    }

    #[test]
    fn qrels_duplicate_last_wins() {
        let q = parse_qrels(Cursor::new("q1 0 d1 1\nq1 0 d1 2\n"), "mem").unwrap();
        assert_eq!(q.grade("q1", "d1"), 2);
    }

    #[test]
    fn qrels_wrong_column_count() {
        let err = parse_qrels(Cursor::new("q1 d1 1\n"), "mem").unwrap_err();
        assert!(matches!(err, CorpusError::MalformedRecord { line: 1, .. }));
    }

    #[test]
    fn pair_valid() {
        let c = small_corpus();
        let pm = PairMap::new(vec![("h1".into(), "l1".into())], &c).unwrap();
        assert_eq!(pm.len(), 1);
    }

    #[test]
    fn pair_source_mismatch() {
        let c = small_corpus();
        let err = PairMap::new(vec![("h1".into(), "h2".into())], &c).unwrap_err();
        assert!(matches!(err, CorpusError::SourceMismatch { .. }));
    }

    #[test]
    fn pair_unresolved() {
        let c = small_corpus();
        let err = PairMap::new(vec![("h1".into(), "lX".into())], &c).unwrap_err();
        assert_eq!(err, CorpusError::UnresolvedId("lX".into()));
    }

    #[test]
    fn pair_duplicate_member() {
        let c = small_corpus();
        let err = PairMap::new(
            vec![("h1".into(), "l1".into()), ("h2".into(), "l1".into())],
            &c,
        )
        .unwrap_err();
        assert_eq!(err, CorpusError::DuplicatePairMember("l1".into()));
    }

    #[test]
    fn pairs_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = small_corpus();
        let pm = PairMap::new(
            vec![("h1".into(), "l1".into()), ("h2".into(), "l2".into())],
            &c,
        )
        .unwrap();
        let p = dir.path().join("pairs.tsv");
        write_pairs(&pm, &p).unwrap();
        assert_eq!(load_pairs(&p, &c).unwrap(), pm);
    }

    #[test]
    fn pairs_file_requires_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "pairs.tsv", "h1\tl1\n");
        assert!(matches!(
            load_pairs(&p, &small_corpus()).unwrap_err(),
            CorpusError::MalformedRecord { line: 1, .. }
        ));
    }
}
