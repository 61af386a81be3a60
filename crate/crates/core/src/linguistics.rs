//! Lexical and fluency statistics: tokenization, document frequency, IDF,
//! BM25, perplexity, and effect sizes.
//!
//! Logarithms are natural throughout.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Qrels, QuerySet};
use crate::geometry::QuerySupervision;
use crate::special;

#[derive(Debug, Error, PartialEq)]
pub enum LinguisticsError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("text has no tokens")]
    NoTokens,
    #[error("query has no tokens")]
    EmptyQuery,
    #[error("token log-probability list is empty")]
    EmptyTokenList,
    #[error("perplexity for {doc_id:?} must be positive and finite, got {value}")]
    NonPositivePpl { doc_id: String, value: f64 },
    #[error("need at least 2 samples per group, got {0} and {1}")]
    TooFewSamples(usize, usize),
    #[error("pooled variance is zero")]
    DegenerateVariance,
    #[error("{path}: line {line}: {reason}")]
    MalformedRecord {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// Lowercased maximal runs of Unicode letters and digits.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Document frequencies and lengths over a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct TermStats {
    pub n_docs: usize,
    pub df: HashMap<String, usize>,
    pub avg_doc_len: f64,
    pub doc_lens: HashMap<String, usize>,
}

impl TermStats {
    /// Counts presence per document, not occurrences.
    pub fn build<'a>(docs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self, LinguisticsError> {
        let mut df: HashMap<String, usize> = HashMap::new();
        let mut doc_lens = HashMap::new();
        let mut total = 0usize;
        for (id, text) in docs {
            let mut tokens = tokenize(text);
            total += tokens.len();
            doc_lens.insert(id.to_string(), tokens.len());
            tokens.sort_unstable();
            tokens.dedup();
            for t in tokens {
                *df.entry(t).or_default() += 1;
            }
        }
        let n_docs = doc_lens.len();
        if n_docs == 0 {
            return Err(LinguisticsError::EmptyCorpus);
        }
        Ok(TermStats {
            n_docs,
            df,
            avg_doc_len: total as f64 / n_docs as f64,
            doc_lens,
        })
    }

    pub fn doc_freq(&self, token: &str) -> usize {
        self.df.get(token).copied().unwrap_or(0)
    }

    /// `ln(N / (1 + df))`. Negative when a token occurs in every document.
    pub fn idf(&self, token: &str) -> f64 {
        idf_value(self.n_docs, self.doc_freq(token))
    }

    /// Median over the IDF of every token occurrence in `text`.
    pub fn passage_median_idf(&self, text: &str) -> Result<f64, LinguisticsError> {
        let mut idfs: Vec<f64> = tokenize(text).iter().map(|t| self.idf(t)).collect();
        median(&mut idfs).ok_or(LinguisticsError::NoTokens)
    }
}

pub fn build_term_stats(corpus: &Corpus) -> Result<TermStats, LinguisticsError> {
    TermStats::build(corpus.passages().iter().map(|p| (p.id.as_str(), p.text.as_str())))
}

pub fn idf_value(n_docs: usize, df: usize) -> f64 {
    (n_docs as f64 / (1 + df) as f64).ln()
}

/// Median with the mean-of-middle-two rule; `None` on empty input.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 0.9, b: 0.4 }
    }
}

/// Inverted index for BM25 over a corpus.
#[derive(Debug, Clone)]
pub struct Bm25Index {
    stats: TermStats,
    params: Bm25Params,
    doc_ids: Vec<String>,
    doc_lens: Vec<usize>,
    postings: HashMap<String, Vec<(usize, u32)>>,
}

impl Bm25Index {
    pub fn build(corpus: &Corpus, params: Bm25Params) -> Result<Self, LinguisticsError> {
        let stats = build_term_stats(corpus)?;
        let mut postings: HashMap<String, Vec<(usize, u32)>> = HashMap::new();
        let mut doc_ids = Vec::with_capacity(corpus.len());
        let mut doc_lens = Vec::with_capacity(corpus.len());
        for (i, p) in corpus.passages().iter().enumerate() {
            let tokens = tokenize(&p.text);
            doc_ids.push(p.id.clone());
            doc_lens.push(tokens.len());
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (t, c) in tf {
                postings.entry(t).or_default().push((i, c));
            }
        }
        Ok(Bm25Index {
            stats,
            params,
            doc_ids,
            doc_lens,
            postings,
        })
    }

    pub fn stats(&self) -> &TermStats {
        &self.stats
    }

    /// `max(0, ln((N - df + 0.5) / (df + 0.5)))`.
    pub fn term_idf(&self, token: &str) -> f64 {
        let n = self.stats.n_docs as f64;
        let df = self.stats.doc_freq(token) as f64;
        ((n - df + 0.5) / (df + 0.5)).ln().max(0.0)
    }

    /// Top `k` documents sharing at least one query token, by BM25 score
    /// descending, ties by doc id.
    pub fn topk(&self, query: &str, k: usize) -> Result<Vec<(String, f64)>, LinguisticsError> {
        let tokens = tokenize(query);
        if tokens.is_empty() {
            return Err(LinguisticsError::EmptyQuery);
        }
        let Bm25Params { k1, b } = self.params;
        let avg = self.stats.avg_doc_len.max(f64::MIN_POSITIVE);
        let mut scores: HashMap<usize, f64> = HashMap::new();
        for t in &tokens {
            let Some(list) = self.postings.get(t) else {
                continue;
            };
            let idf = self.term_idf(t);
            for &(doc, tf) in list {
                let tf = f64::from(tf);
                let norm = k1 * (1.0 - b + b * self.doc_lens[doc] as f64 / avg);
                *scores.entry(doc).or_default() += idf * tf * (k1 + 1.0) / (tf + norm);
            }
        }
        let mut out: Vec<(String, f64)> = scores
            .into_iter()
            .map(|(d, s)| (self.doc_ids[d].clone(), s))
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out.truncate(k);
        Ok(out)
    }
}

/// For every query with positives, the top-`depth` BM25 candidates.
pub fn mine_bm25_candidates(
    index: &Bm25Index,
    queries: &QuerySet,
    qrels: &Qrels,
    depth: usize,
) -> Result<Vec<QuerySupervision>, LinguisticsError> {
    let mut out = Vec::new();
    for (qid, _) in qrels.iter() {
        let positives: Vec<String> = qrels.positives(qid).into_iter().map(String::from).collect();
        let Some(text) = queries.queries.get(qid) else {
            continue;
        };
        if positives.is_empty() || tokenize(text).is_empty() {
            continue;
        }
        let candidates = index
            .topk(text, depth)?
            .into_iter()
            .map(|(d, _)| d)
            .collect();
        out.push(QuerySupervision {
            query_id: qid.clone(),
            positives,
            candidates,
        });
    }
    Ok(out)
}

/// `exp(-mean(logprobs))` for natural-log token probabilities.
pub fn score_ppl(logprobs: &[f64]) -> Result<f64, LinguisticsError> {
    if logprobs.is_empty() {
        return Err(LinguisticsError::EmptyTokenList);
    }
    let mean = logprobs.iter().sum::<f64>() / logprobs.len() as f64;
    Ok((-mean).exp())
}

/// Perplexity per document id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PplTable {
    pub scores: BTreeMap<String, f64>,
}

#[derive(Deserialize)]
struct PplRecord {
    doc_id: String,
    ppl: Option<f64>,
    logprobs: Option<Vec<f64>>,
}

/// Reads `{doc_id, ppl}` or `{doc_id, logprobs: [...]}` records.
pub fn load_ppl(path: impl AsRef<Path>) -> Result<PplTable, LinguisticsError> {
    let path = path.as_ref();
    let io = |e: std::io::Error| LinguisticsError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let file = File::open(path).map_err(io)?;
    let mut scores = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| LinguisticsError::MalformedRecord {
            path: path.display().to_string(),
            line: i + 1,
            reason,
        };
        let rec: PplRecord = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let value = match (rec.ppl, rec.logprobs) {
            (Some(p), None) => p,
            (None, Some(lp)) => score_ppl(&lp)?,
            _ => return Err(malformed("expected exactly one of `ppl` or `logprobs`".into())),
        };
        if !(value > 0.0 && value.is_finite()) {
            return Err(LinguisticsError::NonPositivePpl {
                doc_id: rec.doc_id,
                value,
            });
        }
        scores.insert(rec.doc_id, value);
    }
    Ok(PplTable { scores })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectSizeReport {
    pub g: f64,
    pub p_value: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub mean_a: f64,
    pub mean_b: f64,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch's two-sided t-test. Returns `(t, df, p)`.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<(f64, f64, f64), LinguisticsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(LinguisticsError::TooFewSamples(a.len(), b.len()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let se2 = va / na + vb / nb;
    if se2 <= 0.0 {
        return Err(LinguisticsError::DegenerateVariance);
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let p = special::student_t_two_sided(t, df).unwrap_or(f64::NAN).clamp(0.0, 1.0);
    Ok((t, df, p))
}

/// Bias-corrected standardized mean difference of `a` over `b`, with a
/// Welch p-value.
pub fn hedges_g(a: &[f64], b: &[f64]) -> Result<EffectSizeReport, LinguisticsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(LinguisticsError::TooFewSamples(a.len(), b.len()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let dof = na + nb - 2.0;
    let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / dof;
    if !(pooled > 0.0) {
        return Err(LinguisticsError::DegenerateVariance);
    }
    let j = 1.0 - 3.0 / (4.0 * dof - 1.0);
    let g = j * (ma - mb) / pooled.sqrt();
    let p_value = match welch_t_test(a, b) {
        Ok((_, _, p)) => p,
        Err(LinguisticsError::DegenerateVariance) => 1.0,
        Err(e) => return Err(e),
    };
    Ok(EffectSizeReport {
        g,
        p_value,
        n_a: a.len(),
        n_b: b.len(),
        mean_a: ma,
        mean_b: mb,
    })
}

/// Equal-width histogram over `[lo, hi]`; values outside are clamped into the
/// edge bins. Returns bin lower edges and counts.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<(f64, usize)> {
    let bins = bins.max(1);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &v in values {
        let i = ((v - lo) / width).floor();
        let i = if i.is_nan() { 0 } else { (i.max(0.0) as usize).min(bins - 1) };
        counts[i] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (lo + i as f64 * width, c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Passage, Source};
    use proptest::prelude::*;

    fn corpus(texts: &[&str]) -> Corpus {
        Corpus::from_passages(
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| Passage {
                    id: format!("d{i}"),
                    text: t.to_string(),
                    source: Source::Human,
                    dataset: "t".into(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(tokenize("The cat, the CAT!"), vec!["the", "cat", "the", "cat"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("COVID-19"), vec!["covid", "19"]);
        assert_eq!(tokenize("Straße über"), vec!["straße", "über"]);
    }

    #[test]
    fn term_stats_examples() {
        let s = build_term_stats(&corpus(&["a b", "a c", "x y z w"])).unwrap();
        assert_eq!(s.doc_freq("a"), 2);
        let s = build_term_stats(&corpus(&["a a a a a", "b"])).unwrap();
        assert_eq!(s.doc_freq("a"), 1);
        let s = build_term_stats(&corpus(&["a b", "a b c d", "a b c d e f"])).unwrap();
        assert_eq!(s.avg_doc_len, 4.0);
        assert_eq!(build_term_stats(&Corpus::default()), Err(LinguisticsError::EmptyCorpus));
    }

    #[test]
    fn idf_examples() {
        assert!((idf_value(10, 4) - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(idf_value(10, 9), 0.0);
        assert!(idf_value(10, 10) < 0.0);
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&mut [0.9, 0.2, 0.5]), Some(0.5));
        assert!((median(&mut [0.4, 0.2]).unwrap() - 0.3).abs() < 1e-15);
        let s = build_term_stats(&corpus(&["a"])).unwrap();
        assert_eq!(s.passage_median_idf("..."), Err(LinguisticsError::NoTokens));
    }

    #[test]
    fn bm25_examples() {
        let one = corpus(&["river bank"]);
        let idx = Bm25Index::build(&one, Bm25Params::default()).unwrap();
        assert_eq!(idx.topk("bank", 10).unwrap()[0].0, "d0");
        assert!(idx.topk("mountain", 10).unwrap().is_empty());
        assert_eq!(idx.topk("!!", 10), Err(LinguisticsError::EmptyQuery));
    }

    #[test]
    fn ppl_examples() {
        assert_eq!(score_ppl(&[0.0, 0.0, 0.0]).unwrap(), 1.0);
        assert!((score_ppl(&[0.5f64.ln(); 4]).unwrap() - 2.0).abs() < 1e-12);
        let v = score_ppl(&[0.5f64.ln(), 0.25f64.ln()]).unwrap();
        assert!((v - 8f64.sqrt()).abs() < 1e-12);
        assert!((v - 2.8284).abs() < 1e-4);
        assert_eq!(score_ppl(&[]), Err(LinguisticsError::EmptyTokenList));
    }

    #[test]
    fn ppl_file_forms() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ppl.jsonl");
        std::fs::write(
            &p,
            "{\"doc_id\":\"a\",\"ppl\":12.5}\n{\"doc_id\":\"b\",\"logprobs\":[-0.6931471805599453]}\n",
        )
        .unwrap();
        let t = load_ppl(&p).unwrap();
        assert_eq!(t.scores["a"], 12.5);
        assert!((t.scores["b"] - 2.0).abs() < 1e-12);
        std::fs::write(&p, "{\"doc_id\":\"a\",\"ppl\":0}\n").unwrap();
        assert!(matches!(load_ppl(&p), Err(LinguisticsError::NonPositivePpl { .. })));
    }

    #[test]
    fn hedges_examples() {
        let r = hedges_g(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap();
        assert!((r.g + 0.8).abs() < 1e-12, "{}", r.g);
        let r = hedges_g(&[1.0, 5.0, 2.0], &[1.0, 5.0, 2.0]).unwrap();
        assert_eq!(r.g, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);
        assert_eq!(
            hedges_g(&[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0]),
            Err(LinguisticsError::DegenerateVariance)
        );
        assert_eq!(hedges_g(&[1.0], &[1.0, 2.0]), Err(LinguisticsError::TooFewSamples(1, 2)));
    }

    #[test]
    fn welch_p_against_statrs() {
        use statrs::distribution::{ContinuousCDF, StudentsT};
        let a = [5.1, 4.9, 6.2, 5.8, 6.0, 5.5, 5.3];
        let b = [4.1, 4.5, 3.9, 5.0, 4.4];
        let (t, df, p) = welch_t_test(&a, &b).unwrap();
        let want = 2.0 * StudentsT::new(0.0, 1.0, df).unwrap().cdf(-t.abs());
        assert!((p - want).abs() < 1e-10);
    }

    #[test]
    fn histogram_counts() {
        let h = histogram(&[0.0, 0.1, 0.5, 0.99, 1.0, 7.0, -3.0], 0.0, 1.0, 2);
        assert_eq!(h, vec![(0.0, 3), (0.5, 4)]);
    }

    proptest! {
        #[test]
        fn idf_non_increasing_in_df(n in 1usize..500, df in 0usize..500) {
            prop_assert!(idf_value(n, df + 1) <= idf_value(n, df));
        }

        #[test]
        fn median_idf_order_free(words in prop::collection::vec("[a-e]{1,2}", 1..20), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let stats = build_term_stats(&corpus(&["a b c", "a d", "e aa", "b"])).unwrap();
            let mut shuffled = words.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(
                stats.passage_median_idf(&words.join(" ")).unwrap(),
                stats.passage_median_idf(&shuffled.join(" ")).unwrap()
            );
        }

        #[test]
        fn hedges_antisymmetric_and_affine_invariant(
            a in prop::collection::vec(-50.0f64..50.0, 2..30),
            b in prop::collection::vec(-50.0f64..50.0, 2..30),
            scale in 0.1f64..10.0,
            shift in -100.0f64..100.0,
        ) {
            let Ok(ab) = hedges_g(&a, &b) else { return Ok(()) };
            let ba = hedges_g(&b, &a).unwrap();
            prop_assert!((ab.g + ba.g).abs() < 1e-9);
            let ta: Vec<f64> = a.iter().map(|x| scale * x + shift).collect();
            let tb: Vec<f64> = b.iter().map(|x| scale * x + shift).collect();
            let t = hedges_g(&ta, &tb).unwrap();
            prop_assert!((t.g - ab.g).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&ab.p_value));
            prop_assert_eq!(ab.g.signum() == (ab.mean_a - ab.mean_b).signum() || ab.g == 0.0, true);
        }

        #[test]
        fn ppl_order_free(lp in prop::collection::vec(-8.0f64..0.0, 1..40)) {
            let mut rev = lp.clone();
            rev.reverse();
            let a = score_ppl(&lp).unwrap();
            let b = score_ppl(&rev).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a);
        }
    }
}
