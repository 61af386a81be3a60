use biascope::config::{check_exists, require, JobConfig};
use biascope::corpus::{load_corpus, load_qrels};
use biascope::embed_store::read_embeddings;
use biascope::metrics::{brute_force_retrieve, delta_ndsr, ndcg, read_run};
use biascope::Result;
use serde::Serialize;

use crate::output::{out_dir, write_json, write_text};

#[derive(Serialize)]
struct Summary<'a> {
    dataset: &'a str,
    k: usize,
    n_queries: usize,
    mean_delta_ndsr: f64,
    mean_ndcg: f64,
    ndcg_skipped: usize,
    source: &'static str,
}

/// Writes `prefs.csv`, `ndcg.csv` and `summary.json`. Uses the TREC run when
/// one is configured, otherwise retrieves from the embedding files.
pub fn run(cfg: &JobConfig) -> Result<()> {
    let qrels = load_qrels(require(&cfg.qrels, "qrels")?)?;
    let corpus = load_corpus(require(&cfg.corpus, "corpus")?, &cfg.dataset)?;
    let (run, source) = match &cfg.runs {
        Some(p) => {
            check_exists(p, "runs")?;
            (read_run(p)?, "run")
        }
        None => {
            let q = read_embeddings(require(&cfg.query_embs, "query_embs")?)?;
            let d = read_embeddings(require(&cfg.doc_embs, "doc_embs")?)?;
            (brute_force_retrieve(&q, &d, cfg.k)?, "embeddings")
        }
    };
    let prefs = delta_ndsr(&run, &corpus.sources(), cfg.k)?;
    let nd = ndcg(&run, &qrels, cfg.k)?;
    let dir = out_dir(&cfg.out_dir)?;
    write_text(&dir.join("prefs.csv"), &prefs.to_csv())?;
    write_text(&dir.join("ndcg.csv"), &nd.to_csv())?;
    write_json(
        &dir.join("summary.json"),
        &Summary {
            dataset: &cfg.dataset,
            k: cfg.k,
            n_queries: prefs.per_query.len(),
            mean_delta_ndsr: prefs.mean_delta,
            mean_ndcg: nd.mean,
            ndcg_skipped: nd.skipped,
            source,
        },
    )
}
