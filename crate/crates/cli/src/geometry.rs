use std::path::Path;

use biascope::config::{check_exists, require, JobConfig};
use biascope::corpus::{load_corpus, load_pairs, load_qrels, load_queries, Corpus};
use biascope::embed_store::{read_embeddings, write_embeddings, EmbeddingMatrix};
use biascope::geometry::{
    cross_alignment, mean_direction, pair_displacements, pn_direction, within_consistency,
    AlignmentRecord, ConsistencyReport, DirectionEstimate, DirectionLabel,
};
use biascope::linguistics::{mine_bm25_candidates, Bm25Index, Bm25Params};
use biascope::Result;
use serde::Serialize;

use crate::output::{out_dir, write_json};

struct Dataset {
    name: String,
    corpus: Corpus,
    embs: EmbeddingMatrix,
    consistency: ConsistencyReport,
    lh: DirectionEstimate,
}

fn load_dataset(cfg: &JobConfig, name: &str, corpus: &Path, pairs: &Path, embs: &Path) -> Result<Dataset> {
    let corpus = load_corpus(corpus, name)?;
    let pairs = load_pairs(pairs, &corpus)?;
    let embs = read_embeddings(embs)?;
    let disp = pair_displacements(&pairs, &embs)?;
    let consistency = within_consistency(&disp.vectors)?;
    let lh = mean_direction(&disp.vectors, cfg.seed, Some(cfg.sample_size), DirectionLabel::LH)?;
    Ok(Dataset {
        name: name.to_string(),
        corpus,
        embs,
        consistency,
        lh,
    })
}

#[derive(Serialize)]
struct ConsistencyEntry<'a> {
    dataset: &'a str,
    #[serde(flatten)]
    report: &'a ConsistencyReport,
}

#[derive(Serialize)]
struct CrossEntry<'a> {
    a: &'a str,
    b: &'a str,
    cos: f64,
    threshold: f64,
    significant: bool,
}

#[derive(Serialize)]
struct CrossReport<'a> {
    datasets: Vec<&'a str>,
    /// Row-major cosine matrix between per-dataset LH directions.
    matrix: Vec<Vec<f64>>,
    pairs: Vec<CrossEntry<'a>>,
}

/// Writes `consistency.json`, `cross_alignment.json`, `direction_lh.bin`, and
/// `pn_alignment.json` when queries and qrels are configured.
pub fn run(cfg: &JobConfig) -> Result<()> {
    let main = load_dataset(
        cfg,
        &cfg.dataset,
        require(&cfg.corpus, "corpus")?,
        require(&cfg.pairs, "pairs")?,
        require(&cfg.doc_embs, "doc_embs")?,
    )?;
    let mut all = vec![main];
    for extra in &cfg.extra_datasets {
        for (p, what) in [(&extra.corpus, "corpus"), (&extra.pairs, "pairs"), (&extra.doc_embs, "doc_embs")] {
            check_exists(p, &format!("extra_datasets.{what}"))?;
        }
        all.push(load_dataset(cfg, &extra.dataset, &extra.corpus, &extra.pairs, &extra.doc_embs)?);
    }
    let dir = out_dir(&cfg.out_dir)?;

    let entries: Vec<ConsistencyEntry> = all
        .iter()
        .map(|d| ConsistencyEntry {
            dataset: &d.name,
            report: &d.consistency,
        })
        .collect();
    write_json(&dir.join("consistency.json"), &entries)?;

    let mut cross = CrossReport {
        datasets: all.iter().map(|d| d.name.as_str()).collect(),
        matrix: vec![vec![0.0; all.len()]; all.len()],
        pairs: Vec::new(),
    };
    for (i, a) in all.iter().enumerate() {
        for (j, b) in all.iter().enumerate() {
            let al = cross_alignment(&a.lh, &b.lh)?;
            cross.matrix[i][j] = al.cos;
            if i < j {
                cross.pairs.push(CrossEntry {
                    a: &a.name,
                    b: &b.name,
                    cos: al.cos,
                    threshold: al.threshold,
                    significant: al.significant,
                });
            }
        }
    }
    write_json(&dir.join("cross_alignment.json"), &cross)?;

    let main = &all[0];
    write_embeddings(&main.lh.to_matrix(&main.name), dir.join("direction_lh.bin"))?;

    match (&cfg.queries, &cfg.qrels) {
        (Some(_), Some(_)) => {
            let queries = load_queries(require(&cfg.queries, "queries")?)?;
            let qrels = load_qrels(require(&cfg.qrels, "qrels")?)?;
            let index = Bm25Index::build(&main.corpus, Bm25Params::default())?;
            let supervision = mine_bm25_candidates(&index, &queries, &qrels, cfg.bm25_depth)?;
            let pn = pn_direction(&supervision, &main.embs, cfg.seed)?;
            let al = cross_alignment(&main.lh, &pn)?;
            write_embeddings(&pn.to_matrix(&main.name), dir.join("direction_pn.bin"))?;
            write_json(
                &dir.join("pn_alignment.json"),
                &AlignmentRecord {
                    label: format!("{}: LH vs PN", main.name),
                    dim: pn.dim(),
                    cos: al.cos,
                    threshold: al.threshold,
                    significant: al.significant,
                    n_pairs: pn.n_pairs,
                    seed: cfg.seed,
                },
            )?;
        }
        _ => log::warn!("queries or qrels not configured; skipping PN alignment"),
    }
    Ok(())
}
