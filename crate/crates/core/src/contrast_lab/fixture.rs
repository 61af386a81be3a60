use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::generator::{artifact, doc, query_from};
use super::model::LabModel;
use super::{LabConfig, LabError};
use crate::corpus::{
    write_corpus, write_pairs, write_qrels, write_queries, Corpus, PairMap, Passage, Qrels,
    QuerySet, Source,
};
use crate::embed_store::{write_embeddings, EmbeddingMatrix};

/// Std of the semantic noise separating a topic's two passages from it.
const PASSAGE_NOISE: f64 = 0.1;
/// Artifact spread within each source. Kept small so that the source shift,
/// not artifact noise, decides the within-topic order.
pub const ARTIFACT_NOISE: f64 = 0.1;
/// LLM passages sit at this fraction of `delta_a`.
pub const LLM_SHIFT: f64 = 0.25;

/// A small retrieval dataset encoded by a lab model. Every topic has one
/// query and two relevant passages with the same semantics: a human one with
/// unshifted artifacts and an LLM one with artifacts around `delta_a`.
#[derive(Debug, Clone)]
pub struct BiasedFixture {
    pub dataset: String,
    pub corpus: Corpus,
    pub pairs: PairMap,
    pub qrels: Qrels,
    pub queries: QuerySet,
    pub query_embs: EmbeddingMatrix,
    pub doc_embs: EmbeddingMatrix,
}

fn to_f32(v: DVector<f64>) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

pub fn biased_fixture(
    model: &LabModel,
    cfg: &LabConfig,
    n_topics: usize,
    seed: u64,
) -> Result<BiasedFixture, LabError> {
    cfg.validate()?;
    if n_topics == 0 {
        return Err(LabError::InvalidConfig("n_topics must be positive".into()));
    }
    let dataset = "lab".to_string();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut passages = Vec::with_capacity(2 * n_topics);
    let mut pairs = Vec::with_capacity(n_topics);
    let mut qrels = Qrels::new();
    let mut queries = QuerySet::default();
    let mut q_rows = Vec::with_capacity(n_topics);
    let mut d_rows = Vec::with_capacity(2 * n_topics);
    for t in 0..n_topics {
        let (qid, hid, lid) = (format!("q{t:04}"), format!("h{t:04}"), format!("l{t:04}"));
        let topic: Vec<f64> = (0..cfg.sem_dim).map(|_| rng.sample(StandardNormal)).collect();
        let near = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            topic
                .iter()
                .map(|m| m + PASSAGE_NOISE * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let h_sem = near(&mut rng);
        let l_sem = near(&mut rng);
        let mut art = |shift: f64| -> Vec<f64> {
            let a = artifact(&mut rng, None, cfg.art_dim);
            a.iter().zip(&cfg.delta_a).map(|(x, d)| ARTIFACT_NOISE * x + shift * d).collect()
        };
        let h = doc(&h_sem, &art(0.0));
        let l = doc(&l_sem, &art(LLM_SHIFT));
        let q = query_from(&topic, &mut rng, cfg.query_noise);

        q_rows.push((qid.clone(), to_f32(model.encode_query(&q))));
        d_rows.push((hid.clone(), to_f32(model.encode_doc(&h))));
        d_rows.push((lid.clone(), to_f32(model.encode_doc(&l))));
        for (id, source) in [(&hid, Source::Human), (&lid, Source::Llm)] {
            passages.push(Passage {
                id: id.clone(),
                text: format!("topic {t} {} passage", source.as_str().to_lowercase()),
                source,
                dataset: dataset.clone(),
            });
            qrels.insert(&qid, id, 1);
        }
        queries.queries.insert(qid, format!("topic {t}"));
        pairs.push((hid, lid));
    }
    let invalid = |e: &dyn std::fmt::Display| LabError::InvalidConfig(e.to_string());
    let corpus = Corpus::from_passages(passages).map_err(|e| invalid(&e))?;
    let pairs = PairMap::new(pairs, &corpus).map_err(|e| invalid(&e))?;
    let query_embs = EmbeddingMatrix::from_rows(cfg.embed_dim, q_rows).map_err(|e| invalid(&e))?;
    let doc_embs = EmbeddingMatrix::from_rows(cfg.embed_dim, d_rows).map_err(|e| invalid(&e))?;
    Ok(BiasedFixture {
        dataset,
        corpus,
        pairs,
        qrels,
        queries,
        query_embs,
        doc_embs,
    })
}

impl BiasedFixture {
    /// Writes `corpus.jsonl`, `pairs.tsv`, `qrels.tsv`, `queries.jsonl`,
    /// `query_embs.bin` and `doc_embs.bin` into `dir`.
    pub fn write_to(&self, dir: &Path) -> crate::Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
        write_corpus(self.corpus.passages(), dir.join("corpus.jsonl"))?;
        write_pairs(&self.pairs, dir.join("pairs.tsv"))?;
        write_qrels(&self.qrels, dir.join("qrels.tsv"))?;
        write_queries(&self.queries, dir.join("queries.jsonl"))?;
        write_embeddings(&self.query_embs, dir.join("query_embs.bin"))?;
        write_embeddings(&self.doc_embs, dir.join("doc_embs.bin"))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contrast_lab::{train, Regime};
    use crate::debias::debias_eval;
    use crate::geometry::{mean_direction, pair_displacements, DirectionLabel};

    #[test]
    fn projection_reduces_fixture_bias() {
        let cfg = LabConfig {
            regime: Regime::Standard,
            ..LabConfig::default()
        };
        let model = train(&cfg).unwrap().model;
        let fx = biased_fixture(&model, &cfg, 200, 7).unwrap();
        let disp = pair_displacements(&fx.pairs, &fx.doc_embs).unwrap();
        let dir = mean_direction(&disp.vectors, 7, Some(1000), DirectionLabel::LH).unwrap();
        let ev = debias_eval(&fx.query_embs, &fx.doc_embs, &dir, &fx.corpus.sources(), &fx.qrels, 5).unwrap();
        let before = ev.before.preference.mean_delta;
        let after = ev.after.preference.mean_delta;
        assert!(before < 0.0, "{before}");
        assert!(after.abs() < 0.5 * before.abs(), "{before} -> {after}");
        assert!((ev.after.ndcg.mean - ev.before.ndcg.mean).abs() < 0.02);
    }

    #[test]
    fn write_round_trip() {
        let cfg = LabConfig::default();
        let model = LabModel::random(&cfg, &mut ChaCha8Rng::seed_from_u64(0));
        let fx = biased_fixture(&model, &cfg, 5, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        fx.write_to(dir.path()).unwrap();
        let back = crate::corpus::load_corpus(dir.path().join("corpus.jsonl"), "lab").unwrap();
        assert_eq!(back.len(), 10);
        let embs = crate::embed_store::read_embeddings(dir.path().join("doc_embs.bin")).unwrap();
        assert_eq!(embs, fx.doc_embs);
    }
}
