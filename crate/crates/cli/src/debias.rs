use std::path::PathBuf;

use biascope::config::{check_exists, require};
use biascope::corpus::{load_corpus, load_pairs, load_qrels};
use biascope::debias::{debias_eval, debias_matrix, resolve_direction, DebiasConfig, DirectionSource, EvalSnapshot};
use biascope::embed_store::{read_embeddings, write_embeddings};
use biascope::geometry::DirectionLabel;
use biascope::Result;
use clap::Args;
use serde::Serialize;

use crate::output::{out_dir, write_json};
use crate::JobArgs;

#[derive(Args)]
pub struct DebiasArgs {
    #[command(flatten)]
    job: JobArgs,
    /// Where to write the projected document embeddings
    /// [default: <out_dir>/doc_embs_debiased.bin].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use a saved direction file instead of estimating one from pairs.
    #[arg(long)]
    direction: Option<PathBuf>,
}

#[derive(Serialize)]
struct Snapshot {
    mean_delta_ndsr: f64,
    mean_ndcg: f64,
}

impl From<&EvalSnapshot> for Snapshot {
    fn from(s: &EvalSnapshot) -> Self {
        Snapshot {
            mean_delta_ndsr: s.preference.mean_delta,
            mean_ndcg: s.ndcg.mean,
        }
    }
}

#[derive(Serialize)]
struct Evaluation {
    k: usize,
    before: Snapshot,
    after: Snapshot,
    /// `|after ΔNDSR| / |before ΔNDSR|`.
    remaining_bias: Option<f64>,
    ndcg_change: f64,
}

#[derive(Serialize)]
struct Summary {
    dataset: String,
    direction_label: DirectionLabel,
    direction_n_pairs: usize,
    direction_seed: u64,
    raw_mean_norm: f64,
    renormalized: bool,
    evaluation: Option<Evaluation>,
}

pub fn run(args: &DebiasArgs) -> Result<()> {
    let cfg = args.job.resolve()?;
    let embs = read_embeddings(require(&cfg.doc_embs, "doc_embs")?)?;
    let settings = DebiasConfig {
        direction_source: match &args.direction {
            Some(p) => {
                check_exists(p, "direction")?;
                DirectionSource::FromFile(p.clone())
            }
            None => DirectionSource::FromPairs {
                seed: cfg.seed,
                sample_size: cfg.sample_size,
            },
        },
        // q . (d - <d,n> n) equals the score with both sides projected, so
        // queries never need rewriting.
        keep_queries: true,
    };
    let corpus = match &cfg.corpus {
        Some(_) => Some(load_corpus(require(&cfg.corpus, "corpus")?, &cfg.dataset)?),
        None => None,
    };
    let pairs = match &settings.direction_source {
        DirectionSource::FromPairs { .. } => {
            let corpus = corpus.as_ref().ok_or_else(|| {
                biascope::Error::Config("missing required path `corpus` (needed to read pairs)".into())
            })?;
            Some(load_pairs(require(&cfg.pairs, "pairs")?, corpus)?)
        }
        DirectionSource::FromFile(_) => None,
    };
    let direction = resolve_direction(&settings.direction_source, pairs.as_ref(), &embs)?;
    let projected = debias_matrix(&embs, &direction)?;

    let dir = out_dir(&cfg.out_dir)?;
    let out = args.out.clone().unwrap_or_else(|| dir.join("doc_embs_debiased.bin"));
    write_embeddings(&projected, &out)?;
    write_embeddings(&direction.to_matrix(&cfg.dataset), dir.join("direction.bin"))?;

    let evaluation = match (&cfg.query_embs, &cfg.qrels, &corpus) {
        (Some(_), Some(_), Some(corpus)) => {
            let queries = read_embeddings(require(&cfg.query_embs, "query_embs")?)?;
            let qrels = load_qrels(require(&cfg.qrels, "qrels")?)?;
            let ev = debias_eval(&queries, &embs, &direction, &corpus.sources(), &qrels, cfg.k)?;
            Some(Evaluation {
                k: cfg.k,
                before: (&ev.before).into(),
                after: (&ev.after).into(),
                remaining_bias: ev.remaining_bias,
                ndcg_change: ev.after.ndcg.mean - ev.before.ndcg.mean,
            })
        }
        _ => {
            log::info!("query_embs, qrels or corpus missing; skipping before/after evaluation");
            None
        }
    };
    write_json(
        &dir.join("debias_summary.json"),
        &Summary {
            dataset: cfg.dataset.clone(),
            direction_label: direction.label,
            direction_n_pairs: direction.n_pairs,
            direction_seed: direction.seed,
            raw_mean_norm: direction.raw_mean_norm,
            renormalized: false,
            evaluation,
        },
    )
}
