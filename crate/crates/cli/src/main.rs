use std::path::PathBuf;
use std::process::ExitCode;

use biascope::config::JobConfig;
use biascope::{Error, ErrorKind, Result};
use clap::{Args, Parser, Subcommand};

mod debias;
mod eval;
mod geometry;
mod ingest;
mod lab;
mod linguistics;
mod output;

#[derive(Parser)]
#[command(name = "biascope", version, about = "Source-bias diagnostics for dense retrievers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score a run: per-query ΔNDSR, NDCG and a summary.
    Eval(JobArgs),
    /// Displacement consistency, cross-dataset and PN alignment.
    Geometry(JobArgs),
    /// Project the bias direction out of document embeddings.
    Debias(debias::DebiasArgs),
    /// Synthetic contrastive-training lab.
    #[command(subcommand)]
    Lab(lab::LabCommand),
    /// Per-source IDF and perplexity distributions and effect sizes.
    Linguistics(linguistics::LinguisticsArgs),
    /// Exchange passages and vectors with an external encoder.
    #[command(subcommand)]
    Ingest(ingest::IngestCommand),
}

/// Options shared by the dataset subcommands. Flags override the JSON config.
#[derive(Args, Debug, Clone, Default)]
pub struct JobArgs {
    /// JSON job config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long)]
    qrels: Option<PathBuf>,
    #[arg(long)]
    queries: Option<PathBuf>,
    #[arg(long)]
    query_embs: Option<PathBuf>,
    #[arg(long, alias = "embs")]
    doc_embs: Option<PathBuf>,
    #[arg(long)]
    ppl: Option<PathBuf>,
    #[arg(long)]
    runs: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, alias = "sample")]
    sample_size: Option<usize>,
    #[arg(long)]
    bm25_depth: Option<usize>,
}

impl JobArgs {
    pub fn resolve(&self) -> Result<JobConfig> {
        let mut cfg = match &self.config {
            Some(p) => JobConfig::load(p)?,
            None => JobConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = &self.$f { cfg.$f = v.clone(); }
            )*};
        }
        macro_rules! set_opt {
            ($($f:ident),*) => {$(
                if self.$f.is_some() { cfg.$f = self.$f.clone(); }
            )*};
        }
        set!(dataset, out_dir, k, seed, sample_size, bm25_depth);
        set_opt!(corpus, pairs, qrels, queries, query_embs, doc_embs, ppl, runs);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn init_threads() {
    let Ok(raw) = std::env::var("BIASCOPE_THREADS") else {
        return;
    };
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("could not cap threads at {n}: {e}");
            }
        }
        _ => log::warn!("ignoring BIASCOPE_THREADS={raw:?}: expected a positive integer"),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Eval(a) => eval::run(&a.resolve()?),
        Command::Geometry(a) => geometry::run(&a.resolve()?),
        Command::Debias(a) => debias::run(&a),
        Command::Lab(c) => lab::run(c),
        Command::Linguistics(a) => linguistics::run(&a),
        Command::Ingest(c) => ingest::run(c),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numeric => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    init_threads();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
