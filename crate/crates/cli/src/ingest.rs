use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter};
use std::path::{Path, PathBuf};

use biascope::config::check_exists;
use biascope::corpus::{load_corpus, load_queries};
use biascope::embed_store::adapter::{read_responses, run_encoder, write_requests, EncodeRequest};
use biascope::embed_store::write_embeddings;
use biascope::{Error, Result};
use clap::{Args, Subcommand};

#[derive(Subcommand)]
pub enum IngestCommand {
    /// Write encoder requests (JSONL) for a corpus or query file.
    Requests {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert encoder responses (JSONL) to an embedding file.
    Collect {
        #[arg(long)]
        responses: PathBuf,
        /// Request file fixing the row order; arrival order otherwise.
        #[arg(long)]
        requests: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an encoder program over a corpus or query file.
    Encode {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        out: PathBuf,
        /// Encoder program and its arguments, after `--`.
        #[arg(last = true, required = true)]
        command: Vec<String>,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
pub struct Input {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    queries: Option<PathBuf>,
}

impl Input {
    fn requests(&self) -> Result<Vec<EncodeRequest>> {
        if let Some(p) = &self.corpus {
            check_exists(p, "corpus")?;
            let corpus = load_corpus(p, "default")?;
            return Ok(corpus
                .passages()
                .iter()
                .map(|p| EncodeRequest {
                    id: p.id.clone(),
                    text: p.text.clone(),
                })
                .collect());
        }
        let p = self.queries.as_ref().expect("clap enforces one input");
        check_exists(p, "queries")?;
        Ok(load_queries(p)?
            .queries
            .into_iter()
            .map(|(id, text)| EncodeRequest { id, text })
            .collect())
    }
}

fn open(p: &Path, name: &str) -> Result<BufReader<File>> {
    check_exists(p, name)?;
    Ok(BufReader::new(File::open(p).map_err(|e| Error::io(p, e))?))
}

fn read_request_ids(p: &Path) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for (i, line) in open(p, "requests")?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(p, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: EncodeRequest = serde_json::from_str(&line).map_err(|e| {
            Error::Config(format!("{} line {}: {e}", p.display(), i + 1))
        })?;
        ids.push(r.id);
    }
    Ok(ids)
}

pub fn run(cmd: IngestCommand) -> Result<()> {
    match cmd {
        IngestCommand::Requests { input, out } => {
            let reqs = input.requests()?;
            let f = File::create(&out).map_err(|e| Error::io(&out, e))?;
            write_requests(&reqs, BufWriter::new(f)).map_err(|e| Error::io(&out, e))
        }
        IngestCommand::Collect { responses, requests, out } => {
            let order = requests.as_deref().map(read_request_ids).transpose()?;
            let m = read_responses(open(&responses, "responses")?, order.as_deref())?;
            Ok(write_embeddings(&m, &out)?)
        }
        IngestCommand::Encode { input, out, command } => {
            let reqs = input.requests()?;
            let (program, args) = command.split_first().expect("clap requires a command");
            let m = run_encoder(program, args, &reqs)?;
            Ok(write_embeddings(&m, &out)?)
        }
    }
}
