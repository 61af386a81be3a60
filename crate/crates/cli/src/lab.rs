use std::path::PathBuf;

use biascope::config::JobConfig;
use biascope::contrast_lab::{biased_fixture, run_lab, train, LabConfig, LabRunReport, Regime};
use biascope::{Error, Result};
use clap::{Args, Subcommand};
use serde::Serialize;

use crate::output::{out_dir, write_json};

#[derive(Subcommand)]
pub enum LabCommand {
    /// Train and probe lab models under one or all negative-sampling regimes.
    Run(RunArgs),
    /// Train a model and write an encoded human/LLM retrieval dataset.
    Fixture(FixtureArgs),
}

#[derive(Args)]
struct LabArgs {
    /// JSON lab config; missing fields take their defaults.
    #[arg(long)]
    lab_config: Option<PathBuf>,
    /// Artifact shift of positives, applied to every artifact coordinate.
    #[arg(long)]
    delta_a: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

impl LabArgs {
    fn resolve(&self) -> Result<LabConfig> {
        let mut cfg = match &self.lab_config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    Error::Config(format!("cannot read lab config {}: {e}", p.display()))
                })?;
                serde_json::from_str(&text).map_err(|source| Error::Json {
                    path: p.display().to_string(),
                    source,
                })?
            }
            None => LabConfig::default(),
        };
        if let Some(d) = self.delta_a {
            cfg.delta_a = vec![d; cfg.art_dim];
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(s) = self.steps {
            cfg.steps = s;
        }
        if let Some(lr) = self.lr {
            cfg.lr = lr;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
pub struct RunArgs {
    #[command(flatten)]
    lab: LabArgs,
    /// inbatch, standard, hardneg or all.
    #[arg(long, default_value = "all")]
    regime: String,
    #[arg(long, default_value_t = 5)]
    seeds: usize,
    /// Also run every regime with delta_a = 0.
    #[arg(long)]
    controls: bool,
    #[arg(long, default_value = "lab_report.json")]
    out: PathBuf,
}

#[derive(Args)]
pub struct FixtureArgs {
    #[command(flatten)]
    lab: LabArgs,
    #[arg(long, default_value = "standard")]
    regime: String,
    #[arg(long, default_value_t = 200)]
    topics: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Serialize)]
struct Ordering {
    median_abs_bias: Vec<(Regime, f64)>,
    /// InBatchOnly < Standard < HardNegOnly in median |bias|.
    monotone: bool,
    inbatch_over_hardneg: f64,
}

#[derive(Serialize)]
struct Report {
    config: LabConfig,
    seeds: usize,
    reports: Vec<LabRunReport>,
    controls: Vec<LabRunReport>,
    ordering: Option<Ordering>,
}

fn regimes(name: &str) -> Result<Vec<Regime>> {
    if name.eq_ignore_ascii_case("all") {
        return Ok(Regime::ALL.to_vec());
    }
    Ok(vec![name.parse()?])
}

fn ordering(reports: &[LabRunReport]) -> Option<Ordering> {
    let get = |r: Regime| reports.iter().find(|x| x.regime == r).map(|x| x.median_abs_bias);
    let (ib, st, hn) = (get(Regime::InBatchOnly)?, get(Regime::Standard)?, get(Regime::HardNegOnly)?);
    Some(Ordering {
        median_abs_bias: vec![(Regime::InBatchOnly, ib), (Regime::Standard, st), (Regime::HardNegOnly, hn)],
        monotone: ib < st && st < hn,
        inbatch_over_hardneg: ib / hn,
    })
}

pub fn run(cmd: LabCommand) -> Result<()> {
    match cmd {
        LabCommand::Run(a) => run_regimes(&a),
        LabCommand::Fixture(a) => fixture(&a),
    }
}

fn run_regimes(a: &RunArgs) -> Result<()> {
    let cfg = a.lab.resolve()?;
    let list = regimes(&a.regime)?;
    let mut reports = Vec::new();
    let mut controls = Vec::new();
    for &r in &list {
        reports.push(run_lab(&cfg.with_regime(r), a.seeds)?);
        if a.controls {
            let c = LabConfig {
                delta_a: vec![0.0; cfg.art_dim],
                ..cfg.with_regime(r)
            };
            controls.push(run_lab(&c, a.seeds)?);
        }
    }
    let ordering = ordering(&reports);
    if let Some(dir) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        out_dir(dir)?;
    }
    write_json(
        &a.out,
        &Report {
            config: cfg,
            seeds: a.seeds,
            reports,
            controls,
            ordering,
        },
    )
}

fn fixture(a: &FixtureArgs) -> Result<()> {
    let cfg = a.lab.resolve()?.with_regime(a.regime.parse()?);
    let model = train(&cfg)?.model;
    let fx = biased_fixture(&model, &cfg, a.topics, cfg.seed)?;
    let dir = out_dir(&a.out_dir)?;
    fx.write_to(&dir)?;
    let job = JobConfig {
        dataset: fx.dataset.clone(),
        corpus: Some(dir.join("corpus.jsonl")),
        pairs: Some(dir.join("pairs.tsv")),
        qrels: Some(dir.join("qrels.tsv")),
        queries: Some(dir.join("queries.jsonl")),
        query_embs: Some(dir.join("query_embs.bin")),
        doc_embs: Some(dir.join("doc_embs.bin")),
        out_dir: dir.join("reports"),
        seed: cfg.seed,
        ..JobConfig::default()
    };
    write_json(&dir.join("job.json"), &job)
}
