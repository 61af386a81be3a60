use std::fmt::Write as _;

use biascope::config::require;
use biascope::corpus::{load_corpus, Source};
use biascope::linguistics::{build_term_stats, hedges_g, histogram, load_ppl, EffectSizeReport, LinguisticsError};
use biascope::Result;
use clap::Args;

use crate::output::{out_dir, write_text};
use crate::JobArgs;

#[derive(Args)]
pub struct LinguisticsArgs {
    #[command(flatten)]
    job: JobArgs,
    /// Histogram bins per feature.
    #[arg(long, default_value_t = 20)]
    bins: usize,
}

#[derive(Default)]
struct BySource {
    human: Vec<f64>,
    llm: Vec<f64>,
}

impl BySource {
    fn push(&mut self, s: Source, v: f64) {
        match s {
            Source::Human => self.human.push(v),
            Source::Llm => self.llm.push(v),
        }
    }

    fn histogram_csv(&self, bins: usize) -> String {
        let all = self.human.iter().chain(&self.llm);
        let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
        let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = String::from("bin_lower,human,llm\n");
        if !lo.is_finite() {
            return s;
        }
        let h = histogram(&self.human, lo, hi, bins);
        let l = histogram(&self.llm, lo, hi, bins);
        for ((edge, ch), (_, cl)) in h.iter().zip(&l) {
            writeln!(s, "{edge},{ch},{cl}").unwrap();
        }
        s
    }

    fn effect(&self) -> Result<Option<EffectSizeReport>> {
        match hedges_g(&self.human, &self.llm) {
            Ok(r) => Ok(Some(r)),
            Err(e @ (LinguisticsError::TooFewSamples(..) | LinguisticsError::DegenerateVariance)) => {
                log::warn!("no effect size: {e}");
                Ok(None)
            }
            Err(e) => Err(e.into()),
        }
    }
}

fn field(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Writes `passage_features.csv`, `idf_hist.csv`, `ppl_hist.csv` (when a
/// perplexity file is configured) and `effect_sizes.csv`. Effect sizes are
/// Hedges' g of human over LLM passages with one Welch p-value per feature.
pub fn run(args: &LinguisticsArgs) -> Result<()> {
    let cfg = args.job.resolve()?;
    let corpus = load_corpus(require(&cfg.corpus, "corpus")?, &cfg.dataset)?;
    let ppl = match &cfg.ppl {
        Some(_) => Some(load_ppl(require(&cfg.ppl, "ppl")?)?),
        None => None,
    };
    let stats = build_term_stats(&corpus)?;
    let mut idf = BySource::default();
    let mut pp = BySource::default();
    let mut rows = String::from("doc_id,source,median_idf,ppl\n");
    let mut missing_ppl = 0usize;
    for p in corpus.passages() {
        let m = match stats.passage_median_idf(&p.text) {
            Ok(v) => {
                idf.push(p.source, v);
                Some(v)
            }
            Err(LinguisticsError::NoTokens) => {
                log::warn!("passage {} has no tokens; no IDF statistic", p.id);
                None
            }
            Err(e) => return Err(e.into()),
        };
        let x = ppl.as_ref().and_then(|t| t.scores.get(&p.id).copied());
        match x {
            Some(v) => pp.push(p.source, v),
            None if ppl.is_some() => missing_ppl += 1,
            None => {}
        }
        writeln!(rows, "{},{},{},{}", p.id, p.source.as_str(), field(m), field(x)).unwrap();
    }
    if missing_ppl > 0 {
        log::warn!("{missing_ppl} passages have no perplexity record");
    }

    let dir = out_dir(&cfg.out_dir)?;
    write_text(&dir.join("passage_features.csv"), &rows)?;
    write_text(&dir.join("idf_hist.csv"), &idf.histogram_csv(args.bins))?;
    let g_ppl = if ppl.is_some() {
        write_text(&dir.join("ppl_hist.csv"), &pp.histogram_csv(args.bins))?;
        pp.effect()?
    } else {
        None
    };
    let g_idf = idf.effect()?;
    let mut table = String::from("comparison,g_ppl,g_idf,p_ppl,p_idf\n");
    writeln!(
        table,
        "{} human vs llm,{},{},{},{}",
        cfg.dataset,
        field(g_ppl.as_ref().map(|r| r.g)),
        field(g_idf.as_ref().map(|r| r.g)),
        field(g_ppl.as_ref().map(|r| r.p_value)),
        field(g_idf.as_ref().map(|r| r.p_value)),
    )
    .unwrap();
    write_text(&dir.join("effect_sizes.csv"), &table)
}
