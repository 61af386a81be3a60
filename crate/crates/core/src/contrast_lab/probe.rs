use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::generator::{artifact, doc, gen_batch, positive, query_from};
use super::model::{train, LabModel, TracePoint};
use super::{eval_seed, LabConfig, LabError, Regime};
use crate::geometry::{cross_alignment, mean_direction, DirectionLabel};
use crate::linguistics::median;

/// Per-query score differences `s(q, d with shifted artifacts) - s(q, d)`,
/// semantic features held fixed.
fn bias_differences(model: &LabModel, cfg: &LabConfig) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(eval_seed(cfg.seed));
    let shift = cfg.probe_shift();
    (0..cfg.n_queries)
        .map(|_| {
            let pos = positive(cfg, &mut rng);
            let q = query_from(&pos.semantic, &mut rng, cfg.query_noise);
            let base_a = artifact(&mut rng, None, cfg.art_dim);
            let moved_a: Vec<f64> = base_a.iter().zip(&shift).map(|(a, s)| a + s).collect();
            let base = doc(&pos.semantic, &base_a);
            let moved = doc(&pos.semantic, &moved_a);
            model.score(&q, &moved) - model.score(&q, &base)
        })
        .collect()
}

/// Mean score gain from shifting a document's artifacts by the probe shift.
/// Positive means the model prefers shifted-artifact documents.
pub fn measure_bias(model: &LabModel, cfg: &LabConfig) -> f64 {
    let d = bias_differences(model, cfg);
    d.iter().sum::<f64>() / d.len() as f64
}

/// 95% quantile of `|mean|` when the shifted/unshifted labels of each pair
/// are swapped at random (sign flips of the paired differences).
pub fn bias_null_band(model: &LabModel, cfg: &LabConfig, n_perm: usize, seed: u64) -> f64 {
    let d = bias_differences(model, cfg);
    let n = d.len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats: Vec<f64> = (0..n_perm.max(1))
        .map(|_| {
            let s: f64 = d
                .iter()
                .map(|x| if rng.random::<bool>() { *x } else { -*x })
                .sum();
            (s / n).abs()
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let idx = ((stats.len() as f64) * 0.95).ceil() as usize;
    stats[idx.saturating_sub(1).min(stats.len() - 1)]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArtifactProbe {
    pub cos: f64,
    pub threshold: f64,
    pub significant: bool,
    pub artifact_norm: f64,
}

/// Cosine between the embedding shift caused by artifacts alone and the mean
/// positive-minus-negative embedding difference under the training regime.
pub fn probe_artifact_direction(model: &LabModel, cfg: &LabConfig) -> Result<ArtifactProbe, LabError> {
    let mut rng = ChaCha8Rng::seed_from_u64(eval_seed(cfg.seed).wrapping_add(1));
    let shift = cfg.probe_shift();
    let mut art = Vec::with_capacity(cfg.n_queries);
    let mut pn = Vec::with_capacity(cfg.n_queries);
    let probe_cfg = LabConfig {
        batch_size: cfg.batch_size.max(cfg.n_negatives + 1),
        ..cfg.clone()
    };
    while pn.len() < cfg.n_queries {
        let batch = gen_batch(&probe_cfg, &mut rng);
        for (i, cands) in batch.candidates.iter().enumerate() {
            if pn.len() == cfg.n_queries {
                break;
            }
            let p = batch.pos_index[i];
            // the pool negative when there is one, else the first in-batch one
            let neg = batch.shifted[i]
                .iter()
                .position(|s| !s)
                .unwrap_or(if p == 0 { 1 } else { 0 });
            let diff = model.encode_doc(&cands[p]) - model.encode_doc(&cands[neg]);
            pn.push(diff.as_slice().to_vec());

            let sem = &cands[p].as_slice()[..cfg.sem_dim];
            let base_a = artifact(&mut rng, None, cfg.art_dim);
            let moved_a: Vec<f64> = base_a.iter().zip(&shift).map(|(a, s)| a + s).collect();
            let d: DVector<f64> = model.encode_doc(&doc(sem, &moved_a)) - model.encode_doc(&doc(sem, &base_a));
            art.push(d.as_slice().to_vec());
        }
    }
    let art_dir = mean_direction(&art, cfg.seed, None, DirectionLabel::Custom)?;
    let pn_dir = mean_direction(&pn, cfg.seed, None, DirectionLabel::PN)?;
    let a = cross_alignment(&art_dir, &pn_dir)?;
    Ok(ArtifactProbe {
        cos: a.cos,
        threshold: a.threshold,
        significant: a.significant,
        artifact_norm: art_dir.raw_mean_norm,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    pub bias: f64,
    pub alignment: ArtifactProbe,
    pub final_loss: f64,
    pub trace: Vec<TracePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabRunReport {
    pub regime: Regime,
    pub delta_a: Vec<f64>,
    pub seeds: Vec<SeedResult>,
    pub median_bias: f64,
    pub median_abs_bias: f64,
    pub median_abs_cos: f64,
    /// Seeds whose probe alignment beat the 3-sigma threshold.
    pub significant_seeds: usize,
}

/// Trains and probes one model per seed (`cfg.seed`, `cfg.seed + 1`, ...).
pub fn run_lab(cfg: &LabConfig, n_seeds: usize) -> Result<LabRunReport, LabError> {
    cfg.validate()?;
    let mut seeds = Vec::with_capacity(n_seeds);
    for s in 0..n_seeds as u64 {
        let c = LabConfig {
            seed: cfg.seed + s,
            ..cfg.clone()
        };
        let out = train(&c)?;
        let bias = measure_bias(&out.model, &c);
        let alignment = probe_artifact_direction(&out.model, &c)?;
        seeds.push(SeedResult {
            seed: c.seed,
            bias,
            alignment,
            final_loss: out.trace.last().map_or(f64::NAN, |t| t.loss),
            trace: out.trace,
        });
    }
    let med = |f: &dyn Fn(&SeedResult) -> f64| {
        let mut v: Vec<f64> = seeds.iter().map(f).collect();
        median(&mut v).unwrap_or(f64::NAN)
    };
    Ok(LabRunReport {
        regime: cfg.regime,
        delta_a: cfg.delta_a.clone(),
        median_bias: med(&|s| s.bias),
        median_abs_bias: med(&|s| s.bias.abs()),
        median_abs_cos: med(&|s| s.alignment.cos.abs()),
        significant_seeds: seeds.iter().filter(|s| s.alignment.significant).count(),
        seeds,
    })
}
