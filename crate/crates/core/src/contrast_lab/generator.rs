use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{LabConfig, Regime};

/// One training batch. Candidate lists hold the positive at `pos_index` and
/// `n_negatives` negatives elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub queries: Vec<DVector<f64>>,
    pub candidates: Vec<Vec<DVector<f64>>>,
    pub pos_index: Vec<usize>,
    /// Whether each candidate's artifacts were drawn around `delta_a`.
    pub shifted: Vec<Vec<bool>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    /// The batch repeated `times` times.
    pub fn repeated(&self, times: usize) -> Batch {
        fn rep<T: Clone>(v: &[T], times: usize) -> Vec<T> {
            (0..times).flat_map(|_| v.iter().cloned()).collect()
        }
        Batch {
            queries: rep(&self.queries, times),
            candidates: rep(&self.candidates, times),
            pos_index: rep(&self.pos_index, times),
            shifted: rep(&self.shifted, times),
        }
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub(crate) struct DocDraw {
    pub semantic: Vec<f64>,
    pub features: DVector<f64>,
}

pub(crate) fn doc(semantic: &[f64], artifact: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        semantic.len() + artifact.len(),
        semantic.iter().chain(artifact).copied(),
    )
}

pub(crate) fn query_from(semantic: &[f64], rng: &mut ChaCha8Rng, noise: f64) -> DVector<f64> {
    let mut q: Vec<f64> = semantic
        .iter()
        .map(|&m| m + noise * rng.sample::<f64, _>(StandardNormal))
        .collect();
    q.push(1.0);
    DVector::from_vec(q)
}

pub(crate) fn artifact(rng: &mut ChaCha8Rng, shift: Option<&[f64]>, r: usize) -> Vec<f64> {
    let mut a = normal_vec(rng, r);
    if let Some(s) = shift {
        a.iter_mut().zip(s).for_each(|(x, d)| *x += d);
    }
    a
}

pub(crate) fn positive(cfg: &LabConfig, rng: &mut ChaCha8Rng) -> DocDraw {
    let semantic = normal_vec(rng, cfg.sem_dim);
    let a = artifact(rng, Some(&cfg.delta_a), cfg.art_dim);
    let features = doc(&semantic, &a);
    DocDraw { semantic, features }
}

/// Pool document semantically correlated with `anchor`, artifacts unshifted.
pub(crate) fn pool_negative(cfg: &LabConfig, anchor: &[f64], rng: &mut ChaCha8Rng) -> DVector<f64> {
    let rho = cfg.hard_similarity;
    let spread = (1.0 - rho * rho).sqrt();
    let semantic: Vec<f64> = anchor
        .iter()
        .map(|&m| rho * m + spread * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let a = artifact(rng, None, cfg.art_dim);
    doc(&semantic, &a)
}

/// Draws a batch. Deterministic in the state of `rng`.
pub fn gen_batch(cfg: &LabConfig, rng: &mut ChaCha8Rng) -> Batch {
    let b = cfg.batch_size;
    let k = cfg.n_negatives;
    let positives: Vec<DocDraw> = (0..b).map(|_| positive(cfg, rng)).collect();
    let queries: Vec<DVector<f64>> = positives
        .iter()
        .map(|p| query_from(&p.semantic, rng, cfg.query_noise))
        .collect();
    let (n_in_batch, n_pool) = match cfg.regime {
        Regime::InBatchOnly => (k, 0),
        Regime::Standard => (k - 1, 1),
        Regime::HardNegOnly => (0, k),
    };
    let mut candidates = Vec::with_capacity(b);
    let mut shifted = Vec::with_capacity(b);
    let mut pos_index = Vec::with_capacity(b);
    for i in 0..b {
        let mut negs: Vec<(DVector<f64>, bool)> = Vec::with_capacity(k);
        for t in 1..=n_in_batch {
            negs.push((positives[(i + t) % b].features.clone(), true));
        }
        for _ in 0..n_pool {
            negs.push((pool_negative(cfg, &positives[i].semantic, rng), false));
        }
        let pos = rng.random_range(0..=k);
        negs.insert(pos, (positives[i].features.clone(), true));
        let (c, s): (Vec<_>, Vec<_>) = negs.into_iter().unzip();
        candidates.push(c);
        shifted.push(s);
        pos_index.push(pos);
    }
    Batch {
        queries,
        candidates,
        pos_index,
        shifted,
    }
}

/// Positive-minus-negative artifact means in a batch, with standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct Imbalance {
    pub delta: Vec<f64>,
    pub std_err: Vec<f64>,
}

pub fn artifact_imbalance(batch: &Batch, sem_dim: usize) -> Imbalance {
    let r = batch.candidates[0][0].len() - sem_dim;
    let mut pos: Vec<Vec<f64>> = vec![Vec::new(); r];
    let mut neg: Vec<Vec<f64>> = vec![Vec::new(); r];
    for (cands, &p) in batch.candidates.iter().zip(&batch.pos_index) {
        for (j, c) in cands.iter().enumerate() {
            let bucket = if j == p { &mut pos } else { &mut neg };
            for (a, slot) in bucket.iter_mut().enumerate() {
                slot.push(c[sem_dim + a]);
            }
        }
    }
    let stats = |xs: &[f64]| {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        (m, v / n)
    };
    let mut delta = Vec::with_capacity(r);
    let mut std_err = Vec::with_capacity(r);
    for a in 0..r {
        let (mp, vp) = stats(&pos[a]);
        let (mn, vn) = stats(&neg[a]);
        delta.push(mp - mn);
        std_err.push((vp + vn).sqrt());
    }
    Imbalance { delta, std_err }
}
