use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::generator::{gen_batch, Batch};
use super::{LabConfig, LabError};

/// Linear dual encoder: `h_q(q) = W_q q`, `h_d(d) = W_d d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabModel {
    pub w_q: DMatrix<f64>,
    pub w_d: DMatrix<f64>,
}

impl LabModel {
    pub fn zeros(cfg: &LabConfig) -> Self {
        LabModel {
            w_q: DMatrix::zeros(cfg.embed_dim, cfg.query_width()),
            w_d: DMatrix::zeros(cfg.embed_dim, cfg.doc_width()),
        }
    }

    pub fn random(cfg: &LabConfig, rng: &mut ChaCha8Rng) -> Self {
        let s = cfg.init_scale;
        let mut draw = |r, c| DMatrix::from_fn(r, c, |_, _| s * rng.sample::<f64, _>(StandardNormal));
        let w_q = draw(cfg.embed_dim, cfg.query_width());
        let w_d = draw(cfg.embed_dim, cfg.doc_width());
        LabModel { w_q, w_d }
    }

    pub fn encode_query(&self, q: &DVector<f64>) -> DVector<f64> {
        &self.w_q * q
    }

    pub fn encode_doc(&self, d: &DVector<f64>) -> DVector<f64> {
        &self.w_d * d
    }

    pub fn score(&self, q: &DVector<f64>, d: &DVector<f64>) -> f64 {
        self.encode_query(q).dot(&self.encode_doc(d))
    }

    pub fn is_finite(&self) -> bool {
        self.w_q.iter().chain(self.w_d.iter()).all(|x| x.is_finite())
    }
}

/// `-log softmax(scores)[pos_index]`, max-shifted.
pub fn infonce_loss(scores: &[f64], pos_index: usize) -> Result<f64, LabError> {
    if pos_index >= scores.len() {
        return Err(LabError::IndexOutOfRange {
            index: pos_index,
            len: scores.len(),
        });
    }
    Ok(log_sum_exp(scores) - scores[pos_index])
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub loss: f64,
    pub w_q: DMatrix<f64>,
    pub w_d: DMatrix<f64>,
}

/// Mean InfoNCE loss over the batch and its analytic gradient.
///
/// With `u = W_q q`, `v_j = W_d d_j`, and `g_j = softmax_j - [j = pos]`
/// scaled by `1/B`: `dW_q = sum g_j v_j q^T`, `dW_d = sum g_j u d_j^T`.
pub fn infonce_grad(model: &LabModel, batch: &Batch) -> Gradients {
    let b = batch.len() as f64;
    let mut gq = DMatrix::zeros(model.w_q.nrows(), model.w_q.ncols());
    let mut gd = DMatrix::zeros(model.w_d.nrows(), model.w_d.ncols());
    let mut loss = 0.0;
    let mut scores = Vec::new();
    for ((q, cands), &pos) in batch.queries.iter().zip(&batch.candidates).zip(&batch.pos_index) {
        let u = model.encode_query(q);
        let vs: Vec<DVector<f64>> = cands.iter().map(|d| model.encode_doc(d)).collect();
        scores.clear();
        scores.extend(vs.iter().map(|v| u.dot(v)));
        let lse = log_sum_exp(&scores);
        loss += lse - scores[pos];
        let mut weighted_v = DVector::zeros(u.len());
        for (j, (v, d)) in vs.iter().zip(cands).enumerate() {
            let mut g = (scores[j] - lse).exp();
            if j == pos {
                g -= 1.0;
            }
            g /= b;
            weighted_v.axpy(g, v, 1.0);
            gd.ger(g, &u, d, 1.0);
        }
        gq.ger(1.0, &weighted_v, q, 1.0);
    }
    Gradients {
        loss: loss / b,
        w_q: gq,
        w_d: gd,
    }
}

/// Mean batch loss without gradients.
pub(crate) fn batch_loss(model: &LabModel, batch: &Batch) -> f64 {
    let mut total = 0.0;
    for ((q, cands), &pos) in batch.queries.iter().zip(&batch.candidates).zip(&batch.pos_index) {
        let u = model.encode_query(q);
        let scores: Vec<f64> = cands.iter().map(|d| u.dot(&model.encode_doc(d))).collect();
        total += log_sum_exp(&scores) - scores[pos];
    }
    total / batch.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub step: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: LabModel,
    /// Batch loss before the update, every 10 steps, plus the final batch.
    pub trace: Vec<TracePoint>,
}

/// Plain gradient descent with a fresh batch per step.
pub fn train(cfg: &LabConfig) -> Result<TrainOutcome, LabError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = LabModel::random(cfg, &mut rng);
    let mut trace = Vec::with_capacity(cfg.steps / 10 + 2);
    for step in 0..cfg.steps {
        let batch = gen_batch(cfg, &mut rng);
        let g = infonce_grad(&model, &batch);
        if !g.loss.is_finite() {
            return Err(LabError::DivergenceDetected(step));
        }
        if step % 10 == 0 {
            trace.push(TracePoint { step, loss: g.loss });
        }
        model.w_q -= cfg.lr * &g.w_q;
        model.w_d -= cfg.lr * &g.w_d;
        if !model.is_finite() {
            return Err(LabError::DivergenceDetected(step));
        }
    }
    let last = batch_loss(&model, &gen_batch(cfg, &mut rng));
    if !last.is_finite() {
        return Err(LabError::DivergenceDetected(cfg.steps));
    }
    trace.push(TracePoint {
        step: cfg.steps,
        loss: last,
    });
    Ok(TrainOutcome { model, trace })
}
