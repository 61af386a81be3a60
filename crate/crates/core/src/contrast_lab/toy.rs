//! Exact-expectation InfoNCE on small discrete distributions.
//!
//! With one negative drawn from `p(d)`, the expected loss over a free score
//! table is minimized by `s(q, d) = log(p_pos(d | q) / p(d)) + c_q`. The
//! optimizer below enumerates every `(q, d+, d-)` triple, so no sampling
//! noise enters the check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::LabError;

const SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToyDistribution {
    pub p_q: Vec<f64>,
    pub p_d: Vec<f64>,
    /// Joint positive-pair probabilities, `|Q| x |D|`.
    pub p_pos: Vec<Vec<f64>>,
}

impl ToyDistribution {
    pub fn new(p_q: Vec<f64>, p_d: Vec<f64>, p_pos: Vec<Vec<f64>>) -> Result<Self, LabError> {
        let bad = |m: String| Err(LabError::InvalidDistribution(m));
        let sums_to_one = |v: &[f64]| (v.iter().sum::<f64>() - 1.0).abs() <= SUM_TOL;
        if p_q.is_empty() || p_d.is_empty() {
            return bad("empty support".into());
        }
        if p_pos.len() != p_q.len() || p_pos.iter().any(|r| r.len() != p_d.len()) {
            return bad("p_pos must be |Q| x |D|".into());
        }
        let all: Vec<f64> = p_q.iter().chain(&p_d).chain(p_pos.iter().flatten()).copied().collect();
        if all.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return bad("probabilities must be finite and non-negative".into());
        }
        if !sums_to_one(&p_q) || !sums_to_one(&p_d) {
            return bad("p_q and p_d must each sum to 1".into());
        }
        let flat: Vec<f64> = p_pos.iter().flatten().copied().collect();
        if !sums_to_one(&flat) {
            return bad("p_pos must sum to 1".into());
        }
        for (q, row) in p_pos.iter().enumerate() {
            if (row.iter().sum::<f64>() - p_q[q]).abs() > SUM_TOL {
                return bad(format!("p_pos row {q} does not marginalize to p_q"));
            }
            for (d, &v) in row.iter().enumerate() {
                if v > 0.0 && p_d[d] == 0.0 {
                    return bad(format!("p_pos({q},{d}) > 0 outside the support of p_d"));
                }
            }
        }
        Ok(ToyDistribution { p_q, p_d, p_pos })
    }

    /// `p_pos(d | q)`.
    pub fn conditional(&self, q: usize, d: usize) -> f64 {
        if self.p_q[q] == 0.0 {
            0.0
        } else {
            self.p_pos[q][d] / self.p_q[q]
        }
    }

    /// `log(p_pos(d | q) / p(d))` where both are positive.
    pub fn log_ratio(&self, q: usize, d: usize) -> Option<f64> {
        let c = self.conditional(q, d);
        (c > 0.0 && self.p_d[d] > 0.0).then(|| (c / self.p_d[d]).ln())
    }

    /// Exact expected InfoNCE loss (one negative) of a score table.
    pub fn expected_loss(&self, table: &[Vec<f64>]) -> f64 {
        let mut total = 0.0;
        for (q, row) in table.iter().enumerate() {
            for (a, &sa) in row.iter().enumerate() {
                let wa = self.p_pos[q][a];
                if wa == 0.0 {
                    continue;
                }
                for (b, &sb) in row.iter().enumerate() {
                    let w = wa * self.p_d[b];
                    if w == 0.0 {
                        continue;
                    }
                    let m = sa.max(sb);
                    total += w * (m + ((sa - m).exp() + (sb - m).exp()).ln() - sa);
                }
            }
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToyFit {
    pub table: Vec<Vec<f64>>,
    /// Max over compared cells of `|s - log ratio - c_q|`, `c_q` the
    /// per-query mean gap.
    pub max_deviation: f64,
    pub steps: usize,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-query gradient of the conditional expected loss.
fn row_gradient(dist: &ToyDistribution, q: usize, row: &[f64], grad: &mut [f64]) {
    grad.iter_mut().for_each(|g| *g = 0.0);
    for a in 0..row.len() {
        let wa = dist.conditional(q, a);
        if wa == 0.0 {
            continue;
        }
        for b in 0..row.len() {
            let w = wa * dist.p_d[b];
            if w == 0.0 {
                continue;
            }
            // d/ds_a [log(e^sa + e^sb) - sa] = -(1 - pi_a), d/ds_b = pi_b
            let pi_b = sigmoid(row[b] - row[a]);
            grad[a] -= w * pi_b;
            grad[b] += w * pi_b;
        }
    }
}

fn deviation(dist: &ToyDistribution, table: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (q, row) in table.iter().enumerate() {
        let gaps: Vec<f64> = row
            .iter()
            .enumerate()
            .filter_map(|(d, s)| dist.log_ratio(q, d).map(|t| s - t))
            .collect();
        if gaps.is_empty() {
            continue;
        }
        let c = gaps.iter().sum::<f64>() / gaps.len() as f64;
        worst = gaps.iter().fold(worst, |w, g| w.max((g - c).abs()));
    }
    worst
}

/// Fits a free score table by gradient descent on the exact expected loss,
/// starting from `init_scale * N(0, 1)` entries.
pub fn bayes_optimal_toy(
    dist: &ToyDistribution,
    init_scale: f64,
    seed: u64,
) -> Result<ToyFit, LabError> {
    const TOL: f64 = 1e-3;
    const GRAD_TOL: f64 = 1e-11;
    const MAX_STEPS: usize = 2_000_000;
    const LR: f64 = 2.0;
    let (nq, nd) = (dist.p_q.len(), dist.p_d.len());
    if nq > 5 || nd > 8 {
        return Err(LabError::InvalidDistribution(format!(
            "toy check supports |Q| <= 5 and |D| <= 8, got {nq} x {nd}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table: Vec<Vec<f64>> = (0..nq)
        .map(|_| (0..nd).map(|_| init_scale * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let mut grad = vec![0.0; nd];
    let mut steps = 0;
    for (q, row) in table.iter_mut().enumerate() {
        if dist.p_q[q] == 0.0 {
            continue;
        }
        for step in 0..MAX_STEPS {
            row_gradient(dist, q, row, &mut grad);
            let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            if gmax < GRAD_TOL {
                steps = steps.max(step);
                break;
            }
            row.iter_mut().zip(&grad).for_each(|(s, g)| *s -= LR * g);
            steps = steps.max(step + 1);
        }
    }
    let max_deviation = deviation(dist, &table);
    if !(max_deviation < TOL) {
        return Err(LabError::NonConvergence {
            deviation: max_deviation,
            steps,
        });
    }
    Ok(ToyFit {
        table,
        max_deviation,
        steps,
    })
}
