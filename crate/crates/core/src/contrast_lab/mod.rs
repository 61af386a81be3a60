//! Synthetic contrastive-learning lab.
//!
//! Documents are `d = (M_d, A_d)`: semantic features `M_d` and appended
//! artifact features `A_d`. Queries are noisy copies of their positive's
//! semantic features plus a constant coordinate, so the query encoder can
//! carry a shared direction. Positives draw `A_d` around `delta_a`; the
//! negative pool draws it around zero. The negative-sampling regime decides
//! how much of that imbalance the contrastive loss sees:
//!
//! * [`Regime::InBatchOnly`]: negatives are other queries' positives, so the
//!   artifact means match.
//! * [`Regime::Standard`]: in-batch negatives plus one pool negative.
//! * [`Regime::HardNegOnly`]: every negative comes from the pool.
//!
//! The dual encoder is linear, `h_q(q) = W_q q` and `h_d(d) = W_d d`, trained
//! by plain gradient descent on InfoNCE without temperature.

mod fixture;
mod generator;
mod model;
mod probe;
mod toy;

pub use fixture::{biased_fixture, BiasedFixture};
pub use generator::{artifact_imbalance, gen_batch, Batch, Imbalance};
pub use model::{infonce_grad, infonce_loss, train, Gradients, LabModel, TracePoint, TrainOutcome};
pub use probe::{
    bias_null_band, measure_bias, probe_artifact_direction, run_lab, ArtifactProbe, LabRunReport,
    SeedResult,
};
pub use toy::{bayes_optimal_toy, ToyDistribution, ToyFit};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::GeometryError;

#[derive(Debug, Error, PartialEq)]
pub enum LabError {
    #[error("invalid lab config: {0}")]
    InvalidConfig(String),
    #[error("positive index {index} out of range for {len} candidates")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("training diverged at step {0} (loss is not finite)")]
    DivergenceDetected(usize),
    #[error("toy optimization stopped at deviation {deviation:.3e} after {steps} steps")]
    NonConvergence { deviation: f64, steps: usize },
    #[error("invalid toy distribution: {0}")]
    InvalidDistribution(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    InBatchOnly,
    Standard,
    HardNegOnly,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::InBatchOnly, Regime::Standard, Regime::HardNegOnly];

    pub fn name(self) -> &'static str {
        match self {
            Regime::InBatchOnly => "inbatch",
            Regime::Standard => "standard",
            Regime::HardNegOnly => "hardneg",
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "inbatch" | "inbatchonly" => Ok(Regime::InBatchOnly),
            "standard" => Ok(Regime::Standard),
            "hardneg" | "hardnegonly" => Ok(Regime::HardNegOnly),
            _ => Err(LabError::InvalidConfig(format!("unknown regime {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabConfig {
    pub sem_dim: usize,
    pub art_dim: usize,
    pub embed_dim: usize,
    /// Artifact shift of positives, in units of feature standard deviation.
    pub delta_a: Vec<f64>,
    /// Evaluation queries used by the bias and probe measurements.
    pub n_queries: usize,
    pub batch_size: usize,
    pub n_negatives: usize,
    pub steps: usize,
    pub lr: f64,
    pub regime: Regime,
    pub seed: u64,
    /// Std of the noise separating a query from its positive.
    pub query_noise: f64,
    /// Correlation between a pool negative's and the positive's semantics.
    pub hard_similarity: f64,
    /// Std of initial encoder weights.
    pub init_scale: f64,
}

impl Default for LabConfig {
    fn default() -> Self {
        let art_dim = 4;
        LabConfig {
            sem_dim: 12,
            art_dim,
            embed_dim: 32,
            delta_a: vec![1.0; art_dim],
            n_queries: 2000,
            batch_size: 32,
            n_negatives: 4,
            steps: 300,
            lr: 0.05,
            regime: Regime::Standard,
            seed: 0,
            query_noise: 0.5,
            hard_similarity: 0.5,
            init_scale: 0.01,
        }
    }
}

impl LabConfig {
    pub fn validate(&self) -> Result<(), LabError> {
        let bad = |m: &str| Err(LabError::InvalidConfig(m.to_string()));
        if self.embed_dim < 2 {
            return bad("embed_dim must be at least 2");
        }
        if self.sem_dim == 0 || self.art_dim == 0 {
            return bad("sem_dim and art_dim must be positive");
        }
        if self.delta_a.len() != self.art_dim {
            return bad("delta_a length must equal art_dim");
        }
        if self.n_negatives == 0 {
            return bad("n_negatives must be at least 1");
        }
        if self.batch_size == 0 || self.n_queries == 0 {
            return bad("batch_size and n_queries must be positive");
        }
        if self.regime != Regime::HardNegOnly && self.batch_size < self.n_negatives + 1 {
            return bad("in-batch negatives need batch_size > n_negatives");
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return bad("lr must be a finite non-negative number");
        }
        if !(0.0..1.0).contains(&self.hard_similarity) {
            return bad("hard_similarity must be in [0, 1)");
        }
        if self.delta_a.iter().any(|x| !x.is_finite()) {
            return bad("delta_a must be finite");
        }
        Ok(())
    }

    /// Query feature width: semantic features plus the constant coordinate.
    pub fn query_width(&self) -> usize {
        self.sem_dim + 1
    }

    pub fn doc_width(&self) -> usize {
        self.sem_dim + self.art_dim
    }

    /// Artifact shift used by the bias and probe measurements: `delta_a`, or
    /// all ones when `delta_a` is zero so controls stay measurable.
    pub fn probe_shift(&self) -> Vec<f64> {
        if self.delta_a.iter().any(|&x| x != 0.0) {
            self.delta_a.clone()
        } else {
            vec![1.0; self.art_dim]
        }
    }

    pub fn with_regime(&self, regime: Regime) -> Self {
        LabConfig {
            regime,
            ..self.clone()
        }
    }
}

/// Seed for evaluation draws, kept apart from the training stream.
pub(crate) fn eval_seed(seed: u64) -> u64 {
    seed ^ 0x5eed_e7a1_0000_0001
}
