//! Displacement directions in embedding space and their significance.
//!
//! Two random directions in `R^m` have a cosine `Z` with mean 0 and variance
//! `1/m`; its exact two-sided tail is `I_{1-t^2}((m-1)/2, 1/2)`. A cosine
//! statistic is called significant when its magnitude exceeds `3/sqrt(m)`.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::PairMap;
use crate::embed_store::{EmbeddingMatrix, StoreError};
use crate::special;
use crate::{dot, norm};

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("all sampled displacements are zero; direction is undefined")]
    AllZeroDisplacements,
    #[error("no input to estimate a direction from")]
    EmptyInput,
    #[error("dimension must be at least 2, got {0}")]
    InvalidDim(usize),
    #[error("{what} = {value} is outside its valid range")]
    OutOfRange { what: &'static str, value: f64 },
    #[error("need at least 2 nonzero displacements, got {0}")]
    TooFewDisplacements(usize),
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

impl GeometryError {
    /// Failures caused by degenerate numbers rather than malformed input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            GeometryError::AllZeroDisplacements
                | GeometryError::ZeroVector
                | GeometryError::TooFewDisplacements(_)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DirectionLabel {
    LH,
    PN,
    Custom,
}

/// A unit direction with the bookkeeping needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionEstimate {
    pub direction: Vec<f64>,
    /// Norm of the mean displacement before normalization.
    pub raw_mean_norm: f64,
    pub n_pairs: usize,
    pub seed: u64,
    pub label: DirectionLabel,
}

impl DirectionEstimate {
    /// Normalizes `v`. Fails on the zero vector.
    pub fn from_vector(v: Vec<f64>, label: DirectionLabel) -> Result<Self, GeometryError> {
        let n = norm(&v);
        if !(n > 0.0) || !n.is_finite() {
            return Err(GeometryError::ZeroVector);
        }
        Ok(DirectionEstimate {
            direction: v.iter().map(|x| x / n).collect(),
            raw_mean_norm: n,
            n_pairs: 1,
            seed: 0,
            label,
        })
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    /// Direction stored as a single-row embedding file payload.
    pub fn to_matrix(&self, id: &str) -> EmbeddingMatrix {
        EmbeddingMatrix::new(
            self.dim(),
            vec![id.to_string()],
            self.direction.iter().map(|&x| x as f32).collect(),
        )
        .expect("unit direction is finite")
    }

    /// Reads the first row of a direction file and renormalizes it in `f64`.
    pub fn from_matrix(m: &EmbeddingMatrix) -> Result<Self, GeometryError> {
        if m.is_empty() {
            return Err(GeometryError::EmptyInput);
        }
        let v = m.row(0).iter().map(|&x| f64::from(x)).collect();
        Self::from_vector(v, DirectionLabel::Custom)
    }
}

/// `h(llm) - h(human)` for each pair, in pair order.
#[derive(Debug, Clone, PartialEq)]
pub struct Displacements {
    pub vectors: Vec<Vec<f64>>,
    pub zero_flags: Vec<bool>,
}

impl Displacements {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn zero_count(&self) -> usize {
        self.zero_flags.iter().filter(|&&z| z).count()
    }
}

pub fn pair_displacements(
    pairs: &PairMap,
    embs: &EmbeddingMatrix,
) -> Result<Displacements, GeometryError> {
    let mut vectors = Vec::with_capacity(pairs.len());
    let mut zero_flags = Vec::with_capacity(pairs.len());
    for (h, l) in pairs.pairs() {
        let hv = embs.lookup(h)?;
        let lv = embs.lookup(l)?;
        let d: Vec<f64> = lv
            .iter()
            .zip(hv)
            .map(|(&a, &b)| f64::from(a) - f64::from(b))
            .collect();
        zero_flags.push(d.iter().all(|&x| x == 0.0));
        vectors.push(d);
    }
    Ok(Displacements {
        vectors,
        zero_flags,
    })
}

/// Normalized mean of a seeded sample (without replacement) of at most
/// `sample_size` displacements; all of them when `sample_size` is `None`.
pub fn mean_direction(
    displacements: &[Vec<f64>],
    seed: u64,
    sample_size: Option<usize>,
    label: DirectionLabel,
) -> Result<DirectionEstimate, GeometryError> {
    let Some(first) = displacements.first() else {
        return Err(GeometryError::EmptyInput);
    };
    let dim = first.len();
    let available = displacements.len();
    let take = sample_size.map_or(available, |s| s.min(available));
    if take == 0 {
        return Err(GeometryError::EmptyInput);
    }
    let mut chosen: Vec<usize> = if take == available {
        (0..available).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        index::sample(&mut rng, available, take).into_vec()
    };
    chosen.sort_unstable();
    let mut sum = vec![0.0; dim];
    for &i in &chosen {
        let d = &displacements[i];
        if d.len() != dim {
            return Err(GeometryError::DimensionMismatch(dim, d.len()));
        }
        for (s, x) in sum.iter_mut().zip(d) {
            *s += x;
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / take as f64).collect();
    let mut est = DirectionEstimate::from_vector(mean, label).map_err(|e| match e {
        GeometryError::ZeroVector => GeometryError::AllZeroDisplacements,
        e => e,
    })?;
    est.n_pairs = take;
    est.seed = seed;
    Ok(est)
}

/// One query's supervision: annotated positives and mined candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySupervision {
    pub query_id: String,
    pub positives: Vec<String>,
    pub candidates: Vec<String>,
}

/// Mean of `h(d+) - h(d-)` with one positive and one negative drawn per
/// query. Candidates that are themselves positives are never drawn as
/// negatives; queries left without a negative are dropped.
pub fn pn_direction(
    supervision: &[QuerySupervision],
    embs: &EmbeddingMatrix,
    seed: u64,
) -> Result<DirectionEstimate, GeometryError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut diffs = Vec::with_capacity(supervision.len());
    for s in supervision {
        let negatives: Vec<&String> = s
            .candidates
            .iter()
            .filter(|c| !s.positives.contains(c))
            .collect();
        if s.positives.is_empty() || negatives.is_empty() {
            continue;
        }
        let pos = &s.positives[rng.random_range(0..s.positives.len())];
        let neg = negatives[rng.random_range(0..negatives.len())];
        let p = embs.lookup(pos)?;
        let n = embs.lookup(neg)?;
        diffs.push(
            p.iter()
                .zip(n)
                .map(|(&a, &b)| f64::from(a) - f64::from(b))
                .collect::<Vec<f64>>(),
        );
    }
    if diffs.is_empty() {
        return Err(GeometryError::EmptyInput);
    }
    let mut est = mean_direction(&diffs, seed, None, DirectionLabel::PN)?;
    est.seed = seed;
    Ok(est)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CosineNull {
    pub dim: usize,
    pub sigma: f64,
    /// `3 * sigma`, capped at 1.
    pub threshold: f64,
    pub clamped: bool,
}

impl CosineNull {
    pub fn is_significant(&self, cos: f64) -> bool {
        cos.abs() > self.threshold
    }
}

pub fn cosine_null(m: usize) -> Result<CosineNull, GeometryError> {
    if m < 2 {
        return Err(GeometryError::InvalidDim(m));
    }
    let sigma = 1.0 / (m as f64).sqrt();
    let raw = 3.0 * sigma;
    let clamped = raw > 1.0;
    if clamped {
        log::warn!("3-sigma cosine threshold {raw:.3} for m={m} exceeds 1; clamping to 1");
    }
    Ok(CosineNull {
        dim: m,
        sigma,
        threshold: raw.min(1.0),
        clamped,
    })
}

fn check_tail_args(m: usize, t: f64) -> Result<(), GeometryError> {
    if m < 2 {
        return Err(GeometryError::InvalidDim(m));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(GeometryError::OutOfRange {
            what: "t",
            value: t,
        });
    }
    Ok(())
}

/// Exact `P(|Z| > t)` for the cosine of two independent uniform directions
/// in `R^m`.
pub fn null_tail_exact(m: usize, t: f64) -> Result<f64, GeometryError> {
    check_tail_args(m, t)?;
    special::beta_reg((m as f64 - 1.0) / 2.0, 0.5, 1.0 - t * t).ok_or(GeometryError::OutOfRange {
        what: "t",
        value: t,
    })
}

/// `P(|Z| > t)` under the `N(0, 1/m)` approximation.
pub fn null_tail_gaussian(m: usize, t: f64) -> Result<f64, GeometryError> {
    check_tail_args(m, t)?;
    Ok(special::normal_two_sided(t * (m as f64).sqrt()))
}

/// Density of the exact cosine null at `z`.
pub fn null_density(m: usize, z: f64) -> Result<f64, GeometryError> {
    check_tail_args(m, z.abs())?;
    let mf = m as f64;
    let log_norm = special::ln_gamma(mf / 2.0)
        - 0.5 * std::f64::consts::PI.ln()
        - special::ln_gamma((mf - 1.0) / 2.0);
    if z.abs() == 1.0 {
        return Ok(if m == 3 { log_norm.exp() } else if m < 3 { f64::INFINITY } else { 0.0 });
    }
    Ok((log_norm + (mf - 3.0) / 2.0 * (1.0 - z * z).ln()).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullSample {
    pub dim: usize,
    pub n_pairs: usize,
    pub mean: f64,
    pub std: f64,
    /// Fraction of cosines with magnitude above `3/sqrt(m)`.
    pub tail_fraction: f64,
}

/// Empirical cosine null from `n_pairs` independent Gaussian vector pairs.
/// Work is split in fixed chunks with their own seeds, so the result does not
/// depend on the thread count.
pub fn monte_carlo_null(m: usize, n_pairs: usize, seed: u64) -> Result<NullSample, GeometryError> {
    let null = cosine_null(m)?;
    if n_pairs == 0 {
        return Err(GeometryError::EmptyInput);
    }
    const CHUNK: usize = 4096;
    let n_chunks = n_pairs.div_ceil(CHUNK);
    let chunk = |c: usize| -> (f64, f64, usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64 + 1);
        let count = CHUNK.min(n_pairs - c * CHUNK);
        let (mut s1, mut s2, mut tail) = (0.0, 0.0, 0usize);
        let mut x = vec![0.0f64; m];
        let mut y = vec![0.0f64; m];
        for _ in 0..count {
            x.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            y.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            let z = dot(&x, &y) / (norm(&x) * norm(&y));
            s1 += z;
            s2 += z * z;
            if z.abs() > null.threshold {
                tail += 1;
            }
        }
        (s1, s2, tail)
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<(f64, f64, usize)> = {
        use rayon::prelude::*;
        (0..n_chunks).into_par_iter().map(chunk).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<(f64, f64, usize)> = (0..n_chunks).map(chunk).collect();
    let (s1, s2, tail) = parts
        .into_iter()
        .fold((0.0, 0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    let n = n_pairs as f64;
    let mean = s1 / n;
    let var = (s2 / n - mean * mean) * n / (n - 1.0).max(1.0);
    Ok(NullSample {
        dim: m,
        n_pairs,
        mean,
        std: var.max(0.0).sqrt(),
        tail_fraction: tail as f64 / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub mean_pairwise_cos: f64,
    pub threshold_3sigma: f64,
    pub significant: bool,
    /// Nonzero displacements that entered the statistic.
    pub n_displacements: usize,
    /// Zero displacements that were excluded.
    pub n_zero: usize,
    pub dim: usize,
}

/// Mean cosine over all unordered pairs of nonzero displacements, via
/// `(|sum of unit vectors|^2 - n) / (n (n - 1))`.
pub fn within_consistency(displacements: &[Vec<f64>]) -> Result<ConsistencyReport, GeometryError> {
    let dim = displacements.first().map_or(0, Vec::len);
    let null = cosine_null(dim)?;
    let mut sum = vec![0.0; dim];
    let mut n = 0usize;
    let mut n_zero = 0usize;
    for d in displacements {
        if d.len() != dim {
            return Err(GeometryError::DimensionMismatch(dim, d.len()));
        }
        let len = norm(d);
        if len == 0.0 {
            n_zero += 1;
            continue;
        }
        for (s, x) in sum.iter_mut().zip(d) {
            *s += x / len;
        }
        n += 1;
    }
    if n < 2 {
        return Err(GeometryError::TooFewDisplacements(n));
    }
    let nf = n as f64;
    let mean = (dot(&sum, &sum) - nf) / (nf * (nf - 1.0));
    Ok(ConsistencyReport {
        mean_pairwise_cos: mean,
        threshold_3sigma: null.threshold,
        significant: null.is_significant(mean),
        n_displacements: n,
        n_zero,
        dim,
    })
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, GeometryError> {
    if a.len() != b.len() {
        return Err(GeometryError::DimensionMismatch(a.len(), b.len()));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(GeometryError::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Alignment {
    pub cos: f64,
    pub threshold: f64,
    pub significant: bool,
}

/// Cosine between two directions, tested two-sided against the null.
pub fn cross_alignment(
    a: &DirectionEstimate,
    b: &DirectionEstimate,
) -> Result<Alignment, GeometryError> {
    if a.dim() != b.dim() {
        return Err(GeometryError::DimensionMismatch(a.dim(), b.dim()));
    }
    let null = cosine_null(a.dim())?;
    let cos = cosine(&a.direction, &b.direction)?;
    Ok(Alignment {
        cos,
        threshold: null.threshold,
        significant: null.is_significant(cos),
    })
}

/// JSON shape shared by every alignment verdict in reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentRecord {
    pub label: String,
    pub dim: usize,
    pub cos: f64,
    pub threshold: f64,
    pub significant: bool,
    pub n_pairs: usize,
    pub seed: u64,
}
