//! Browser bindings for three interactive views: the random-cosine null
//! distribution, a ΔNDSR calculator, and the negative-sampling lab.
//!
//! Every export returns a JSON string. The `*_json` functions hold the logic
//! and run natively too.

use biascope::contrast_lab::{run_lab, LabConfig, Regime};
use biascope::corpus::Source;
use biascope::geometry::{cosine_null, null_density, null_tail_exact, null_tail_gaussian};
use biascope::metrics::ndsr;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct NullCurve {
    dim: usize,
    sigma: f64,
    threshold: f64,
    clamped: bool,
    tail_at_threshold: f64,
    gaussian_tail_at_threshold: f64,
    /// `(z, density)` over `[-zmax, zmax]`.
    curve: Vec<(f64, f64)>,
}

pub fn null_curve_json(m: usize, points: usize) -> Result<String, String> {
    let null = cosine_null(m).map_err(|e| e.to_string())?;
    let points = points.clamp(3, 2001);
    let zmax = (6.0 * null.sigma).min(1.0);
    let mut curve = Vec::with_capacity(points);
    for i in 0..points {
        let z = -zmax + 2.0 * zmax * i as f64 / (points - 1) as f64;
        curve.push((z, null_density(m, z).map_err(|e| e.to_string())?));
    }
    let out = NullCurve {
        dim: m,
        sigma: null.sigma,
        threshold: null.threshold,
        clamped: null.clamped,
        tail_at_threshold: null_tail_exact(m, null.threshold).map_err(|e| e.to_string())?,
        gaussian_tail_at_threshold: null_tail_gaussian(m, null.threshold).map_err(|e| e.to_string())?,
        curve,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct NdsrResult {
    k: usize,
    human: f64,
    llm: f64,
    delta: f64,
}

/// `labels` is a ranking written as `H`/`L` characters, best first; other
/// characters are ignored.
pub fn ndsr_json(labels: &str, k: usize) -> Result<String, String> {
    let parsed: Vec<Source> = labels
        .chars()
        .filter_map(|c| match c.to_ascii_uppercase() {
            'H' => Some(Source::Human),
            'L' => Some(Source::Llm),
            _ => None,
        })
        .collect();
    let (human, llm) = ndsr(&parsed, k).map_err(|e| e.to_string())?;
    serde_json::to_string(&NdsrResult {
        k,
        human,
        llm,
        delta: human - llm,
    })
    .map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct RegimeSummary {
    regime: &'static str,
    median_bias: f64,
    median_abs_bias: f64,
    median_abs_cos: f64,
    significant_seeds: usize,
    seeds: Vec<(f64, f64)>,
}

#[derive(Serialize)]
struct LabSummary {
    threshold: f64,
    regimes: Vec<RegimeSummary>,
}

/// Runs every regime with a uniform artifact shift. Per-seed entries are
/// `(bias, alignment cos)`.
pub fn lab_json(delta_a: f64, seeds: usize, steps: usize) -> Result<String, String> {
    let base = LabConfig::default();
    let cfg = LabConfig {
        delta_a: vec![delta_a; base.art_dim],
        steps,
        n_queries: 500,
        ..base
    };
    let mut regimes = Vec::new();
    for r in Regime::ALL {
        let rep = run_lab(&cfg.with_regime(r), seeds.clamp(1, 10)).map_err(|e| e.to_string())?;
        regimes.push(RegimeSummary {
            regime: r.name(),
            median_bias: rep.median_bias,
            median_abs_bias: rep.median_abs_bias,
            median_abs_cos: rep.median_abs_cos,
            significant_seeds: rep.significant_seeds,
            seeds: rep.seeds.iter().map(|s| (s.bias, s.alignment.cos)).collect(),
        });
    }
    let threshold = cosine_null(cfg.embed_dim).map_err(|e| e.to_string())?.threshold;
    serde_json::to_string(&LabSummary { threshold, regimes }).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = nullCurve)]
pub fn null_curve(m: usize, points: usize) -> Result<String, JsError> {
    null_curve_json(m, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = ndsr)]
pub fn ndsr_js(labels: &str, k: usize) -> Result<String, JsError> {
    ndsr_json(labels, k).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = labRun)]
pub fn lab_run(delta_a: f64, seeds: usize, steps: usize) -> Result<String, JsError> {
    lab_json(delta_a, seeds, steps).map_err(|e| JsError::new(&e))
}
