//! WebAssembly bindings for a static demo page. Each export takes plain
//! numbers and returns a JSON string, so the page needs no glue beyond the
//! generated `wasm-bindgen` module.
//!
//! The `*_json` functions hold the logic and run natively as well.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use latsep::dataset::{EmbeddingSet, MetricKind};
use latsep::fits::fit_linear;
use latsep::harness::{holdout, run_sweep, AllocationSpec};
use latsep::io::{allocation_curve, CurvePoint};
use latsep::separation::{conditional_histograms, separation_report, SeparationOptions};
use latsep::synthetic::{generate, SynthConfig};
use latsep::{Error, Result};

const DIM: usize = 4;
const NOISE: f64 = 0.5;
const ATTRIBUTE: &str = "attribute";
/// Largest set the page may request; keeps a browser tab responsive.
const MAX_ROWS: usize = 20_000;

fn dataset(n: usize, offset: f64, angle_deg: f64, seed: u64) -> Result<EmbeddingSet> {
    if n > MAX_ROWS {
        return Err(Error::Config(format!("n = {n} exceeds the demo limit of {MAX_ROWS}")));
    }
    generate(&SynthConfig::new(n, DIM, offset, angle_deg.to_radians(), NOISE, seed))
}

#[derive(Debug, Serialize)]
pub struct CurveEntry {
    pub offset: f64,
    pub tv: f64,
    pub wd: Option<f64>,
    pub fd: Option<f64>,
    pub random_tv: f64,
}

/// TV, W₁ and FD between the groups as the planted offset grows from 0 to
/// `max_offset`, with the random attribute's TV as a floor.
pub fn separation_curve_json(max_offset: f64, angle_deg: f64, steps: usize, n: usize, seed: u64) -> Result<String> {
    if !(2..=50).contains(&steps) {
        return Err(Error::Config(format!("steps = {steps} outside 2..=50")));
    }
    let opts = SeparationOptions::default();
    let mut out = Vec::with_capacity(steps);
    for i in 0..steps {
        let offset = max_offset * i as f64 / (steps - 1) as f64;
        let ds = dataset(n, offset, angle_deg, seed)?;
        let r = separation_report(&ds, ATTRIBUTE, &opts, seed)?;
        let random = separation_report(&ds, "random", &opts, seed)?;
        out.push(CurveEntry {
            offset,
            tv: r.epsilon_tv,
            wd: r.wd,
            fd: r.fd,
            random_tv: random.epsilon_tv,
        });
    }
    Ok(serde_json::to_string(&out)?)
}

#[derive(Debug, Serialize)]
pub struct SweepView {
    pub tv: f64,
    pub accuracy_slope: f64,
    pub loss_slope: f64,
    pub curve: Vec<CurvePoint>,
}

/// Allocation sweep at budget `budget` over the eleven-point grid.
pub fn allocation_sweep_json(
    offset: f64,
    angle_deg: f64,
    budget: usize,
    seeds: usize,
    n: usize,
    seed: u64,
) -> Result<String> {
    let ds = dataset(n, offset, angle_deg, seed)?;
    let (pool, eval) = holdout(&ds, 0.3, seed)?;
    let mut spec = AllocationSpec::new(ATTRIBUTE, budget);
    spec.seeds = (0..seeds.clamp(1, 10) as u64).collect();
    let sweep = run_sweep(&pool, &spec, &eval)?;
    let view = SweepView {
        tv: separation_report(&eval, ATTRIBUTE, &SeparationOptions::default(), seed)?.epsilon_tv,
        accuracy_slope: fit_linear(&sweep, MetricKind::Accuracy)?.slope,
        loss_slope: fit_linear(&sweep, MetricKind::Loss)?.slope,
        curve: allocation_curve(&sweep, MetricKind::Accuracy),
    };
    Ok(serde_json::to_string(&view)?)
}

#[derive(Debug, Serialize)]
pub struct HistogramView {
    pub y: u8,
    /// Per raw dimension: bin edges, the two groups' masses and their TV.
    pub dims: Vec<HistogramDim>,
}

#[derive(Debug, Serialize)]
pub struct HistogramDim {
    pub edges: Vec<f64>,
    pub group_0: Vec<f64>,
    pub group_1: Vec<f64>,
    pub tv: f64,
}

/// Histograms of each raw dimension for the two groups within label `y`.
pub fn conditional_histograms_json(
    offset: f64,
    angle_deg: f64,
    y: u8,
    bins: usize,
    n: usize,
    seed: u64,
) -> Result<String> {
    if !(2..=200).contains(&bins) {
        return Err(Error::Config(format!("bins = {bins} outside 2..=200")));
    }
    let ds = dataset(n, offset, angle_deg, seed)?;
    let h = conditional_histograms(&ds, ATTRIBUTE, y.min(1), bins)?;
    let dims = h
        .masses
        .into_iter()
        .zip(h.bin_edges)
        .map(|([p, q], edges)| {
            let tv = 0.5 * p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum::<f64>();
            HistogramDim {
                edges,
                group_0: p,
                group_1: q,
                tv: tv.clamp(0.0, 1.0),
            }
        })
        .collect();
    Ok(serde_json::to_string(&HistogramView { y: h.y, dims })?)
}

fn js(r: Result<String>) -> std::result::Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = separationCurve)]
pub fn separation_curve(
    max_offset: f64,
    angle_deg: f64,
    steps: usize,
    n: usize,
    seed: u32,
) -> std::result::Result<String, JsError> {
    js(separation_curve_json(max_offset, angle_deg, steps, n, seed.into()))
}

#[wasm_bindgen(js_name = allocationSweep)]
pub fn allocation_sweep(
    offset: f64,
    angle_deg: f64,
    budget: usize,
    seeds: usize,
    n: usize,
    seed: u32,
) -> std::result::Result<String, JsError> {
    js(allocation_sweep_json(offset, angle_deg, budget, seeds, n, seed.into()))
}

#[wasm_bindgen(js_name = conditionalHistograms)]
pub fn conditional_histograms_js(
    offset: f64,
    angle_deg: f64,
    y: u8,
    bins: usize,
    n: usize,
    seed: u32,
) -> std::result::Result<String, JsError> {
    js(conditional_histograms_json(offset, angle_deg, y, bins, n, seed.into()))
}
