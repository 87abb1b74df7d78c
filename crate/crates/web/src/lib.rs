//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each exported function takes plain numbers and returns a JSON string that
//! the page parses and plots. The `*_json` functions hold the logic and are
//! usable (and tested) natively.

use seqtrack_core::policy::Policy;
use seqtrack_core::simulate::{simulate_path, SimConfig};
use seqtrack_core::{solve_phi, ModelParams, PhiOptions, Regime, RootOptions, ValueFunction};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_PLOT_POINTS: usize = 2000;

#[derive(Serialize)]
struct Curves {
    x: Vec<f64>,
    v_plus: Vec<f64>,
    v_minus: Vec<f64>,
    v_tilde: Vec<f64>,
}

#[derive(Serialize)]
struct SolveOut {
    regime: Regime,
    #[serde(rename = "K")]
    k: Option<f64>,
    #[serde(rename = "B")]
    b: Option<f64>,
    beta: f64,
    gamma: f64,
    value: Curves,
    phi: Vec<[f64; 2]>,
}

fn solve_value(params: ModelParams) -> Result<ValueFunction, String> {
    let phi = solve_phi(&params, &PhiOptions::default()).map_err(|e| e.to_string())?;
    ValueFunction::solve(params, phi, &RootOptions::default()).map_err(|e| e.to_string())
}

fn model(lambda: f64, mu: f64, alpha: f64, c1: f64, c2: f64) -> Result<ModelParams, String> {
    ModelParams::new(lambda, mu, alpha, c1, c2).map_err(|e| e.to_string())
}

/// Threshold pair and value-function curves on `points` grid points.
pub fn solve_json(
    lambda: f64,
    mu: f64,
    alpha: f64,
    c1: f64,
    c2: f64,
    points: usize,
) -> Result<String, String> {
    let params = model(lambda, mu, alpha, c1, c2)?;
    let vf = solve_value(params)?;
    let (lo, hi) = vf.domain();
    let n = points.clamp(2, MAX_PLOT_POINTS) - 1;
    let mut curves = Curves {
        x: Vec::new(),
        v_plus: Vec::new(),
        v_minus: Vec::new(),
        v_tilde: Vec::new(),
    };
    for i in 0..=n {
        let x = lo + (hi - lo) * i as f64 / n as f64;
        let x = x.clamp(lo, hi);
        curves.x.push(x);
        curves
            .v_plus
            .push(vf.value_at(x, 1).map_err(|e| e.to_string())?);
        curves
            .v_minus
            .push(vf.value_at(x, -1).map_err(|e| e.to_string())?);
        curves
            .v_tilde
            .push(params.v_tilde(x).map_err(|e| e.to_string())?);
    }
    let nodes: Vec<[f64; 2]> = vf.phi().nodes().map(|(x, f, _)| [x, f]).collect();
    let stride = nodes.len().div_ceil(MAX_PLOT_POINTS).max(1);
    let fb = vf.free_boundary();
    let out = SolveOut {
        regime: fb.regime,
        k: fb.k,
        b: fb.b,
        beta: params.beta(),
        gamma: params.gamma(),
        value: curves,
        phi: nodes.into_iter().step_by(stride).collect(),
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct PathOut {
    #[serde(rename = "B")]
    b: Option<f64>,
    t: Vec<f64>,
    theta: Vec<i8>,
    x: Vec<f64>,
    m: Vec<f64>,
    a: Vec<i8>,
    switches: Vec<f64>,
}

/// One simulated path under the optimal policy (never switching when no
/// threshold exists), thinned for plotting.
#[allow(clippy::too_many_arguments)]
pub fn simulate_json(
    lambda: f64,
    mu: f64,
    alpha: f64,
    c1: f64,
    c2: f64,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<String, String> {
    let params = model(lambda, mu, alpha, c1, c2)?;
    let vf = solve_value(params)?;
    let policy = Policy::optimal(vf.free_boundary(), 1).map_err(|e| e.to_string())?;
    let cfg = SimConfig {
        dt,
        horizon,
        seed,
        ..SimConfig::default()
    };
    let mut bundle = simulate_path(&params, &cfg, 0).map_err(|e| e.to_string())?;
    let control = bundle.attach_policy(&policy).map_err(|e| e.to_string())?;
    let theta = bundle.theta.take().unwrap_or_default();
    let stride = bundle.len().div_ceil(MAX_PLOT_POINTS).max(1);
    let pick = |k: usize| k.is_multiple_of(stride);
    let out = PathOut {
        b: vf.free_boundary().b,
        t: bundle
            .t
            .iter()
            .enumerate()
            .filter(|(k, _)| pick(*k))
            .map(|(_, v)| *v)
            .collect(),
        theta: theta
            .iter()
            .enumerate()
            .filter(|(k, _)| pick(*k))
            .map(|(_, v)| *v)
            .collect(),
        x: bundle
            .x_obs
            .iter()
            .enumerate()
            .filter(|(k, _)| pick(*k))
            .map(|(_, v)| *v)
            .collect(),
        m: bundle
            .m
            .iter()
            .enumerate()
            .filter(|(k, _)| pick(*k))
            .map(|(_, v)| *v)
            .collect(),
        a: control
            .a
            .iter()
            .enumerate()
            .filter(|(k, _)| pick(*k))
            .map(|(_, v)| *v)
            .collect(),
        switches: control.switches.iter().map(|&k| bundle.t[k]).collect(),
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct SweepPoint {
    c1: f64,
    regime: Regime,
    #[serde(rename = "K")]
    k: Option<f64>,
    #[serde(rename = "B")]
    b: Option<f64>,
}

/// `(B, K)` for `count` values of `c1` evenly spaced in `[from, to]`.
pub fn sweep_c1_json(
    lambda: f64,
    mu: f64,
    alpha: f64,
    c2: f64,
    from: f64,
    to: f64,
    count: usize,
) -> Result<String, String> {
    let count = count.clamp(2, 400);
    let mut rows = Vec::with_capacity(count);
    for i in 0..count {
        let c1 = from + (to - from) * i as f64 / (count - 1) as f64;
        let vf = solve_value(model(lambda, mu, alpha, c1, c2)?)?;
        let fb = vf.free_boundary();
        rows.push(SweepPoint {
            c1,
            regime: fb.regime,
            k: fb.k,
            b: fb.b,
        });
    }
    serde_json::to_string(&rows).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn solve(
    lambda: f64,
    mu: f64,
    alpha: f64,
    c1: f64,
    c2: f64,
    points: usize,
) -> Result<String, JsError> {
    solve_json(lambda, mu, alpha, c1, c2, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    lambda: f64,
    mu: f64,
    alpha: f64,
    c1: f64,
    c2: f64,
    horizon: f64,
    dt: f64,
    seed: u32,
) -> Result<String, JsError> {
    simulate_json(lambda, mu, alpha, c1, c2, horizon, dt, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn sweep_c1(
    lambda: f64,
    mu: f64,
    alpha: f64,
    c2: f64,
    from: f64,
    to: f64,
    count: usize,
) -> Result<String, JsError> {
    sweep_c1_json(lambda, mu, alpha, c2, from, to, count).map_err(|e| JsError::new(&e))
}
