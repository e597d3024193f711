//! Browser demo. The plain functions return serializable results and are
//! tested natively; the `wasm_bindgen` wrappers hand them to JavaScript as JSON.

use assim_core::bias::{apply_noise, bpbdw_reconstruct, NoiseModel};
use assim_core::config::{Experiment, ExperimentConfig};
use assim_core::manifold::{sample_multiscale, sample_sinusoids, Range};
use assim_core::multiscale::{spbdw_reconstruct, SlowDictionary};
use assim_core::obs::{build_observation_space, inf_sup_beta, observe, ObservationSpace, SensorArray};
use assim_core::rng::derive_seed;
use assim_core::rom::pod;
use assim_core::solver::PbdwSolver;
use assim_core::space::GridFunction;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct Curve {
    pub label: &'static str,
    pub values: Vec<f64>,
    /// Relative error against the truth, absent for the truth itself.
    pub error: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct Reconstructions {
    pub x: Vec<f64>,
    pub sensors: Vec<f64>,
    pub readings: Vec<f64>,
    pub beta: f64,
    pub curves: Vec<Curve>,
    /// Locations of the selected step functions (sPBDW only).
    pub jumps: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct BetaCurve {
    pub n: Vec<usize>,
    pub beta: Vec<f64>,
}

fn sensors(cfg: &ExperimentConfig, m: usize) -> assim_core::Result<ObservationSpace> {
    let pointwise = cfg.sensor_kind == assim_core::config::SensorChoice::Pointwise;
    build_observation_space(&SensorArray::equidistant(&cfg.grid, m, pointwise)?, &cfg.grid)
}

fn curve(label: &'static str, u: &GridFunction, truth: &GridFunction) -> Curve {
    let error = u.sub(truth).map(|d| d.norm() / truth.norm()).ok();
    Curve { label, values: u.values().to_vec(), error }
}

/// One noisy sinusoid reconstructed by PBDW and bPBDW.
pub fn sinusoid_demo(n: usize, m: usize, alpha: f64, sigma: f64, seed: u64) -> assim_core::Result<Reconstructions> {
    let cfg = ExperimentConfig::defaults(Experiment::Example1);
    let train = sample_sinusoids(&cfg.sinusoid, cfg.grid, cfg.snapshots, derive_seed(cfg.seed, &[1]))?;
    let truth = sample_sinusoids(&cfg.sinusoid, cfg.grid, 1, derive_seed(seed, &[2]))?.snapshots()[0].clone();
    let basis = pod(&train, n)?;
    let space = sensors(&cfg, m)?;
    let solver = PbdwSolver::new(basis.subspace(), &space)?;
    let model = NoiseModel::linear(alpha, sigma)?;
    let omega = apply_noise(&truth, &space, &model, derive_seed(seed, &[3]))?;
    let b = bpbdw_reconstruct(&omega, &solver, &model, derive_seed(seed, &[4]), None)?;
    Ok(Reconstructions {
        x: cfg.grid.nodes().collect(),
        sensors: space.sensors().centers().to_vec(),
        readings: space.readings_of(&omega),
        beta: solver.beta(),
        curves: vec![
            curve("truth", &truth, &truth),
            curve("PBDW", &b.initial.state, &truth),
            curve("bPBDW", &b.corrected.state, &truth),
        ],
        jumps: Vec::new(),
    })
}

/// A multiscale signal with a jump at `jump_location`, reconstructed from
/// noise-free data by PBDW on the full manifold and by sPBDW.
pub fn jump_demo(jump_location: f64, jump_height: f64, m: usize, n: usize, seed: u64) -> assim_core::Result<Reconstructions> {
    let cfg = ExperimentConfig::defaults(Experiment::Example2);
    let train = sample_multiscale(&cfg.multiscale, cfg.grid, cfg.snapshots, derive_seed(cfg.seed, &[1]))?;
    let mut spec = cfg.multiscale;
    spec.jump_location = Range::point(jump_location);
    spec.jump_height = Range::point(jump_height);
    let truth = sample_multiscale(&spec, cfg.grid, 1, derive_seed(seed, &[2]))?.full.snapshots()[0].clone();
    let space = sensors(&cfg, m)?;
    let full = pod(&train.full, n)?;
    let fast = pod(&train.fast, n)?;
    let full_solver = PbdwSolver::new(full.subspace(), &space)?;
    let fast_solver = PbdwSolver::new(fast.subspace(), &space)?;
    let dict = SlowDictionary::heaviside(cfg.grid, &space, cfg.multiscale.jump_location, 1)?;
    let omega = observe(&truth, &space)?;
    let plain = full_solver.solve(&omega)?;
    let dec = spbdw_reconstruct(&omega, &fast_solver, &dict, None, seed, &cfg.spbdw.smoother)?;
    Ok(Reconstructions {
        x: cfg.grid.nodes().collect(),
        sensors: space.sensors().centers().to_vec(),
        readings: space.readings_of(&omega),
        beta: fast_solver.beta(),
        curves: vec![
            curve("truth", &truth, &truth),
            curve("PBDW", &plain.state, &truth),
            curve("sPBDW", &dec.u_star, &truth),
        ],
        jumps: dec.smoothers.iter().map(|s| s.location).collect(),
    })
}

/// Inf-sup constant of the Example 1 POD spaces against `m` sensors.
pub fn beta_curve(m: usize, max_n: usize) -> assim_core::Result<BetaCurve> {
    let cfg = ExperimentConfig::defaults(Experiment::Example1);
    let train = sample_sinusoids(&cfg.sinusoid, cfg.grid, cfg.snapshots, derive_seed(cfg.seed, &[1]))?;
    let basis = pod(&train, max_n)?;
    let space = sensors(&cfg, m)?;
    let n: Vec<usize> = (1..=basis.dim()).collect();
    let beta = n
        .iter()
        .map(|&k| inf_sup_beta(&basis.subspace().truncated(k), &space))
        .collect::<assim_core::Result<_>>()?;
    Ok(BetaCurve { n, beta })
}

fn to_js<T: Serialize>(r: assim_core::Result<T>) -> Result<String, JsError> {
    let value = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = sinusoidDemo)]
pub fn sinusoid_demo_js(n: usize, m: usize, alpha: f64, sigma: f64, seed: u32) -> Result<String, JsError> {
    to_js(sinusoid_demo(n, m, alpha, sigma, seed.into()))
}

#[wasm_bindgen(js_name = jumpDemo)]
pub fn jump_demo_js(jump_location: f64, jump_height: f64, m: usize, n: usize, seed: u32) -> Result<String, JsError> {
    to_js(jump_demo(jump_location, jump_height, m, n, seed.into()))
}

#[wasm_bindgen(js_name = betaCurve)]
pub fn beta_curve_js(m: usize, max_n: usize) -> Result<String, JsError> {
    to_js(beta_curve(m, max_n))
}
