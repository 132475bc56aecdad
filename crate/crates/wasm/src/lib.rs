//! Browser bindings. Every export takes and returns JSON strings so the page
//! needs no generated type glue beyond the function names.
//!
//! The `*_json` functions hold the logic and are plain Rust, testable on any
//! target; the `#[wasm_bindgen]` exports only convert errors to strings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use spikescan::energy::{reconcile_reference, EnergyConfig, REFERENCE_SCALE};
use spikescan::neurons::{dsn_forward_serial, DsnParams, LifNeuron, NeuronConfig, ResetMode};
use spikescan::numerics::{heaviside, Tensor};
use spikescan::props::MembraneModel;
use spikescan::scan::{matrix_form, scan_parallel, scan_serial, ScanProblem};
use wasm_bindgen::prelude::*;

#[derive(Clone, Debug, Deserialize)]
#[serde(default)]
pub struct SimulateRequest {
    /// normal, sine or step.
    pub signal: String,
    pub t: usize,
    pub seed: u64,
    pub beta: f64,
}

impl Default for SimulateRequest {
    fn default() -> Self {
        Self {
            signal: "normal".into(),
            t: 64,
            seed: 0,
            beta: 0.5,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Trace {
    pub name: String,
    pub h: Vec<f64>,
    pub s: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulateResponse {
    pub input: Vec<f64>,
    pub traces: Vec<Trace>,
}

fn signal(req: &SimulateRequest, rng: &mut ChaCha8Rng) -> Result<Vec<f64>, String> {
    let t = req.t;
    Ok(match req.signal.as_str() {
        "normal" => {
            let d = Normal::new(1.0, 2.0).expect("valid parameters");
            (0..t).map(|_| d.sample(rng)).collect()
        }
        "sine" => (0..t).map(|i| 1.5 * (i as f64 * 0.3).sin() + 0.8).collect(),
        "step" => (0..t).map(|i| if i >= t / 4 { 1.6 } else { 0.0 }).collect(),
        other => return Err(format!("unknown signal '{other}'")),
    })
}

/// Membrane traces of three classical neurons and a randomly initialised
/// dynamic-decay neuron on one generated input.
pub fn simulate_json(request: &str) -> Result<String, String> {
    let req: SimulateRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    if req.t == 0 || req.t > 4096 {
        return Err("t must be in 1..=4096".into());
    }
    if !(0.0..1.0).contains(&req.beta) {
        return Err("beta must be in [0, 1)".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    let input = signal(&req, &mut rng)?;
    let mut traces = Vec::new();
    for (name, reset) in [("lif-hard", ResetMode::Hard), ("lif-soft", ResetMode::Soft), ("lif-none", ResetMode::None)] {
        let n = LifNeuron::new(NeuronConfig::lif(req.beta, reset));
        let h = n.membrane(&input).map_err(|e| e.to_string())?;
        let s = h.iter().map(|&v| heaviside(v - 1.0)).collect();
        traces.push(Trace { name: name.into(), h, s });
    }
    let params = DsnParams::init(1, 4, &mut rng);
    let x = Tensor::new(&[1, 1, req.t], input.clone()).map_err(|e| e.to_string())?;
    let out = dsn_forward_serial(&params, &x).map_err(|e| e.to_string())?;
    traces.push(Trace {
        name: "dsn".into(),
        h: out.h.into_data(),
        s: out.s.into_data(),
    });
    serde_json::to_string(&SimulateResponse { input, traces }).map_err(|e| e.to_string())
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanCheck {
    pub t: usize,
    pub lanes: usize,
    pub parallel_vs_serial: f64,
    /// Only computed for short sequences, where the closed form is stable.
    pub matrix_vs_serial: Option<f64>,
}

/// Random decay/input pairs evaluated three ways.
pub fn scan_check_json(t: usize, lanes: usize, seed: u64) -> Result<String, String> {
    if t == 0 || lanes == 0 || t * lanes > 1 << 22 {
        return Err("need 1 <= t, lanes and t * lanes <= 4194304".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alpha = Tensor::new(&[1, lanes, t], (0..lanes * t).map(|_| rng.gen_range(0.1..0.9)).collect())
        .map_err(|e| e.to_string())?;
    let x = Tensor::new(&[1, lanes, t], (0..lanes * t).map(|_| rng.gen_range(-2.0..3.0)).collect())
        .map_err(|e| e.to_string())?;
    let p = ScanProblem::new(alpha, x).map_err(|e| e.to_string())?;
    let serial = scan_serial(&p).map_err(|e| e.to_string())?;
    let parallel = scan_parallel(&p).map_err(|e| e.to_string())?;
    let matrix_vs_serial = if t <= 64 {
        let m = matrix_form(&p).map_err(|e| e.to_string())?;
        Some(m.max_abs_diff(&serial).map_err(|e| e.to_string())?)
    } else {
        None
    };
    let check = ScanCheck {
        t,
        lanes,
        parallel_vs_serial: parallel.max_abs_diff(&serial).map_err(|e| e.to_string())?,
        matrix_vs_serial,
    };
    serde_json::to_string(&check).map_err(|e| e.to_string())
}

/// Energy of the reference network for each neuron kind; `scale <= 0`
/// selects the reference sample count.
pub fn energy_table_json(scale: f64) -> Result<String, String> {
    let cfg = EnergyConfig {
        scale: if scale > 0.0 { scale } else { REFERENCE_SCALE },
        ..EnergyConfig::default()
    };
    let rows = reconcile_reference(cfg).map_err(|e| e.to_string())?;
    let slim: Vec<serde_json::Value> = rows
        .iter()
        .map(|r| {
            serde_json::json!({
                "neuron": r.neuron,
                "estimated_mj": r.estimated_mj,
                "reference_mj": r.reference_mj,
                "relative_error": r.relative_error,
            })
        })
        .collect();
    serde_json::to_string(&slim).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn simulate(request: &str) -> Result<String, JsError> {
    simulate_json(request).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn scan_check(t: usize, lanes: usize, seed: u64) -> Result<String, JsError> {
    scan_check_json(t, lanes, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn energy_table(scale: f64) -> Result<String, JsError> {
    energy_table_json(scale).map_err(|e| JsError::new(&e))
}
