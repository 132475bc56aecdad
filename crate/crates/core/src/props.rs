//! Executable checks of membrane-control and structural properties.
//!
//! * Delta-short control: if `H_{t-D} >= V_th` and the next `D` inputs are all
//!   below `V_th / D`, then `H_t < V_th`.
//! * Long control: inputs bounded above by `C` keep `H` bounded.
//! * The three structural conditions: outputs are a function of a prefix
//!   summary, the summary updates online in constant memory, and a parallel
//!   evaluation through time exists.
//!
//! Every failing verdict carries a witness that [`replay_witness`] can check
//! against the public neuron API.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neurons::{
    dsn_forward_parallel, dsn_forward_serial, DsnParams, Leak, LifNeuron, NeuronConfig, ResetMode, SpikingNeuron,
};
use crate::numerics::Tensor;

pub const DEFAULT_TRIALS: usize = 10_000;
pub const DEFAULT_SEED: u64 = 0x5EED;
/// Steps of constant input used to demonstrate divergence.
pub const DIVERGENCE_HORIZON: usize = 100_000;
/// `H` above this multiple of `max(V_th, C)` counts as unbounded.
pub const DIVERGENCE_FACTOR: f64 = 1e4;

/// A scalar neuron seen through its pre-reset membrane trace.
pub trait MembraneModel {
    fn name(&self) -> String;
    fn v_th(&self) -> f64;
    /// `H_1..H_T` for a single-lane input starting from rest.
    fn membrane(&self, x: &[f64]) -> Result<Vec<f64>>;
    /// Upper bound on `H` for inputs `x_t <= c`, or `None` when the model
    /// is expected to diverge. `strict` asks for `H < bound`.
    fn long_bound(&self, c: f64) -> Option<Bound>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub value: f64,
    pub strict: bool,
}

impl Bound {
    /// Non-strict bounds allow a few ulps of slack: `a*c + (1-a)*c` can round
    /// just above `c`.
    pub fn admits(&self, h: f64) -> bool {
        if self.strict {
            h < self.value
        } else {
            h <= self.value + 1e-12 * self.value.abs().max(1.0)
        }
    }
}

impl MembraneModel for LifNeuron {
    fn name(&self) -> String {
        SpikingNeuron::name(self)
    }

    fn v_th(&self) -> f64 {
        self.cfg.v_th
    }

    /// Scalar loop over the same charge and reset rules as `lif_step`.
    fn membrane(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.cfg.validate()?;
        let mut v = 0.0;
        let mut out = Vec::with_capacity(x.len());
        for &xt in x {
            let h = self.cfg.charge(v, xt);
            let s = crate::numerics::heaviside(h - self.cfg.v_th);
            v = self.cfg.reset_value(h, s);
            out.push(h);
        }
        if out.iter().any(|h| !h.is_finite()) {
            return Err(Error::NonFinite("lif membrane"));
        }
        Ok(out)
    }

    fn long_bound(&self, c: f64) -> Option<Bound> {
        let c0 = c.max(0.0);
        match (self.cfg.leak, self.cfg.reset) {
            (Leak::If, ResetMode::Hard) => Some(Bound {
                value: c0 + self.cfg.v_th,
                strict: true,
            }),
            (Leak::If, _) => None,
            (Leak::Lif, ResetMode::Hard) => Some(Bound {
                value: c0.max(self.cfg.v_reset),
                strict: false,
            }),
            (Leak::Lif, _) => Some(Bound {
                value: c0,
                strict: false,
            }),
        }
    }
}

/// Dynamic-decay neuron on one lane, using the learned decay as is.
#[derive(Clone, Debug)]
pub struct DsnProbe {
    pub params: DsnParams,
    pub v_th: f64,
}

impl DsnProbe {
    pub fn new(params: DsnParams) -> Result<Self> {
        if params.channels() != 1 {
            return Err(Error::InvalidParameter("a probe needs single-channel parameters".into()));
        }
        Ok(Self { params, v_th: 1.0 })
    }
}

fn lane(x: &[f64]) -> Result<Tensor> {
    Tensor::new(&[1, 1, x.len()], x.to_vec())
}

impl MembraneModel for DsnProbe {
    fn name(&self) -> String {
        "dsn".into()
    }

    fn v_th(&self) -> f64 {
        self.v_th
    }

    fn membrane(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(dsn_forward_serial(&self.params, &lane(x)?)?.h.into_data())
    }

    fn long_bound(&self, c: f64) -> Option<Bound> {
        Some(Bound {
            value: c.max(0.0),
            strict: false,
        })
    }
}

/// Dynamic-decay neuron whose decay is capped by the window condition:
/// whenever `H_{t-1} >= V_th > x_t`, `alpha_t` is limited to `margin` times
/// [`alpha_window_condition`].
#[derive(Clone, Debug)]
pub struct WindowedDsn {
    pub params: DsnParams,
    pub v_th: f64,
    /// In `[0, 1)`.
    pub margin: f64,
}

impl MembraneModel for WindowedDsn {
    fn name(&self) -> String {
        "dsn-windowed".into()
    }

    fn v_th(&self) -> f64 {
        self.v_th
    }

    fn membrane(&self, x: &[f64]) -> Result<Vec<f64>> {
        if !(0.0..1.0).contains(&self.margin) {
            return Err(Error::InvalidParameter(format!("margin must be in [0, 1), got {}", self.margin)));
        }
        let alpha = dsn_forward_parallel(&self.params, &lane(x)?)?.alpha.into_data();
        let mut h = 0.0f64;
        let mut out = Vec::with_capacity(x.len());
        for (&a, &xt) in alpha.iter().zip(x) {
            let a = if h >= self.v_th && xt < self.v_th {
                a.min(self.margin * alpha_window_condition(h, xt, self.v_th)?)
            } else {
                a
            };
            h = a * h + (1.0 - a) * xt;
            out.push(h);
        }
        Ok(out)
    }

    fn long_bound(&self, c: f64) -> Option<Bound> {
        Some(Bound {
            value: c.max(0.0),
            strict: false,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    /// `H` at `index` reached `v_th` although the `delta` inputs before it
    /// were small and `H` at `index - delta` was at or above threshold.
    ShortControl { delta: usize, v_th: f64 },
    /// `H` at `index` broke the claimed bound.
    LongControl { bound: Bound },
    /// `H` at `index` exceeded `limit` under inputs bounded by `c`.
    Divergence { c: f64, limit: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub input: Vec<f64>,
    pub trace: Vec<f64>,
    pub index: usize,
    pub violation: Violation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlVerdict {
    pub holds: bool,
    pub witness: Option<Witness>,
    pub trials: usize,
}

/// Re-runs the model on the witness input and confirms the violation.
pub fn replay_witness(model: &dyn MembraneModel, w: &Witness) -> Result<bool> {
    let h = model.membrane(&w.input)?;
    if h.len() != w.trace.len() || h.iter().zip(&w.trace).any(|(a, b)| a.to_bits() != b.to_bits()) {
        return Ok(false);
    }
    let Some(&ht) = h.get(w.index) else {
        return Ok(false);
    };
    Ok(match &w.violation {
        Violation::ShortControl { delta, v_th } => {
            let d = *delta;
            w.index >= d
                && h[w.index - d] >= *v_th
                && w.input[w.index + 1 - d..=w.index].iter().all(|&x| x < v_th / d as f64)
                && ht >= *v_th
        }
        Violation::LongControl { bound } => !bound.admits(ht),
        Violation::Divergence { c, limit } => w.input.iter().all(|x| x <= c) && ht > *limit,
    })
}

/// Smallest burst (given the prefix) that lifts `H` to at least `target`,
/// found by doubling then bisection. `None` if no burst up to a huge value
/// reaches it.
fn burst_for(model: &dyn MembraneModel, prefix: &[f64], target: f64) -> Result<Option<f64>> {
    let mut seq = prefix.to_vec();
    seq.push(0.0);
    let n = seq.len();
    let mut eval = |b: f64| -> Result<f64> {
        seq[n - 1] = b;
        Ok(model.membrane(&seq)?[n - 1])
    };
    let mut hi = target.abs().max(1.0);
    let mut doublings = 0;
    while eval(hi)? < target {
        hi *= 2.0;
        doublings += 1;
        if doublings > 1000 || !hi.is_finite() {
            return Ok(None);
        }
    }
    let mut lo = -hi;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if eval(mid)? >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// Membrane level needed before the window for a soft-reset LIF neuron to
/// still be at threshold after `delta` small inputs.
fn soft_lif_requirement(beta: f64, v_th: f64, small: &[f64]) -> f64 {
    let d = small.len();
    let mut req = 0.0;
    for i in 0..=d {
        req += v_th / beta.powi(i as i32);
    }
    for (i, &x) in small.iter().enumerate() {
        req += (1.0 - 1.0 / beta) * x / beta.powi(i as i32);
    }
    req
}

/// Random and boundary search for a Delta-short-control violation.
pub fn check_short_control(
    model: &dyn MembraneModel,
    delta: usize,
    trials: usize,
    seed: u64,
) -> Result<ControlVerdict> {
    if delta == 0 {
        return Err(Error::InvalidParameter("delta must be >= 1".into()));
    }
    let v_th = model.v_th();
    let cap = v_th / delta as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let run = |input: Vec<f64>, start: usize| -> Result<Option<Witness>> {
        let trace = model.membrane(&input)?;
        if trace[start] < v_th {
            return Ok(None);
        }
        let idx = start + delta;
        if trace[idx] >= v_th {
            return Ok(Some(Witness {
                input,
                trace,
                index: idx,
                violation: Violation::ShortControl { delta, v_th },
            }));
        }
        Ok(None)
    };

    // Boundary cases: inputs just below the cap, zeros, and strongly negative,
    // after a membrane exactly at threshold, at ten times it, and large.
    let just_below = cap * (1.0 - 1e-9);
    let tails = [vec![just_below; delta], vec![0.0; delta], vec![-v_th; delta]];
    let targets = [v_th, 10.0 * v_th, (delta as f64 + 2.0) * v_th, 1e6 * v_th];
    let soft_beta = soft_lif_beta(model);
    let mut trials_done = 0usize;
    for tail in &tails {
        let mut local = targets.to_vec();
        if let Some(beta) = soft_beta {
            let req = soft_lif_requirement(beta, v_th, tail);
            if req.is_finite() && req < 1e200 {
                local.push(2.0 * req.max(v_th));
            }
        }
        for &target in &local {
            let Some(burst) = burst_for(model, &[], target)? else {
                continue;
            };
            let mut input = vec![burst];
            input.extend_from_slice(tail);
            trials_done += 1;
            if let Some(w) = run(input, 0)? {
                return Ok(ControlVerdict {
                    holds: false,
                    witness: Some(w),
                    trials: trials_done,
                });
            }
        }
    }

    let mut attempts = 0usize;
    let mut done = 0usize;
    while done < trials && attempts < trials.saturating_mul(20) {
        attempts += 1;
        let p = rng.gen_range(0..5usize);
        let mut input: Vec<f64> = (0..p).map(|_| rng.gen_range(-v_th..2.0 * v_th)).collect();
        let scale = 10f64.powf(rng.gen_range(0.0..4.0));
        input.push(rng.gen_range(0.0..scale * v_th));
        for _ in 0..delta {
            let x = if rng.gen_bool(0.2) {
                just_below
            } else {
                rng.gen_range(-v_th..cap)
            };
            input.push(x);
        }
        let trace_ok = model.membrane(&input[..=p])?;
        if trace_ok[p] < v_th {
            continue;
        }
        done += 1;
        if let Some(w) = run(input, p)? {
            return Ok(ControlVerdict {
                holds: false,
                witness: Some(w),
                trials: trials_done + done,
            });
        }
    }
    Ok(ControlVerdict {
        holds: true,
        witness: None,
        trials: trials_done + done,
    })
}

/// Recovers `beta` when the model behaves like a soft-reset LIF neuron, so
/// the boundary cases can aim at the level its recursion requires.
fn soft_lif_beta(model: &dyn MembraneModel) -> Option<f64> {
    // From rest such a neuron gives H_1 = (1 - beta) x and, after firing,
    // H_2 = beta * (H_1 - V_th) for a zero input.
    let v_th = model.v_th();
    let burst = 400.0 * v_th;
    let h = model.membrane(&[burst, 0.0]).ok()?;
    let beta = 1.0 - h[0] / burst;
    if !(beta > 0.0 && beta < 1.0) {
        return None;
    }
    let expected = beta * (h[0] - v_th);
    ((h[1] - expected).abs() <= 1e-9 * h[0].abs().max(1.0)).then_some(beta)
}

/// Burst-then-small-inputs sequence that keeps a soft-reset IF neuron firing
/// for `delta + 1` consecutive steps. `small_inputs` has length `delta`.
pub fn construct_soft_reset_counterexample(delta: usize, v_th: f64, small_inputs: &[f64]) -> Result<Vec<f64>> {
    if delta == 0 || small_inputs.len() != delta {
        return Err(Error::InvalidParameter(format!(
            "need delta >= 1 and exactly delta small inputs, got delta {delta} and {} inputs",
            small_inputs.len()
        )));
    }
    let cap = v_th / delta as f64;
    if let Some(x) = small_inputs.iter().find(|&&x| !(x < cap)) {
        return Err(Error::InvalidParameter(format!("small input {x} is not below V_th/delta = {cap}")));
    }
    let bound = (delta as f64 + 1.0) * v_th - small_inputs.iter().sum::<f64>();
    let mut seq = vec![bound + 0.1 * v_th];
    seq.extend_from_slice(small_inputs);
    Ok(seq)
}

/// `Delta + m/Delta - m >= 1` for all `1 <= m <= Delta <= max_delta`,
/// checked in integers as `Delta^2 + m - m Delta >= Delta`.
pub fn lemma_holds(max_delta: u64) -> bool {
    (1..=max_delta).all(|d| (1..=d).all(|m| d * d + m >= m * d + d))
}

/// Random bounded inputs plus the constant sequence at the bound.
pub fn check_long_control(
    model: &dyn MembraneModel,
    c_bound: f64,
    t: usize,
    trials: usize,
    seed: u64,
) -> Result<ControlVerdict> {
    if t == 0 {
        return Err(Error::InvalidParameter("T must be >= 1".into()));
    }
    if !(c_bound >= 0.0) || !c_bound.is_finite() {
        return Err(Error::InvalidParameter(format!("c_bound must be finite and >= 0, got {c_bound}")));
    }
    let Some(bound) = model.long_bound(c_bound) else {
        return divergence_check(model, c_bound);
    };
    let check = |input: Vec<f64>| -> Result<Option<Witness>> {
        let trace = model.membrane(&input)?;
        Ok(trace.iter().position(|&h| !bound.admits(h)).map(|index| Witness {
            input,
            trace,
            index,
            violation: Violation::LongControl { bound },
        }))
    };
    let mut done = 0;
    for constant in [c_bound, 0.0, -c_bound] {
        done += 1;
        if let Some(w) = check(vec![constant; t])? {
            return Ok(ControlVerdict {
                holds: false,
                witness: Some(w),
                trials: done,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        done += 1;
        let input: Vec<f64> = (0..t)
            .map(|_| {
                if rng.gen_bool(0.3) {
                    c_bound
                } else {
                    rng.gen_range(-c_bound..=c_bound)
                }
            })
            .collect();
        if let Some(w) = check(input)? {
            return Ok(ControlVerdict {
                holds: false,
                witness: Some(w),
                trials: done,
            });
        }
    }
    Ok(ControlVerdict {
        holds: true,
        witness: None,
        trials: done,
    })
}

/// Drives the model with `x = c` and reports divergence once `H` passes
/// `DIVERGENCE_FACTOR * max(V_th, c)` within `DIVERGENCE_HORIZON` steps.
fn divergence_check(model: &dyn MembraneModel, c: f64) -> Result<ControlVerdict> {
    let limit = DIVERGENCE_FACTOR * model.v_th().max(c);
    let trace = model.membrane(&vec![c; DIVERGENCE_HORIZON])?;
    match trace.iter().position(|&h| h > limit) {
        Some(index) => {
            let input = vec![c; index + 1];
            let trace = trace[..=index].to_vec();
            Ok(ControlVerdict {
                holds: false,
                witness: Some(Witness {
                    input,
                    trace,
                    index,
                    violation: Violation::Divergence { c, limit },
                }),
                trials: 1,
            })
        }
        None => Ok(ControlVerdict {
            holds: true,
            witness: None,
            trials: 1,
        }),
    }
}

/// Largest decay that still pulls `H` below threshold in one step:
/// `(V_th - x) / (h_prev - x)`.
pub fn alpha_window_condition(h_prev: f64, x_t: f64, v_th: f64) -> Result<f64> {
    if h_prev <= x_t {
        return Err(Error::Vacuous(format!(
            "h_prev = {h_prev} must exceed x_t = {x_t} for the window condition"
        )));
    }
    Ok((v_th - x_t) / (h_prev - x_t))
}

/// Decay schedule over `xs.len()` steps after a membrane `h0 >= V_th` that
/// keeps `H >= V_th` for `tau - 1` further steps and drops below at step
/// `tau`. `slack` in `(0, 1)` places each decay inside its allowed range.
pub fn duration_schedule(h0: f64, xs: &[f64], v_th: f64, tau: usize, slack: f64) -> Result<Vec<f64>> {
    if tau == 0 || tau > xs.len() {
        return Err(Error::InvalidParameter(format!(
            "tau must be in [1, {}], got {tau}",
            xs.len()
        )));
    }
    if !(slack > 0.0 && slack < 1.0) {
        return Err(Error::InvalidParameter(format!("slack must be in (0, 1), got {slack}")));
    }
    if h0 < v_th {
        return Err(Error::Vacuous(format!("h0 = {h0} is below threshold {v_th}")));
    }
    let mut h = h0;
    let mut alphas = Vec::with_capacity(xs.len());
    for (i, &x) in xs.iter().enumerate() {
        let step = i + 1;
        let a = if step < tau {
            let thr = alpha_window_condition(h, x, v_th)?.clamp(0.0, 1.0);
            thr + (1.0 - thr) * slack
        } else if step == tau {
            let thr = alpha_window_condition(h, x, v_th)?.clamp(0.0, 1.0);
            thr * slack
        } else {
            slack
        };
        h = a * h + (1.0 - a) * x;
        alphas.push(a);
    }
    Ok(alphas)
}

/// Applies `H_t = a_t H_{t-1} + (1 - a_t) x_t` from `h0`.
pub fn replay_schedule(h0: f64, alphas: &[f64], xs: &[f64]) -> Vec<f64> {
    let mut h = h0;
    alphas
        .iter()
        .zip(xs)
        .map(|(&a, &x)| {
            h = a * h + (1.0 - a) * x;
            h
        })
        .collect()
}

/// Smallest `Delta` in `1..=max_delta` for which no violation is found.
pub fn search_delta(model: &dyn MembraneModel, max_delta: usize, trials: usize, seed: u64) -> Result<Option<usize>> {
    for d in 1..=max_delta {
        if check_short_control(model, d, trials, seed)?.holds {
            return Ok(Some(d));
        }
    }
    Ok(None)
}

/// `max_t |H(x + y) - H(x) - H(y)|`.
pub fn additivity_gap(model: &dyn MembraneModel, x: &[f64], y: &[f64]) -> Result<f64> {
    let sum: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + b).collect();
    let (hs, hx, hy) = (model.membrane(&sum)?, model.membrane(x)?, model.membrane(y)?);
    Ok(hs
        .iter()
        .zip(hx.iter().zip(&hy))
        .map(|(s, (a, b))| (s - a - b).abs())
        .fold(0.0, f64::max))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonlinearityWitness {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub gap: f64,
}

/// Searches random pairs for a clear additivity failure (gap above `tol`).
pub fn find_nonlinearity(
    model: &dyn MembraneModel,
    t: usize,
    trials: usize,
    tol: f64,
    seed: u64,
) -> Result<Option<NonlinearityWitness>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = model.v_th();
    for _ in 0..trials {
        let x: Vec<f64> = (0..t).map(|_| rng.gen_range(-2.0 * v..3.0 * v)).collect();
        let y: Vec<f64> = (0..t).map(|_| rng.gen_range(-2.0 * v..3.0 * v)).collect();
        let gap = additivity_gap(model, &x, &y)?;
        if gap > tol {
            return Ok(Some(NonlinearityWitness { x, y, gap }));
        }
    }
    Ok(None)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionsRow {
    /// Outputs depend on a time-invariant summary of the past only.
    pub condition1: bool,
    /// A constant-memory online update exists and runs past the training length.
    pub condition2: bool,
    /// A parallel evaluation through time reproduces the reference output.
    pub condition3: bool,
}

fn random_input(rng: &mut ChaCha8Rng, c: usize, t: usize) -> Result<Tensor> {
    Tensor::new(&[1, c, t], (0..c * t).map(|_| rng.gen_range(-1.0..3.0)).collect())
}

/// Compares `a[.., t]` with `b[.., t + shift_b]` for `t < len`, single batch.
fn prefix_equal(a: &Tensor, b: &Tensor, len: usize, shift_b: usize) -> bool {
    let (c, ta, tb) = (a.shape()[1], a.shape()[2], b.shape()[2]);
    (0..c).all(|ci| {
        (0..len).all(|t| {
            let va = a.data()[ci * ta + t];
            let vb = b.data()[ci * tb + t + shift_b];
            (va - vb).abs() <= 1e-12 * va.abs().max(1.0)
        })
    })
}

/// Structural checks behind the conditions table, run on random inputs.
pub fn check_conditions_table(neuron: &dyn SpikingNeuron, seed: u64) -> Result<ConditionsRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = neuron.fixed_channels().unwrap_or(2);
    let t = neuron.train_len().unwrap_or(32);
    let x = random_input(&mut rng, c, t)?;
    let reference = neuron.sequence(&x);

    let condition1 = match &reference {
        Err(_) => false,
        Ok(base) => {
            let half = t / 2;
            let mut changed = x.data().to_vec();
            for ci in 0..c {
                for ti in half..t {
                    changed[ci * t + ti] = rng.gen_range(-5.0..5.0);
                }
            }
            let suffix_free = neuron
                .sequence(&Tensor::new(&[1, c, t], changed)?)
                .map(|o| prefix_equal(&base.h, &o.h, half, 0) && prefix_equal(&base.s, &o.s, half, 0))
                .unwrap_or(false);
            let m = (t / 4).max(1);
            let mut shifted = vec![0.0; c * t];
            for ci in 0..c {
                shifted[ci * t + m..(ci + 1) * t].copy_from_slice(&x.data()[ci * t..ci * t + t - m]);
            }
            let shift_free = neuron
                .sequence(&Tensor::new(&[1, c, t], shifted)?)
                .map(|o| prefix_equal(&base.h, &o.h, t - m, m) && prefix_equal(&base.s, &o.s, t - m, m))
                .unwrap_or(false);
            suffix_free && shift_free
        }
    };

    let condition2 = match neuron.stepper(1, c) {
        None => false,
        Some(mut st) => {
            let long = random_input(&mut rng, c, 4 * t)?;
            let mut sizes = Vec::with_capacity(4 * t);
            let mut ok = true;
            for ti in 0..4 * t {
                match st.step(&long.time_slice(ti)?) {
                    Ok(_) => sizes.push(st.state_len()),
                    Err(_) => {
                        ok = false;
                        break;
                    }
                }
            }
            ok && sizes.windows(2).skip(t).all(|w| w[0] == w[1])
        }
    };

    let condition3 = match (neuron.parallel(&x), &reference) {
        (Some(Ok(par)), Ok(base)) => {
            par.h.max_abs_diff(&base.h).map(|d| d <= 1e-10).unwrap_or(false)
                && par.s.shape() == base.s.shape()
        }
        _ => false,
    };

    Ok(ConditionsRow {
        condition1,
        condition2,
        condition3,
    })
}

/// JSON-friendly verdict for one neuron and property.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub neuron: String,
    pub property: String,
    pub holds: bool,
    pub trials: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conditions: Option<ConditionsRow>,
}

impl PropertyReport {
    pub fn from_verdict(neuron: &str, property: &str, v: ControlVerdict) -> Self {
        Self {
            neuron: neuron.into(),
            property: property.into(),
            holds: v.holds,
            trials: v.trials,
            witness: v.witness,
            conditions: None,
        }
    }
}

/// Convenience constructor for the classical neurons used by the checkers.
pub fn classical(leak: Leak, reset: ResetMode, beta: f64) -> LifNeuron {
    let cfg = match leak {
        Leak::If => NeuronConfig::integrate_and_fire(reset),
        Leak::Lif => NeuronConfig::lif(beta, reset),
    };
    LifNeuron::new(cfg)
}
