//! Next-value prediction trained at one length and run serially at others.
//!
//! The model is `linear(1 -> C) -> neuron -> linear(C -> 1)` over spikes. The
//! signals are sums of two sinusoids with random frequency and phase plus a
//! little noise, so their statistics do not depend on position.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

use super::datasets::gather;
use super::layers::{channel_linear, init_linear, NeuronChoice, NeuronLayer};
use super::optim::{train_loop, EpochLog, TrainConfig};

/// `n` signals of length `t + 1`, returned as `(inputs, next values)`, each `[n, 1, t]`.
pub fn gen_stationary(n: usize, t: usize, seed: u64) -> Result<(Tensor, Tensor)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.05).expect("valid");
    let mut x = Vec::with_capacity(n * t);
    let mut y = Vec::with_capacity(n * t);
    for _ in 0..n {
        let comps: Vec<(f64, f64, f64)> = (0..2)
            .map(|_| {
                (
                    rng.gen_range(0.5..1.0),
                    rng.gen_range(0.05..0.3),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect();
        let seq: Vec<f64> = (0..=t)
            .map(|i| {
                let base: f64 = comps.iter().map(|&(a, w, p)| a * (w * i as f64 + p).sin()).sum();
                base + noise.sample(&mut rng)
            })
            .collect();
        x.extend_from_slice(&seq[..t]);
        y.extend_from_slice(&seq[1..]);
    }
    Ok((Tensor::new(&[n, 1, t], x)?, Tensor::new(&[n, 1, t], y)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationConfig {
    pub train_t: usize,
    pub eval_ts: Vec<usize>,
    pub n_train: usize,
    pub n_eval: usize,
    pub hidden: usize,
    pub train: TrainConfig,
}

impl Default for ExtrapolationConfig {
    fn default() -> Self {
        Self {
            train_t: 256,
            eval_ts: vec![256, 512, 1024, 2048, 4096],
            n_train: 256,
            n_eval: 16,
            hidden: 16,
            train: TrainConfig {
                epochs: 20,
                batch_size: 16,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Autoregressor {
    /// `[w_in, b_in, w_out, b_out]`
    pub linear: Vec<Tensor>,
    pub neuron: NeuronLayer,
}

impl Autoregressor {
    pub fn init<R: Rng + ?Sized>(choice: NeuronChoice, hidden: usize, train_t: usize, rng: &mut R) -> Result<Self> {
        let (w_in, b_in) = init_linear(hidden, 1, rng);
        let (w_out, b_out) = init_linear(1, hidden, rng);
        Ok(Self {
            linear: vec![w_in, b_in, w_out, b_out],
            neuron: NeuronLayer::init(choice, hidden, train_t, rng)?,
        })
    }

    pub fn params(&self) -> Vec<Tensor> {
        let mut p = self.linear.clone();
        p.extend(self.neuron.params());
        p
    }

    pub fn set_params(&mut self, p: &[Tensor]) {
        self.linear = p[..4].to_vec();
        self.neuron.set_params(&p[4..]);
    }

    /// Parallel-through-time prediction on the tape.
    pub fn predict_taped(&self, tape: &mut Tape, vars: &[Var], x: &Tensor) -> Result<Var> {
        let x = tape.constant(x.clone());
        let z = tape.channel_linear(x, vars[0], Some(vars[1]))?;
        let (s, _) = self.neuron.forward_taped(tape, &vars[4..], z)?;
        tape.channel_linear(s, vars[2], Some(vars[3]))
    }

    pub fn loss_parallel(&self, x: &Tensor, y: &Tensor) -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.params().into_iter().map(|p| tape.constant(p)).collect();
        let pred = self.predict_taped(&mut tape, &vars, x)?;
        let loss = tape.mse(pred, y)?;
        Ok(tape.value(loss).data()[0])
    }

    /// One timestep at a time with the neuron's online state.
    pub fn predict_serial(&self, x: &Tensor) -> Result<Tensor> {
        let z = channel_linear(x, &self.linear[0], &self.linear[1])?;
        let trace = self.neuron.serial(&z)?;
        channel_linear(&trace.s, &self.linear[2], &self.linear[3])
    }

    pub fn loss_serial(&self, x: &Tensor, y: &Tensor) -> Result<f64> {
        let pred = self.predict_serial(x)?;
        let d = pred.zip_map(y, "loss_serial", |p, t| (p - t) * (p - t))?;
        Ok(d.mean())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalOutcome {
    Loss(f64),
    /// The neuron is tied to its training length.
    LengthMismatch { expected: usize, got: usize },
    Failed(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub t: usize,
    pub outcome: EvalOutcome,
}

impl EvalPoint {
    pub fn loss(&self) -> Option<f64> {
        match self.outcome {
            EvalOutcome::Loss(l) => Some(l),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationResult {
    pub neuron: NeuronChoice,
    pub train_t: usize,
    /// Training-set loss in parallel mode.
    pub train_loss_parallel: f64,
    /// The same loss computed step by step; `None` if serial evaluation is unavailable.
    pub train_loss_serial: Option<f64>,
    pub evals: Vec<EvalPoint>,
    pub per_epoch: Vec<EpochLog>,
}

pub fn train_autoregressor(choice: NeuronChoice, cfg: &ExtrapolationConfig) -> Result<(Autoregressor, Vec<EpochLog>)> {
    let (x, y) = gen_stationary(cfg.n_train, cfg.train_t, cfg.train.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed ^ 0x4558_5452);
    let mut model = Autoregressor::init(choice, cfg.hidden, cfg.train_t, &mut rng)?;
    let mut params = model.params();
    let shape = model.clone();
    let logs = train_loop(
        &mut params,
        cfg.n_train,
        &cfg.train,
        |tape, vars, idx| {
            let pred = shape.predict_taped(tape, vars, &gather(&x, idx)?)?;
            tape.mse(pred, &gather(&y, idx)?)
        },
        |_, _| Ok(None),
    )?;
    model.set_params(&params);
    Ok((model, logs))
}

pub fn extrapolation_csv(r: &ExtrapolationResult) -> String {
    let mut s = String::from("t,loss,error\n");
    for e in &r.evals {
        match &e.outcome {
            EvalOutcome::Loss(l) => s.push_str(&format!("{},{l},\n", e.t)),
            EvalOutcome::LengthMismatch { expected, got } => {
                s.push_str(&format!("{},,length mismatch (trained {expected} got {got})\n", e.t))
            }
            EvalOutcome::Failed(msg) => s.push_str(&format!("{},,\"{}\"\n", e.t, msg.replace('"', "'"))),
        }
    }
    s
}

/// Serial loss on fresh signals of length `t`.
pub fn evaluate_at(model: &Autoregressor, t: usize, n: usize, seed: u64) -> Result<f64> {
    let (x, y) = gen_stationary(n, t, seed.wrapping_add(t as u64).wrapping_mul(0x9E37_79B9))?;
    model.loss_serial(&x, &y)
}

pub fn run_extrapolation(choice: NeuronChoice, cfg: &ExtrapolationConfig) -> Result<ExtrapolationResult> {
    let (model, per_epoch) = train_autoregressor(choice, cfg)?;
    let (x, y) = gen_stationary(cfg.n_train, cfg.train_t, cfg.train.seed)?;
    let train_loss_parallel = model.loss_parallel(&x, &y)?;
    let train_loss_serial = model.loss_serial(&x, &y).ok();
    let evals = cfg
        .eval_ts
        .iter()
        .map(|&t| EvalPoint {
            t,
            outcome: match evaluate_at(&model, t, cfg.n_eval, cfg.train.seed) {
                Ok(loss) => EvalOutcome::Loss(loss),
                Err(Error::LengthMismatch { expected, got }) => EvalOutcome::LengthMismatch { expected, got },
                Err(e) => EvalOutcome::Failed(e.to_string()),
            },
        })
        .collect();
    Ok(ExtrapolationResult {
        neuron: choice,
        train_t: cfg.train_t,
        train_loss_parallel,
        train_loss_serial,
        evals,
        per_epoch,
    })
}
