//! Fitting reset-based LIF neurons with a bank of dynamic-decay channels.
//!
//! Every channel sees the same input. The decay comes from a two-layer causal
//! conv stack, `C -> eC -> C` with a ReLU in between, followed by
//! `sigmoid(.)^(1/tau)`. The bank is trained with MSE against the LIF
//! pre-reset membrane potential and scored by how often its spikes agree
//! with the LIF spikes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neurons::ResetMode;
use crate::numerics::{causal_conv_forward, clip_round_value, heaviside, sigmoid, Tape, Tensor, Var};
use crate::scan::{scan_parallel, ScanProblem};

use super::datasets::gather;
use super::optim::{train_loop, EpochLog, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LifChannel {
    pub reset: ResetMode,
    pub tau_m: f64,
}

impl LifChannel {
    pub fn beta(&self) -> f64 {
        1.0 - 1.0 / self.tau_m
    }

    pub fn label(&self) -> String {
        let reset = match self.reset {
            ResetMode::Hard => "hard",
            ResetMode::Soft => "soft",
            ResetMode::None => "none",
        };
        format!("{reset} reset, tau_m={:.4}", self.tau_m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxTarget {
    pub channels: Vec<LifChannel>,
    pub v_th: f64,
    /// Integer spikes `Clip[Round(H), 0, N]` instead of binary ones.
    pub n_max: Option<u32>,
}

const TAUS: [f64; 3] = [4.0 / 3.0, 2.0, 4.0];

impl ApproxTarget {
    /// Hard reset at three time constants, then soft reset at the same three.
    pub fn six_channels() -> Self {
        let channels = [ResetMode::Hard, ResetMode::Soft]
            .into_iter()
            .flat_map(|reset| TAUS.map(|tau_m| LifChannel { reset, tau_m }))
            .collect();
        Self {
            channels,
            v_th: 1.0,
            n_max: None,
        }
    }

    /// Soft-reset channels with integer spikes.
    pub fn integer_soft(n_max: u32) -> Self {
        Self {
            channels: TAUS
                .map(|tau_m| LifChannel {
                    reset: ResetMode::Soft,
                    tau_m,
                })
                .to_vec(),
            v_th: 1.0,
            n_max: Some(n_max),
        }
    }

    pub fn fire(&self, h: f64) -> f64 {
        match self.n_max {
            Some(n) => clip_round_value(h, n),
            None => heaviside(h - self.v_th),
        }
    }

    /// Pre-reset membrane and spikes of every channel for a `[n, 1, T]`
    /// input; both outputs are `[n, C, T]`.
    pub fn respond(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let (n, one, t) = x.dims3()?;
        if one != 1 {
            return Err(Error::InvalidParameter("inputs must have one channel".into()));
        }
        let c = self.channels.len();
        let mut h = vec![0.0; n * c * t];
        let mut s = vec![0.0; n * c * t];
        for i in 0..n {
            let xs = x.lane(i, 0);
            for (ci, ch) in self.channels.iter().enumerate() {
                let beta = ch.beta();
                let mut v = 0.0;
                let base = (i * c + ci) * t;
                for (ti, &xt) in xs.iter().enumerate() {
                    let ht = beta * v + (1.0 - beta) * xt;
                    let st = self.fire(ht);
                    v = match ch.reset {
                        ResetMode::Hard => ht * (1.0 - st.min(1.0)),
                        ResetMode::Soft => ht - self.v_th * st,
                        ResetMode::None => ht,
                    };
                    h[base + ti] = ht;
                    s[base + ti] = st;
                }
            }
        }
        Ok((Tensor::new(&[n, c, t], h)?, Tensor::new(&[n, c, t], s)?))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApproxModel {
    /// `[eC, C, k]`
    pub up_w: Tensor,
    /// `[eC]`
    pub up_b: Tensor,
    /// `[C, eC, k]`
    pub down_w: Tensor,
    /// `[C]`
    pub down_b: Tensor,
    pub tau: f64,
}

pub fn build_approx_model<R: Rng + ?Sized>(c: usize, k: usize, e: usize, tau: f64, rng: &mut R) -> ApproxModel {
    let mut uniform = |len: usize, fan_in: usize| {
        let bound = 1.0 / (fan_in as f64).sqrt();
        (0..len).map(|_| rng.gen_range(-bound..bound)).collect::<Vec<_>>()
    };
    let ec = e * c;
    let up_w = uniform(ec * c * k, c * k);
    let up_b = uniform(ec, c * k);
    let down_w = uniform(c * ec * k, ec * k);
    let down_b = uniform(c, ec * k);
    ApproxModel {
        up_w: Tensor::new(&[ec, c, k], up_w).expect("sized"),
        up_b: Tensor::new(&[ec], up_b).expect("sized"),
        down_w: Tensor::new(&[c, ec, k], down_w).expect("sized"),
        down_b: Tensor::new(&[c], down_b).expect("sized"),
        tau,
    }
}

impl ApproxModel {
    pub fn channels(&self) -> usize {
        self.down_b.len()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(Tensor::len).sum()
    }

    pub fn params(&self) -> Vec<Tensor> {
        vec![self.up_w.clone(), self.up_b.clone(), self.down_w.clone(), self.down_b.clone()]
    }

    pub fn set_params(&mut self, p: &[Tensor]) {
        self.up_w = p[0].clone();
        self.up_b = p[1].clone();
        self.down_w = p[2].clone();
        self.down_b = p[3].clone();
    }

    fn replicate(&self, x: &Tensor) -> Result<Tensor> {
        let (n, _, t) = x.dims3()?;
        let c = self.channels();
        let mut data = Vec::with_capacity(n * c * t);
        for i in 0..n {
            for _ in 0..c {
                data.extend_from_slice(x.lane(i, 0));
            }
        }
        Tensor::new(&[n, c, t], data)
    }

    /// Untracked `(alpha, H)` for a `[n, 1, T]` input.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let xr = self.replicate(x)?;
        let up = causal_conv_forward(&xr, &self.up_w, Some(&self.up_b), 1)?.map(|v| v.max(0.0));
        let down = causal_conv_forward(&up, &self.down_w, Some(&self.down_b), 1)?;
        let alpha = down.map(|z| sigmoid(z).powf(1.0 / self.tau));
        let h = scan_parallel(&ScanProblem::new(alpha.clone(), xr)?)?;
        Ok((alpha, h))
    }

    /// `H` on the tape; `vars` are the four parameters in [`Self::params`] order.
    pub fn forward_taped(&self, tape: &mut Tape, vars: &[Var], x: &Tensor) -> Result<Var> {
        let xr = tape.constant(self.replicate(x)?);
        let up = tape.causal_conv(xr, vars[0], Some(vars[1]), 1)?;
        let up = tape.relu(up)?;
        let down = tape.causal_conv(up, vars[2], Some(vars[3]), 1)?;
        let sig = tape.sigmoid(down)?;
        let alpha = tape.pow_scalar(sig, 1.0 / self.tau)?;
        tape.scan(alpha, xr)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxResult {
    pub channels: Vec<String>,
    /// Fraction of test timesteps whose predicted spike equals the target.
    pub per_channel_accuracy: Vec<f64>,
    pub average_accuracy: f64,
    pub test_mse: f64,
    pub param_count: usize,
    pub per_epoch: Vec<EpochLog>,
}

/// Per-channel spike agreement of the model on `x`.
pub fn spike_accuracy(model: &ApproxModel, target: &ApproxTarget, x: &Tensor) -> Result<(Vec<f64>, f64)> {
    let (_, h) = model.forward(x)?;
    let (h_t, s_t) = target.respond(x)?;
    let (n, c, t) = h.dims3()?;
    let mut hits = vec![0usize; c];
    let mut se = 0.0;
    for i in 0..n {
        for (ci, hit) in hits.iter_mut().enumerate() {
            let base = (i * c + ci) * t;
            for ti in 0..t {
                let p = h.data()[base + ti];
                if target.fire(p) == s_t.data()[base + ti] {
                    *hit += 1;
                }
                let d = p - h_t.data()[base + ti];
                se += d * d;
            }
        }
    }
    let acc = hits.iter().map(|&h| h as f64 / (n * t) as f64).collect();
    Ok((acc, se / (n * c * t) as f64))
}

pub const APPROX_KERNEL: usize = 8;
pub const APPROX_EXPANSION: usize = 8;
pub const APPROX_TAU: f64 = 0.5;

/// Trains a fresh model on `train` and scores it on `test`.
pub fn run_approx_experiment(train: &Tensor, test: &Tensor, target: &ApproxTarget, cfg: &TrainConfig) -> Result<ApproxResult> {
    let (n, _, _) = train.dims3()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = build_approx_model(target.channels.len(), APPROX_KERNEL, APPROX_EXPANSION, APPROX_TAU, &mut rng);
    let (h_train, _) = target.respond(train)?;
    let mut params = model.params();
    let shape = model.clone();
    let per_epoch = train_loop(
        &mut params,
        n,
        cfg,
        |tape, vars, idx| {
            let xb = gather(train, idx)?;
            let hb = gather(&h_train, idx)?;
            let h = shape.forward_taped(tape, vars, &xb)?;
            tape.mse(h, &hb)
        },
        |_, p| {
            let mut m = shape.clone();
            m.set_params(p);
            Ok(Some(spike_accuracy(&m, target, test)?.0.iter().sum::<f64>() / target.channels.len() as f64))
        },
    )?;
    model.set_params(&params);
    let (per_channel_accuracy, test_mse) = spike_accuracy(&model, target, test)?;
    let average_accuracy = per_channel_accuracy.iter().sum::<f64>() / per_channel_accuracy.len() as f64;
    Ok(ApproxResult {
        channels: target.channels.iter().map(LifChannel::label).collect(),
        per_channel_accuracy,
        average_accuracy,
        test_mse,
        param_count: model.param_count(),
        per_epoch,
    })
}

pub fn approx_csv(r: &ApproxResult) -> String {
    let mut s = String::from("channel,lif,accuracy_percent\n");
    for (i, (label, acc)) in r.channels.iter().zip(&r.per_channel_accuracy).enumerate() {
        s.push_str(&format!("{},{},{:.2}\n", i + 1, label, acc * 100.0));
    }
    s.push_str(&format!("average,,{:.2}\n", r.average_accuracy * 100.0));
    s
}
