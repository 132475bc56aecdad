//! Adam with decoupled weight decay, a cosine schedule, and the shared
//! mini-batch loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub peak_lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 128,
            peak_lr: 1e-2,
            weight_decay: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be >= 1".into()));
        }
        if !(self.peak_lr >= 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidParameter("learning rate or moment coefficients out of range".into()));
        }
        Ok(())
    }
}

/// `peak * (1 + cos(pi * step / total)) / 2`.
pub fn cosine_lr(peak: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return peak;
    }
    let frac = step.min(total) as f64 / total as f64;
    0.5 * peak * (1.0 + (std::f64::consts::PI * frac).cos())
}

#[derive(Clone, Debug)]
pub struct AdamW {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl AdamW {
    pub fn new(params: &[Tensor]) -> Self {
        Self {
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor], lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, (w, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
                v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
                let mh = m[j] / bc1;
                let vh = v[j] / bc2;
                *w -= lr * (mh / (vh.sqrt() + cfg.eps) + cfg.weight_decay * *w);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean training loss over the epoch's batches.
    pub loss: f64,
    pub lr: f64,
    /// Optional task metric evaluated after the epoch.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric: Option<f64>,
}

/// Runs `cfg.epochs` shuffled passes over `n` samples.
///
/// `batch_loss` builds the loss for the given sample indices on a fresh tape
/// whose first `params.len()` variables are the parameters. `after_epoch` may
/// return a metric to log.
pub fn train_loop<F, E>(
    params: &mut [Tensor],
    n: usize,
    cfg: &TrainConfig,
    mut batch_loss: F,
    mut after_epoch: E,
) -> Result<Vec<EpochLog>>
where
    F: FnMut(&mut Tape, &[Var], &[usize]) -> Result<Var>,
    E: FnMut(usize, &[Tensor]) -> Result<Option<f64>>,
{
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7261_696E);
    let mut opt = AdamW::new(params);
    let batches = n.div_ceil(cfg.batch_size);
    let total = cfg.epochs * batches;
    let mut order: Vec<usize> = (0..n).collect();
    let mut logs = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut lr = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut tape = Tape::new();
            let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
            let loss = batch_loss(&mut tape, &vars, chunk)?;
            let value = tape.value(loss).data()[0];
            if !value.is_finite() {
                return Err(Error::Diverged { epoch, loss: value });
            }
            let grads = tape.backward(loss)?;
            let g: Vec<Tensor> = vars
                .iter()
                .zip(params.iter())
                .map(|(&v, p)| grads.get_or_zeros(v, p.shape()))
                .collect();
            lr = cosine_lr(cfg.peak_lr, step, total);
            opt.step(params, &g, lr, cfg);
            step += 1;
            sum += value;
        }
        let metric = after_epoch(epoch, params)?;
        logs.push(EpochLog {
            epoch,
            loss: sum / batches.max(1) as f64,
            lr,
            metric,
        });
    }
    Ok(logs)
}
