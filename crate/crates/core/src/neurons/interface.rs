//! One interface over every neuron so property checkers can treat them alike.
//!
//! A neuron offers a reference `sequence` evaluation (the definitional loop),
//! optionally a `parallel` evaluation through time, and optionally an online
//! `stepper` whose state does not grow with `t`.

use crate::error::{Error, Result};
use crate::numerics::{SurrogateKind, Tensor};
use crate::scan::{affine_scan, scan_parallel, ScanProblem};

use super::dsn::{dsn_forward_parallel, dsn_forward_serial, dsn_step, DsnParams, DsnState};
use super::lif::{lif_sequence, lif_step, Leak, NeuronConfig, NeuronState, ResetMode};
use super::psn::{psn_forward, PsnKind, PsnParams};

/// Spikes and pre-reset membrane potential, both `[B, C, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuronTrace {
    pub s: Tensor,
    pub h: Tensor,
}

/// Spikes and membrane potential for one step, both `[B, C]`.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOut {
    pub s: Tensor,
    pub h: Tensor,
}

pub trait Stepper {
    fn step(&mut self, x_t: &Tensor) -> Result<StepOut>;
    /// Scalars held between steps.
    fn state_len(&self) -> usize;
}

pub trait SpikingNeuron: Send + Sync {
    fn name(&self) -> String;
    /// Definitional evaluation over a `[B, C, T]` input.
    fn sequence(&self, x: &Tensor) -> Result<NeuronTrace>;
    /// Parallel-through-time evaluation, if one exists.
    fn parallel(&self, _x: &Tensor) -> Option<Result<NeuronTrace>> {
        None
    }
    /// Online evaluator starting from rest, if the neuron supports one.
    fn stepper(&self, _batch: usize, _channels: usize) -> Option<Box<dyn Stepper + '_>> {
        None
    }
    /// Largest spike value the neuron can emit.
    fn max_spike(&self) -> f64 {
        1.0
    }
    /// Channel count baked into the parameters, if any.
    fn fixed_channels(&self) -> Option<usize> {
        None
    }
    /// Sequence length the parameters were built for, if any.
    fn train_len(&self) -> Option<usize> {
        None
    }
}

/// Runs a stepper over every timestep of `x` and stacks the results.
pub fn step_fold(stepper: &mut dyn Stepper, x: &Tensor) -> Result<NeuronTrace> {
    let (b, c, t) = x.dims3()?;
    if t == 0 {
        let empty = Tensor::zeros(&[b, c, 0]);
        return Ok(NeuronTrace { s: empty.clone(), h: empty });
    }
    let mut s = Vec::with_capacity(t);
    let mut h = Vec::with_capacity(t);
    for ti in 0..t {
        let out = stepper.step(&x.time_slice(ti)?)?;
        s.push(out.s);
        h.push(out.h);
    }
    Ok(NeuronTrace {
        s: Tensor::stack_time(&s)?,
        h: Tensor::stack_time(&h)?,
    })
}

#[derive(Clone, Debug)]
pub struct LifNeuron {
    pub cfg: NeuronConfig,
    pub sg: SurrogateKind,
}

impl LifNeuron {
    pub fn new(cfg: NeuronConfig) -> Self {
        Self {
            cfg,
            sg: SurrogateKind::default(),
        }
    }
}

struct LifStepper<'a> {
    neuron: &'a LifNeuron,
    state: NeuronState,
}

impl Stepper for LifStepper<'_> {
    fn step(&mut self, x_t: &Tensor) -> Result<StepOut> {
        let out = lif_step(&self.neuron.cfg, &self.state, x_t, self.neuron.sg)?;
        self.state = out.state;
        Ok(StepOut { s: out.spike, h: out.h })
    }

    fn state_len(&self) -> usize {
        self.state.v.len()
    }
}

impl SpikingNeuron for LifNeuron {
    fn name(&self) -> String {
        let leak = match self.cfg.leak {
            Leak::If => "if",
            Leak::Lif => "lif",
        };
        let reset = match self.cfg.reset {
            ResetMode::Hard => "hard",
            ResetMode::Soft => "soft",
            ResetMode::None => "none",
        };
        format!("{leak}-{reset}")
    }

    fn sequence(&self, x: &Tensor) -> Result<NeuronTrace> {
        let tr = lif_sequence(&self.cfg, x, self.sg)?;
        Ok(NeuronTrace { s: tr.s, h: tr.h })
    }

    /// Without a reset the charge equation is a linear recurrence and the
    /// scan applies; with a reset the spike feeds back and it does not.
    fn parallel(&self, x: &Tensor) -> Option<Result<NeuronTrace>> {
        if self.cfg.reset != ResetMode::None {
            return None;
        }
        let run = || -> Result<NeuronTrace> {
            self.cfg.validate()?;
            let (b, c, t) = x.dims3()?;
            let h = match self.cfg.leak {
                Leak::Lif => {
                    let alpha = Tensor::full(&[b, c, t], self.cfg.beta);
                    scan_parallel(&ScanProblem::new(alpha, x.clone())?)?
                }
                Leak::If => {
                    let ones = vec![1.0; b * c * t];
                    let h0 = vec![0.0; b * c];
                    Tensor::new(&[b, c, t], affine_scan(&ones, x.data(), &h0, b * c, t))?
                }
            };
            let v_th = self.cfg.v_th;
            let s = h.map(|v| crate::numerics::heaviside(v - v_th));
            Ok(NeuronTrace { s, h })
        };
        Some(run())
    }

    fn stepper(&self, batch: usize, channels: usize) -> Option<Box<dyn Stepper + '_>> {
        Some(Box::new(LifStepper {
            neuron: self,
            state: NeuronState::zeros(batch, channels),
        }))
    }
}

#[derive(Clone, Debug)]
pub struct DsnNeuron {
    pub params: DsnParams,
}

struct DsnStepper<'a> {
    params: &'a DsnParams,
    state: DsnState,
}

impl Stepper for DsnStepper<'_> {
    fn step(&mut self, x_t: &Tensor) -> Result<StepOut> {
        let out = dsn_step(self.params, &self.state, x_t)?;
        self.state = out.state;
        Ok(StepOut { s: out.spike, h: out.h })
    }

    fn state_len(&self) -> usize {
        self.state.h.len() + self.state.conv_state.depth() * self.state.h.len()
    }
}

impl SpikingNeuron for DsnNeuron {
    fn name(&self) -> String {
        "dsn".into()
    }

    fn sequence(&self, x: &Tensor) -> Result<NeuronTrace> {
        let out = dsn_forward_serial(&self.params, x)?;
        Ok(NeuronTrace { s: out.s, h: out.h })
    }

    fn parallel(&self, x: &Tensor) -> Option<Result<NeuronTrace>> {
        Some(dsn_forward_parallel(&self.params, x).map(|o| NeuronTrace { s: o.s, h: o.h }))
    }

    fn stepper(&self, batch: usize, _channels: usize) -> Option<Box<dyn Stepper + '_>> {
        Some(Box::new(DsnStepper {
            params: &self.params,
            state: DsnState::zeros(&self.params, batch),
        }))
    }

    fn max_spike(&self) -> f64 {
        f64::from(self.params.firing.max_count())
    }

    fn fixed_channels(&self) -> Option<usize> {
        Some(self.params.channels())
    }
}

#[derive(Clone, Debug)]
pub struct PsnNeuron {
    pub params: PsnParams,
    pub v_th: f64,
    pub sg: SurrogateKind,
}

impl PsnNeuron {
    pub fn new(params: PsnParams) -> Self {
        Self {
            params,
            v_th: 1.0,
            sg: SurrogateKind::default(),
        }
    }
}

/// Online evaluation of the causal PSN variants from a window of recent
/// inputs. The masked variant needs the absolute position to pick its matrix
/// row, so it cannot run past `t_train`.
struct PsnStepper<'a> {
    neuron: &'a PsnNeuron,
    /// Per lane, most recent input last; at most `k` entries.
    window: Vec<Vec<f64>>,
    k: usize,
    t: usize,
    shape: [usize; 2],
}

impl Stepper for PsnStepper<'_> {
    fn step(&mut self, x_t: &Tensor) -> Result<StepOut> {
        if x_t.shape() != self.shape {
            return Err(Error::ShapeMismatch {
                op: "psn step",
                lhs: self.shape.to_vec(),
                rhs: x_t.shape().to_vec(),
            });
        }
        let p = &self.neuron.params;
        let row = match p.kind {
            PsnKind::Masked { .. } => {
                let t_train = p.t_train.expect("matrix variant");
                if self.t >= t_train {
                    return Err(Error::LengthMismatch {
                        expected: t_train,
                        got: self.t + 1,
                    });
                }
                Some(&p.weight.data()[self.t * t_train..(self.t + 1) * t_train])
            }
            _ => None,
        };
        let mut h = Vec::with_capacity(x_t.len());
        for (lane, &x) in x_t.data().iter().enumerate() {
            let win = &mut self.window[lane];
            if win.len() == self.k {
                win.remove(0);
            }
            win.push(x);
            let n = win.len();
            let mut acc = 0.0;
            for lag in 0..n {
                let w = match row {
                    Some(r) => r[self.t - lag],
                    None => p.weight.data()[lag],
                };
                acc += w * win[n - 1 - lag];
            }
            h.push(acc);
        }
        self.t += 1;
        let h = Tensor::new(&self.shape, h)?.check_finite("psn step")?;
        let v_th = self.neuron.v_th;
        Ok(StepOut {
            s: h.map(|v| crate::numerics::heaviside(v - v_th)),
            h,
        })
    }

    fn state_len(&self) -> usize {
        self.window.iter().map(Vec::len).sum::<usize>() + usize::from(matches!(self.neuron.params.kind, PsnKind::Masked { .. }))
    }
}

impl SpikingNeuron for PsnNeuron {
    fn name(&self) -> String {
        self.params.kind.label().into()
    }

    /// Direct double loop over the effective weights.
    fn sequence(&self, x: &Tensor) -> Result<NeuronTrace> {
        let (b, c, t) = x.dims3()?;
        let weight_at = |i: usize, j: usize| -> Option<f64> {
            match self.params.kind {
                PsnKind::Sliding { k } => (j <= i && i - j < k).then(|| self.params.weight.data()[i - j]),
                PsnKind::Masked { k } => (j <= i && i - j < k).then(|| self.params.weight.data()[i * t + j]),
                PsnKind::Full => Some(self.params.weight.data()[i * t + j]),
            }
        };
        if let Some(expected) = self.params.t_train {
            if expected != t {
                return Err(Error::LengthMismatch { expected, got: t });
            }
        }
        let mut h = vec![0.0; b * c * t];
        for lane in 0..b * c {
            let xs = &x.data()[lane * t..(lane + 1) * t];
            for i in 0..t {
                let mut acc = 0.0;
                // Newest input first, matching the stepper's accumulation order.
                for j in (0..t).rev() {
                    if let Some(w) = weight_at(i, j) {
                        acc += w * xs[j];
                    }
                }
                h[lane * t + i] = acc;
            }
        }
        let h = Tensor::new(&[b, c, t], h)?;
        let s = h.map(|v| crate::numerics::heaviside(v - self.v_th));
        Ok(NeuronTrace { s, h })
    }

    fn parallel(&self, x: &Tensor) -> Option<Result<NeuronTrace>> {
        Some(psn_forward(&self.params, x, self.v_th, self.sg).map(|o| NeuronTrace { s: o.s, h: o.h }))
    }

    fn train_len(&self) -> Option<usize> {
        self.params.t_train
    }

    fn stepper(&self, batch: usize, channels: usize) -> Option<Box<dyn Stepper + '_>> {
        let k = match self.params.kind {
            PsnKind::Full => return None,
            PsnKind::Masked { k } | PsnKind::Sliding { k } => k,
        };
        Some(Box::new(PsnStepper {
            neuron: self,
            window: vec![Vec::with_capacity(k); batch * channels],
            k,
            t: 0,
            shape: [batch, channels],
        }))
    }
}
