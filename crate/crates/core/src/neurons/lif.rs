//! Integrate-and-fire neurons with and without leak.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::surrogate::heaviside;
use crate::numerics::{SurrogateKind, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResetMode {
    /// `V = H (1 - S) + V_reset S`
    Hard,
    /// `V = H - V_th S`
    Soft,
    /// `V = H`
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Leak {
    /// `H_t = V_{t-1} + x_t`
    If,
    /// `H_t = beta V_{t-1} + (1 - beta) x_t`
    Lif,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuronConfig {
    /// Decay factor `1 - 1 / tau_m`; ignored for [`Leak::If`].
    pub beta: f64,
    pub v_th: f64,
    pub v_reset: f64,
    pub reset: ResetMode,
    pub leak: Leak,
}

impl NeuronConfig {
    pub fn lif(beta: f64, reset: ResetMode) -> Self {
        Self {
            beta,
            v_th: 1.0,
            v_reset: 0.0,
            reset,
            leak: Leak::Lif,
        }
    }

    /// LIF from a membrane time constant, `beta = 1 - 1 / tau_m`.
    pub fn lif_tau(tau_m: f64, reset: ResetMode) -> Self {
        Self::lif(1.0 - 1.0 / tau_m, reset)
    }

    pub fn integrate_and_fire(reset: ResetMode) -> Self {
        Self {
            beta: 1.0,
            v_th: 1.0,
            v_reset: 0.0,
            reset,
            leak: Leak::If,
        }
    }

    pub fn with_threshold(mut self, v_th: f64) -> Self {
        self.v_th = v_th;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_th > 0.0) || !self.v_th.is_finite() {
            return Err(Error::InvalidParameter(format!("v_th must be > 0, got {}", self.v_th)));
        }
        if self.leak == Leak::Lif && !(0.0..1.0).contains(&self.beta) {
            return Err(Error::InvalidParameter(format!(
                "LIF beta must be in [0, 1), got {}",
                self.beta
            )));
        }
        if !self.v_reset.is_finite() {
            return Err(Error::InvalidParameter("v_reset must be finite".into()));
        }
        Ok(())
    }

    /// Pre-reset charge from the previous post-reset potential.
    #[inline]
    pub fn charge(&self, v_prev: f64, x: f64) -> f64 {
        match self.leak {
            Leak::If => v_prev + x,
            Leak::Lif => self.beta * v_prev + (1.0 - self.beta) * x,
        }
    }

    #[inline]
    pub fn reset_value(&self, h: f64, s: f64) -> f64 {
        match self.reset {
            ResetMode::Hard => h * (1.0 - s) + self.v_reset * s,
            ResetMode::Soft => h - self.v_th * s,
            ResetMode::None => h,
        }
    }
}

/// Post-reset membrane potential `V_t` of every lane plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuronState {
    pub v: Tensor,
    pub t: usize,
}

impl NeuronState {
    /// Resting state `V_0 = 0` for a `[B, C]` population.
    pub fn zeros(batch: usize, channels: usize) -> Self {
        Self {
            v: Tensor::zeros(&[batch, channels]),
            t: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LifStep {
    pub spike: Tensor,
    /// Pre-reset charge `H_t`.
    pub h: Tensor,
    pub state: NeuronState,
}

/// One update of every lane.
pub fn lif_step(cfg: &NeuronConfig, state: &NeuronState, x_t: &Tensor, _sg: SurrogateKind) -> Result<LifStep> {
    cfg.validate()?;
    state.v.expect_same_shape(x_t, "lif_step")?;
    let n = x_t.len();
    let mut h = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for (&vp, &x) in state.v.data().iter().zip(x_t.data()) {
        let ht = cfg.charge(vp, x);
        let st = heaviside(ht - cfg.v_th);
        h.push(ht);
        s.push(st);
        v.push(cfg.reset_value(ht, st));
    }
    let shape = x_t.shape();
    Ok(LifStep {
        spike: Tensor::new(shape, s)?,
        h: Tensor::new(shape, h)?.check_finite("lif_step")?,
        state: NeuronState {
            v: Tensor::new(shape, v)?,
            t: state.t + 1,
        },
    })
}

/// Traces of a full LIF run, each `[B, C, T]`.
#[derive(Clone, Debug)]
pub struct LifTrace {
    pub s: Tensor,
    pub h: Tensor,
    pub v: Tensor,
}

/// Folds [`lif_step`] over the time axis from `V_0 = 0`.
pub fn lif_sequence(cfg: &NeuronConfig, x: &Tensor, sg: SurrogateKind) -> Result<LifTrace> {
    let (b, c, t) = x.dims3()?;
    let mut state = NeuronState::zeros(b, c);
    let mut s = Vec::with_capacity(t);
    let mut h = Vec::with_capacity(t);
    let mut v = Vec::with_capacity(t);
    for ti in 0..t {
        let step = lif_step(cfg, &state, &x.time_slice(ti)?, sg)?;
        s.push(step.spike);
        h.push(step.h);
        v.push(step.state.v.clone());
        state = step.state;
    }
    if t == 0 {
        let empty = Tensor::zeros(&[b, c, 0]);
        return Ok(LifTrace {
            s: empty.clone(),
            h: empty.clone(),
            v: empty,
        });
    }
    Ok(LifTrace {
        s: Tensor::stack_time(&s)?,
        h: Tensor::stack_time(&h)?,
        v: Tensor::stack_time(&v)?,
    })
}

/// Differentiable LIF over a `[B, C, T]` input; returns `(S, H)` on the tape.
pub fn lif_sequence_taped(tape: &mut Tape, cfg: &NeuronConfig, x: Var, sg: SurrogateKind) -> Result<(Var, Var)> {
    cfg.validate()?;
    let (b, c, t) = tape.value(x).dims3()?;
    let mut v = tape.constant(Tensor::zeros(&[b, c]));
    let mut spikes = Vec::with_capacity(t);
    let mut charges = Vec::with_capacity(t);
    for ti in 0..t {
        let xt = tape.time_slice(x, ti)?;
        let h = match cfg.leak {
            Leak::If => tape.add(v, xt)?,
            Leak::Lif => {
                let kept = tape.mul_scalar(v, cfg.beta)?;
                let inp = tape.mul_scalar(xt, 1.0 - cfg.beta)?;
                tape.add(kept, inp)?
            }
        };
        let s = tape.spike(h, cfg.v_th, sg)?;
        v = match cfg.reset {
            ResetMode::Hard => {
                let keep = tape.one_minus(s)?;
                let held = tape.mul(h, keep)?;
                if cfg.v_reset == 0.0 {
                    held
                } else {
                    let rv = tape.mul_scalar(s, cfg.v_reset)?;
                    tape.add(held, rv)?
                }
            }
            ResetMode::Soft => {
                let sub = tape.mul_scalar(s, cfg.v_th)?;
                tape.sub(h, sub)?
            }
            ResetMode::None => h,
        };
        spikes.push(s);
        charges.push(h);
    }
    let s = tape.stack_time(&spikes)?;
    let h = tape.stack_time(&charges)?;
    Ok((s, h))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(values: &[f64]) -> Tensor {
        Tensor::new(&[1, 1, values.len()], values.to_vec()).unwrap()
    }

    #[test]
    fn hand_evaluated_first_step() {
        let cfg = NeuronConfig::lif(0.5, ResetMode::Hard);
        let x = Tensor::new(&[1, 2], vec![2.0, 0.6]).unwrap();
        let out = lif_step(&cfg, &NeuronState::zeros(1, 2), &x, SurrogateKind::default()).unwrap();
        assert_eq!(out.h.data(), &[1.0, 0.3]);
        assert_eq!(out.spike.data(), &[1.0, 0.0]);
        assert_eq!(out.state.v.data(), &[0.0, 0.3]);
    }

    #[test]
    fn soft_reset_if_persists_four_steps() {
        let cfg = NeuronConfig::integrate_and_fire(ResetMode::Soft);
        let trace = lif_sequence(&cfg, &seq(&[4.0, 0.0, 0.0, 0.0, 0.0, 0.0]), SurrogateKind::default()).unwrap();
        assert_eq!(trace.s.data(), &[1.0, 1.0, 1.0, 1.0, 0.0, 0.0]);

        let hard = NeuronConfig::integrate_and_fire(ResetMode::Hard);
        let trace = lif_sequence(&hard, &seq(&[4.0, 0.0, 0.0, 0.0]), SurrogateKind::default()).unwrap();
        assert_eq!(trace.s.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_input_stays_at_rest() {
        for reset in [ResetMode::Hard, ResetMode::Soft, ResetMode::None] {
            let trace = lif_sequence(&NeuronConfig::lif(0.7, reset), &seq(&[0.0; 16]), SurrogateKind::default()).unwrap();
            assert!(trace.s.data().iter().chain(trace.v.data()).all(|&v| v == 0.0));
        }
    }

    #[test]
    fn no_reset_if_accumulates_linearly() {
        let cfg = NeuronConfig::integrate_and_fire(ResetMode::None);
        let trace = lif_sequence(&cfg, &seq(&[0.5; 10]), SurrogateKind::default()).unwrap();
        for (t, &h) in trace.h.data().iter().enumerate() {
            assert_eq!(h, 0.5 * (t + 1) as f64);
        }
    }

    #[test]
    fn memoryless_when_beta_is_zero() {
        let x = [0.3, 2.0, -1.0, 0.9, 1.5];
        for reset in [ResetMode::Hard, ResetMode::Soft] {
            let trace = lif_sequence(&NeuronConfig::lif(0.0, reset), &seq(&x), SurrogateKind::default()).unwrap();
            assert_eq!(trace.h.data(), &x);
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let x = Tensor::zeros(&[1, 1]);
        let bad = NeuronConfig::lif(1.0, ResetMode::Hard);
        assert!(lif_step(&bad, &NeuronState::zeros(1, 1), &x, SurrogateKind::default()).is_err());
        let bad = NeuronConfig::lif(0.5, ResetMode::Hard).with_threshold(0.0);
        assert!(lif_step(&bad, &NeuronState::zeros(1, 1), &x, SurrogateKind::default()).is_err());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let cfg = NeuronConfig::lif(0.5, ResetMode::Hard);
        let x = Tensor::zeros(&[1, 3]);
        assert!(lif_step(&cfg, &NeuronState::zeros(1, 2), &x, SurrogateKind::default()).is_err());
    }

    #[test]
    fn taped_forward_matches_untracked() {
        let x = Tensor::new(&[2, 1, 6], vec![0.4, 1.3, 2.2, -0.5, 0.9, 1.9, 2.5, 0.1, 0.1, 3.0, 0.0, 0.7]).unwrap();
        for cfg in [
            NeuronConfig::lif(0.5, ResetMode::Hard),
            NeuronConfig::lif(0.25, ResetMode::Soft),
            NeuronConfig::integrate_and_fire(ResetMode::Hard),
        ] {
            let reference = lif_sequence(&cfg, &x, SurrogateKind::default()).unwrap();
            let mut tape = Tape::new();
            let xv = tape.constant(x.clone());
            let (s, h) = lif_sequence_taped(&mut tape, &cfg, xv, SurrogateKind::default()).unwrap();
            assert_eq!(tape.value(s), &reference.s);
            assert!(tape.value(h).max_abs_diff(&reference.h).unwrap() < 1e-15);
        }
    }
}
