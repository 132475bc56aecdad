//! Dynamic-decay spiking neuron.
//!
//! The reset is replaced by an input-dependent decay:
//!
//! ```text
//! alpha'_t = conv(x_{t-k+1..t}) + bias      depthwise, causal
//! alpha_t  = sigmoid(W alpha'_t)^(1/tau)    W optional channel mix
//! H_t      = alpha_t H_{t-1} + (1 - alpha_t) x_t
//! S_t      = Clip[Round(H_t), 0, N]
//! ```
//!
//! Because `alpha_t` depends only on inputs, the membrane update is a linear
//! recurrence in `H` and can be evaluated with [`crate::scan`] during
//! training, while inference keeps `H` and the last `k - 1` inputs per lane.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::surrogate::{clip_round_value, heaviside};
use crate::numerics::tensor::matmul_into;
use crate::numerics::{causal_conv_forward, sigmoid, SurrogateKind, Tape, Tensor, Var};
use crate::scan::{scan_parallel, ScanProblem};

/// Output nonlinearity applied to `H_t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Firing {
    /// `Clip[Round(H), 0, n_max]`, straight-through gradient.
    Integer { n_max: u32 },
    /// `Theta(H - v_th)` with a surrogate gradient.
    Binary { v_th: f64, sg: SurrogateKind },
}

impl Firing {
    #[inline]
    pub fn fire(&self, h: f64) -> f64 {
        match *self {
            Firing::Integer { n_max } => clip_round_value(h, n_max),
            Firing::Binary { v_th, .. } => heaviside(h - v_th),
        }
    }

    pub fn max_count(&self) -> u32 {
        match *self {
            Firing::Integer { n_max } => n_max,
            Firing::Binary { .. } => 1,
        }
    }

    fn on_tape(&self, tape: &mut Tape, h: Var) -> Result<Var> {
        match *self {
            Firing::Integer { n_max } => tape.clip_round(h, n_max),
            Firing::Binary { v_th, sg } => tape.spike(h, v_th, sg),
        }
    }
}

pub const DEFAULT_KERNEL_LEN: usize = 4;
pub const DEFAULT_TAU: f64 = 0.25;
pub const DEFAULT_N_MAX: u32 = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct DsnParams {
    /// `[C, k]`; tap `j` weights the input `j` steps back.
    pub conv_kernel: Tensor,
    /// `[C]`
    pub conv_bias: Option<Tensor>,
    /// `[C, C]`, applied after conv and bias, before the sigmoid.
    pub channel_mix: Option<Tensor>,
    pub tau: f64,
    pub firing: Firing,
}

impl DsnParams {
    /// Fan-in uniform init in `+-1/sqrt(k)` for kernel and bias.
    pub fn init<R: Rng + ?Sized>(channels: usize, k: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (k as f64).sqrt();
        let kernel = (0..channels * k).map(|_| rng.gen_range(-bound..bound)).collect();
        let bias = (0..channels).map(|_| rng.gen_range(-bound..bound)).collect();
        Self {
            conv_kernel: Tensor::new(&[channels, k], kernel).expect("sized above"),
            conv_bias: Some(Tensor::new(&[channels], bias).expect("sized above")),
            channel_mix: None,
            tau: DEFAULT_TAU,
            firing: Firing::Integer { n_max: DEFAULT_N_MAX },
        }
    }

    /// Adds a `[C, C]` channel mix, initialised in `+-1/sqrt(C)`.
    pub fn with_channel_mix<R: Rng + ?Sized>(mut self, rng: &mut R) -> Self {
        let c = self.channels();
        let bound = 1.0 / (c as f64).sqrt();
        let mix = (0..c * c).map(|_| rng.gen_range(-bound..bound)).collect();
        self.channel_mix = Some(Tensor::new(&[c, c], mix).expect("sized above"));
        self
    }

    pub fn channels(&self) -> usize {
        self.conv_kernel.shape()[0]
    }

    pub fn kernel_len(&self) -> usize {
        self.conv_kernel.shape()[1]
    }

    pub fn validate(&self) -> Result<()> {
        let (c, k) = self.conv_kernel.dims2()?;
        if k == 0 {
            return Err(Error::InvalidParameter("kernel length must be >= 1".into()));
        }
        if !(self.tau > 0.0) {
            return Err(Error::InvalidParameter(format!("tau must be > 0, got {}", self.tau)));
        }
        match self.firing {
            Firing::Integer { n_max: 0 } => {
                return Err(Error::InvalidParameter("n_max must be >= 1".into()));
            }
            Firing::Binary { sg, .. } => sg.validate()?,
            _ => {}
        }
        if let Some(b) = &self.conv_bias {
            if b.shape() != [c] {
                return Err(Error::ShapeMismatch {
                    op: "DsnParams bias",
                    lhs: vec![c],
                    rhs: b.shape().to_vec(),
                });
            }
        }
        if let Some(w) = &self.channel_mix {
            if w.shape() != [c, c] {
                return Err(Error::ShapeMismatch {
                    op: "DsnParams channel_mix",
                    lhs: vec![c, c],
                    rhs: w.shape().to_vec(),
                });
            }
        }
        Ok(())
    }

    #[inline]
    fn decay(&self, z: f64) -> f64 {
        sigmoid(z).powf(1.0 / self.tau)
    }

    /// Mixes `[C]` pre-activations in place when a channel mix is present.
    fn mix_lanes(&self, pre: &mut [f64]) {
        if let Some(w) = &self.channel_mix {
            let c = self.channels();
            let mut mixed = vec![0.0; c];
            matmul_into(w.data(), pre, &mut mixed, c, c, 1);
            pre.copy_from_slice(&mixed);
        }
    }

    /// Number of scalars in the neuron's online state per lane.
    pub fn state_len_per_lane(&self) -> usize {
        1 + self.kernel_len() - 1
    }
}

/// Last `k - 1` inputs of every lane, oldest overwritten first.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvRing {
    lanes: usize,
    depth: usize,
    buf: Vec<f64>,
    head: usize,
}

impl ConvRing {
    pub fn zeros(lanes: usize, depth: usize) -> Self {
        Self {
            lanes,
            depth,
            buf: vec![0.0; lanes * depth],
            head: 0,
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Input `lag` steps before the current one, `1 <= lag <= depth`.
    #[inline]
    pub fn past(&self, lane: usize, lag: usize) -> f64 {
        let slot = (self.head + self.depth - lag) % self.depth;
        self.buf[lane * self.depth + slot]
    }

    pub fn push(&mut self, current: &[f64]) {
        if self.depth == 0 {
            return;
        }
        for (lane, &x) in current.iter().enumerate().take(self.lanes) {
            self.buf[lane * self.depth + self.head] = x;
        }
        self.head = (self.head + 1) % self.depth;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DsnState {
    /// `[B, C]` membrane potential `H_{t-1}`.
    pub h: Tensor,
    pub conv_state: ConvRing,
    pub t: usize,
}

impl DsnState {
    /// `H_0 = 0` and an all-zero input history.
    pub fn zeros(params: &DsnParams, batch: usize) -> Self {
        let c = params.channels();
        Self {
            h: Tensor::zeros(&[batch, c]),
            conv_state: ConvRing::zeros(batch * c, params.kernel_len() - 1),
            t: 0,
        }
    }
}

/// `alpha_t` from the last `k` inputs, given as a `[B, C, k]` window in time
/// order (the final entry is `x_t`).
pub fn dsn_dynamic_decay(params: &DsnParams, x_window: &Tensor) -> Result<Tensor> {
    params.validate()?;
    let (b, c, k) = x_window.dims3()?;
    if c != params.channels() || k != params.kernel_len() {
        return Err(Error::ShapeMismatch {
            op: "dsn_dynamic_decay",
            lhs: params.conv_kernel.shape().to_vec(),
            rhs: x_window.shape().to_vec(),
        });
    }
    let mut out = Vec::with_capacity(b * c);
    for bi in 0..b {
        let mut pre: Vec<f64> = (0..c)
            .map(|ci| {
                let w = &params.conv_kernel.data()[ci * k..(ci + 1) * k];
                let window = x_window.lane(bi, ci);
                let mut z = params.conv_bias.as_ref().map_or(0.0, |b| b.data()[ci]);
                for (lag, &wj) in w.iter().enumerate() {
                    z += wj * window[k - 1 - lag];
                }
                z
            })
            .collect();
        params.mix_lanes(&mut pre);
        out.extend(pre.into_iter().map(|z| params.decay(z)));
    }
    Tensor::new(&[b, c], out)?.check_finite("dsn_dynamic_decay")
}

#[derive(Clone, Debug)]
pub struct DsnStep {
    pub spike: Tensor,
    pub h: Tensor,
    pub alpha: Tensor,
    pub state: DsnState,
}

/// One serial update with O(C k) state.
pub fn dsn_step(params: &DsnParams, state: &DsnState, x_t: &Tensor) -> Result<DsnStep> {
    params.validate()?;
    state.h.expect_same_shape(x_t, "dsn_step")?;
    let (b, c) = x_t.dims2()?;
    let k = params.kernel_len();
    let xs = x_t.data();
    let mut alpha = Vec::with_capacity(b * c);
    for bi in 0..b {
        let mut pre: Vec<f64> = (0..c)
            .map(|ci| {
                let lane = bi * c + ci;
                let w = &params.conv_kernel.data()[ci * k..(ci + 1) * k];
                // Same accumulation order as the batched conv: bias, then taps by lag.
                let mut z = params.conv_bias.as_ref().map_or(0.0, |b| b.data()[ci]);
                z += w[0] * xs[lane];
                for (lag, &wj) in w.iter().enumerate().skip(1) {
                    z += wj * state.conv_state.past(lane, lag);
                }
                z
            })
            .collect();
        params.mix_lanes(&mut pre);
        alpha.extend(pre.into_iter().map(|z| params.decay(z)));
    }
    let h: Vec<f64> = alpha
        .iter()
        .zip(state.h.data())
        .zip(xs)
        .map(|((&a, &hp), &x)| a * hp + (1.0 - a) * x)
        .collect();
    let spike = h.iter().map(|&v| params.firing.fire(v)).collect();
    let mut conv_state = state.conv_state.clone();
    conv_state.push(xs);
    let h = Tensor::new(&[b, c], h)?.check_finite("dsn_step")?;
    Ok(DsnStep {
        spike: Tensor::new(&[b, c], spike)?,
        alpha: Tensor::new(&[b, c], alpha)?,
        state: DsnState {
            h: h.clone(),
            conv_state,
            t: state.t + 1,
        },
        h,
    })
}

#[derive(Clone, Debug)]
pub struct DsnOutput {
    pub s: Tensor,
    pub h: Tensor,
    pub alpha: Tensor,
}

/// Untracked pre-activation `W (conv(x) + bias)` for a whole sequence.
fn preactivation(params: &DsnParams, x: &Tensor) -> Result<Tensor> {
    let (b, c, t) = x.dims3()?;
    let kernel = params.conv_kernel.reshape(&[c, 1, params.kernel_len()])?;
    let pre = causal_conv_forward(x, &kernel, params.conv_bias.as_ref(), c)?;
    match &params.channel_mix {
        None => Ok(pre),
        Some(w) => {
            let mut out = vec![0.0; b * c * t];
            for bi in 0..b {
                matmul_into(
                    w.data(),
                    &pre.data()[bi * c * t..(bi + 1) * c * t],
                    &mut out[bi * c * t..(bi + 1) * c * t],
                    c,
                    c,
                    t,
                );
            }
            Tensor::new(&[b, c, t], out)
        }
    }
}

/// Training-mode forward: batched conv for every `alpha_t`, parallel scan for
/// `H`, then firing.
pub fn dsn_forward_parallel(params: &DsnParams, x: &Tensor) -> Result<DsnOutput> {
    params.validate()?;
    let (_, c, _) = x.dims3()?;
    if c != params.channels() {
        return Err(Error::ShapeMismatch {
            op: "dsn_forward_parallel",
            lhs: params.conv_kernel.shape().to_vec(),
            rhs: x.shape().to_vec(),
        });
    }
    let alpha = preactivation(params, x)?.map(|z| params.decay(z)).check_finite("dsn alpha")?;
    let h = scan_parallel(&ScanProblem::new(alpha.clone(), x.clone())?)?;
    let s = h.map(|v| params.firing.fire(v));
    Ok(DsnOutput { s, h, alpha })
}

/// Folds [`dsn_step`] over time from the zero state.
pub fn dsn_forward_serial(params: &DsnParams, x: &Tensor) -> Result<DsnOutput> {
    let (b, c, t) = x.dims3()?;
    let mut state = DsnState::zeros(params, b);
    let (mut s, mut h, mut a) = (Vec::with_capacity(t), Vec::with_capacity(t), Vec::with_capacity(t));
    for ti in 0..t {
        let step = dsn_step(params, &state, &x.time_slice(ti)?)?;
        s.push(step.spike);
        h.push(step.h);
        a.push(step.alpha);
        state = step.state;
    }
    if t == 0 {
        let empty = Tensor::zeros(&[b, c, 0]);
        return Ok(DsnOutput {
            s: empty.clone(),
            h: empty.clone(),
            alpha: empty,
        });
    }
    Ok(DsnOutput {
        s: Tensor::stack_time(&s)?,
        h: Tensor::stack_time(&h)?,
        alpha: Tensor::stack_time(&a)?,
    })
}

/// Tape handles for the learnable parts of a [`DsnParams`].
#[derive(Clone, Copy, Debug)]
pub struct DsnVars {
    /// `[C, 1, k]` view of the kernel.
    pub kernel: Var,
    pub bias: Option<Var>,
    pub mix: Option<Var>,
}

impl DsnVars {
    pub fn register(tape: &mut Tape, params: &DsnParams) -> Result<Self> {
        let kernel = tape.param(params.conv_kernel.reshape(&[params.channels(), 1, params.kernel_len()])?);
        let bias = params.conv_bias.as_ref().map(|b| tape.param(b.clone()));
        let mix = params.channel_mix.as_ref().map(|w| tape.param(w.clone()));
        Ok(Self { kernel, bias, mix })
    }
}

/// Differentiable forward; returns `(S, H, alpha)` on the tape.
pub fn dsn_forward_taped(tape: &mut Tape, params: &DsnParams, vars: &DsnVars, x: Var) -> Result<(Var, Var, Var)> {
    params.validate()?;
    let c = params.channels();
    let mut pre = tape.causal_conv(x, vars.kernel, vars.bias, c)?;
    if let Some(mix) = vars.mix {
        pre = tape.channel_linear(pre, mix, None)?;
    }
    let sig = tape.sigmoid(pre)?;
    let alpha = tape.pow_scalar(sig, 1.0 / params.tau)?;
    let h = tape.scan(alpha, x)?;
    let s = params.firing.on_tape(tape, h)?;
    Ok((s, h, alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_params(c: usize, k: usize, tau: f64) -> DsnParams {
        DsnParams {
            conv_kernel: Tensor::zeros(&[c, k]),
            conv_bias: Some(Tensor::zeros(&[c])),
            channel_mix: None,
            tau,
            firing: Firing::Integer { n_max: 4 },
        }
    }

    #[test]
    fn zero_kernel_gives_half_or_power() {
        let x = Tensor::new(&[1, 2, 4], vec![1.0, -3.0, 2.0, 0.5, 7.0, 0.0, 1.0, 1.0]).unwrap();
        let a = dsn_dynamic_decay(&zero_params(2, 4, 1.0), &x).unwrap();
        assert_eq!(a.data(), &[0.5, 0.5]);
        let a = dsn_dynamic_decay(&zero_params(2, 4, 0.25), &x).unwrap();
        assert_eq!(a.data(), &[0.0625, 0.0625]);
    }

    #[test]
    fn decay_stays_inside_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = DsnParams::init(3, 4, &mut rng);
        let x = Tensor::new(&[2, 3, 4], (0..24).map(|i| (i as f64 - 12.0) * 0.7).collect()).unwrap();
        let a = dsn_dynamic_decay(&p, &x).unwrap();
        assert!(a.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn degenerate_decay_passes_input_through() {
        // A huge negative bias drives alpha to zero.
        let mut p = zero_params(1, 4, 0.25);
        p.conv_bias = Some(Tensor::new(&[1], vec![-800.0]).unwrap());
        let x = Tensor::new(&[1, 1, 5], vec![0.4, 2.6, -1.0, 9.0, 3.5]).unwrap();
        let out = dsn_forward_serial(&p, &x).unwrap();
        assert_eq!(out.h.data(), x.data());
        assert_eq!(out.s.data(), &[0.0, 3.0, 0.0, 4.0, 4.0]);
    }

    #[test]
    fn single_step_equals_parallel() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = DsnParams::init(4, 4, &mut rng);
        let x = Tensor::new(&[2, 4, 1], vec![0.3, 1.7, -0.2, 2.2, 0.0, 5.0, 1.1, -3.0]).unwrap();
        let par = dsn_forward_parallel(&p, &x).unwrap();
        let ser = dsn_step(&p, &DsnState::zeros(&p, 2), &x.time_slice(0).unwrap()).unwrap();
        assert_eq!(par.alpha.data(), ser.alpha.data());
        assert_eq!(par.h.data(), ser.h.data());
        assert_eq!(par.s.data(), ser.spike.data());
    }

    #[test]
    fn ring_buffer_replays_history() {
        let mut ring = ConvRing::zeros(1, 3);
        for x in [1.0, 2.0, 3.0, 4.0] {
            ring.push(&[x]);
        }
        assert_eq!(ring.past(0, 1), 4.0);
        assert_eq!(ring.past(0, 2), 3.0);
        assert_eq!(ring.past(0, 3), 2.0);
    }

    #[test]
    fn taped_forward_matches_untracked_with_mix() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = DsnParams::init(3, 4, &mut rng).with_channel_mix(&mut rng);
        let x = Tensor::new(&[2, 3, 9], (0..54).map(|i| ((i * 37 % 11) as f64) * 0.4 - 1.0).collect()).unwrap();
        let reference = dsn_forward_parallel(&p, &x).unwrap();
        let serial = dsn_forward_serial(&p, &x).unwrap();
        assert!(serial.h.max_abs_diff(&reference.h).unwrap() < 1e-12);
        let mut tape = Tape::new();
        let vars = DsnVars::register(&mut tape, &p).unwrap();
        let xv = tape.constant(x);
        let (s, h, a) = dsn_forward_taped(&mut tape, &p, &vars, xv).unwrap();
        assert_eq!(tape.value(h), &reference.h);
        assert_eq!(tape.value(a), &reference.alpha);
        assert_eq!(tape.value(s), &reference.s);
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = zero_params(2, 4, 0.0);
        assert!(p.validate().is_err());
        p.tau = 0.25;
        p.firing = Firing::Integer { n_max: 0 };
        assert!(p.validate().is_err());
    }
}
