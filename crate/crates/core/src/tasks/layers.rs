//! Small building blocks shared by the classification and extrapolation
//! tasks: a per-timestep linear map and a trainable neuron layer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neurons::{
    dsn_forward_taped, lif_sequence_taped, psn_forward_taped, step_fold, DsnNeuron, DsnParams, DsnVars, LifNeuron,
    NeuronConfig, NeuronTrace, PsnKind, PsnNeuron, PsnParams, PsnVars, ResetMode, SpikingNeuron,
};
use crate::numerics::{causal_conv_forward, SurrogateKind, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeuronChoice {
    Lif,
    Psn,
    MaskedPsn,
    SlidingPsn,
    Dsn,
}

impl NeuronChoice {
    pub const ALL: [NeuronChoice; 5] = [Self::Lif, Self::Psn, Self::MaskedPsn, Self::SlidingPsn, Self::Dsn];

    pub fn label(self) -> &'static str {
        match self {
            Self::Lif => "lif",
            Self::Psn => "psn",
            Self::MaskedPsn => "masked-psn",
            Self::SlidingPsn => "sliding-psn",
            Self::Dsn => "dsn",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.label() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown neuron kind '{s}'")))
    }
}

/// Binary-spike layers train with the arc-tangent surrogate; its gradient
/// never vanishes, so layers that start far below threshold still learn.
pub const TASK_SURROGATE: SurrogateKind = SurrogateKind::ArcTangent { slope: 2.0 };

/// Window length used by the masked and sliding PSN layers and the DSN conv.
pub const LAYER_WINDOW: usize = 4;

/// Trainable spiking nonlinearity over `[B, C, T]`.
#[derive(Clone, Debug, PartialEq)]
pub enum NeuronLayer {
    Lif(NeuronConfig),
    Psn(PsnParams),
    Dsn(DsnParams),
}

impl NeuronLayer {
    pub fn init<R: Rng + ?Sized>(choice: NeuronChoice, channels: usize, t_train: usize, rng: &mut R) -> Result<Self> {
        Ok(match choice {
            NeuronChoice::Lif => Self::Lif(NeuronConfig::lif_tau(2.0, ResetMode::Hard)),
            NeuronChoice::Psn => Self::Psn(PsnParams::init(PsnKind::Full, t_train, rng)?),
            NeuronChoice::MaskedPsn => Self::Psn(PsnParams::init(PsnKind::Masked { k: LAYER_WINDOW }, t_train, rng)?),
            NeuronChoice::SlidingPsn => Self::Psn(PsnParams::init(PsnKind::Sliding { k: LAYER_WINDOW }, t_train, rng)?),
            NeuronChoice::Dsn => Self::Dsn(DsnParams::init(channels, LAYER_WINDOW, rng)),
        })
    }

    pub fn params(&self) -> Vec<Tensor> {
        match self {
            Self::Lif(_) => Vec::new(),
            Self::Psn(p) => vec![p.weight.clone()],
            Self::Dsn(p) => {
                let mut v = vec![p.conv_kernel.clone()];
                v.extend(p.conv_bias.clone());
                v
            }
        }
    }

    pub fn set_params(&mut self, p: &[Tensor]) {
        match self {
            Self::Lif(_) => {}
            Self::Psn(params) => params.weight = p[0].clone(),
            Self::Dsn(params) => {
                params.conv_kernel = p[0].clone();
                if params.conv_bias.is_some() {
                    params.conv_bias = Some(p[1].clone());
                }
            }
        }
    }

    /// `(S, H)` on the tape; `vars` are this layer's entries of [`Self::params`].
    pub fn forward_taped(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<(Var, Var)> {
        match self {
            Self::Lif(cfg) => lif_sequence_taped(tape, cfg, x, TASK_SURROGATE),
            Self::Psn(p) => psn_forward_taped(tape, p, &PsnVars { weight: vars[0] }, x, 1.0, TASK_SURROGATE),
            Self::Dsn(p) => {
                let (c, k) = (p.channels(), p.kernel_len());
                let kernel = tape.reshape(vars[0], &[c, 1, k])?;
                let dv = DsnVars {
                    kernel,
                    bias: p.conv_bias.as_ref().map(|_| vars[1]),
                    mix: None,
                };
                let (s, h, _) = dsn_forward_taped(tape, p, &dv, x)?;
                Ok((s, h))
            }
        }
    }

    pub fn neuron(&self) -> Box<dyn SpikingNeuron + '_> {
        match self {
            Self::Lif(cfg) => Box::new(LifNeuron::new(*cfg)),
            Self::Psn(p) => Box::new(PsnNeuron::new(p.clone())),
            Self::Dsn(p) => Box::new(DsnNeuron { params: p.clone() }),
        }
    }

    /// Step-by-step evaluation from rest. Neurons built for one length refuse
    /// any other; neurons without an online form use their definitional loop.
    pub fn serial(&self, x: &Tensor) -> Result<NeuronTrace> {
        let (b, c, t) = x.dims3()?;
        let neuron = self.neuron();
        if let Some(expected) = neuron.train_len().filter(|&e| e != t) {
            return Err(Error::LengthMismatch { expected, got: t });
        }
        let trace = match neuron.stepper(b, c) {
            Some(mut st) => step_fold(st.as_mut(), x),
            None => neuron.sequence(x),
        };
        trace
    }
}

/// `[Cout, Cin]` weight and `[Cout]` bias, fan-in uniform.
pub fn init_linear<R: Rng + ?Sized>(c_out: usize, c_in: usize, rng: &mut R) -> (Tensor, Tensor) {
    let bound = 1.0 / (c_in as f64).sqrt();
    let w = (0..c_out * c_in).map(|_| rng.gen_range(-bound..bound)).collect();
    let b = (0..c_out).map(|_| rng.gen_range(-bound..bound)).collect();
    (
        Tensor::new(&[c_out, c_in], w).expect("sized"),
        Tensor::new(&[c_out], b).expect("sized"),
    )
}

/// Untracked `out[b, :, t] = W x[b, :, t] + bias`.
pub fn channel_linear(x: &Tensor, w: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (o, i) = w.dims2()?;
    causal_conv_forward(x, &w.reshape(&[o, i, 1])?, Some(bias), 1)
}
