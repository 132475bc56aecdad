//! Neuron models: classical LIF/IF, the dynamic-decay neuron and the PSN
//! family, plus the interface the property checkers use.

pub mod container;
pub mod dsn;
pub mod interface;
pub mod lif;
pub mod psn;

pub use dsn::{
    dsn_dynamic_decay, dsn_forward_parallel, dsn_forward_serial, dsn_forward_taped, dsn_step, ConvRing, DsnOutput,
    DsnParams, DsnState, DsnStep, DsnVars, Firing,
};
pub use interface::{step_fold, DsnNeuron, LifNeuron, NeuronTrace, PsnNeuron, SpikingNeuron, StepOut, Stepper};
pub use lif::{lif_sequence, lif_sequence_taped, lif_step, Leak, LifStep, LifTrace, NeuronConfig, NeuronState, ResetMode};
pub use psn::{psn_forward, psn_forward_taped, PsnKind, PsnOutput, PsnParams, PsnVars};
