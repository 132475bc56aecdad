//! Dense arrays, a reverse-mode tape, and the spike nonlinearities.

pub mod gradcheck;
pub mod surrogate;
pub mod tape;
pub mod tensor;

pub use gradcheck::grad_check;
pub use surrogate::{clip_round_value, heaviside, SurrogateKind};
pub use tape::{causal_conv_forward, Gradients, Tape, Var};
pub use tensor::{elementwise, matmul, sigmoid, ElementwiseOp, Operand, Tensor};

/// Untracked `Theta(h - v_th)`; `sg` only matters on a tape.
pub fn spike_threshold(h: &Tensor, v_th: f64, _sg: SurrogateKind) -> Tensor {
    h.map(|x| heaviside(x - v_th))
}

/// Untracked `Clip[Round(h), 0, n_max]`.
pub fn clip_round(h: &Tensor, n_max: u32) -> crate::Result<Tensor> {
    if n_max == 0 {
        return Err(crate::Error::InvalidParameter("n_max must be >= 1".into()));
    }
    Ok(h.map(|x| clip_round_value(x, n_max)))
}
