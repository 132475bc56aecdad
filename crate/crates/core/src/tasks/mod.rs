//! Desk-scale experiments sharing one training loop.

pub mod approx;
pub mod datasets;
pub mod extrapolation;
pub mod layers;
pub mod optim;
pub mod pixel;
