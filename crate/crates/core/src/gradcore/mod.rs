//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Tape`] records operations against a borrowed [`ParamStore`]; calling
//! [`Tape::backward`] on a scalar node yields a [`GradientMap`] aligned with
//! the store. Layers cover what the shape networks need: dense, 3D
//! convolution, 3D transposed convolution, ELU, sigmoid and inverted dropout.

mod check;
mod conv;
mod layers;
mod params;
mod tape;
mod tensor;

pub use check::{grad_check, GradCheckReport};
pub use layers::{forward, glorot_init, init_layers, LayerKind, LayerSpec};
pub use params::{AdamConfig, GradientMap, ParamGroup, ParamId, ParamStore};
pub use tape::{Mode, Tape, Var};
pub use tensor::Tensor;
