//! Minimal feed-forward network engine with exact reverse-mode gradients,
//! stochastic regularization (Dropout, DropConnect) and an Adam optimizer.
//!
//! Everything runs on plain `f64` vectors and row-major matrices; checkpoint
//! files store weights as little-endian `f32`.

mod checkpoint;
mod network;
mod optim;
mod tensor;

pub use checkpoint::Checkpoint;
pub use network::{
    backward, forward, forward_eval, forward_with_draw, init_network, Activation, DropConnectDraw,
    Gradients, Network, NetworkSpec, OutputActivation, StochasticMode, StochasticSpec, Tape,
};
pub use optim::{sgd_adam_step, AdamState};
pub use tensor::Tensor2;
