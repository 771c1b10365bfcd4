//! A deliberately small neural engine: dense `f64` tensors, a fixed chain of
//! layers, and reverse-mode gradients computed layer by layer.
//!
//! There is no general autodiff graph. A [`Network`] is an ordered list of
//! [`Layer`]s; [`Network::forward_trace`] records the activations each layer
//! needs and [`Network::backprop`] walks the chain backwards. That is enough
//! for plain convnets, which is all this workspace trains.

mod error;
mod layer;
mod loss;
mod network;
mod optim;
mod tensor;

pub mod checkpoint;
pub mod gradcheck;

pub use error::{NnError, Result};
pub use layer::{Conv2d, Layer};
pub use loss::bce_loss;
pub use network::{Backprop, Network, Param, Trace};
pub use optim::{adam_step, Adam, AdamConfig, AdamMoments};
pub use tensor::Tensor;
