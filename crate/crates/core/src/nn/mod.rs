//! Minimal neural-network toolkit: dense kernels, a reverse-mode tape,
//! MLPs, Adam and straight-through Gumbel-Softmax.

pub mod adam;
pub mod gumbel;
pub mod mlp;
pub mod tape;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gumbel::{gumbel_softmax, GumbelSample};
pub use mlp::{Activation, Gradients, MlpNodes, MlpParams};
pub use tape::{NodeId, Tape};
pub use tensor::Mat;
