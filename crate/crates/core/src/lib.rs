//! Multi-agent actor-critic training with explicit communication, where
//! messages sampled from replay are relabelled under the senders' current
//! policies before every update.

pub mod checkpoint;
pub mod env;
pub mod error;
pub mod layout;
pub mod maddpg;
pub mod nn;
pub mod replay;
pub mod rng;

pub use error::{Error, Result};
pub use rng::RngStream;
